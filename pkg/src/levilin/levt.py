"""LEVT binary container and CSV writers for time-domain records.

Layout (all little-endian):

    bytes 0-3    magic "LEVT"
    bytes 4-7    format version, uint32 (1 = single channel, 2 = multi)
    bytes 8-15   sample_rate, float64 (Hz)
    bytes 16-23  samples per channel, uint64
    bytes 24-27  label length, uint32
    ...          label bytes (utf-8); version 2 packs comma-separated
                 channel names into the label
    ...          samples, float64; version 2 stores channels sequentially

Round trips are bit-exact on sample values, rate and label.
"""

from __future__ import annotations

import struct

import numpy as np

from .errors import LevtFormatError

MAGIC = b"LEVT"
_HEADER = struct.Struct("<4sIdQI")


def write_levt(path, sample_rate: float, channels: dict[str, np.ndarray]) -> None:
    """Write one or more equal-length channels to a LEVT file."""
    names = list(channels)
    arrays = [np.ascontiguousarray(channels[n], dtype="<f8") for n in names]
    n = arrays[0].size
    if any(a.size != n for a in arrays):
        raise ValueError("all channels must have the same length")
    version = 1 if len(names) == 1 else 2
    label = ",".join(names).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(MAGIC, version, float(sample_rate), n, len(label)))
        fh.write(label)
        for a in arrays:
            fh.write(a.tobytes())


def read_levt(path):
    """Read a LEVT file.  Returns (sample_rate, {name: float64 array})."""
    with open(path, "rb") as fh:
        raw = fh.read()
    if len(raw) < _HEADER.size:
        raise LevtFormatError("file shorter than the fixed header", offset=len(raw))
    magic, version, rate, n, label_len = _HEADER.unpack_from(raw, 0)
    if magic != MAGIC:
        raise LevtFormatError(f"bad magic {magic!r}, expected {MAGIC!r}", offset=0)
    if version not in (1, 2):
        raise LevtFormatError(f"unsupported format version {version}", offset=4)
    pos = _HEADER.size
    if len(raw) < pos + label_len:
        raise LevtFormatError("truncated label field", offset=pos)
    label = raw[pos:pos + label_len].decode("utf-8")
    pos += label_len
    names = label.split(",") if label else [""]
    if version == 1 and len(names) != 1:
        raise LevtFormatError("version 1 container must hold a single channel",
                              offset=_HEADER.size)
    need = pos + 8 * n * len(names)
    if len(raw) < need:
        raise LevtFormatError(f"truncated sample data, expected {need} bytes",
                              offset=len(raw))
    out = {}
    for name in names:
        out[name] = np.frombuffer(raw, dtype="<f8", count=n, offset=pos).copy()
        pos += 8 * n
    return rate, out


def write_csv(path, sample_rate: float, t0: float, columns: dict[str, np.ndarray],
              header_lines=()) -> None:
    """Write a plot-ready CSV with a time column at full float precision."""
    names = list(columns)
    arrays = [np.asarray(columns[n], dtype=float) for n in names]
    n = arrays[0].size
    t = t0 + np.arange(n) / sample_rate
    with open(path, "w", encoding="utf-8") as fh:
        for line in header_lines:
            fh.write(f"# {line}\n")
        fh.write("t," + ",".join(names) + "\n")
        for i in range(n):
            fh.write(f"{t[i]:.17g}," + ",".join(f"{a[i]:.17g}" for a in arrays) + "\n")
