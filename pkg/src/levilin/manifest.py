"""Run manifests: config hash, per-file checksums, wall-clock timings.

Data files are reproducible byte-for-byte from (config, seed); the manifest
is the one artifact allowed to differ between reruns (it carries timings).
"""

from __future__ import annotations

import hashlib
import json
import time
from dataclasses import dataclass, field


def sha256_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def sha256_text(text: str) -> str:
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


@dataclass
class RunManifest:
    tool_version: str
    command: str
    config_hash: str
    inputs: list = field(default_factory=list)    # [(path, sha256)]
    outputs: list = field(default_factory=list)   # [(path, sha256)]
    timings_s: dict = field(default_factory=dict)
    created_unix: float = 0.0

    def add_input(self, path) -> None:
        self.inputs.append((str(path), sha256_file(path)))

    def add_output(self, path) -> None:
        self.outputs.append((str(path), sha256_file(path)))

    def write(self, path) -> None:
        self.created_unix = time.time()
        payload = {
            "tool_version": self.tool_version,
            "command": self.command,
            "config_hash": self.config_hash,
            "inputs": [{"path": p, "sha256": s} for p, s in self.inputs],
            "outputs": [{"path": p, "sha256": s} for p, s in self.outputs],
            "timings_s": self.timings_s,
            "created_unix": self.created_unix,
        }
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(payload, fh, indent=2, sort_keys=True)
            fh.write("\n")


class StageTimer:
    """Collects named wall-clock durations for the manifest."""

    def __init__(self):
        self.timings = {}
        self._t0 = None
        self._name = None

    def start(self, name: str) -> None:
        self._name, self._t0 = name, time.perf_counter()

    def stop(self) -> None:
        if self._name is not None:
            self.timings[self._name] = round(time.perf_counter() - self._t0, 6)
            self._name = None
