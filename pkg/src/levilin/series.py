"""Immutable containers for sampled displacement and quadrature records."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import levt


@dataclass(frozen=True)
class TimeSeries:
    """Uniformly sampled displacement record along one axis."""

    sample_rate: float        # Hz
    values: np.ndarray        # m
    axis: str = "x"
    t0: float = 0.0
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if not np.all(np.isfinite(v)):
            raise ValueError("time series contains non-finite samples")
        object.__setattr__(self, "values", v)
        v.setflags(write=False)

    def __len__(self):
        return self.values.size

    @property
    def duration(self) -> float:
        return self.values.size / self.sample_rate

    def times(self) -> np.ndarray:
        return self.t0 + np.arange(self.values.size) / self.sample_rate

    def to_levt(self, path) -> None:
        levt.write_levt(path, self.sample_rate, {self.axis: self.values})

    def to_csv(self, path) -> None:
        levt.write_csv(path, self.sample_rate, self.t0, {self.axis: self.values})

    @classmethod
    def from_levt(cls, path, axis=None) -> "TimeSeries":
        rate, channels = levt.read_levt(path)
        if axis is None:
            axis = next(iter(channels))
        return cls(sample_rate=rate, values=channels[axis], axis=axis,
                   metadata={"source": str(path)})


@dataclass(frozen=True)
class QuadratureSeries:
    """Slowly varying lock-in quadratures X, Y of one displacement record."""

    sample_rate: float        # Hz, post-decimation
    x: np.ndarray             # m
    y: np.ndarray             # m
    f_lo: float               # Hz, demodulation frequency
    axis: str = "x"
    t0: float = 0.0
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        x = np.asarray(self.x, dtype=float)
        y = np.asarray(self.y, dtype=float)
        if x.size != y.size:
            raise ValueError("X and Y must have equal length")
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "y", y)
        x.setflags(write=False)
        y.setflags(write=False)

    def __len__(self):
        return self.x.size

    @property
    def duration(self) -> float:
        return self.x.size / self.sample_rate

    def times(self) -> np.ndarray:
        return self.t0 + np.arange(self.x.size) / self.sample_rate

    def r(self) -> np.ndarray:
        return np.hypot(self.x, self.y)

    def r_squared(self) -> np.ndarray:
        return self.x**2 + self.y**2

    def to_levt(self, path) -> None:
        levt.write_levt(path, self.sample_rate, {"X": self.x, "Y": self.y})

    def to_csv(self, path) -> None:
        r = self.r()
        levt.write_csv(path, self.sample_rate, self.t0,
                       {"X": self.x, "Y": self.y, "R": r, "R2": r**2})

    @classmethod
    def from_levt(cls, path, f_lo=0.0) -> "QuadratureSeries":
        rate, channels = levt.read_levt(path)
        if "X" not in channels or "Y" not in channels:
            raise ValueError("quadrature container must hold X and Y channels")
        return cls(sample_rate=rate, x=channels["X"], y=channels["Y"], f_lo=f_lo,
                   metadata={"source": str(path)})
