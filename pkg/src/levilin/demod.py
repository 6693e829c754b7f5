"""Numerical lock-in amplifier.

Demodulates a displacement record at a reference frequency f_LO into slowly
varying quadratures X, Y and the amplitude quantities R, R^2.  The low-pass is
a cascade of identical single-pole stages: unconditionally stable, monotone
step response, and its settling time is simply ~5/cutoff, which `lockin`
discards from the output by default so downstream statistics are clean.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import signal

from .constants import TWO_PI
from .errors import InvalidParameterError
from .series import QuadratureSeries, TimeSeries

SETTLE_TIME_CONSTANTS = 5.0  # multiples of 1/cutoff dropped after filter start


@dataclass(frozen=True)
class LockinConfig:
    f_lo: float            # Hz
    cutoff: float          # Hz, per-stage pole frequency
    filter_order: int = 4  # number of cascaded single-pole stages
    decimation: int = 1

    def __post_init__(self):
        if self.f_lo <= 0 or self.cutoff <= 0:
            raise InvalidParameterError("f_lo and cutoff must be positive")
        if self.cutoff >= self.f_lo:
            raise InvalidParameterError("cutoff must be below the demodulation frequency")
        if self.filter_order < 1 or self.decimation < 1:
            raise InvalidParameterError("filter_order and decimation must be >= 1")

    def check_linewidth(self, expected_gamma_hz: float) -> None:
        """The detection band must sit well above the linewidth under study."""
        if self.cutoff < 10.0 * expected_gamma_hz:
            raise InvalidParameterError(
                f"cutoff {self.cutoff} Hz < 10 x expected linewidth {expected_gamma_hz} Hz")


def cascaded_lowpass(x, sample_rate: float, cutoff: float, order: int = 4):
    """Cascade of `order` identical single-pole low-pass stages (DC gain 1).

    Each stage is y[n] = a y[n-1] + (1-a) x[n] with a = exp(-2 pi fc / fs).
    """
    if cutoff <= 0 or cutoff >= sample_rate / 2:
        raise InvalidParameterError("cutoff must lie in (0, Nyquist)")
    a = math.exp(-TWO_PI * cutoff / sample_rate)
    y = np.asarray(x, dtype=float)
    for _ in range(order):
        y = signal.lfilter([1.0 - a], [1.0, -a], y)
    return y


def filter_enbw(sample_rate: float, cutoff: float, order: int = 4, n_freq: int = 1 << 14) -> float:
    """Equivalent noise bandwidth (Hz, one-sided) of the discrete cascade."""
    a = math.exp(-TWO_PI * cutoff / sample_rate)
    w, h = signal.freqz([1.0 - a], [1.0, -a], worN=n_freq)
    h2 = np.abs(h) ** (2 * order)
    f = w / TWO_PI * sample_rate
    return float(np.trapezoid(h2, f) / h2[0])


def lockin(ts: TimeSeries, cfg: LockinConfig, drop_settle: bool = True) -> QuadratureSeries:
    """Demodulate `ts` at cfg.f_lo into quadratures X, Y.

    X = 2 LP(u cos(2 pi f_lo t)),  Y = 2 LP(u sin(2 pi f_lo t)),
    then decimation.  The factor 2 restores displacement units: a pure tone
    A cos(2 pi f_lo t + phi) settles to sqrt(X^2 + Y^2) = A.
    """
    fs = ts.sample_rate
    if cfg.f_lo >= fs / 2:
        raise InvalidParameterError(
            f"f_lo {cfg.f_lo} Hz is at or above Nyquist {fs / 2} Hz")
    fs_out = fs / cfg.decimation
    if fs_out < 4.0 * cfg.cutoff:
        raise InvalidParameterError(
            f"post-decimation rate {fs_out} Hz < 4 x cutoff {cfg.cutoff} Hz")
    t = ts.times()
    ph = TWO_PI * cfg.f_lo * t
    x = 2.0 * cascaded_lowpass(ts.values * np.cos(ph), fs, cfg.cutoff, cfg.filter_order)
    y = 2.0 * cascaded_lowpass(ts.values * np.sin(ph), fs, cfg.cutoff, cfg.filter_order)
    x = x[::cfg.decimation]
    y = y[::cfg.decimation]
    t0 = ts.t0
    if drop_settle:
        n_settle = int(math.ceil(SETTLE_TIME_CONSTANTS / cfg.cutoff * fs_out))
        if n_settle >= x.size:
            raise InvalidParameterError("record shorter than the filter settling time")
        x, y = x[n_settle:], y[n_settle:]
        t0 += n_settle / fs_out
    meta = dict(ts.metadata)
    meta.update(f_lo=cfg.f_lo, cutoff=cfg.cutoff, filter_order=cfg.filter_order,
                enbw_hz=filter_enbw(fs, cfg.cutoff, cfg.filter_order))
    return QuadratureSeries(sample_rate=fs_out, x=x, y=y, f_lo=cfg.f_lo,
                            axis=ts.axis, t0=t0, metadata=meta)


def amplitude(q: QuadratureSeries):
    """Elementwise R = sqrt(X^2 + Y^2) and R^2 = X^2 + Y^2."""
    r2 = q.x**2 + q.y**2
    return np.sqrt(r2), r2


def remodulate(q: QuadratureSeries, carrier_hz: float) -> TimeSeries:
    """Reconstruct a displacement record u = X cos(2 pi f t) + Y sin(2 pi f t).

    Useful to view quadrature-level simulations through displacement-domain
    analysis; the carrier must fit under the quadrature Nyquist rate.
    """
    if not (0 < carrier_hz < q.sample_rate / 2):
        raise InvalidParameterError("carrier must lie in (0, Nyquist)")
    ph = TWO_PI * carrier_hz * q.times()
    u = q.x * np.cos(ph) + q.y * np.sin(ph)
    meta = dict(q.metadata)
    meta["carrier_hz"] = carrier_hz
    return TimeSeries(sample_rate=q.sample_rate, values=u, axis=q.axis,
                      t0=q.t0, metadata=meta)


@dataclass(frozen=True)
class RayleighStats:
    """Moment-based scale estimates of an amplitude (Rayleigh) sample."""

    sigma_from_mean: float
    sigma_from_var: float
    delta_sigma_rel: float          # |sigma1 - sigma2| / mean(sigma1, sigma2)
    n_samples: int
    effective_sample_size: float | None
    low_sample_warning: bool
    hist_centers: np.ndarray
    hist_density: np.ndarray
    model_density: np.ndarray

    @property
    def sigma(self) -> float:
        return 0.5 * (self.sigma_from_mean + self.sigma_from_var)


def rayleigh_density(r, sigma):
    """Normalized Rayleigh density with per-quadrature scale sigma."""
    r = np.asarray(r, dtype=float)
    return r / sigma**2 * np.exp(-(r**2) / (2.0 * sigma**2))


def rayleigh_stats(r, sample_rate: float | None = None, gamma: float | None = None,
                   bins: int = 50) -> RayleighStats:
    """Compare the two moment estimators of the Rayleigh scale.

    For R = sqrt(X^2 + Y^2) with X, Y ~ N(0, sigma^2):
    <r> = sqrt(pi/2) sigma and Var(r) = (4 - pi) sigma^2 / 2, so
    sigma can be estimated from the mean or from the variance; their relative
    spread diagnoses whether the record holds enough independent samples.
    The effective sample size is duration * gamma / 2 (gamma in rad/s) when
    the record metadata is supplied.
    """
    r = np.asarray(r, dtype=float)
    if r.size < 2:
        raise InvalidParameterError("need at least two amplitude samples")
    s_mean = float(np.mean(r)) * math.sqrt(2.0 / math.pi)
    s_var = math.sqrt(2.0 * float(np.var(r)) / (4.0 - math.pi))
    avg = 0.5 * (s_mean + s_var)
    delta = abs(s_mean - s_var) / avg if avg > 0 else math.inf
    ess = None
    if sample_rate is not None and gamma is not None:
        ess = r.size / sample_rate * gamma / 2.0
    low = ess is not None and ess < 30
    density, edges = np.histogram(r, bins=bins, density=True)
    centers = 0.5 * (edges[1:] + edges[:-1])
    model = rayleigh_density(centers, avg) if avg > 0 else np.zeros_like(centers)
    return RayleighStats(sigma_from_mean=s_mean, sigma_from_var=s_var,
                         delta_sigma_rel=delta, n_samples=r.size,
                         effective_sample_size=ess, low_sample_warning=low,
                         hist_centers=centers, hist_density=density,
                         model_density=model)
