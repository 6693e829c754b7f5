"""Spectral estimation and model fitting.

One-sided PSDs in Hz throughout (Welch, Hann window).  The fit models are
written with angular-frequency Lorentzians and converted explicitly: a
stationary process with two-sided angular spectrum S2(w) has a one-sided
measured density S1(f) = 2 S2(2 pi f).

Linewidth fitting works on the squared amplitude quadrature: for an
oscillator of damping gamma (rad/s) with per-quadrature variance sigma^2 the
mean-subtracted R^2 record has the zero-centred Lorentzian

    S1(f) = 16 gamma sigma^4 / ((2 pi f)^2 + gamma^2)

whose total one-sided power is Var(R^2) = 4 sigma^4 and which is immune to
resonance-frequency drift.  Fits use a Levenberg-Marquardt iteration on
log-parameters (positivity without constraints), per-bin errors
value/sqrt(segment_count), and stop when the relative parameter change drops
below 1e-10 or after 200 iterations.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import optimize, signal, stats

from .constants import K_B, TWO_PI
from .errors import FitConvergenceError, InvalidParameterError

MAX_ITERATIONS = 200
XTOL = 1e-10


@dataclass(frozen=True)
class PsdEstimate:
    """One-sided Welch estimate with its averaging metadata."""

    frequencies: np.ndarray    # Hz
    values: np.ndarray         # units^2/Hz
    segment_count: int
    window: str = "hann"
    enbw_hz: float = 0.0
    sample_rate: float = 0.0

    def __post_init__(self):
        f = np.asarray(self.frequencies, dtype=float)
        v = np.asarray(self.values, dtype=float)
        if f.size != v.size:
            raise InvalidParameterError("frequency and value arrays must match")
        object.__setattr__(self, "frequencies", f)
        object.__setattr__(self, "values", v)

    def total_power(self) -> float:
        """Integral of the PSD over frequency (equals the signal variance)."""
        df = self.frequencies[1] - self.frequencies[0]
        return float(np.sum(self.values) * df)

    def band(self, f_min, f_max):
        m = (self.frequencies >= f_min) & (self.frequencies <= f_max)
        return self.frequencies[m], self.values[m]


def welch_psd(series, segment_length: int, overlap: float = 0.5,
              sample_rate: float | None = None, window: str = "hann") -> PsdEstimate:
    """Hann-windowed, overlapped, averaged one-sided periodogram.

    ``series`` may be a TimeSeries/QuadratureSeries-like object (uses
    .values or .x) or a plain array with ``sample_rate`` given.  No detrend:
    the DC bin reflects the mean, so callers fitting the R^2 spectrum
    subtract the mean first.
    """
    if hasattr(series, "values"):
        x, fs = series.values, series.sample_rate
    elif hasattr(series, "x"):
        x, fs = series.x, series.sample_rate
    else:
        x = np.asarray(series, dtype=float)
        fs = sample_rate
    if fs is None:
        raise InvalidParameterError("sample_rate required for plain arrays")
    segment_length = int(segment_length)
    if segment_length > x.size:
        raise InvalidParameterError("record shorter than one Welch segment")
    if not 0 <= overlap < 1:
        raise InvalidParameterError("overlap fraction must be in [0, 1)")
    noverlap = int(segment_length * overlap)
    f, p = signal.welch(x, fs=fs, window=window, nperseg=segment_length,
                        noverlap=noverlap, detrend=False, return_onesided=True,
                        scaling="density")
    step = segment_length - noverlap
    n_seg = 1 + (x.size - segment_length) // step
    w = signal.get_window(window, segment_length)
    enbw = fs * np.sum(w**2) / np.sum(w) ** 2
    return PsdEstimate(frequencies=f, values=p, segment_count=n_seg,
                       window=window, enbw_hz=float(enbw), sample_rate=fs)


# ----------------------------------------------------------------------
# weighted Levenberg-Marquardt on log-parameters
# ----------------------------------------------------------------------

def _weights(values, segment_count):
    """Per-bin standard error value/sqrt(n_seg), floored against underflow."""
    v = np.asarray(values, dtype=float)
    floor = max(float(v.max()), 1e-300) * 1e-12
    return np.maximum(v, floor) / math.sqrt(segment_count)


def _reweighted_fit(model, f, y, segment_count, p0):
    """Fit with per-bin errors value/sqrt(n_seg), re-deriving the bin values
    from the fitted model until the parameters stabilize.

    Weighting by the measured (noisy) values biases the amplitude low by
    O(1/n_seg); iterating the weights from the model removes that.
    """
    sigma = _weights(y, segment_count)
    params, cov, red_chi2 = _fit_log_params(model, f, y, sigma, p0)
    for _ in range(3):
        prev = params
        sigma = _weights(model(f, params), segment_count)
        params, cov, red_chi2 = _fit_log_params(model, f, y, sigma, params)
        if np.all(np.abs(params / prev - 1.0) < 1e-3):
            break
    return params, cov, red_chi2


def _fit_log_params(model, f, y, sigma, p0):
    """Least squares of (y - model(f, p))/sigma over p = exp(theta).

    Returns (parameters, covariance, reduced chi^2).
    """
    p0 = np.asarray(p0, dtype=float)
    if np.any(p0 <= 0):
        raise InvalidParameterError("initial guesses must be positive")
    theta0 = np.log(p0)

    def residuals(theta):
        with np.errstate(over="ignore", divide="ignore", invalid="ignore"):
            r = (y - model(f, np.exp(np.clip(theta, -680.0, 680.0)))) / sigma
        return np.nan_to_num(r, nan=1e30, posinf=1e30, neginf=-1e30)

    res = optimize.least_squares(residuals, theta0, method="lm",
                                 xtol=XTOL, ftol=1e-14, gtol=1e-14,
                                 max_nfev=MAX_ITERATIONS * (p0.size + 1))
    if not res.success and res.status != 0:
        raise FitConvergenceError("linewidth fit failed",
                                  residual_norm=float(np.linalg.norm(res.fun)))
    if res.status == 0:
        raise FitConvergenceError("iteration cap reached without convergence",
                                  residual_norm=float(np.linalg.norm(res.fun)))
    params = np.exp(res.x)
    jtj = res.jac.T @ res.jac
    try:
        cov_log = np.linalg.inv(jtj)
    except np.linalg.LinAlgError:
        cov_log = np.linalg.pinv(jtj)
    scale = np.diag(params)
    cov = scale @ cov_log @ scale
    dof = max(f.size - p0.size, 1)
    red_chi2 = float(2.0 * res.cost / dof)
    # scale parameter errors by the reduced chi^2 (absorbs the mild variance
    # inflation of overlapped Welch segments)
    cov = cov * red_chi2
    return params, cov, red_chi2


@dataclass(frozen=True)
class LorentzFit:
    """Result of the zero-centred R^2-spectrum linewidth fit."""

    gamma_hz: float            # gamma / 2 pi
    gamma_err_hz: float
    sigma_sq: float            # per-quadrature variance (units^2)
    sigma_sq_err: float
    covariance: np.ndarray     # 2x2 over (gamma_hz, sigma_sq)
    reduced_chi2: float
    window: tuple              # (f_min, f_max) used in the fit

    @property
    def gamma(self) -> float:
        """Angular damping rate in rad/s."""
        return self.gamma_hz * TWO_PI

    @property
    def total_power(self) -> float:
        """Var(R^2) implied by the fit: 4 sigma^4."""
        return 4.0 * self.sigma_sq**2


def r2_lorentzian(f, gamma, sigma_sq, sample_rate=None):
    """One-sided R^2 spectrum model, gamma in rad/s.

    The continuous form is 16 gamma sigma^4 / (w^2 + gamma^2).  With a sample
    rate given, all 1/f^2 tail images folded across Nyquist by sampling are
    summed in closed form (Poisson summation of the Lorentzian),

        S(f) = 8 sigma^4 h sinh(gamma h) / (cosh(gamma h) - cos(2 pi f h)),

    h = 1/fs, which is the spectrum a Welch estimate of the sampled process
    converges to and integrates to exactly 4 sigma^4 over [0, fs/2].
    """
    f = np.asarray(f, dtype=float)
    if sample_rate:
        h = 1.0 / sample_rate
        e = math.exp(-min(gamma * h, 700.0))
        return (8.0 * sigma_sq**2 * h * (1.0 - e * e)
                / (1.0 + e * e - 2.0 * e * np.cos(TWO_PI * f * h)))
    w = TWO_PI * f
    return 16.0 * gamma * sigma_sq**2 / (w * w + gamma * gamma)


def fit_r2_psd(psd: PsdEstimate, initial_guess=None, window=None) -> LorentzFit:
    """Weighted fit of the drift-immune R^2 Lorentzian.

    ``psd`` must be the Welch estimate of the mean-subtracted R^2 record.
    The DC bin (and by default the one above it, to kill leakage) is excluded.
    """
    df = psd.frequencies[1] - psd.frequencies[0]
    if window is None:
        window = (1.5 * df, psd.frequencies[-1])
    if window[0] <= 0:
        raise InvalidParameterError("fit window must exclude the DC bin")
    f, y = psd.band(*window)
    if f.size < 4:
        raise InvalidParameterError("fit window holds fewer than 4 bins")
    if initial_guess is None:
        power = psd.total_power()
        sigma_sq0 = math.sqrt(max(power, 1e-300)) / 2.0
        # Lorentzian identity: total power = plateau * gamma / 4
        plateau = float(np.mean(y[: max(3, f.size // 200)]))
        gamma0 = 4.0 * power / plateau if plateau > 0 else TWO_PI * f[f.size // 2]
        initial_guess = (gamma0, sigma_sq0)
    fs = psd.sample_rate or None

    def model(fq, p):
        return r2_lorentzian(fq, p[0], p[1], sample_rate=fs)

    params, cov, red_chi2 = _reweighted_fit(model, f, y, psd.segment_count,
                                            initial_guess)
    gamma_ang, sigma_sq = params
    scale = np.diag([1.0 / TWO_PI, 1.0])
    cov_hz = scale @ cov @ scale
    return LorentzFit(gamma_hz=gamma_ang / TWO_PI,
                      gamma_err_hz=math.sqrt(max(cov_hz[0, 0], 0.0)),
                      sigma_sq=sigma_sq,
                      sigma_sq_err=math.sqrt(max(cov_hz[1, 1], 0.0)),
                      covariance=cov_hz, reduced_chi2=red_chi2,
                      window=tuple(window))


@dataclass(frozen=True)
class DisplacementFit:
    """Mechanical-susceptibility fit of a displacement PSD."""

    f0_hz: float
    f0_err_hz: float
    gamma_hz: float
    gamma_err_hz: float
    force_psd: float           # N^2/Hz delta-strength
    floor: float               # m^2/Hz
    temperature: float         # K, from S_F = 2 k_B T m gamma
    temperature_err: float
    covariance: np.ndarray     # 4x4 over (f0, gamma_ang, S_F, floor)
    reduced_chi2: float
    band_edge_flag: bool
    window: tuple

    @property
    def omega_o(self) -> float:
        return self.f0_hz * TWO_PI

    @property
    def gamma(self) -> float:
        return self.gamma_hz * TWO_PI


def displacement_psd_model(f, omega_o, gamma, s_f, mass, floor=0.0):
    """One-sided displacement PSD of a driven damped oscillator.

    S1(f) = 2 S_F / m^2 / ((w_o^2 - w^2)^2 + gamma^2 w^2) + floor
    """
    w = TWO_PI * np.asarray(f, dtype=float)
    return 2.0 * s_f / mass**2 / ((omega_o**2 - w**2) ** 2 + gamma**2 * w**2) + floor


def fit_displacement_psd(psd: PsdEstimate, mass: float, guesses=None,
                         window=None) -> DisplacementFit:
    """Fit (w_o, gamma, S_F, floor) and infer the temperature.

    Initial guesses default to the peak position/height; the fit is flagged
    unreliable when the fitted resonance leans on the window edge.
    """
    df = psd.frequencies[1] - psd.frequencies[0]
    if window is None:
        window = (df, psd.frequencies[-1])
    f, y = psd.band(*window)
    if f.size < 6:
        raise InvalidParameterError("fit window holds fewer than 6 bins")
    if guesses is None:
        ipk = int(np.argmax(y))
        f0 = f[ipk]
        floor0 = max(float(np.median(y)), float(np.min(y)) + 1e-300)
        half = y > (y[ipk] + floor0) / 2.0
        fwhm = max(float(np.count_nonzero(half)) * df, df)
        gamma0 = TWO_PI * fwhm
        s_f0 = y[ipk] * mass**2 * (gamma0 * TWO_PI * f0) ** 2 / 2.0
        guesses = (TWO_PI * f0, gamma0, s_f0, floor0)

    def model(fq, p):
        return displacement_psd_model(fq, p[0], p[1], p[2], mass, p[3])

    params, cov, red_chi2 = _reweighted_fit(model, f, y, psd.segment_count, guesses)
    omega_o, gamma_ang, s_f, floor = params
    t_fit = s_f / (2.0 * K_B * mass * gamma_ang)
    # temperature error via the (S_F, gamma) block
    g = np.array([0.0, -t_fit / gamma_ang, t_fit / s_f, 0.0])
    t_err = math.sqrt(max(g @ cov @ g, 0.0))
    f0_hz = omega_o / TWO_PI
    edge = not (window[0] + 2 * df < f0_hz < window[1] - 2 * df)
    return DisplacementFit(
        f0_hz=f0_hz, f0_err_hz=math.sqrt(max(cov[0, 0], 0.0)) / TWO_PI,
        gamma_hz=gamma_ang / TWO_PI,
        gamma_err_hz=math.sqrt(max(cov[1, 1], 0.0)) / TWO_PI,
        force_psd=s_f, floor=floor, temperature=t_fit, temperature_err=t_err,
        covariance=cov, reduced_chi2=red_chi2, band_edge_flag=edge,
        window=tuple(window))


# ----------------------------------------------------------------------
# linewidth vs pressure
# ----------------------------------------------------------------------

@dataclass(frozen=True)
class LineFit:
    """Weighted straight-line fit gamma = gamma_exc + k P with 95% bands.

    Pressures in mbar, linewidths as gamma/2pi in Hz; classical frequentist
    intervals from the weighted-LS covariance and t quantiles (n - 2 dof).
    """

    gamma_exc_hz: float
    gamma_exc_err_hz: float
    slope_hz_per_mbar: float
    slope_err_hz_per_mbar: float
    ci95_intercept: tuple
    ci95_slope: tuple
    covariance: np.ndarray
    n_points: int
    chi2: float
    slope_zero_intercept: float       # fit with gamma_exc forced to 0
    slope_zero_intercept_err: float
    pressures: np.ndarray = field(repr=False, default=None)

    def predict(self, pressure_mbar):
        p = np.asarray(pressure_mbar, dtype=float)
        return self.gamma_exc_hz + self.slope_hz_per_mbar * p

    def band(self, pressure_mbar, confidence: float = 0.95):
        """(lower, upper) confidence band of the fitted line."""
        p = np.asarray(pressure_mbar, dtype=float)
        tq = stats.t.ppf(0.5 + confidence / 2.0, self.n_points - 2)
        var = (self.covariance[0, 0] + 2.0 * p * self.covariance[0, 1]
               + p * p * self.covariance[1, 1])
        half = tq * np.sqrt(var)
        mid = self.predict(p)
        return mid - half, mid + half

    def intercept_upper_limit(self, confidence: float = 0.95) -> float:
        """One-sided upper limit on the excess damping gamma_exc (Hz)."""
        tq = stats.t.ppf(confidence, self.n_points - 2)
        return self.gamma_exc_hz + tq * self.gamma_exc_err_hz


def linewidth_vs_pressure(points) -> LineFit:
    """Weighted LS line through (P_mbar, gamma_hz, sigma_hz) measurements.

    Also fits the zero-intercept model gamma = k P for comparison with the
    no-excess-damping hypothesis.
    """
    pts = [(float(p), float(g), float(s)) for p, g, s in points]
    if len(pts) < 3:
        raise InvalidParameterError("need at least 3 pressure points")
    if any(s <= 0 for _, _, s in pts):
        raise InvalidParameterError("all linewidth errors must be positive")
    p = np.array([x[0] for x in pts])
    g = np.array([x[1] for x in pts])
    w = 1.0 / np.array([x[2] for x in pts]) ** 2
    design = np.column_stack([np.ones_like(p), p])
    a = design.T * w @ design
    cov = np.linalg.inv(a)
    beta = cov @ (design.T @ (w * g))
    resid = g - design @ beta
    chi2 = float(np.sum(w * resid**2))
    n = len(pts)
    tq = stats.t.ppf(0.975, n - 2)
    err = np.sqrt(np.diag(cov))
    k0 = float(np.sum(w * p * g) / np.sum(w * p * p))
    k0_err = float(1.0 / math.sqrt(np.sum(w * p * p)))
    return LineFit(gamma_exc_hz=float(beta[0]), gamma_exc_err_hz=float(err[0]),
                   slope_hz_per_mbar=float(beta[1]),
                   slope_err_hz_per_mbar=float(err[1]),
                   ci95_intercept=(float(beta[0] - tq * err[0]),
                                   float(beta[0] + tq * err[0])),
                   ci95_slope=(float(beta[1] - tq * err[1]),
                               float(beta[1] + tq * err[1])),
                   covariance=cov, n_points=n, chi2=chi2,
                   slope_zero_intercept=k0, slope_zero_intercept_err=k0_err,
                   pressures=p)


def effective_temperature(series, mass: float, omega: float,
                          gamma: float | None = None):
    """Centre-of-mass temperature from the motional variance.

    T_eff = m w^2 sigma^2 / k_B with sigma^2 = <R^2>/2 for quadrature input or
    the sample variance for displacement input.  The statistical error uses
    the effective sample size duration * gamma / 2 when gamma (rad/s) is given.
    """
    if omega <= 0 or mass <= 0:
        raise InvalidParameterError("mass and omega must be positive")
    if hasattr(series, "r_squared"):
        sigma_sq = float(np.mean(series.r_squared())) / 2.0
        rel_var = 1.0  # Var(R^2)/<R^2>^2 = 1 per independent sample
        duration = series.duration
    else:
        vals = series.values if hasattr(series, "values") else np.asarray(series)
        sigma_sq = float(np.var(vals))
        rel_var = 2.0  # Var(x^2)/<x^2>^2 for Gaussian x
        duration = getattr(series, "duration", None)
    t_eff = mass * omega**2 * sigma_sq / K_B
    t_err = None
    if gamma is not None and duration is not None:
        ess = duration * gamma / 2.0
        if ess > 0:
            t_err = t_eff * math.sqrt(rel_var / ess)
    return t_eff, t_err
