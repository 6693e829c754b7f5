"""Synthetic motion of the trapped particle.

Three engines, all driven by the same seedable random-number tree:

* ``secular``    -- x'' + gamma x' + w(t)^2 x = F/m at the pseudopotential
  level.  With constant w the state is advanced with the exact Gaussian
  one-step map of the linear system (no discretization bias in distribution),
  so the output grid is the integration grid.  With a frequency drift the
  propagator is frozen at each step midpoint (symmetric splitting) on the fine
  solver grid, then anti-alias filtered and decimated.
* ``quadrature`` -- the rotating-frame quadratures X, Y as exact
  Ornstein-Uhlenbeck updates; a frequency drift enters as a deterministic
  rotation of (X, Y) at the instantaneous detuning, which is distribution-exact.
* ``mathieu``    -- the full driven equation
  x'' + gamma x' + (w_d^2/4)(a + 2 q cos(w_d t)) x = F/m
  with a BAOAB splitting, reproducing secular motion plus micromotion
  sidebands.

White force noise of strength S_F means <F(t)F(t')> = S_F delta(t - t'), so a
thermal bath corresponds to S_F = 2 k_B T m gamma.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy import signal

from .constants import TWO_PI
from .demod import cascaded_lowpass
from .errors import InvalidParameterError, RotatingWaveError, SimulationAbort
from .series import QuadratureSeries, TimeSeries
from .trapphys import AXES, MathieuParams, ParticleSpec, TrapConfig, stability_check

MEMORY_CAP_SAMPLES = 5e7
ANTI_ALIAS_FRACTION = 0.4   # AA cutoff as a fraction of the target rate
ANTI_ALIAS_ORDER = 4
INSTABILITY_FACTOR = 1e3    # abort when |x| exceeds this multiple of the thermal scale


@dataclass(frozen=True)
class DriftProfile:
    """Deterministic secular-frequency drift delta_w(t) in rad/s.

    delta_w(t) = offset + linear_rate * t + mod_amplitude * sin(2 pi t / mod_period)
    """

    offset: float = 0.0          # rad/s
    linear_rate: float = 0.0     # rad/s^2
    mod_amplitude: float = 0.0   # rad/s
    mod_period: float = math.inf  # s

    def __post_init__(self):
        if self.mod_amplitude != 0.0 and not (self.mod_period > 0):
            raise InvalidParameterError("mod_period must be positive with a modulation")

    @property
    def shape(self) -> str:
        parts = []
        if self.mod_amplitude != 0.0:
            parts.append("sinusoidal")
        if self.linear_rate != 0.0:
            parts.append("linear")
        return "+".join(parts) if parts else "none"

    def delta_omega(self, t):
        t = np.asarray(t, dtype=float)
        d = self.offset + self.linear_rate * t
        if self.mod_amplitude != 0.0:
            d = d + self.mod_amplitude * np.sin(TWO_PI * t / self.mod_period)
        return d

    def phase(self, t):
        """Integral of delta_w from 0 to t (closed form)."""
        t = np.asarray(t, dtype=float)
        ph = self.offset * t + 0.5 * self.linear_rate * t**2
        if self.mod_amplitude != 0.0:
            ph = ph + self.mod_amplitude * self.mod_period / TWO_PI \
                * (1.0 - np.cos(TWO_PI * t / self.mod_period))
        return ph

    def min_delta(self, duration: float) -> float:
        lin = min(0.0, self.linear_rate * duration)
        return self.offset + lin - abs(self.mod_amplitude)


NO_DRIFT = DriftProfile()


@dataclass(frozen=True)
class SimPlan:
    """Everything one run needs; per-axis values may be scalars (broadcast)
    or dicts keyed by axis label."""

    duration: float                 # s
    output_rate: float              # Hz
    seed: int
    omega_o: dict                   # rad/s per axis
    gamma: float                    # rad/s
    force_psd: dict                 # N^2/Hz per axis (delta-strength)
    mass: float                     # kg
    axes: tuple = ("x",)
    drift: dict = field(default_factory=dict)   # DriftProfile per axis
    solver_step: float | None = None            # s; engines needing a fine grid
    measurement_noise_floor: float = 0.0        # m^2/Hz
    engine: str = "secular"
    initial_state: dict = field(default_factory=dict)  # axis -> (x0, v0) or (X0, Y0)
    memory_cap: float = MEMORY_CAP_SAMPLES

    def __post_init__(self):
        if self.engine not in ("secular", "quadrature", "mathieu"):
            raise InvalidParameterError(f"unknown engine {self.engine!r}")
        if self.duration <= 0 or self.output_rate <= 0:
            raise InvalidParameterError("duration and output_rate must be positive")
        if self.gamma < 0 or self.mass <= 0:
            raise InvalidParameterError("gamma must be >= 0 and mass positive")
        axes = tuple(self.axes)
        object.__setattr__(self, "axes", axes)
        object.__setattr__(self, "omega_o", _per_axis(self.omega_o, axes))
        object.__setattr__(self, "force_psd", _per_axis(self.force_psd, axes))
        drift = {ax: self.drift.get(ax, NO_DRIFT) for ax in axes} \
            if isinstance(self.drift, dict) else {ax: self.drift for ax in axes}
        object.__setattr__(self, "drift", drift)
        if self.duration * self.output_rate > self.memory_cap:
            raise InvalidParameterError("requested record exceeds the memory cap")
        if any(w <= 0 for w in self.omega_o.values()):
            raise InvalidParameterError("secular frequencies must be positive")
        if any(s < 0 for s in self.force_psd.values()):
            raise InvalidParameterError("force PSDs must be >= 0")
        f_max = max(self.omega_o.values()) / TWO_PI
        if self.engine in ("secular", "mathieu"):
            if self.solver_step is None:
                object.__setattr__(self, "solver_step", 1.0 / (50.0 * f_max))
            if self.solver_step > 1.0 / (50.0 * f_max):
                raise InvalidParameterError(
                    "solver_step must resolve the fastest secular period (<= 1/(50 f_o))")
            if self.output_rate > 1.0 / self.solver_step:
                raise InvalidParameterError("output_rate cannot exceed the solver rate")

    @property
    def n_samples(self) -> int:
        return int(round(self.duration * self.output_rate))

    def axis_streams(self):
        """One independent random substream per axis, in axis order."""
        children = np.random.SeedSequence(self.seed).spawn(len(self.axes))
        return {ax: np.random.default_rng(child)
                for ax, child in zip(self.axes, children)}


def _per_axis(value, axes):
    if isinstance(value, dict):
        missing = [ax for ax in axes if ax not in value]
        if missing:
            raise InvalidParameterError(f"missing per-axis values for {missing}")
        return {ax: float(value[ax]) for ax in axes}
    return {ax: float(value) for ax in axes}


# ----------------------------------------------------------------------
# exact one-step statistics of the damped, driven oscillator
# ----------------------------------------------------------------------

def _propagator(omega, gamma, h):
    """Exact e^{A h} for A = [[0, 1], [-w^2, -gamma]] (underdamped)."""
    wd = math.sqrt(omega * omega - gamma * gamma / 4.0)
    e = math.exp(-gamma * h / 2.0)
    c, s = math.cos(wd * h), math.sin(wd * h)
    return (e * (c + gamma / (2.0 * wd) * s), e * s / wd,
            -e * omega * omega / wd * s, e * (c - gamma / (2.0 * wd) * s)), wd


def _stationary_cov(omega, gamma, s_f, mass):
    """Stationary (x, v) covariance diag for white force noise of strength s_f."""
    a = s_f / (2.0 * mass**2 * gamma * omega**2)
    b = s_f / (2.0 * mass**2 * gamma)
    return a, b


def _step_noise_chol(p, sig_a, sig_b):
    """Cholesky factors of Q = Sigma - Phi Sigma Phi^T for diagonal Sigma."""
    p00, p01, p10, p11 = p
    q00 = sig_a - (p00 * p00 * sig_a + p01 * p01 * sig_b)
    q01 = -(p00 * p10 * sig_a + p01 * p11 * sig_b)
    q11 = sig_b - (p10 * p10 * sig_a + p11 * p11 * sig_b)
    l00 = math.sqrt(max(q00, 0.0))
    l10 = q01 / l00 if l00 > 0 else 0.0
    l11 = math.sqrt(max(q11 - l10 * l10, 0.0))
    return l00, l10, l11


def _require_underdamped(omega, gamma):
    if omega <= gamma / 2.0:
        raise InvalidParameterError(
            f"overdamped regime (omega={omega:.3g} <= gamma/2={gamma / 2:.3g}) not supported")


def _exact_const_omega(omega, gamma, s_f, mass, h, n, rng, init):
    """Sampled exact solution at step h for constant parameters.

    Runs the two-dimensional Gaussian recursion through its complex
    eigenmode so the whole path is one linear filter pass.
    """
    _require_underdamped(omega, gamma)
    if s_f > 0 and gamma == 0:
        raise InvalidParameterError("white noise with gamma = 0 has no stationary state")
    if init is None:
        if s_f > 0:
            sig_a, sig_b = _stationary_cov(omega, gamma, s_f, mass)
            x0 = rng.standard_normal() * math.sqrt(sig_a)
            v0 = rng.standard_normal() * math.sqrt(sig_b)
        else:
            x0, v0 = 0.0, 0.0
    else:
        x0, v0 = init
    wd = math.sqrt(omega * omega - gamma * gamma / 4.0)
    mu = complex(-gamma / 2.0, wd)
    lam = np.exp(mu * h)
    y0 = (mu.conjugate() * x0 - v0) / (mu.conjugate() - mu)
    if s_f == 0.0:
        k = np.arange(n)
        return 2.0 * np.real(y0 * np.exp(mu * h * k))
    p, _ = _propagator(omega, gamma, h)
    sig_a, sig_b = _stationary_cov(omega, gamma, s_f, mass)
    l00, l10, l11 = _step_noise_chol(p, sig_a, sig_b)
    eta = rng.standard_normal((2, n - 1))
    w_x = l00 * eta[0]
    w_v = l10 * eta[0] + l11 * eta[1]
    u = (mu.conjugate() * w_x - w_v) / (mu.conjugate() - mu)
    y = signal.lfilter([1.0], [1.0, -lam], u, zi=np.array([lam * y0]))[0]
    return np.concatenate(([x0], 2.0 * np.real(y)))


def _split_drifting_omega(omega_fn, gamma, s_f, mass, h, n, rng, init, t_grid_mid):
    """Midpoint-frozen exact stepping for a slowly varying w(t)."""
    omegas = omega_fn(t_grid_mid)
    bad = np.nonzero(omegas <= gamma / 2.0)[0]
    if bad.size:
        raise SimulationAbort("frequency drift left the underdamped trapping regime",
                              t=float(t_grid_mid[bad[0]]))
    if init is None:
        if s_f > 0:
            sig_a, sig_b = _stationary_cov(float(omegas[0]), gamma, s_f, mass)
            x = rng.standard_normal() * math.sqrt(sig_a)
            v = rng.standard_normal() * math.sqrt(sig_b)
        else:
            x, v = 1.0, 0.0
    else:
        x, v = init
    e = math.exp(-gamma * h / 2.0)
    wd = np.sqrt(omegas**2 - gamma**2 / 4.0)
    c, s = np.cos(wd * h), np.sin(wd * h)
    g2 = gamma / 2.0
    p00 = e * (c + g2 * s / wd)
    p01 = e * s / wd
    p10 = -e * omegas**2 * s / wd
    p11 = e * (c - g2 * s / wd)
    out = np.empty(n)
    out[0] = x
    if s_f > 0:
        sig_b = s_f / (2.0 * mass**2 * gamma)
        sig_a = sig_b / omegas**2
        q00 = sig_a - (p00**2 * sig_a + p01**2 * sig_b)
        q01 = -(p00 * p10 * sig_a + p01 * p11 * sig_b)
        q11 = sig_b - (p10**2 * sig_a + p11**2 * sig_b)
        l00 = np.sqrt(np.maximum(q00, 0.0))
        l10 = np.divide(q01, l00, out=np.zeros_like(q01), where=l00 > 0)
        l11 = np.sqrt(np.maximum(q11 - l10**2, 0.0))
        eta = rng.standard_normal((2, n - 1))
        n0 = (l00 * eta[0]).tolist()
        n1 = (l10 * eta[0] + l11 * eta[1]).tolist()
    else:
        n0 = n1 = [0.0] * (n - 1)
    a00, a01, a10, a11 = p00.tolist(), p01.tolist(), p10.tolist(), p11.tolist()
    for k in range(n - 1):
        x, v = (a00[k] * x + a01[k] * v + n0[k],
                a10[k] * x + a11[k] * v + n1[k])
        out[k + 1] = x
    return out


def _decimate(x, rate_in, rate_out):
    """Anti-alias low-pass plus integer-stride downsampling."""
    ratio = rate_in / rate_out
    stride = int(round(ratio))
    if abs(ratio - stride) > 1e-9:
        raise InvalidParameterError(
            f"rate ratio {ratio:.6g} is not an integer decimation factor")
    if stride == 1:
        return x
    y = cascaded_lowpass(x, rate_in, ANTI_ALIAS_FRACTION * rate_out, ANTI_ALIAS_ORDER)
    return y[::stride]


# ----------------------------------------------------------------------
# engines
# ----------------------------------------------------------------------

def simulate_secular(plan: SimPlan) -> dict[str, TimeSeries]:
    """Thermal secular motion per axis.

    Constant-frequency axes are sampled exactly at the output rate; drifting
    axes are integrated on the solver grid and decimated.
    """
    if plan.engine != "secular":
        raise InvalidParameterError("plan.engine must be 'secular'")
    n = plan.n_samples
    rngs = plan.axis_streams()
    out = {}
    for ax in plan.axes:
        omega = plan.omega_o[ax]
        drift = plan.drift[ax]
        s_f = plan.force_psd[ax]
        init = plan.initial_state.get(ax)
        if drift.shape == "none" and drift.offset == 0.0:
            vals = _exact_const_omega(omega, plan.gamma, s_f, plan.mass,
                                      1.0 / plan.output_rate, n, rngs[ax], init)
        else:
            if drift.min_delta(plan.duration) + omega <= 0:
                raise SimulationAbort("drift makes w(t) non-positive", t=0.0)
            h = plan.solver_step
            n_fine = int(round(plan.duration / h))
            t_mid = (np.arange(n_fine) + 0.5) * h

            def omega_t(t, _d=drift, _w=omega):
                return _w + _d.delta_omega(t)

            fine = _split_drifting_omega(omega_t, plan.gamma, s_f, plan.mass,
                                         h, n_fine, rngs[ax], init, t_mid)
            vals = _decimate(fine, 1.0 / h, plan.output_rate)[:n]
        out[ax] = TimeSeries(sample_rate=plan.output_rate, values=vals, axis=ax,
                             metadata={"engine": "secular", "seed": plan.seed,
                                       "gamma": plan.gamma, "omega_o": omega,
                                       "force_psd": s_f, "units": "m"})
    return out


def simulate_quadrature(plan: SimPlan) -> dict[str, QuadratureSeries]:
    """Rotating-frame quadratures as exact OU updates.

    Var(X) = Var(Y) = S_F / (2 m^2 w_o^2 gamma) in the stationary state; a
    drift rotates (X, Y) at the instantaneous detuning and leaves R invariant.
    """
    if plan.engine != "quadrature":
        raise InvalidParameterError("plan.engine must be 'quadrature'")
    if plan.gamma <= 0:
        raise InvalidParameterError("quadrature engine needs gamma > 0")
    for ax in plan.axes:
        if plan.gamma >= plan.omega_o[ax] / 100.0:
            raise RotatingWaveError(
                f"gamma={plan.gamma:.3g} rad/s is not << omega_o on axis {ax}; "
                "rotating-wave description invalid")
    n = plan.n_samples
    h = 1.0 / plan.output_rate
    alpha = math.exp(-plan.gamma * h / 2.0)
    rngs = plan.axis_streams()
    out = {}
    for ax in plan.axes:
        omega = plan.omega_o[ax]
        s_f = plan.force_psd[ax]
        var_st = s_f / (2.0 * plan.mass**2 * omega**2 * plan.gamma)
        rng = rngs[ax]
        init = plan.initial_state.get(ax)
        if init is None:
            x0 = rng.standard_normal() * math.sqrt(var_st)
            y0 = rng.standard_normal() * math.sqrt(var_st)
        else:
            x0, y0 = init
        q_step = var_st * (1.0 - alpha * alpha)
        if q_step > 0:
            w = rng.standard_normal((2, n - 1)) * math.sqrt(q_step)
            zi = np.array([alpha * x0]), np.array([alpha * y0])
            xs = signal.lfilter([1.0], [1.0, -alpha], w[0], zi=zi[0])[0]
            ys = signal.lfilter([1.0], [1.0, -alpha], w[1], zi=zi[1])[0]
            x = np.concatenate(([x0], xs))
            y = np.concatenate(([y0], ys))
        else:
            decay = alpha ** np.arange(n)
            x, y = x0 * decay, y0 * decay
        drift = plan.drift[ax]
        if drift.shape != "none" or drift.offset != 0.0:
            ph = drift.phase(np.arange(n) * h)
            c, s = np.cos(ph), np.sin(ph)
            x, y = x * c - y * s, x * s + y * c
        out[ax] = QuadratureSeries(
            sample_rate=plan.output_rate, x=x, y=y, f_lo=omega / TWO_PI, axis=ax,
            metadata={"engine": "quadrature", "seed": plan.seed, "gamma": plan.gamma,
                      "omega_o": omega, "force_psd": s_f, "var_stationary": var_st,
                      "units": "m"})
    return out


def simulate_mathieu(plan: SimPlan, trap: TrapConfig, particle: ParticleSpec,
                     mathieu: MathieuParams | None = None) -> dict[str, TimeSeries]:
    """Full Mathieu dynamics with damping and white force noise (BAOAB).

    The spectral peak sits at the secular frequency (with O(q^2) corrections
    to the pseudopotential value) and micromotion sidebands appear at
    w_d +/- w_i.  Aborts when the amplitude exceeds 1000x the thermal scale.
    """
    if plan.engine != "mathieu":
        raise InvalidParameterError("plan.engine must be 'mathieu'")
    from .trapphys import mathieu_params as _mp
    mp = mathieu if mathieu is not None else _mp(trap, particle)
    report = stability_check(mp)
    bad = [ax for ax in plan.axes if not report.trapped[ax]]
    if bad:
        raise SimulationAbort(f"secular stability test fails on axes {bad}", t=0.0)
    w_d = trap.drive_angular_freq
    h = plan.solver_step
    if h > TWO_PI / w_d / 50.0:
        raise InvalidParameterError("solver_step must resolve the drive period (<= T_d/50)")
    n_fine = int(round(plan.duration / h))
    rngs = plan.axis_streams()
    out = {}
    for ax in plan.axes:
        i = AXES.index(ax)
        a_i, q_i = mp.a[i], mp.q[i]
        s_f = plan.force_psd[ax]
        rng = rngs[ax]
        gamma = plan.gamma
        c_noise = s_f / plan.mass**2
        if gamma > 0:
            decay = math.exp(-gamma * h)
            sig_o = math.sqrt(c_noise * (1.0 - decay * decay) / (2.0 * gamma))
        else:
            decay, sig_o = 1.0, math.sqrt(c_noise * h)
        init = plan.initial_state.get(ax)
        w_sec = plan.omega_o[ax]
        if init is None:
            if s_f > 0 and gamma > 0:
                sig_a, sig_b = _stationary_cov(w_sec, gamma, s_f, plan.mass)
                x = rng.standard_normal() * math.sqrt(sig_a)
                v = rng.standard_normal() * math.sqrt(sig_b)
            else:
                x, v = 0.0, 0.0
        else:
            x, v = init
        if s_f > 0 and gamma > 0:
            x_ref = math.sqrt(_stationary_cov(w_sec, gamma, s_f, plan.mass)[0])
        else:
            x_ref = max(abs(x), abs(v) / max(w_sec, 1.0), 1e-30)
        limit = INSTABILITY_FACTOR * x_ref
        w2 = (w_d * w_d / 4.0) * (a_i + 2.0 * q_i * np.cos(w_d * (np.arange(n_fine + 1) * h)))
        w2 = w2.tolist()
        noise = (rng.standard_normal(n_fine) * sig_o).tolist() if sig_o > 0 \
            else [0.0] * n_fine
        fine = np.empty(n_fine)
        half = h / 2.0
        for k in range(n_fine):
            fine[k] = x
            v -= half * w2[k] * x
            x += half * v
            v = decay * v + noise[k]
            x += half * v
            v -= half * w2[k + 1] * x
            if abs(x) > limit:
                raise SimulationAbort(
                    f"Mathieu instability on axis {ax}: |x| > {INSTABILITY_FACTOR:.0f} x thermal scale",
                    t=k * h)
        vals = _decimate(fine, 1.0 / h, plan.output_rate)[:plan.n_samples]
        out[ax] = TimeSeries(sample_rate=plan.output_rate, values=vals, axis=ax,
                             metadata={"engine": "mathieu", "seed": plan.seed,
                                       "a": a_i, "q": q_i, "drive": w_d, "units": "m"})
    return out


def apply_measurement(ts: TimeSeries, camera_rate: float, noise_floor: float = 0.0,
                      pixel_size: float | None = None, seed: int = 0) -> TimeSeries:
    """Camera measurement model: decimation, white position noise, quantization.

    The noise floor is a one-sided displacement PSD (m^2/Hz), i.e. added
    sample noise of variance noise_floor * camera_rate / 2.  A pixel size
    quantizes to the brightest-pixel grid.
    """
    if camera_rate > ts.sample_rate:
        raise InvalidParameterError("camera rate cannot exceed the input sample rate")
    if noise_floor < 0:
        raise InvalidParameterError("noise floor must be >= 0")
    vals = _decimate(ts.values, ts.sample_rate, camera_rate)
    if noise_floor > 0:
        rng = np.random.default_rng(np.random.SeedSequence(seed))
        vals = vals + rng.standard_normal(vals.size) * math.sqrt(
            noise_floor * camera_rate / 2.0)
    if pixel_size is not None:
        if pixel_size <= 0:
            raise InvalidParameterError("pixel size must be positive")
        vals = pixel_size * np.round(vals / pixel_size)
    meta = dict(ts.metadata)
    meta.update(camera_rate=camera_rate, noise_floor=noise_floor,
                pixel_size=pixel_size)
    return TimeSeries(sample_rate=camera_rate, values=vals, axis=ts.axis,
                      t0=ts.t0, metadata=meta)


def thermal_plan(temperature: float, mass: float, omega: float, gamma: float,
                 duration: float, output_rate: float, seed: int,
                 engine: str = "secular", axes=("x",), drift=None) -> SimPlan:
    """Convenience: a plan driven by a thermal bath at the given temperature."""
    from .trapphys import thermal_force_psd
    s_f = thermal_force_psd(temperature, mass, gamma)
    return SimPlan(duration=duration, output_rate=output_rate, seed=seed,
                   omega_o=omega, gamma=gamma, force_psd=s_f, mass=mass,
                   axes=axes, drift=drift or {}, engine=engine)
