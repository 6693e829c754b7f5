"""Dissipative collapse models (dCSL, dDP): collapse strengths, damping rates
and exclusion maps from a measured damping upper bound.

Conventions
-----------
* Rates are angular (rad/s) internally; exclusion compares gamma/2pi in Hz
  against the Hz-valued measured bound.
* chi = hbar^2 / (8 M k_B T L^2) is the dissipation parameter.  The bulk
  (composition-dependent) variants evaluate it with a building-block mass
  ``m_block`` that defaults to the nucleon reference mass; the
  single-particle variants replace the building block by the whole particle
  (mass in chi, in the strength and in the rate prefactor alike).
* The closed-form sphere strengths suffer catastrophic cancellation when the
  particle is much smaller than the dissipation-dressed kernel length
  L = length * (1 + chi); a power series takes over there, with branches
  agreeing to better than 1e-8 at the handover.
"""

from __future__ import annotations

import math
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy import special

from .constants import G_NEWTON, HBAR, K_B, M_NUCLEON, TWO_PI
from .errors import InvalidParameterError, OutOfRegimeWarning
from .trapphys import ParticleSpec


@dataclass(frozen=True)
class DcslParams:
    """Dissipative CSL: collapse rate, correlation length, noise temperature."""

    lambda_rate: float    # 1/s
    r_c: float            # m
    t_dcsl: float         # K

    def __post_init__(self):
        if not (np.all(np.asarray(self.lambda_rate) > 0)
                and np.all(np.asarray(self.r_c) > 0)
                and np.all(np.asarray(self.t_dcsl) > 0)):
            raise InvalidParameterError("all dCSL parameters must be positive")


@dataclass(frozen=True)
class DdpParams:
    """Dissipative Diosi-Penrose: cutoff length and noise temperature."""

    r_0: float            # m
    t_ddp: float          # K

    def __post_init__(self):
        if not (np.all(np.asarray(self.r_0) > 0)
                and np.all(np.asarray(self.t_ddp) > 0)):
            raise InvalidParameterError("all dDP parameters must be positive")


@dataclass(frozen=True)
class MeasuredBound:
    """Upper limit on collapse-induced damping, as gamma/2pi in Hz."""

    gamma_cm_upper_hz: float
    confidence: float = 0.95

    def __post_init__(self):
        if self.gamma_cm_upper_hz <= 0:
            raise InvalidParameterError("bound must be positive")
        if not 0 < self.confidence < 1:
            raise InvalidParameterError("confidence must be in (0, 1)")


def chi(mass: float, temperature, length):
    """Dissipation parameter hbar^2 / (8 M k_B T L^2)."""
    t = np.asarray(temperature, dtype=float)
    ell = np.asarray(length, dtype=float)
    if mass <= 0 or np.any(t <= 0) or np.any(ell <= 0):
        raise InvalidParameterError("chi arguments must be positive")
    out = HBAR**2 / (8.0 * mass * K_B * t * ell**2)
    return out if out.ndim else float(out)


# ----------------------------------------------------------------------
# sphere geometry factors, cancellation-safe
# ----------------------------------------------------------------------

_DCSL_SERIES_SWITCH = 0.01   # in u = (r/L)^2
_DDP_SERIES_SWITCH = 0.1     # in eps = r/L


def _bracket_dcsl(u):
    """B(u) = 1 - 2/u + e^-u (1 + 2/u)  =  sum_{k>=2} (-u)^k (k-1)/(k+1)!.

    B ~ u^2/6 for small u and -> 1 for large u.
    """
    u = np.asarray(u, dtype=float)
    out = np.empty_like(u)
    small = u < _DCSL_SERIES_SWITCH
    if np.any(small):
        us = u[small]
        acc = np.zeros_like(us)
        for k in range(12, 1, -1):
            acc = acc * (-us) + (k - 1) / math.factorial(k + 1)
        out[small] = acc * us**2
    big = ~small
    if np.any(big):
        ub = u[big]
        out[big] = 1.0 - 2.0 / ub + np.exp(-ub) * (1.0 + 2.0 / ub)
    return out


# series of V(eps) = W(eps)/eps^3 with
# W = sqrt(pi) eps^3 erf(eps) + eps^2 (e^{-eps^2} - 3) + 2 (1 - e^{-eps^2})
_DDP_V_COEFFS = ((3, 1.0 / 6.0), (5, -1.0 / 20.0), (7, 3.0 / 280.0),
                 (9, -1.0 / 540.0), (11, 1.0 / 3696.0), (13, -1.0 / 29120.0),
                 (15, 1.0 / 259200.0))


def _v_ddp(eps):
    """V(eps) = sqrt(pi) erf(eps) + (e^{-eps^2} - 3)/eps + 2 (1 - e^{-eps^2})/eps^3.

    V ~ eps^3/6 for small eps and -> sqrt(pi) for large eps.
    """
    eps = np.asarray(eps, dtype=float)
    out = np.empty_like(eps)
    small = eps < _DDP_SERIES_SWITCH
    if np.any(small):
        es = eps[small]
        acc = np.zeros_like(es)
        for p, c in reversed(_DDP_V_COEFFS):
            acc = acc * es**2 + c
        out[small] = acc * es**3
    big = ~small
    if np.any(big):
        eb = eps[big]
        e2 = np.exp(-eb * eb)
        out[big] = (math.sqrt(math.pi) * special.erf(eb)
                    + (e2 - 3.0) / eb + 2.0 * (1.0 - e2) / eb**3)
    return out


# ----------------------------------------------------------------------
# dCSL
# ----------------------------------------------------------------------

def eta_dcsl_sphere(particle: ParticleSpec, d: DcslParams,
                    m_block: float = M_NUCLEON):
    """Bulk dCSL collapse strength of a homogeneous sphere (1/(m^2 s)).

    eta = 3 lambda r_C^2 m^2 / ((1+chi) r^4 m0^2) * B(r^2 / (r_C (1+chi))^2)
    with the T -> infinity limit recovering the standard CSL sphere value.
    """
    x = chi(m_block, d.t_dcsl, d.r_c)
    ell = d.r_c * (1.0 + x)
    u = (particle.radius / ell) ** 2
    pref = (3.0 * d.lambda_rate * d.r_c**2 * particle.mass**2
            / ((1.0 + x) * particle.radius**4 * M_NUCLEON**2))
    out = pref * _bracket_dcsl(u)
    return out if np.ndim(out) else float(out)


def eta_dcsl_single(particle: ParticleSpec, d: DcslParams):
    """Single-particle dCSL strength: lambda m^2 / (2 m0^2 r_C^2 (1+chi)^5)
    with chi built from the total mass."""
    x = chi(particle.mass, d.t_dcsl, d.r_c)
    out = d.lambda_rate * particle.mass**2 / (
        2.0 * M_NUCLEON**2 * d.r_c**2 * (1.0 + x) ** 5)
    return out if np.ndim(out) else float(out)


def eta_dcsl_strong(particle: ParticleSpec, d: DcslParams,
                    m_block: float = M_NUCLEON):
    """Strong-dissipation (lattice) approximation of the bulk dCSL strength.

    eta = m m_a lambda r_C / (2 a^3 m0^2 (1+chi)^2) * min[1, r^3/(r_C(1+chi))^3]
    Valid for lattice constants well below r_C (1 + chi); evaluating outside
    that regime raises an OutOfRegimeWarning but still returns the value.
    """
    x = chi(m_block, d.t_dcsl, d.r_c)
    ell = d.r_c * (1.0 + x)
    if np.any(particle.lattice_constant >= np.asarray(ell) / 10.0):
        warnings.warn("strong-dissipation formula outside its regime: "
                      "a_lat >= r_C (1 + chi) / 10", OutOfRegimeWarning,
                      stacklevel=2)
    pref = (particle.mass * particle.avg_nucleus_mass * d.lambda_rate * d.r_c
            / (2.0 * particle.lattice_constant**3 * M_NUCLEON**2 * (1.0 + x) ** 2))
    out = pref * np.minimum(1.0, (particle.radius / ell) ** 3)
    return out if np.ndim(out) else float(out)


def gamma_dcsl(particle: ParticleSpec, d: DcslParams,
               use_single_particle: bool = False,
               m_block: float = M_NUCLEON):
    """dCSL damping rate (rad/s): gamma = eta 4 r_C^2 chi (1+chi) m_block/m.

    The single-particle variant replaces the building block by the whole
    particle, so the mass ratio drops out.
    """
    if use_single_particle:
        x = chi(particle.mass, d.t_dcsl, d.r_c)
        eta = eta_dcsl_single(particle, d)
        out = eta * 4.0 * d.r_c**2 * x * (1.0 + x)
    else:
        x = chi(m_block, d.t_dcsl, d.r_c)
        eta = eta_dcsl_sphere(particle, d, m_block)
        out = eta * 4.0 * d.r_c**2 * x * (1.0 + x) * m_block / particle.mass
    return out if np.ndim(out) else float(out)


def s_dcsl_psd(omega, particle: ParticleSpec, d: DcslParams, gamma_gas: float,
               use_single_particle: bool = False,
               m_block: float = M_NUCLEON):
    """dCSL force-noise spectral density (N^2/Hz):

    S(w) = hbar^2 eta [1 + kappa^2 m^2 (gamma_t^2 + w^2)]
    with gamma_t = gamma_gas + gamma_dcsl and kappa = gamma_dcsl/(2 hbar eta).
    White standard-CSL noise is recovered as T -> infinity.
    """
    if use_single_particle:
        eta = eta_dcsl_single(particle, d)
    else:
        eta = eta_dcsl_sphere(particle, d, m_block)
    g_c = gamma_dcsl(particle, d, use_single_particle, m_block)
    kap = g_c / (2.0 * HBAR * eta)
    g_t = gamma_gas + g_c
    w = np.asarray(omega, dtype=float)
    out = HBAR**2 * eta * (1.0 + kap**2 * particle.mass**2 * (g_t**2 + w**2))
    return out if out.ndim else float(out)


# ----------------------------------------------------------------------
# dDP
# ----------------------------------------------------------------------

def eta_ddp_sphere(particle: ParticleSpec, d: DdpParams,
                   m_block: float = M_NUCLEON):
    """Bulk dDP collapse strength of a homogeneous sphere (1/(m^2 s)).

    eta = G m_block^2 / (sqrt(pi) r^3 hbar) * V(r / (R_0 (1+chi_0)))
    where V collects the Erf/exponential bracket; T -> infinity gives the
    standard DP value.
    """
    x = chi(m_block, d.t_ddp, d.r_0)
    ell = d.r_0 * (1.0 + x)
    eps = particle.radius / ell
    pref = G_NEWTON * m_block**2 / (math.sqrt(math.pi) * particle.radius**3 * HBAR)
    out = pref * _v_ddp(eps)
    return out if np.ndim(out) else float(out)


def eta_ddp_single(particle: ParticleSpec, d: DdpParams):
    """Single-particle dDP strength: G m^2 / (6 sqrt(pi) hbar R_0^3 (1+chi_0)^3)
    with chi_0 built from the total mass."""
    x = chi(particle.mass, d.t_ddp, d.r_0)
    out = G_NEWTON * particle.mass**2 / (
        6.0 * math.sqrt(math.pi) * HBAR * d.r_0**3 * (1.0 + x) ** 3)
    return out if np.ndim(out) else float(out)


def eta_ddp_strong(particle: ParticleSpec, d: DdpParams,
                   m_block: float = M_NUCLEON):
    """Strong-dissipation (lattice) approximation of the dDP strength.

    eta = G m m_a / (6 sqrt(pi) a^3 hbar) * min[1, r^3/(R_0 (1+chi_0))^3]
    """
    x = chi(m_block, d.t_ddp, d.r_0)
    ell = d.r_0 * (1.0 + x)
    if np.any(particle.lattice_constant >= np.asarray(ell) / 10.0):
        warnings.warn("strong-dissipation formula outside its regime: "
                      "a_lat >= R_0 (1 + chi_0) / 10", OutOfRegimeWarning,
                      stacklevel=2)
    pref = (G_NEWTON * particle.mass * particle.avg_nucleus_mass
            / (6.0 * math.sqrt(math.pi) * particle.lattice_constant**3 * HBAR))
    out = pref * np.minimum(1.0, (particle.radius / ell) ** 3)
    return out if np.ndim(out) else float(out)


def gamma_ddp(particle: ParticleSpec, d: DdpParams,
              use_single_particle: bool = False,
              m_block: float = M_NUCLEON):
    """dDP damping rate (rad/s): gamma = eta 4 R_0^2 chi_0 (1+chi_0) m_block/m."""
    if use_single_particle:
        x = chi(particle.mass, d.t_ddp, d.r_0)
        eta = eta_ddp_single(particle, d)
        out = eta * 4.0 * d.r_0**2 * x * (1.0 + x)
    else:
        x = chi(m_block, d.t_ddp, d.r_0)
        eta = eta_ddp_sphere(particle, d, m_block)
        out = eta * 4.0 * d.r_0**2 * x * (1.0 + x) * m_block / particle.mass
    return out if np.ndim(out) else float(out)


# ----------------------------------------------------------------------
# exclusion maps
# ----------------------------------------------------------------------

@dataclass(frozen=True)
class ExclusionGrid:
    """Boolean exclusion map over a 2-D log-spaced parameter grid.

    ``excluded[i, j]`` refers to axis2 value i and axis1 value j.  The
    boundary is the per-column threshold crossing, log-linearly interpolated.
    """

    model: str
    variant: str
    axis1_name: str
    axis1_values: np.ndarray
    axis2_name: str
    axis2_values: np.ndarray
    gamma_hz: np.ndarray
    excluded: np.ndarray
    indeterminate: np.ndarray
    boundary: np.ndarray      # (k, 2) columns: axis1, axis2 crossing
    bound: MeasuredBound
    meta: dict = field(default_factory=dict)

    @property
    def n_indeterminate(self) -> int:
        return int(np.count_nonzero(self.indeterminate))

    def boundary_minimum(self):
        """(axis1, axis2) of the smallest axis2 value on the boundary."""
        if self.boundary.size == 0:
            return None
        i = int(np.argmin(self.boundary[:, 1]))
        return tuple(self.boundary[i])

    def excluded_axis1_span(self):
        """(min, max) axis1 values of any excluded cell, or None."""
        cols = np.any(self.excluded, axis=0)
        if not np.any(cols):
            return None
        vals = self.axis1_values[cols]
        return float(vals.min()), float(vals.max())


def log_axis(lo: float, hi: float, n: int) -> np.ndarray:
    if n < 50:
        raise InvalidParameterError("grid axes need at least 50 points")
    if not (0 < lo < hi):
        raise InvalidParameterError("axis limits must satisfy 0 < lo < hi")
    return np.logspace(math.log10(lo), math.log10(hi), n)


def _check_log_spaced(values):
    v = np.asarray(values, dtype=float)
    if v.size < 50:
        raise InvalidParameterError("grid axes need at least 50 points")
    ratios = np.diff(np.log(v))
    if np.any(v <= 0) or not np.allclose(ratios, ratios[0], rtol=1e-6):
        raise InvalidParameterError("grid axes must be positive and log-spaced")
    return v


def _boundary_from_columns(axis1, axis2, gamma_hz, threshold):
    pts = []
    log2 = np.log(axis2)
    with np.errstate(divide="ignore"):
        d = np.log(gamma_hz) - math.log(threshold)
    for j, x1 in enumerate(axis1):
        col = d[:, j]
        ok = np.isfinite(col)
        for i in range(len(axis2) - 1):
            if not (ok[i] and ok[i + 1]):
                continue
            if col[i] == 0.0 or (col[i] < 0) != (col[i + 1] < 0):
                frac = -col[i] / (col[i + 1] - col[i])
                y = math.exp(log2[i] + frac * (log2[i + 1] - log2[i]))
                pts.append((x1, y))
    return np.array(pts) if pts else np.empty((0, 2))


def exclusion_map(model: str, axis1, axis2, particle: ParticleSpec,
                  bound: MeasuredBound, fixed: dict | None = None,
                  variant: str | None = None, m_block: float = M_NUCLEON,
                  workers: int | None = None) -> ExclusionGrid:
    """Exclusion map: a cell is excluded iff gamma_model/2pi exceeds the bound.

    * model "dcsl": axis1 = ("r_c", values), axis2 = ("lambda", values),
      fixed = {"t_dcsl": K}; bulk-sphere variant by default.
    * model "ddp":  axis1 = ("r_0", values), axis2 = ("t_ddp", values);
      single-particle variant by default.

    Cells whose evaluation fails are marked indeterminate and the run
    continues.  Column evaluation may be spread over ``workers`` threads;
    results are written by index so the outcome is schedule-independent.
    """
    fixed = dict(fixed or {})
    name1, vals1 = axis1
    name2, vals2 = axis2
    vals1 = _check_log_spaced(vals1)
    vals2 = _check_log_spaced(vals2)
    if model == "dcsl":
        variant = variant or "sphere"
        t_dcsl = fixed.pop("t_dcsl")

        def column(x1):
            p = DcslParams(lambda_rate=vals2, r_c=x1, t_dcsl=t_dcsl)
            return gamma_dcsl(particle, p, use_single_particle=(variant == "single"),
                              m_block=m_block) / TWO_PI
    elif model == "ddp":
        variant = variant or "single"

        def column(x1):
            p = DdpParams(r_0=x1, t_ddp=vals2)
            return gamma_ddp(particle, p, use_single_particle=(variant == "single"),
                             m_block=m_block) / TWO_PI
    else:
        raise InvalidParameterError(f"unknown model {model!r}")
    if fixed:
        raise InvalidParameterError(f"unused fixed parameters: {sorted(fixed)}")

    gamma_hz = np.full((vals2.size, vals1.size), np.nan)

    def run_column(j):
        try:
            gamma_hz[:, j] = column(vals1[j])
        except Exception:
            pass  # column stays NaN -> indeterminate

    if workers and workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            list(pool.map(run_column, range(vals1.size)))
    else:
        for j in range(vals1.size):
            run_column(j)

    indeterminate = ~np.isfinite(gamma_hz)
    with np.errstate(invalid="ignore"):
        excluded = gamma_hz > bound.gamma_cm_upper_hz
    excluded = np.where(indeterminate, False, excluded)
    boundary = _boundary_from_columns(vals1, vals2, gamma_hz, bound.gamma_cm_upper_hz)
    meta = {"model": model, "variant": variant, "particle_radius_m": particle.radius,
            "particle_mass_kg": particle.mass,
            "bound_gamma_cm_hz": bound.gamma_cm_upper_hz,
            "confidence": bound.confidence,
            "grid": f"{name1}[{vals1[0]:.3g}..{vals1[-1]:.3g}] x "
                    f"{name2}[{vals2[0]:.3g}..{vals2[-1]:.3g}] "
                    f"({vals1.size}x{vals2.size})"}
    if model == "dcsl":
        meta["t_dcsl_K"] = t_dcsl
    return ExclusionGrid(model=model, variant=variant,
                         axis1_name=name1, axis1_values=vals1,
                         axis2_name=name2, axis2_values=vals2,
                         gamma_hz=gamma_hz, excluded=excluded,
                         indeterminate=indeterminate, boundary=boundary,
                         bound=bound, meta=meta)


def manifest_block(grid: ExclusionGrid) -> str:
    lines = [f"{k} = {v}" for k, v in sorted(grid.meta.items())]
    lines.append(f"indeterminate_cells = {grid.n_indeterminate}")
    return "\n".join(lines)


def write_grid_csv(grid: ExclusionGrid, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for line in manifest_block(grid).splitlines():
            fh.write(f"# {line}\n")
        fh.write(f"{grid.axis1_name},{grid.axis2_name},gamma_model_hz,excluded\n")
        for j, x1 in enumerate(grid.axis1_values):
            for i, x2 in enumerate(grid.axis2_values):
                g = grid.gamma_hz[i, j]
                fh.write(f"{x1:.9e},{x2:.9e},{g:.9e},{int(grid.excluded[i, j])}\n")


def write_boundary_csv(grid: ExclusionGrid, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for line in manifest_block(grid).splitlines():
            fh.write(f"# {line}\n")
        fh.write(f"{grid.axis1_name},{grid.axis2_name}\n")
        for x1, x2 in grid.boundary:
            fh.write(f"{x1:.9e},{x2:.9e}\n")
