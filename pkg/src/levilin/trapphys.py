"""Closed-form physics of the linear Paul trap, the gas environment and the
force-noise budget.

Everything here is an algebraic map from experiment parameters to oscillator
parameters (secular frequencies, damping rate, force PSDs).  Damping rates are
stored as angular rates (rad/s) throughout; report them as ``gamma / 2pi`` in
Hz.  Force PSDs follow the delta-correlation convention
``<F(t) F(t')> = S_F delta(t - t')``, so thermal equilibrium corresponds to
``S_F = 2 k_B T m gamma``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .constants import AMU, E_CHARGE, HBAR, K_B, TWO_PI
from .errors import InvalidParameterError, UntrappedAxisError

AXES = ("x", "y", "z")

# Default silica material constants (overridable): mean nucleus mass of
# Si/O/O and a typical lattice spacing.  Only the strong-dissipation collapse
# formulas are sensitive to these.
SILICA_NUCLEUS_MASS = 20.0 * AMU
SILICA_LATTICE_CONSTANT = 0.4e-9


@dataclass(frozen=True)
class ParticleSpec:
    """Geometry, mass and charge state of the levitated sphere.

    ``mass`` defaults to the homogeneous-sphere value ``4/3 pi rho r^3`` and
    may be overridden with a measured mass.
    """

    radius: float                 # m
    density: float                # kg/m^3
    charge_count: int = 0         # number of elementary charges
    mass: float | None = None     # kg; None -> from radius and density
    avg_nucleus_mass: float = SILICA_NUCLEUS_MASS   # kg
    lattice_constant: float = SILICA_LATTICE_CONSTANT  # m

    def __post_init__(self):
        if self.radius <= 0 or self.density <= 0:
            raise InvalidParameterError("radius and density must be positive")
        if self.charge_count < 0:
            raise InvalidParameterError("charge_count must be >= 0")
        if self.avg_nucleus_mass <= 0 or self.lattice_constant <= 0:
            raise InvalidParameterError("material constants must be positive")
        if self.mass is None:
            object.__setattr__(self, "mass", self.sphere_mass())
        elif self.mass <= 0:
            raise InvalidParameterError("mass must be positive")

    def sphere_mass(self) -> float:
        return 4.0 / 3.0 * math.pi * self.density * self.radius**3

    @property
    def charge(self) -> float:
        """Total electric charge in coulomb."""
        return self.charge_count * E_CHARGE


@dataclass(frozen=True)
class GasEnvironment:
    """Residual gas around the particle."""

    pressure: float          # Pa
    temperature: float       # K
    molecular_mass: float    # kg

    def __post_init__(self):
        if self.pressure < 0:
            raise InvalidParameterError("pressure must be >= 0")
        if self.temperature <= 0 or self.molecular_mass <= 0:
            raise InvalidParameterError("temperature and molecular mass must be positive")

    def with_pressure(self, pressure_pa: float) -> "GasEnvironment":
        return GasEnvironment(pressure_pa, self.temperature, self.molecular_mass)


# Molecular mass of N2, the default residual-gas composition.
N2_MOLECULAR_MASS = 4.65e-26


@dataclass(frozen=True)
class TrapConfig:
    """Linear Paul trap: geometry, efficiency factors and drive voltages.

    ``eta_ac`` and ``kappa_dc`` are the quadrupolar efficiency coefficients of
    the AC and DC potentials (an FEM calculation in the lab; plain inputs
    here).
    """

    r_o: float                # m, centre to AC electrodes
    z_o: float                # m, centre to DC endcaps
    eta_ac: float             # dimensionless
    kappa_dc: float           # dimensionless
    U_o: float                # V, DC potential
    V_o: float                # V, AC amplitude
    drive_angular_freq: float  # rad/s

    def __post_init__(self):
        if self.r_o <= 0 or self.z_o <= 0:
            raise InvalidParameterError("electrode distances must be positive")
        if not (0 < self.eta_ac <= 1) or not (0 < self.kappa_dc <= 1):
            raise InvalidParameterError("efficiency factors must be in (0, 1]")
        if self.drive_angular_freq <= 0:
            raise InvalidParameterError("drive frequency must be positive")


@dataclass(frozen=True)
class MathieuParams:
    """Dimensionless Mathieu stability parameters along (x, y, z)."""

    a: tuple[float, float, float]
    q: tuple[float, float, float]

    def max_abs_q(self) -> float:
        return max(abs(v) for v in self.q)


@dataclass(frozen=True)
class StabilityReport:
    trapped: dict[str, bool]
    max_abs_q: float
    pseudo_potential_valid: bool


@dataclass(frozen=True)
class NoiseBudget:
    """Force-noise entries with their heating rates, plus the predicted
    effective-temperature law T_eff(P)."""

    entries: list = field(default_factory=list)  # (label, S_F [N^2/Hz], heating [quanta/s])
    reference_secular_freq: float = 0.0          # rad/s
    excess_force_psd: float = 0.0                # N^2/Hz, sum of non-thermal entries
    thermal_psd_per_pa: float = 0.0              # N^2/Hz per Pa of gas pressure
    pressure_3db: float = math.inf               # Pa at which S_excess = S_thermal
    bath_temperature: float = 0.0                # K

    def t_eff(self, pressure_pa):
        """Predicted effective temperature at the given pressure(s) in Pa."""
        p = np.asarray(pressure_pa, dtype=float)
        return self.bath_temperature * (1.0 + self.excess_force_psd
                                        / (self.thermal_psd_per_pa * p))


def mathieu_params(trap: TrapConfig, particle: ParticleSpec) -> MathieuParams:
    """Mathieu (a, q) parameters of a charged particle in the linear trap.

    a_x = a_y = -a_z/2 = -(Q/m) 4 kappa U_o / (z_o^2 w_d^2)
    q_x = -q_y = (Q/m) 2 eta V_o / (r_o^2 w_d^2),  q_z = 0
    """
    if particle.mass <= 0:
        raise InvalidParameterError("particle mass must be positive")
    if trap.drive_angular_freq <= 0:
        raise InvalidParameterError("drive frequency must be positive")
    if particle.charge <= 0:
        raise InvalidParameterError("particle must carry positive charge to be trapped")
    qm = particle.charge / particle.mass
    wd2 = trap.drive_angular_freq**2
    a_x = -qm * 4.0 * trap.kappa_dc * trap.U_o / (trap.z_o**2 * wd2)
    q_x = qm * 2.0 * trap.eta_ac * trap.V_o / (trap.r_o**2 * wd2)
    return MathieuParams(a=(a_x, a_x, -2.0 * a_x), q=(q_x, -q_x, 0.0))


def secular_frequencies(mp: MathieuParams, drive_angular_freq: float):
    """Secular angular frequencies w_i = (w_d/2) sqrt(a_i + q_i^2/2).

    Raises UntrappedAxisError naming every axis with a non-positive radicand.
    """
    if drive_angular_freq <= 0:
        raise InvalidParameterError("drive frequency must be positive")
    beta2 = [a + q * q / 2.0 for a, q in zip(mp.a, mp.q)]
    bad = [ax for ax, b2 in zip(AXES, beta2) if b2 <= 0]
    if bad:
        raise UntrappedAxisError(bad)
    return tuple(drive_angular_freq / 2.0 * math.sqrt(b2) for b2 in beta2)


def stability_check(mp: MathieuParams) -> StabilityReport:
    """Per-axis confinement flags and the pseudopotential validity predicate.

    The harmonic pseudopotential picture holds for max |q| <~ 0.4.
    """
    trapped = {ax: (a + q * q / 2.0) > 0 for ax, a, q in zip(AXES, mp.a, mp.q)}
    qmax = mp.max_abs_q()
    return StabilityReport(trapped=trapped, max_abs_q=qmax,
                           pseudo_potential_valid=qmax <= 0.4)


def gas_damping(particle: ParticleSpec, gas: GasEnvironment) -> float:
    """Epstein drag rate (rad/s) from inelastic collisions with the gas.

    gamma = 4 pi m_g R^2 v_t P_g / (3 k_B T m) * (1 + pi/8)
    with the gas thermal velocity v_t = sqrt(8 k_B T / (pi m_g)).
    Linear in pressure; zero in vacuum.
    """
    if gas.pressure == 0.0:
        return 0.0
    v_t = math.sqrt(8.0 * K_B * gas.temperature / (math.pi * gas.molecular_mass))
    return (4.0 * math.pi * gas.molecular_mass * particle.radius**2 * v_t
            * gas.pressure / (3.0 * K_B * gas.temperature * particle.mass)
            * (1.0 + math.pi / 8.0))


def thermal_force_psd(temperature: float, mass: float, gamma: float) -> float:
    """Thermal force noise S_F = 2 k_B T m gamma (N^2/Hz, delta-strength)."""
    if temperature <= 0 or mass <= 0:
        raise InvalidParameterError("temperature and mass must be positive")
    if gamma < 0:
        raise InvalidParameterError("gamma must be >= 0")
    return 2.0 * K_B * temperature * mass * gamma


def voltage_noise_force_psd(charge_count: int, s_vv: float, d_eff: float) -> float:
    """Force noise from electrode voltage noise: S_ff = (n_ch e)^2 S_VV / D^2."""
    if d_eff <= 0:
        raise InvalidParameterError("characteristic distance D must be positive")
    return (charge_count * E_CHARGE)**2 * s_vv / d_eff**2


def field_gradient(d_eff: float, d_first: float, mean_pos=(0.0, 0.0)):
    """First-order electric field per unit electrode voltage near the centre.

    E/V = (1/D + <x>/D1) xhat + (1/D + <y>/D1) yhat
    """
    if d_eff <= 0 or d_first <= 0:
        raise InvalidParameterError("field-expansion distances must be positive")
    mx, my = mean_pos
    return (1.0 / d_eff + mx / d_first, 1.0 / d_eff + my / d_first)


def heating_rate(force_psd: float, mass: float, omega: float) -> float:
    """Phonon heating rate S_F / (2 m hbar w) in quanta/s."""
    if omega <= 0:
        raise InvalidParameterError("omega must be positive")
    return force_psd / (2.0 * mass * HBAR * omega)


def noise_budget(entries, particle: ParticleSpec, omega_ref: float,
                 gas: GasEnvironment) -> NoiseBudget:
    """Annotate force-noise sources with heating rates and predict T_eff(P).

    ``entries`` is a list of (label, S_F) pairs of non-thermal sources.  The
    thermal PSD scales linearly with pressure, so
    T_eff(P) = T (1 + S_excess / S_thermal(P)) and the 3 dB point sits where
    the excess equals the thermal noise.
    """
    if omega_ref <= 0:
        raise InvalidParameterError("reference secular frequency must be positive")
    annotated = [(label, s_f, heating_rate(s_f, particle.mass, omega_ref))
                 for label, s_f in entries]
    s_excess = sum(s_f for _, s_f in entries)
    gamma_per_pa = gas_damping(particle, gas.with_pressure(1.0))
    s_th_per_pa = thermal_force_psd(gas.temperature, particle.mass, gamma_per_pa)
    p_3db = s_excess / s_th_per_pa if s_excess > 0 else math.inf
    return NoiseBudget(entries=annotated, reference_secular_freq=omega_ref,
                       excess_force_psd=s_excess, thermal_psd_per_pa=s_th_per_pa,
                       pressure_3db=p_3db, bath_temperature=gas.temperature)


def equipartition_variance(temperature: float, mass: float, omega: float) -> float:
    """Thermal position variance k_B T / (m w^2) of a harmonic oscillator."""
    if omega <= 0:
        raise InvalidParameterError("omega must be positive")
    return K_B * temperature / (mass * omega**2)


def quality_factor(omega: float, gamma: float) -> float:
    """Q = w / gamma."""
    if gamma <= 0:
        raise InvalidParameterError("gamma must be positive for a finite Q")
    return omega / gamma


def gamma_to_hz(gamma: float) -> float:
    """Angular damping rate -> reported linewidth gamma/2pi in Hz."""
    return gamma / TWO_PI


def hz_to_gamma(gamma_hz: float) -> float:
    """Reported linewidth gamma/2pi in Hz -> angular rate in rad/s."""
    return gamma_hz * TWO_PI
