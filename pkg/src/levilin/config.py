"""Run-configuration files for the batch pipeline.

INI-style key/value text, sections particle/gas/trap/sim/lockin/fit/sweep/
bounds.  SI units except pressures (mbar), voltages (V) and frequencies (Hz).
The schema is validated up front: unknown sections or keys, missing required
keys and unparseable values abort before any computation.
"""

from __future__ import annotations

import configparser
import io
from dataclasses import dataclass, field

from .constants import TWO_PI, mbar_to_pa
from .errors import ConfigError
from .simulate import DriftProfile, SimPlan
from .trapphys import (N2_MOLECULAR_MASS, SILICA_LATTICE_CONSTANT,
                       SILICA_NUCLEUS_MASS, GasEnvironment, ParticleSpec,
                       TrapConfig)


def _float(s):
    return float(s)


def _int(s):
    return int(s)


def _str(s):
    return s.strip()


def _float_list(s):
    return [float(tok) for tok in s.replace(",", " ").split()]


def _str_list(s):
    return [tok.strip() for tok in s.split(",") if tok.strip()]


# section -> key -> (parser, required, default)
SCHEMA = {
    "particle": {
        "radius": (_float, True, None),
        "density": (_float, True, None),
        "charge_count": (_int, False, 0),
        "mass": (_float, False, None),
        "avg_nucleus_mass": (_float, False, SILICA_NUCLEUS_MASS),
        "lattice_constant": (_float, False, SILICA_LATTICE_CONSTANT),
    },
    "gas": {
        "pressure_mbar": (_float, True, None),
        "temperature": (_float, True, None),
        "molecular_mass": (_float, False, N2_MOLECULAR_MASS),
    },
    "trap": {
        "r_o": (_float, True, None),
        "z_o": (_float, True, None),
        "eta_ac": (_float, True, None),
        "kappa_dc": (_float, True, None),
        "u_o": (_float, True, None),
        "v_o": (_float, True, None),
        "drive_freq": (_float, True, None),
    },
    "sim": {
        "engine": (_str, False, "secular"),
        "duration": (_float, True, None),
        "output_rate": (_float, True, None),
        "seed": (_int, False, 0),
        "axes": (_str_list, False, ["x"]),
        "omega_hz": (_float_list, False, None),
        "gamma_hz": (_float, False, None),
        "force_psd": (_float, False, None),
        "solver_step": (_float, False, None),
        "drift_offset_hz": (_float, False, 0.0),
        "drift_linear_hz_per_s": (_float, False, 0.0),
        "drift_mod_amplitude_hz": (_float, False, 0.0),
        "drift_mod_period": (_float, False, 3600.0),
        "camera_rate": (_float, False, None),
        "camera_noise_floor": (_float, False, 0.0),
        "camera_pixel_size": (_float, False, None),
    },
    "lockin": {
        "f_lo": (_float, False, None),
        "cutoff": (_float, False, None),
        "filter_order": (_int, False, 4),
        "decimation": (_int, False, 1),
    },
    "fit": {
        "segment_length": (_int, False, 4096),
        "overlap": (_float, False, 0.5),
        "window_min_hz": (_float, False, None),
        "window_max_hz": (_float, False, None),
    },
    "sweep": {
        "pressures_mbar": (_float_list, True, None),
        "duration": (_float, False, 86400.0),
        "output_rate": (_float, False, 4.0),
        "axes": (_str_list, False, ["x", "z"]),
        "seed": (_int, False, 0),
        "mode": (_str, False, "simulate"),
        "reps": (_int, False, 100),
        "slope_hz_per_mbar": (_float, False, None),
        "sigma_hz": (_float_list, False, None),
    },
    "bounds": {
        "gamma_cm_upper_uhz": (_float, False, 48.0),
        "confidence": (_float, False, 0.95),
        "models": (_str_list, False, ["dcsl", "ddp"]),
        "t_dcsl": (_float, False, 1e-7),
        "dcsl_rc_min": (_float, False, 1e-9),
        "dcsl_rc_max": (_float, False, 1e-3),
        "dcsl_lambda_min": (_float, False, 1e-20),
        "dcsl_lambda_max": (_float, False, 1e-4),
        "ddp_r0_min": (_float, False, 1e-18),
        "ddp_r0_max": (_float, False, 1e-2),
        "ddp_t_min": (_float, False, 1e-18),
        "ddp_t_max": (_float, False, 1e12),
        "grid_n": (_int, False, 200),
    },
}

_CHOICES = {
    ("sim", "engine"): {"secular", "quadrature", "mathieu"},
    ("sweep", "mode"): {"simulate", "synthetic"},
}


@dataclass
class RunConfig:
    """Validated configuration; sections become plain dicts."""

    sections: dict = field(default_factory=dict)
    source_text: str = ""

    def __getitem__(self, section):
        return self.sections[section]

    def has(self, section) -> bool:
        return section in self.sections

    # ---- builders -------------------------------------------------

    def particle(self) -> ParticleSpec:
        p = self["particle"]
        return ParticleSpec(radius=p["radius"], density=p["density"],
                            charge_count=p["charge_count"], mass=p["mass"],
                            avg_nucleus_mass=p["avg_nucleus_mass"],
                            lattice_constant=p["lattice_constant"])

    def gas(self) -> GasEnvironment:
        g = self["gas"]
        return GasEnvironment(pressure=mbar_to_pa(g["pressure_mbar"]),
                              temperature=g["temperature"],
                              molecular_mass=g["molecular_mass"])

    def trap(self) -> TrapConfig:
        t = self["trap"]
        return TrapConfig(r_o=t["r_o"], z_o=t["z_o"], eta_ac=t["eta_ac"],
                          kappa_dc=t["kappa_dc"], U_o=t["u_o"], V_o=t["v_o"],
                          drive_angular_freq=TWO_PI * t["drive_freq"])

    def sim_plan(self, seed_override=None) -> SimPlan:
        from .trapphys import (gas_damping, mathieu_params, secular_frequencies,
                               thermal_force_psd)
        s = self["sim"]
        particle = self.particle()
        gas = self.gas()
        axes = tuple(s["axes"])
        if s["omega_hz"] is not None:
            freqs = s["omega_hz"]
            if len(freqs) == 1:
                freqs = freqs * len(axes)
            if len(freqs) != len(axes):
                raise ConfigError("sim.omega_hz must match the number of axes")
            omega = {ax: TWO_PI * f for ax, f in zip(axes, freqs)}
        else:
            trap = self.trap()
            w = secular_frequencies(mathieu_params(trap, particle),
                                    trap.drive_angular_freq)
            omega = {ax: w["xyz".index(ax)] for ax in axes}
        gamma = (TWO_PI * s["gamma_hz"] if s["gamma_hz"] is not None
                 else gas_damping(particle, gas))
        force = (s["force_psd"] if s["force_psd"] is not None
                 else thermal_force_psd(gas.temperature, particle.mass, gamma))
        drift = DriftProfile(offset=TWO_PI * s["drift_offset_hz"],
                             linear_rate=TWO_PI * s["drift_linear_hz_per_s"],
                             mod_amplitude=TWO_PI * s["drift_mod_amplitude_hz"],
                             mod_period=s["drift_mod_period"])
        return SimPlan(duration=s["duration"], output_rate=s["output_rate"],
                       seed=s["seed"] if seed_override is None else seed_override,
                       omega_o=omega, gamma=gamma, force_psd=force,
                       mass=particle.mass, axes=axes, drift=drift,
                       solver_step=s["solver_step"], engine=s["engine"])


def _parse_sections(parser: configparser.ConfigParser):
    errors = []
    out = {}
    for section in parser.sections():
        if section not in SCHEMA:
            errors.append(f"unknown section [{section}]")
            continue
        spec = SCHEMA[section]
        values = {}
        for key, raw in parser.items(section):
            if key not in spec:
                errors.append(f"unknown key {key!r} in section [{section}]")
                continue
            fn = spec[key][0]
            try:
                values[key] = fn(raw)
            except (TypeError, ValueError):
                errors.append(f"cannot parse [{section}] {key} = {raw!r}")
                continue
            choices = _CHOICES.get((section, key))
            if choices and values[key] not in choices:
                errors.append(f"[{section}] {key} must be one of {sorted(choices)}")
        for key, (fn, required, default) in spec.items():
            if key in values:
                continue
            if required:
                errors.append(f"missing required key {key!r} in section [{section}]")
            else:
                values[key] = default
        out[section] = values
    return out, errors


def load_config(path) -> RunConfig:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config file: {exc}") from exc
    return parse_config(text)


def parse_config(text: str) -> RunConfig:
    parser = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    try:
        parser.read_file(io.StringIO(text))
    except configparser.Error as exc:
        raise ConfigError(f"config syntax error: {exc}") from exc
    sections, errors = _parse_sections(parser)
    if errors:
        raise ConfigError("config schema violations:\n  " + "\n  ".join(errors))
    return RunConfig(sections=sections, source_text=text)
