"""Batch pipeline: simulate -> analyze -> sweep -> bounds, plus a canned
``reproduce-paper`` chain.  Every run writes its outputs into one directory
together with a manifest (config hash, per-file sha256, timings).

Exit codes: 0 success (warnings allowed), 2 config error, 3 numerical
failure, 4 I/O error.
"""

from __future__ import annotations

import argparse
import math
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__, collapse, demod, specfit
from .config import RunConfig, load_config, parse_config
from .constants import TWO_PI, mbar_to_pa
from .errors import (ConfigError, FitConvergenceError, InvalidParameterError,
                     LevilinError, LevtFormatError, RotatingWaveError,
                     SimulationAbort, UntrappedAxisError)
from .manifest import RunManifest, StageTimer, sha256_text
from .series import QuadratureSeries, TimeSeries
from .simulate import SimPlan, simulate_mathieu, simulate_quadrature, simulate_secular
from .trapphys import (gas_damping, mathieu_params, noise_budget,
                       secular_frequencies, stability_check, thermal_force_psd)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERICAL = 3
EXIT_IO = 4

THREADS_ENV = "LEVILIN_THREADS"


def _workers():
    try:
        return max(1, int(os.environ.get(THREADS_ENV, "1")))
    except ValueError:
        return 1


def _out_dir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _new_manifest(command: str, cfg: RunConfig) -> RunManifest:
    return RunManifest(tool_version=__version__, command=command,
                       config_hash=sha256_text(cfg.source_text))


# ----------------------------------------------------------------------
# shared analysis helpers
# ----------------------------------------------------------------------

def _paper_sigma_law(gamma_hz):
    """Linewidth error bars versus linewidth, calibrated on published points."""
    return 5.51e-3 * np.asarray(gamma_hz, dtype=float) ** 0.582


def _fit_window(cfg: RunConfig, default):
    fit = cfg["fit"] if cfg.has("fit") else None
    if fit is None:
        return default
    lo = fit["window_min_hz"] if fit["window_min_hz"] is not None else default[0]
    hi = fit["window_max_hz"] if fit["window_max_hz"] is not None else default[1]
    return (lo, hi)


def _fit_params(cfg: RunConfig):
    if cfg.has("fit"):
        return cfg["fit"]["segment_length"], cfg["fit"]["overlap"]
    return 4096, 0.5


def _r2_linewidth(q: QuadratureSeries, cfg: RunConfig):
    """Mean-subtracted R^2 spectrum and its Lorentzian fit.

    Records that went through the lock-in filter are fitted only well inside
    the detection band (the single-pole cascade reshapes the tail above
    ~cutoff/10); quadrature-engine records are unfiltered and use the whole
    band.
    """
    seg, overlap = _fit_params(cfg)
    seg = min(seg, len(q))
    r2 = q.r_squared()
    psd = specfit.welch_psd(r2 - r2.mean(), seg, overlap, sample_rate=q.sample_rate)
    df = psd.frequencies[1] - psd.frequencies[0]
    top = psd.frequencies[-1]
    cutoff = q.metadata.get("cutoff")
    if cutoff:
        top = min(top, cutoff / 10.0)
    window = _fit_window(cfg, (1.5 * df, top))
    fit = specfit.fit_r2_psd(psd, window=window)
    return psd, fit


def _write_fit_csv(path, psd, model, header):
    f = psd.frequencies
    with open(path, "w", encoding="utf-8") as fh:
        for line in header:
            fh.write(f"# {line}\n")
        fh.write("frequency_hz,psd,model,residual\n")
        for i in range(f.size):
            fh.write(f"{f[i]:.9e},{psd.values[i]:.9e},{model[i]:.9e},"
                     f"{psd.values[i] - model[i]:.9e}\n")


# ----------------------------------------------------------------------
# subcommands
# ----------------------------------------------------------------------

def cmd_simulate(args) -> int:
    cfg = load_config(args.config)
    out = _out_dir(args)
    man = _new_manifest("simulate", cfg)
    timer = StageTimer()
    plan = cfg.sim_plan(seed_override=args.seed)
    timer.start("simulate")
    if plan.engine == "quadrature":
        series = simulate_quadrature(plan)
    elif plan.engine == "mathieu":
        series = simulate_mathieu(plan, cfg.trap(), cfg.particle())
    else:
        series = simulate_secular(plan)
    timer.stop()
    timer.start("write")
    for ax, rec in series.items():
        levt_path = out / f"{ax}.levt"
        csv_path = out / f"{ax}.csv"
        rec.to_levt(levt_path)
        rec.to_csv(csv_path)
        man.add_output(levt_path)
        man.add_output(csv_path)
        print(f"wrote {levt_path} ({len(rec)} samples at {rec.sample_rate:g} Hz)")
    timer.stop()
    man.timings_s = timer.timings
    man.write(out / "manifest.json")
    return EXIT_OK


def cmd_analyze(args) -> int:
    cfg = load_config(args.config)
    out = _out_dir(args)
    man = _new_manifest("analyze", cfg)
    timer = StageTimer()
    warnings_seen = []
    for path in args.inputs:
        man.add_input(path)
        stem = Path(path).stem
        timer.start(f"analyze:{stem}")
        from .levt import read_levt
        rate, channels = read_levt(path)
        if "X" in channels and "Y" in channels:
            q = QuadratureSeries.from_levt(path)
        else:
            ts = TimeSeries.from_levt(path)
            q = _demodulate(ts, cfg)
            q_levt = out / f"{stem}_quadratures.levt"
            q_csv = out / f"{stem}_quadratures.csv"
            q.to_levt(q_levt)
            q.to_csv(q_csv)
            man.add_output(q_levt)
            man.add_output(q_csv)
            disp_warn = _analyze_displacement(ts, cfg, out, stem, man)
            warnings_seen.extend(disp_warn)
        try:
            psd, fit = _r2_linewidth(q, cfg)
        except FitConvergenceError as exc:
            warnings_seen.append(f"{stem}: {exc}")
            timer.stop()
            continue
        header = [f"source = {path}",
                  f"gamma_hz = {fit.gamma_hz:.9e}",
                  f"gamma_err_hz = {fit.gamma_err_hz:.9e}",
                  f"sigma_sq = {fit.sigma_sq:.9e}",
                  f"sigma_sq_err = {fit.sigma_sq_err:.9e}",
                  f"reduced_chi2 = {fit.reduced_chi2:.6g}",
                  f"window_hz = {fit.window[0]:.6g}..{fit.window[1]:.6g}"]
        model = specfit.r2_lorentzian(psd.frequencies, fit.gamma, fit.sigma_sq, sample_rate=psd.sample_rate)
        fit_path = out / f"{stem}_r2_fit.csv"
        _write_fit_csv(fit_path, psd, model, header)
        man.add_output(fit_path)
        print(f"{stem}: gamma/2pi = {fit.gamma_hz:.6g} +/- {fit.gamma_err_hz:.2g} Hz "
              f"(red.chi2 {fit.reduced_chi2:.3g})")
        timer.stop()
    for w in warnings_seen:
        print(f"warning: {w}", file=sys.stderr)
    man.timings_s = timer.timings
    man.write(out / "manifest.json")
    return EXIT_OK


def _demodulate(ts: TimeSeries, cfg: RunConfig) -> QuadratureSeries:
    lk = cfg["lockin"] if cfg.has("lockin") else {
        "f_lo": None, "cutoff": None, "filter_order": 4, "decimation": 1}
    f_lo = lk["f_lo"]
    if f_lo is None:
        trap = cfg.trap()
        w = secular_frequencies(mathieu_params(trap, cfg.particle()),
                                trap.drive_angular_freq)
        f_lo = w["xyz".index(ts.axis)] / TWO_PI
    cutoff = lk["cutoff"] if lk["cutoff"] is not None else f_lo / 4.0
    cfg_lk = demod.LockinConfig(f_lo=f_lo, cutoff=cutoff,
                                filter_order=lk["filter_order"],
                                decimation=lk["decimation"])
    return demod.lockin(ts, cfg_lk)


def _analyze_displacement(ts, cfg, out, stem, man):
    """Welch + susceptibility fit of a displacement record; never fatal."""
    warnings_seen = []
    seg, overlap = _fit_params(cfg)
    seg = min(seg, len(ts))
    psd = specfit.welch_psd(ts, seg, overlap)
    try:
        dfit = specfit.fit_displacement_psd(psd, cfg.particle().mass)
        header = [f"source = {stem}",
                  f"f0_hz = {dfit.f0_hz:.9e} +/- {dfit.f0_err_hz:.3e}",
                  f"gamma_hz = {dfit.gamma_hz:.9e} +/- {dfit.gamma_err_hz:.3e}",
                  f"temperature_K = {dfit.temperature:.6g} +/- {dfit.temperature_err:.3g}",
                  f"reduced_chi2 = {dfit.reduced_chi2:.6g}",
                  f"band_edge_flag = {dfit.band_edge_flag}"]
        model = specfit.displacement_psd_model(
            psd.frequencies, dfit.omega_o, dfit.gamma, dfit.force_psd,
            cfg.particle().mass, dfit.floor)
        if dfit.band_edge_flag:
            warnings_seen.append(f"{stem}: displacement fit unreliable "
                                 "(resonance at fit-window edge)")
    except FitConvergenceError as exc:
        warnings_seen.append(f"{stem}: {exc}")
        return warnings_seen
    path = out / f"{stem}_displacement_fit.csv"
    _write_fit_csv(path, psd, model, header)
    man.add_output(path)
    return warnings_seen


def cmd_sweep(args) -> int:
    cfg = load_config(args.config)
    out = _out_dir(args)
    man = _new_manifest("sweep", cfg)
    timer = StageTimer()
    sw = cfg["sweep"]
    seed = sw["seed"] if args.seed is None else args.seed
    pressures = sw["pressures_mbar"]
    if sw["mode"] == "synthetic":
        rows, extra = _sweep_synthetic(cfg, pressures, seed, out, man, timer)
    else:
        rows = _sweep_simulate(cfg, pressures, seed, timer)
        extra = []
    table = out / "gamma_vs_pressure.csv"
    with open(table, "w", encoding="utf-8") as fh:
        fh.write("pressure_mbar,gamma_hz,sigma_hz\n")
        for p, g, s in rows:
            fh.write(f"{p:.9e},{g:.9e},{s:.9e}\n")
    man.add_output(table)
    fit = specfit.linewidth_vs_pressure(rows)
    upper = fit.intercept_upper_limit(0.95)
    band_p = np.logspace(math.log10(min(pressures)), math.log10(max(pressures)), 200)
    lo, hi = fit.band(band_p)
    linefit_path = out / "linefit.csv"
    with open(linefit_path, "w", encoding="utf-8") as fh:
        fh.write(f"# gamma_exc_hz = {fit.gamma_exc_hz:.9e} +/- {fit.gamma_exc_err_hz:.3e}\n")
        fh.write(f"# slope_hz_per_mbar = {fit.slope_hz_per_mbar:.9e} "
                 f"+/- {fit.slope_err_hz_per_mbar:.3e}\n")
        fh.write(f"# ci95_intercept_hz = {fit.ci95_intercept[0]:.6e}..{fit.ci95_intercept[1]:.6e}\n")
        fh.write(f"# slope_zero_intercept = {fit.slope_zero_intercept:.9e} "
                 f"+/- {fit.slope_zero_intercept_err:.3e}\n")
        fh.write(f"# upper_limit_95_hz = {upper:.9e}\n")
        fh.write("pressure_mbar,gamma_fit_hz,band_lo_hz,band_hi_hz\n")
        for i in range(band_p.size):
            fh.write(f"{band_p[i]:.9e},{fit.predict(band_p[i]):.9e},"
                     f"{lo[i]:.9e},{hi[i]:.9e}\n")
    man.add_output(linefit_path)
    bound_path = out / "bound.csv"
    with open(bound_path, "w", encoding="utf-8") as fh:
        fh.write("quantity,value_hz\n")
        fh.write(f"gamma_exc,{fit.gamma_exc_hz:.9e}\n")
        fh.write(f"gamma_exc_err,{fit.gamma_exc_err_hz:.9e}\n")
        fh.write(f"upper_limit_95,{upper:.9e}\n")
    man.add_output(bound_path)
    for p, g, s in rows:
        print(f"P = {p:.3g} mbar: gamma/2pi = {g * 1e3:.4g} +/- {s * 1e3:.2g} mHz")
    print(f"gamma_exc = {fit.gamma_exc_hz * 1e6:.3g} +/- {fit.gamma_exc_err_hz * 1e6:.3g} uHz; "
          f"95% upper limit {upper * 1e6:.3g} uHz")
    for line in extra:
        print(line)
    man.timings_s = timer.timings
    man.write(out / "manifest.json")
    return EXIT_OK


def _sweep_simulate(cfg, pressures, seed, timer):
    """Per-pressure quadrature simulations, R^2 fits, axis averaging."""
    sw = cfg["sweep"]
    particle = cfg.particle()
    gas0 = cfg.gas()
    axes = tuple(sw["axes"])
    sim = cfg["sim"] if cfg.has("sim") else None
    if sim is not None and sim["omega_hz"] is not None:
        freqs = sim["omega_hz"]
        if len(freqs) == 1:
            freqs = freqs * len(axes)
        omega = {ax: TWO_PI * f for ax, f in zip(axes, freqs)}
    else:
        trap = cfg.trap()
        w = secular_frequencies(mathieu_params(trap, particle),
                                trap.drive_angular_freq)
        omega = {ax: w["xyz".index(ax)] for ax in axes}
    rows = []
    for i, p_mbar in enumerate(pressures):
        timer.start(f"sweep:P={p_mbar:g}")
        gas = gas0.with_pressure(mbar_to_pa(p_mbar))
        gamma = gas_damping(particle, gas)
        s_f = thermal_force_psd(gas.temperature, particle.mass, gamma)
        plan = SimPlan(duration=sw["duration"], output_rate=sw["output_rate"],
                       seed=seed + 1000 * i, omega_o=omega, gamma=gamma,
                       force_psd=s_f, mass=particle.mass, axes=axes,
                       engine="quadrature")
        qs = simulate_quadrature(plan)
        est, var = 0.0, 0.0
        for ax in axes:
            _, fit = _r2_linewidth(qs[ax], cfg)
            wgt = 1.0 / fit.gamma_err_hz**2
            est += wgt * fit.gamma_hz
            var += wgt
        rows.append((p_mbar, est / var, math.sqrt(1.0 / var)))
        timer.stop()
    return rows


def _sweep_synthetic(cfg, pressures, seed, out, man, timer):
    """Monte-Carlo sweeps from the published error-bar scale; returns the
    last replicate as the table and writes the bound distribution."""
    sw = cfg["sweep"]
    slope = sw["slope_hz_per_mbar"]
    if slope is None:
        particle, gas = cfg.particle(), cfg.gas()
        slope = gas_damping(particle, gas.with_pressure(mbar_to_pa(1.0))) / TWO_PI
    p = np.asarray(pressures)
    truth = slope * p
    sigma = (np.asarray(sw["sigma_hz"]) if sw["sigma_hz"] is not None
             else _paper_sigma_law(truth))
    if sigma.size != p.size:
        raise ConfigError("sweep.sigma_hz must match pressures_mbar in length")
    rng = np.random.default_rng(np.random.SeedSequence(seed))
    timer.start("sweep:montecarlo")
    uppers, intercepts = [], []
    rows = None
    for _ in range(sw["reps"]):
        g = truth + rng.standard_normal(p.size) * sigma
        rows = list(zip(p.tolist(), g.tolist(), sigma.tolist()))
        fit = specfit.linewidth_vs_pressure(rows)
        intercepts.append(fit.gamma_exc_hz)
        uppers.append(fit.intercept_upper_limit(0.95))
    timer.stop()
    mc_path = out / "mc_bounds.csv"
    with open(mc_path, "w", encoding="utf-8") as fh:
        fh.write("rep,gamma_exc_hz,upper_limit_95_hz\n")
        for i, (ic, up) in enumerate(zip(intercepts, uppers)):
            fh.write(f"{i},{ic:.9e},{up:.9e}\n")
    man.add_output(mc_path)
    uppers = np.array(uppers)
    frac = float(np.mean((uppers >= 1e-5) & (uppers <= 1e-4)))
    extra = [f"MC: median upper limit {np.median(uppers) * 1e6:.3g} uHz; "
             f"fraction in 10..100 uHz: {frac:.2f}"]
    return rows, extra


def cmd_bounds(args) -> int:
    cfg = load_config(args.config)
    out = _out_dir(args)
    man = _new_manifest("bounds", cfg)
    timer = StageTimer()
    b = cfg["bounds"]
    particle = cfg.particle()
    bound = collapse.MeasuredBound(gamma_cm_upper_hz=b["gamma_cm_upper_uhz"] * 1e-6,
                                   confidence=b["confidence"])
    n = b["grid_n"]
    workers = _workers()
    for model in b["models"]:
        timer.start(f"bounds:{model}")
        if model == "dcsl":
            grid = collapse.exclusion_map(
                "dcsl",
                ("r_c", collapse.log_axis(b["dcsl_rc_min"], b["dcsl_rc_max"], n)),
                ("lambda", collapse.log_axis(b["dcsl_lambda_min"], b["dcsl_lambda_max"], n)),
                particle, bound, fixed={"t_dcsl": b["t_dcsl"]}, workers=workers)
        elif model == "ddp":
            grid = collapse.exclusion_map(
                "ddp",
                ("r_0", collapse.log_axis(b["ddp_r0_min"], b["ddp_r0_max"], n)),
                ("t_ddp", collapse.log_axis(b["ddp_t_min"], b["ddp_t_max"], n)),
                particle, bound, workers=workers)
        else:
            raise ConfigError(f"unknown bounds model {model!r}")
        grid_path = out / f"{model}_grid.csv"
        boundary_path = out / f"{model}_boundary.csv"
        collapse.write_grid_csv(grid, grid_path)
        collapse.write_boundary_csv(grid, boundary_path)
        man.add_output(grid_path)
        man.add_output(boundary_path)
        timer.stop()
        msg = f"{model}: {int(np.count_nonzero(grid.excluded))} excluded cells"
        if grid.n_indeterminate:
            msg += f", {grid.n_indeterminate} indeterminate"
        if model == "dcsl" and grid.boundary_minimum() is not None:
            rc, lam = grid.boundary_minimum()
            msg += f"; boundary minimum lambda = {lam:.3g} 1/s at r_C = {rc:.3g} m"
        if model == "ddp":
            span = grid.excluded_axis1_span()
            if span:
                msg += f"; excluded R_0 span {span[0]:.3g}..{span[1]:.3g} m"
        print(msg)
    man.timings_s = timer.timings
    man.write(out / "manifest.json")
    return EXIT_OK


# ----------------------------------------------------------------------
# reproduce-paper
# ----------------------------------------------------------------------

DEFAULT_REPRODUCE_CONFIG = """\
[particle]
radius = 231e-9
density = 1850
charge_count = 80
mass = 9.6e-17

[gas]
pressure_mbar = 1e-4
temperature = 293

[trap]
r_o = 1.1e-3
z_o = 3.5e-3
eta_ac = 0.82
kappa_dc = 0.086
u_o = 100
v_o = 200
drive_freq = 2000

[sim]
engine = quadrature
duration = 1e5
output_rate = 8
seed = 20210831
omega_hz = 327
gamma_hz = 0.010

[fit]
segment_length = 8192

[sweep]
pressures_mbar = 3e-7 6e-7 1e-6 3e-6 1e-5 3e-5 1e-4
duration = 86400
output_rate = 4
axes = x, z
seed = 7
mode = simulate

[bounds]
gamma_cm_upper_uhz = 48
t_dcsl = 1e-7
grid_n = 200
"""


def cmd_reproduce(args) -> int:
    cfg = parse_config(DEFAULT_REPRODUCE_CONFIG) if args.config is None \
        else load_config(args.config)
    out = _out_dir(args)
    man = _new_manifest("reproduce-paper", cfg)
    timer = StageTimer()
    seed = args.seed if args.seed is not None else cfg["sim"]["seed"]

    # stage 1: trap numbers and the noise budget
    timer.start("trap-numbers")
    particle, gas, trap = cfg.particle(), cfg.gas(), cfg.trap()
    mp = mathieu_params(trap, particle)
    rep = stability_check(mp)
    w = secular_frequencies(mp, trap.drive_angular_freq)
    g_ref = gas_damping(particle, gas)
    budget = noise_budget([("voltage noise", 1e-38)], particle,
                          omega_ref=w[0], gas=gas)
    path = out / "trap_numbers.csv"
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("quantity,value\n")
        fh.write(f"a_x,{mp.a[0]:.9e}\n")
        fh.write(f"q_x,{mp.q[0]:.9e}\n")
        fh.write(f"f_x_hz,{w[0] / TWO_PI:.9e}\n")
        fh.write(f"f_z_hz,{w[2] / TWO_PI:.9e}\n")
        fh.write(f"max_abs_q,{rep.max_abs_q:.9e}\n")
        fh.write(f"gamma_hz_at_{gas.pressure / 100:g}_mbar,{g_ref / TWO_PI:.9e}\n")
        fh.write(f"pressure_3db_mbar,{budget.pressure_3db / 100:.9e}\n")
    man.add_output(path)
    print(f"[1] Epstein gamma/2pi at 1e-4 mbar: {g_ref / TWO_PI * 1e3:.3g} mHz "
          "(published: 28.5 +/- 0.7)")
    print(f"[1] 3 dB excess-noise pressure: {budget.pressure_3db / 100:.3g} mbar "
          "(published: 7.3e-6)")
    timer.stop()

    # stage 2: R^2 linewidth at 10 mHz
    timer.start("r2-linewidth")
    plan = cfg.sim_plan(seed_override=seed)
    q = simulate_quadrature(plan)["x"]
    psd, fit = _r2_linewidth(q, cfg)
    model = specfit.r2_lorentzian(psd.frequencies, fit.gamma, fit.sigma_sq, sample_rate=psd.sample_rate)
    fit_path = out / "r2_linewidth_fit.csv"
    _write_fit_csv(fit_path, psd, model,
                   [f"gamma_hz = {fit.gamma_hz:.9e} +/- {fit.gamma_err_hz:.3e}",
                    f"sigma_sq = {fit.sigma_sq:.9e}",
                    f"reduced_chi2 = {fit.reduced_chi2:.6g}"])
    man.add_output(fit_path)
    truth = plan.gamma / TWO_PI
    print(f"[2] R^2 linewidth: {fit.gamma_hz * 1e3:.4g} +/- {fit.gamma_err_hz * 1e3:.2g} mHz "
          f"(injected {truth * 1e3:g} mHz)")
    timer.stop()

    # stage 3: drift immunity (published worst case: modulation 2500x linewidth)
    timer.start("drift-immunity")
    from .simulate import DriftProfile
    gam = TWO_PI * 5e-3
    base = dict(duration=1e5, output_rate=8.0, omega_o=TWO_PI * 150.0,
                gamma=gam, mass=particle.mass, engine="quadrature",
                force_psd=thermal_force_psd(gas.temperature, particle.mass, gam))
    q_still = simulate_quadrature(SimPlan(seed=seed + 1, **base))["x"]
    drift = DriftProfile(mod_amplitude=TWO_PI * 12.5, mod_period=3000.0)
    q_drift = simulate_quadrature(SimPlan(seed=seed + 2, drift={"x": drift}, **base))["x"]
    _, fit_a = _r2_linewidth(q_still, cfg)
    _, fit_b = _r2_linewidth(q_drift, cfg)
    diff_sigma = abs(fit_a.gamma_hz - fit_b.gamma_hz) / math.hypot(
        fit_a.gamma_err_hz, fit_b.gamma_err_hz)
    drift_path = out / "drift_immunity.csv"
    with open(drift_path, "w", encoding="utf-8") as fh:
        fh.write("run,gamma_hz,sigma_hz\n")
        fh.write(f"still,{fit_a.gamma_hz:.9e},{fit_a.gamma_err_hz:.9e}\n")
        fh.write(f"drift_2500x,{fit_b.gamma_hz:.9e},{fit_b.gamma_err_hz:.9e}\n")
    man.add_output(drift_path)
    print(f"[3] drift immunity: gamma estimates differ by {diff_sigma:.2f} sigma "
          "with a 2500x frequency modulation")
    timer.stop()

    # stage 4: pressure sweep and excess-damping bound
    sweep_args = argparse.Namespace(config=None, out=str(out), seed=seed + 3)
    rows = _sweep_simulate(cfg, cfg["sweep"]["pressures_mbar"], seed + 3, timer)
    table = out / "gamma_vs_pressure.csv"
    with open(table, "w", encoding="utf-8") as fh:
        fh.write("pressure_mbar,gamma_hz,sigma_hz\n")
        for p, g, s in rows:
            fh.write(f"{p:.9e},{g:.9e},{s:.9e}\n")
    man.add_output(table)
    lfit = specfit.linewidth_vs_pressure(rows)
    upper = lfit.intercept_upper_limit(0.95)
    bound_path = out / "bound.csv"
    with open(bound_path, "w", encoding="utf-8") as fh:
        fh.write("quantity,value_hz\n")
        fh.write(f"gamma_exc,{lfit.gamma_exc_hz:.9e}\n")
        fh.write(f"gamma_exc_err,{lfit.gamma_exc_err_hz:.9e}\n")
        fh.write(f"upper_limit_95,{upper:.9e}\n")
    man.add_output(bound_path)
    print(f"[4] sweep: gamma_exc = {lfit.gamma_exc_hz * 1e6:.3g} "
          f"+/- {lfit.gamma_exc_err_hz * 1e6:.3g} uHz; 95% upper limit "
          f"{upper * 1e6:.3g} uHz (published: 18 +/- 30, bound 48)")

    # stage 5: exclusion maps with the configured bound
    b = cfg["bounds"]
    bound = collapse.MeasuredBound(b["gamma_cm_upper_uhz"] * 1e-6, b["confidence"])
    n = b["grid_n"]
    timer.start("bounds-dcsl")
    grid_dcsl = collapse.exclusion_map(
        "dcsl", ("r_c", collapse.log_axis(b["dcsl_rc_min"], b["dcsl_rc_max"], n)),
        ("lambda", collapse.log_axis(b["dcsl_lambda_min"], b["dcsl_lambda_max"], n)),
        particle, bound, fixed={"t_dcsl": b["t_dcsl"]}, workers=_workers())
    collapse.write_grid_csv(grid_dcsl, out / "dcsl_grid.csv")
    collapse.write_boundary_csv(grid_dcsl, out / "dcsl_boundary.csv")
    man.add_output(out / "dcsl_grid.csv")
    man.add_output(out / "dcsl_boundary.csv")
    rc_min, lam_min = grid_dcsl.boundary_minimum()
    print(f"[5] dCSL boundary minimum: lambda = {lam_min:.3g} 1/s at "
          f"r_C = {rc_min * 1e6:.3g} um (published: ~1e-14 at 1.5 um)")
    timer.stop()
    timer.start("bounds-ddp")
    grid_ddp = collapse.exclusion_map(
        "ddp", ("r_0", collapse.log_axis(b["ddp_r0_min"], b["ddp_r0_max"], n)),
        ("t_ddp", collapse.log_axis(b["ddp_t_min"], b["ddp_t_max"], n)),
        particle, bound, workers=_workers())
    collapse.write_grid_csv(grid_ddp, out / "ddp_grid.csv")
    collapse.write_boundary_csv(grid_ddp, out / "ddp_boundary.csv")
    man.add_output(out / "ddp_grid.csv")
    man.add_output(out / "ddp_boundary.csv")
    cmb = np.argmin(np.abs(grid_ddp.axis2_values - 2.7))
    row = grid_ddp.excluded[cmb]
    if np.any(row):
        r0 = grid_ddp.axis1_values[row]
        print(f"[5] dDP excluded R_0 at CMB temperature: {r0.min():.3g}..{r0.max():.3g} m "
              "(published: 1e-18..1e-12)")
    timer.stop()
    man.timings_s = timer.timings
    man.write(out / "manifest.json")
    return EXIT_OK


# ----------------------------------------------------------------------
# entry point
# ----------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="levilin",
        description="Levitated-nanoparticle linewidth pipeline: simulate, "
                    "demodulate, fit, and collapse-model bounds.")
    ap.add_argument("--version", action="version", version=f"levilin {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p, config_required=True):
        p.add_argument("--config", required=config_required,
                       default=None, help="run-configuration file (INI)")
        p.add_argument("--out", default="out", help="output directory")
        p.add_argument("--seed", type=int, default=None, help="override the config seed")

    common(sub.add_parser("simulate", help="generate synthetic records"))
    pa = sub.add_parser("analyze", help="demodulate and fit recorded files")
    common(pa)
    pa.add_argument("inputs", nargs="+", help="LEVT input files")
    common(sub.add_parser("sweep", help="linewidth vs pressure and excess-damping bound"))
    common(sub.add_parser("bounds", help="collapse-model exclusion maps"))
    common(sub.add_parser("reproduce-paper",
                          help="chain the desk-scale reproduction suite"),
           config_required=False)
    return ap


_DISPATCH = {
    "simulate": cmd_simulate,
    "analyze": cmd_analyze,
    "sweep": cmd_sweep,
    "bounds": cmd_bounds,
    "reproduce-paper": cmd_reproduce,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return _DISPATCH[args.command](args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (UntrappedAxisError, SimulationAbort, RotatingWaveError,
            FitConvergenceError, InvalidParameterError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except (LevtFormatError, OSError) as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return EXIT_IO
    except LevilinError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    raise SystemExit(main())
