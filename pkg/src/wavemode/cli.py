"""Command-line scenario runner.

``wavemode run <config>`` executes the pipeline named in the config and writes
``manifest.txt``, ``summary.txt`` and one CSV per result table into the output
directory.  ``wavemode validate <config>`` only parses and resolves the config.

Exit status: 0 on success, 2 for configuration errors (with the offending line
where known), 3 for numerical failures (the library error class is named).
"""

from __future__ import annotations

import argparse
import csv
import math
import platform
import sys
from pathlib import Path

import numpy as np
import scipy

from . import __version__
from .config import ScenarioConfig, load_config
from .coupling import CouplingCoefficients, compute_coefficients
from .decay import REGIMES, decay_rate, fit_slope, regime_sweep
from .diffusion import (NEUMANN_DIRICHLET, NEUMANN_NEUMANN, DiffusionCoefficient, continuum_limit_check,
                        normalize_bc, solve_diffusion, sturm_liouville_spectrum, write_solution_csv,
                        write_spectrum_csv)
from .errors import ConfigError, WavemodeError
from .medium import BAND_EDGE, ConstantKernel, CosineBandKernel, CovarianceSpec, load_tabulated_kernel
from .montecarlo import JumpChainSpec, occupation_slope, simulate_feynman_kac
from .pekeris import WaveguideParams, solve_modes
from .power import solve_coupled_power, write_trajectory_csv

__all__ = ["main", "run_scenario", "build_waveguide", "build_medium", "PHI_FUNCTIONS"]

PHI_FUNCTIONS = {
    "cos": lambda u: np.cos(0.5 * np.pi * np.asarray(u, float)),
    "one": lambda u: np.ones_like(np.asarray(u, float)),
    "step": lambda u: (np.asarray(u, float) <= 0.5).astype(float),
    "linear": lambda u: 1.0 - np.asarray(u, float),
}


def _fmt(x) -> str:
    """Shortest round-tripping text for a float; ints and strings pass through."""
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    return str(x)


def _write_rows(path: Path, header, rows):
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(v) for v in row])


def _write_matrix(path: Path, M):
    n = M.shape[0]
    _write_rows(path, ["j", "l", "value"], ((j + 1, l + 1, M[j, l]) for j in range(n) for l in range(n)))


def build_waveguide(cfg: ScenarioConfig) -> WaveguideParams:
    wg = cfg["waveguide"]
    if wg["m_over_pi"] is not None:
        return WaveguideParams.from_mode_parameter(wg["n1"], wg["d"], wg["m_over_pi"])
    k = wg["k"] if wg["k"] is not None else wg["omega"] / wg["c"]
    return WaveguideParams(n1=wg["n1"], d=wg["d"], k=k)


def _band_limit(cfg: ScenarioConfig):
    raw = cfg["medium"]["band_limit"].lower()
    if raw == "default":
        return BAND_EDGE if cfg["medium"]["kernel"] == "cosine_band" else None
    if raw == "none":
        return None
    return float(raw)


def build_medium(cfg: ScenarioConfig) -> CovarianceSpec:
    """Covariance spec from ``[medium]``; tabulated-kernel problems become config errors."""
    md, d = cfg["medium"], cfg["waveguide"]["d"]
    bl = _band_limit(cfg)
    kind = md["kernel"]
    try:
        if kind == "cosine_band":
            return CovarianceSpec(CosineBandKernel(d, md["amplitude"]), md["a"], d, bl)
        if kind == "constant":
            return CovarianceSpec(ConstantKernel(d, md["amplitude"]), md["a"], d, bl)
        if kind == "gaussian_bump":
            spec = CovarianceSpec.gaussian_bump(md["a"], d, md["amplitude"], md["center"], md["width"])
            return spec if bl is None else CovarianceSpec(spec.kernel, spec.a, d, bl)
        path = Path(md["path"])
        if not path.is_absolute() and cfg.path is not None:
            path = cfg.path.parent / path
        kernel = load_tabulated_kernel(path)
        spec = CovarianceSpec(kernel, md["a"], d, bl)
        return spec if md["amplitude"] == 1.0 else spec.scaled(md["amplitude"])
    except (OSError, ValueError) as exc:
        raise ConfigError(f"[medium] {exc}", cfg.line_of("medium", "path" if kind == "tabulated" else "kernel")) from None


def _resolve(cfg: ScenarioConfig, section, key, value):
    """Record a value chosen at run time so the manifest shows it."""
    if cfg[section][key] is None:
        cfg[section][key] = value
    return cfg[section][key]


# ---------------------------------------------------------------- pipelines


def _pipe_modes(cfg, out, opts):
    ms = solve_modes(build_waveguide(cfg))
    _write_rows(out / "modes.csv", ["j", "sigma", "beta", "zeta", "A"],
                ((j + 1, ms.sigma[j], ms.beta[j], ms.zeta[j], ms.A[j]) for j in range(ms.N)))
    return {"N": ms.N, "k": ms.params.k, "M": ms.params.M, "dropped_near_cutoff": ms.dropped}


def _coefficients(cfg, kappa=False):
    ms = solve_modes(build_waveguide(cfg))
    return compute_coefficients(ms, build_medium(cfg), kappa=kappa)


def _pipe_coefficients(cfg, out, opts):
    c = _coefficients(cfg, kappa=True)
    for name in ("gamma_c", "gamma_s", "gamma_1"):
        _write_matrix(out / f"{name}.csv", getattr(c, name))
    _write_rows(out / "vectors.csv", ["j", "lambda_c", "lambda_s", "kappa", "kappa_tail_bound"],
                ((j + 1, c.lambda_c[j], c.lambda_s[j], c.kappa[j], c.kappa_tail_bound[j]) for j in range(c.N)))
    return {"N": c.N, "max_lambda_c": float(c.lambda_c.max()), "max_kappa_tail_bound":
            float(c.kappa_tail_bound.max())}


def _default_range(c: CouplingCoefficients):
    an = decay_rate(c, check_irreducible=False)
    rate = an.lambda_inf if an.lambda_inf > 0 else an.gap
    return 5.0 / rate if np.isfinite(rate) and rate > 0 else 1.0


def _pipe_power(cfg, out, opts):
    c = _coefficients(cfg)
    z_max = _resolve(cfg, "power", "z_max", _default_range(c))
    z = np.linspace(0.0, z_max, cfg["power"]["z_points"])
    traj = solve_coupled_power(c, z)
    write_trajectory_csv(traj, out / "trajectory.csv")
    E = traj.total_energy()
    _write_rows(out / "energy.csv", ["z", "l", "total"],
                ((z[m], l + 1, E[m, l]) for m in range(z.size) for l in range(c.N)))
    return {"N": c.N, "z_max": z_max, "min_total_energy_at_z_max": float(E[-1].min())}


def _pipe_decay(cfg, out, opts):
    c = _coefficients(cfg)
    an = decay_rate(c)
    summary = {"N": c.N, "Lambda_inf": an.lambda_inf,
               "bounds": (f"min Lambda <= Lambda_inf <= mean Lambda: {an.lower_bound!r} <= "
                          f"{an.lambda_inf!r} <= {an.upper_bound!r}"),
               "spectral_gap": an.gap}
    _write_rows(out / "decay.csv", ["j", "lambda_c", "minimizer"],
                ((j + 1, c.lambda_c[j], an.minimizer[j]) for j in range(c.N)))
    if c.N > 1 and an.gap > 0:
        z_min = 10.0 / an.gap
        z = np.linspace(0.0, 2.0 * z_min, cfg["decay"]["z_points"])
        traj = solve_coupled_power(c, z)
        slope = fit_slope(traj, z_min, analysis=an)
        E = traj.total_energy().sum(axis=1)
        _write_rows(out / "energy.csv", ["z", "total"], zip(z, E))
        summary["fit_z_min"] = z_min
        summary["fitted_slope"] = slope
    return summary


def _pipe_montecarlo(cfg, out, opts):
    mc = cfg["montecarlo"]
    c = _coefficients(cfg)
    spec = JumpChainSpec.from_coefficients(c, seed=cfg.seed)
    est = simulate_feynman_kac(spec, mc["horizon"], mc["n_paths"], batch_size=mc["batch_size"],
                               threads=opts["threads"])
    ref = solve_coupled_power(c, [mc["horizon"]]).T[0]
    with np.errstate(divide="ignore", invalid="ignore"):
        zs = np.where(est.stderr > 0, (est.mean - ref) / est.stderr, 0.0)
    n = c.N
    _write_rows(out / "montecarlo.csv", ["j", "l", "mean", "stderr", "ode", "z_score", "local_time_fraction"],
                ((j + 1, l + 1, est.mean[j, l], est.stderr[j, l], ref[j, l], zs[j, l],
                  est.local_time_fraction[j, l]) for j in range(n) for l in range(n)))
    summary = {"N": n, "L": mc["horizon"], "n_paths_per_source": mc["n_paths"], "seed": cfg.seed,
               "max_abs_z_score": float(np.abs(zs).max())}
    if mc["horizon_list"]:
        sl = occupation_slope(spec, mc["horizon_list"], mc["n_paths"], batch_size=mc["batch_size"],
                              threads=opts["threads"])
        _write_rows(out / "occupation.csv", ["L", "log_energy", "log_stderr"],
                    zip(sl.L, sl.log_energy, sl.log_stderr))
        summary["fitted_slope"] = sl.slope
        summary["fitted_slope_stderr"] = sl.stderr
        summary["Lambda_inf"] = decay_rate(c, check_irreducible=False).lambda_inf
    return summary


def _pipe_diffusion(cfg, out, opts):
    df = cfg["diffusion"]
    coeff = DiffusionCoefficient.from_medium(cfg["waveguide"]["n1"], build_medium(cfg))
    bc = normalize_bc(df["bc"])
    spec = sturm_liouville_spectrum(coeff, bc, df["n_eigs"], df["u_resolution"])
    rate = spec.decay_rate
    z_max = _resolve(cfg, "diffusion", "z_max", 1.0 / rate if rate > 0 else 1.0 / coeff.a0)
    z = np.linspace(0.0, z_max, df["z_points"])
    sol = solve_diffusion(coeff, PHI_FUNCTIONS[df["phi"]], bc, z, u_resolution=df["u_resolution"])
    write_solution_csv(sol, out / "solution.csv")
    write_spectrum_csv(spec, out / "spectrum.csv")
    _write_rows(out / "mass.csv", ["z", "mass"], zip(sol.z_grid, sol.mass()))
    return {"a0": coeff.a0, "bc": bc, "decay_rate": rate, "z_max": z_max,
            "spatial_error": sol.spatial_error, "temporal_error": sol.temporal_error}


def _pipe_continuum(cfg, out, opts):
    ct = cfg["continuum"]
    wg = cfg["waveguide"]
    spec = build_medium(cfg)
    coeff = DiffusionCoefficient.from_medium(wg["n1"], spec)
    ladder = []
    for N in ct["n_list"]:
        ms = solve_modes(WaveguideParams.from_mode_parameter(wg["n1"], wg["d"], N + 0.5))
        ladder.append(compute_coefficients(ms, spec, kappa=False))
    bcs = [NEUMANN_DIRICHLET, NEUMANN_NEUMANN] if ct["bc"].lower() == "both" else [normalize_bc(ct["bc"])]
    z = np.asarray(ct["z_list"], float) / coeff.a0
    rows, summary = [], {"a0": coeff.a0, "n_list": " ".join(map(str, ct["n_list"]))}
    for bc in bcs:
        chk = continuum_limit_check(ladder, PHI_FUNCTIONS[ct["phi"]], z, bc, coeff=coeff,
                                    u_resolution=ct["u_resolution"])
        for i, N in enumerate(chk.N):
            for m, zm in enumerate(chk.z):
                rows.append((bc, int(N), zm, chk.distance[i, m]))
        for m, zm in enumerate(chk.z):
            summary[f"L2_distances[{bc}, z={_fmt(zm)}]"] = " ".join(_fmt(x) for x in chk.distance[:, m])
        summary[f"monotone[{bc}]"] = bool(chk.monotone.all())
    _write_rows(out / "continuum.csv", ["bc", "N", "z", "distance"], rows)
    return summary


def _pipe_regime(cfg, out, opts):
    rg = cfg["regime"]
    c = _coefficients(cfg)
    regimes = REGIMES if rg["regime"] == "all" else (rg["regime"],)
    rows, summary = [], {"N": c.N, "Lambda_inf": decay_rate(c).lambda_inf}
    for name in regimes:
        sw = regime_sweep(c, rg["tau_list"], name)
        err = sw.relative_error
        rows.extend((name, sw.tau[i], sw.lambda_tau[i], sw.scaled[i], sw.limit, err[i]) for i in range(sw.tau.size))
        summary[f"{name}_limit"] = sw.limit
        summary[f"{name}_relative_error_at_smallest_tau"] = float(err[-1])
    _write_rows(out / "regime.csv", ["regime", "tau", "lambda_tau", "scaled", "limit", "relative_error"], rows)
    return summary


PIPELINE_FUNCS = {
    "modes": _pipe_modes,
    "coefficients": _pipe_coefficients,
    "power": _pipe_power,
    "decay": _pipe_decay,
    "montecarlo": _pipe_montecarlo,
    "diffusion": _pipe_diffusion,
    "continuum-check": _pipe_continuum,
    "regime-sweep": _pipe_regime,
}


def _write_manifest(cfg: ScenarioConfig, path: Path, opts):
    lines = [f"wavemode {__version__}", f"python {platform.python_version()}",
             f"numpy {np.__version__}", f"scipy {scipy.__version__}",
             f"config {cfg.path if cfg.path is not None else '<string>'}",
             f"pipeline {cfg.pipeline}", f"seed {cfg.seed}", f"threads {opts['threads']}", ""]
    section = None
    for sec, key, val in cfg.resolved_items():
        if sec != section:
            if section is not None:
                lines.append("")
            lines.append(f"[{sec}]")
            section = sec
        if isinstance(val, list):
            text = ",".join(_fmt(v) for v in val)
        elif val is None:
            text = "unset"
        else:
            text = _fmt(val)
        lines.append(f"{key} = {text}")
    path.write_text("\n".join(lines) + "\n")


def _write_summary(summary: dict, path: Path):
    path.write_text("".join(f"{k}: {_fmt(v)}\n" for k, v in summary.items()))


def run_scenario(config_path, output_dir=None, threads: int = 1, seed: int | None = None) -> int:
    """Run one scenario; returns the process exit status."""
    try:
        overrides = {("pipeline", "output_dir"): None if output_dir is None else str(output_dir),
                     ("pipeline", "seed"): seed}
        cfg = load_config(config_path, overrides)
        build_medium(cfg)
    except ConfigError as exc:
        print(f"wavemode: config error: {exc}", file=sys.stderr)
        return 2
    opts = {"threads": max(1, int(threads))}
    out = cfg.output_dir
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        print(f"wavemode: config error: cannot create output directory {out}: {exc.strerror}", file=sys.stderr)
        return 2
    try:
        summary = {"pipeline": cfg.pipeline}
        summary.update(PIPELINE_FUNCS[cfg.pipeline](cfg, out, opts))
    except ConfigError as exc:
        print(f"wavemode: config error: {exc}", file=sys.stderr)
        return 2
    except WavemodeError as exc:
        print(f"wavemode: numerical failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 3
    except (ValueError, FloatingPointError, np.linalg.LinAlgError) as exc:
        print(f"wavemode: numerical failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 3
    _write_manifest(cfg, out / "manifest.txt", opts)
    _write_summary(summary, out / "summary.txt")
    return 0


def validate_scenario(config_path) -> int:
    try:
        cfg = load_config(config_path)
        build_medium(cfg)
        params = build_waveguide(cfg)
    except ConfigError as exc:
        print(f"wavemode: config error: {exc}", file=sys.stderr)
        return 2
    except ValueError as exc:
        print(f"wavemode: config error: {exc}", file=sys.stderr)
        return 2
    print(f"{cfg.path}: ok (pipeline {cfg.pipeline}, k = {params.k!r}, M/pi = {params.M / math.pi!r})")
    return 0


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="wavemode", description="Random waveguide mode-coupling scenarios.")
    sub = parser.add_subparsers(dest="command", required=True)
    run = sub.add_parser("run", help="execute the pipeline named in a config file")
    run.add_argument("config")
    run.add_argument("--output-dir", default=None, help="override [pipeline] output_dir")
    run.add_argument("--threads", type=int, default=1, help="worker threads for Monte Carlo")
    run.add_argument("--seed", type=int, default=None, help="override [pipeline] seed")
    val = sub.add_parser("validate", help="parse and check a config file")
    val.add_argument("config")
    args = parser.parse_args(argv)
    if args.command == "run":
        if args.seed is not None and not 0 <= args.seed < 2**64:
            print("wavemode: config error: --seed must be a 64-bit unsigned integer", file=sys.stderr)
            return 2
        return run_scenario(args.config, args.output_dir, args.threads, args.seed)
    return validate_scenario(args.config)


if __name__ == "__main__":
    sys.exit(main())
