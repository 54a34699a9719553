"""Command-line entry point: besov, yw, pde, simulate, rate-study, replay.

Exit codes: 0 success, 2 configuration/validation error, 3 property-check
failure, 4 numerical non-convergence.
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .besov import (GAMMA_RANGE, GridFunction, SpectralGrid, besov_norm, check_bernstein, check_schauder,
                    write_block_table)
from .config import ConfigError, ExperimentConfig, load_config
from .drift import DriftSpec, LinearDrift, build_drift, mollify, write_block_amplitudes, write_profile
from .harness import RateParams, StudyConfig, run_rate_study
from .scheme import EnsembleJob, run_ensemble, timed, write_ensemble_csv
from .yw import YWParams, build_yw, check_phi_properties, write_table
from .zvonkin import NonConvergence, solve_mild, tune_lambda

log = logging.getLogger("distdrift")

EXIT_OK, EXIT_CONFIG, EXIT_CHECK, EXIT_NONCONV = 0, 2, 3, 4
MANIFEST = "run.manifest"
# args that never change results and are therefore left out of the manifest
_VOLATILE = {"config", "out", "seed", "workers", "verbose", "func_handler", "command"}


class CheckFailed(RuntimeError):
    pass


def _write_rows(path: Path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        w.writerows(rows)


def _grid(cfg: ExperimentConfig) -> SpectralGrid:
    return SpectralGrid(cfg["grid.L"], cfg["grid.num_points"])


def _named_drift(name: str, cfg: ExperimentConfig, amplitude: float | None = None) -> DriftSpec:
    if name == "config":
        return cfg.drift_spec()
    base = cfg.drift_spec()
    amp = amplitude if amplitude is not None else base.amplitude
    profiles = {"zero": "zero", "sin": "sin", "constant": "constant", "ou": "ou_linear", "ou_periodic": "ou"}
    if name in profiles:
        return DriftSpec(kind="smooth_benchmark", profile=profiles[name], amplitude=amp,
                         time_modulation=base.time_modulation)
    if name == "distributional":
        return DriftSpec(kind="distributional_derivative", beta=base.beta, beta_hat=base.beta_hat, seed=base.seed,
                         amplitude=amp, time_modulation=base.time_modulation)
    if name == "holder":
        return DriftSpec(kind="holder_function", holder_exponent=base.holder_exponent, seed=base.seed,
                         amplitude=amp, time_modulation=base.time_modulation)
    raise ConfigError(f"unknown drift {name!r}")


# -- subcommands -------------------------------------------------------------

def cmd_besov(args, cfg: ExperimentConfig, out: Path) -> int:
    lo, hi = GAMMA_RANGE
    if not lo <= args.gamma <= hi or not lo <= args.gamma + 1 <= hi:
        raise ConfigError(f"gamma must satisfy {lo} <= gamma and gamma + 1 <= {hi}")
    grid = _grid(cfg)
    if args.drift_beta is not None:
        f = build_drift(DriftSpec(kind="distributional_derivative", beta=args.drift_beta,
                                  seed=cfg["drift.seed"], amplitude=cfg["drift.amplitude"]), grid)
    elif args.func == "sin":
        f = GridFunction.from_callable(grid, np.sin)
    elif args.func == "zero":
        f = GridFunction.zeros(grid)
    elif args.func == "lacunary":
        f = build_drift(DriftSpec(kind="holder_function", holder_exponent=cfg["drift.holder_exponent"],
                                  seed=cfg["drift.seed"]), grid)
    else:
        f = build_drift(cfg.drift_spec(), grid)
    norm = besov_norm(f, args.gamma)
    ratio = check_bernstein(f, args.gamma)
    write_block_table(out / "blocks.csv", f, args.gamma)
    rows = [("besov_norm", repr(norm)), ("max_block", grid.max_block), ("bernstein_ratio", repr(ratio))]
    ok = ratio <= 4
    if args.theta is not None and norm > 0:
        rep = check_schauder(f, args.gamma, args.theta)
        rows += [("schauder_smoothing_slope", repr(rep.smoothing_slope)),
                 ("schauder_continuity_slope", repr(rep.continuity_slope))]
        ok &= rep.smoothing_slope >= -args.theta - 0.15
    _write_rows(out / "besov_summary.csv", ["quantity", "value"], rows)
    print(f"besov_norm(gamma={args.gamma}) = {norm:.10g}; Bernstein ratio {ratio:.4f}")
    if not ok:
        raise CheckFailed("Bernstein/Schauder property check failed")
    return EXIT_OK


def cmd_yw(args, cfg, out: Path) -> int:
    if args.yw_check:
        args.delta, args.kappa = args.yw_check
    if args.delta is None or args.kappa is None:
        raise ConfigError("yw needs --delta and --kappa (or --yw-check DELTA KAPPA)")
    try:
        pair = build_yw(YWParams(args.delta, args.kappa))
    except ValueError as e:
        raise ConfigError(str(e)) from e
    rep = check_phi_properties(pair)
    write_table(out / "yw_table.csv", pair)
    _write_rows(out / "yw_report.csv", ["property", "max_defect"],
                [("A", repr(rep.defect_a)), ("B", repr(max(rep.defect_b, rep.defect_b_sign))),
                 ("C", repr(max(rep.defect_c, rep.defect_c_identity))), ("mass", repr(rep.mass_defect))])
    for line in rep.lines():
        print(line)
    if not rep.ok:
        raise CheckFailed("Yamada-Watanabe property check failed")
    return EXIT_OK


def cmd_pde(args, cfg, out: Path) -> int:
    spec = _named_drift(args.drift, cfg, args.amplitude)
    if spec.profile == "ou_linear" and spec.kind == "smooth_benchmark":
        spec = DriftSpec(kind="smooth_benchmark", profile="ou", amplitude=spec.amplitude)
    bm = mollify(spec, cfg["drift.m"], _grid(cfg), T=cfg["pde.T"])
    lam = args.lam if args.lam is not None else cfg["pde.lambda"]
    kw = dict(T=cfg["pde.T"], M=cfg["pde.time_nodes"], tol=cfg["pde.tol"], num_points=cfg["pde.num_points"])
    if lam is None:
        sol = tune_lambda(bm, **kw)
    else:
        sol = solve_mild(bm, lam, **kw)
        sol.lambda_trace = [(lam, sol.sup_ux)]
    sol.write_history(out / "pde_history.csv")
    _write_rows(out / "lambda_trace.csv", ["lambda", "sup_ux"], [(repr(a), repr(b)) for a, b in sol.lambda_trace])
    u0 = sol.u[0]
    rows = [("lambda", repr(sol.lam)), ("sup_ux", repr(sol.sup_ux)), ("picard_residual", repr(sol.picard_residual)),
            ("iterations", sol.iterations), ("sup_u0", repr(float(np.max(np.abs(u0)))))]
    _write_rows(out / "pde_summary.csv", ["quantity", "value"], rows)
    print(f"lambda={sol.lam:g} sup|u_x|={sol.sup_ux:.6f} residual={sol.picard_residual:.3e} "
          f"iterations={sol.iterations} sup|u(0)|={np.max(np.abs(u0)):.6g}")
    if sol.sup_ux >= 0.5:
        print("warning: sup|u_x| >= 1/2, the Zvonkin transform is not guaranteed invertible", file=sys.stderr)
    return EXIT_OK


def _levels_for(spec: DriftSpec, cfg, ns, m):
    if spec.kind == "smooth_benchmark" and spec.profile == "ou_linear":
        ou = LinearDrift(-spec.amplitude)
        return tuple((n, ou) for n in ns), ou
    grid = _grid(cfg)
    raw = build_drift(spec, grid)
    bm = mollify(spec, m, grid, T=cfg["scheme.T"], raw=raw)
    m_ref = cfg["scheme.m_ref"]
    ref = bm if m_ref in (None, m) else mollify(spec, m_ref, grid, T=cfg["scheme.T"], raw=raw)
    return tuple((n, bm) for n in ns), ref


def cmd_simulate(args, cfg, out: Path) -> int:
    spec = _named_drift(args.drift, cfg, args.amplitude)
    ns = (args.n,) if args.n else cfg["scheme.n_list"]
    n_fine = cfg["scheme.n_fine"]
    if any(n_fine % n for n in ns):
        raise ConfigError(f"n must divide scheme.n_fine={n_fine}")
    paths = args.paths or cfg["scheme.paths"]
    levels, ref = _levels_for(spec, cfg, ns, args.m or cfg["drift.m"])
    job = EnsembleJob(master_seed=cfg.master_seed, T=cfg["scheme.T"], n_fine=n_fine, x0=cfg["scheme.x0"],
                      p=cfg["scheme.p"], reference=ref, levels=levels)
    stats, wall = timed(run_ensemble, job, paths, cfg["scheme.batch_size"], args.workers)
    write_ensemble_csv(out / "ensemble.csv", stats, [wall] * len(stats) if args.timing else None)
    for s in stats:
        print(f"n={s.n} m={s.m} l1_sup={s.l1_sup:.6e} lp_sup={s.lp_sup:.6e} +- {s.std_error:.2e}")
    return EXIT_OK


def cmd_rate_study(args, cfg, out: Path) -> int:
    spec = cfg.drift_spec()
    rate = None
    if spec.kind == "distributional_derivative":
        bh = cfg["rate.beta_hat"] or spec.effective_beta_hat
        try:
            rate = RateParams(spec.beta, bh, cfg["rate.epsilon"], cfg["rate.p"])
        except ValueError as e:
            raise ConfigError(str(e)) from e
    study = StudyConfig(drift=spec, rate=rate, n_list=cfg["scheme.n_list"], n_fine=cfg["scheme.n_fine"],
                        m_ref=cfg["scheme.m_ref"], m_fixed=cfg["rate.m_fixed"], paths=cfg["scheme.paths"],
                        x0=cfg["scheme.x0"], T=cfg["scheme.T"], master_seed=cfg.master_seed, L=cfg["grid.L"],
                        num_points=cfg["grid.num_points"], batch_size=cfg["scheme.batch_size"],
                        workers=args.workers)
    if rate is None and study.m_fixed is None and spec.profile != "ou_linear":
        raise ConfigError("smooth drifts need rate.m_fixed (m = n^eta needs a distributional drift)")
    try:
        report, wall = timed(run_rate_study, study)
    except ValueError as e:
        raise ConfigError(str(e)) from e
    report.write_csv(out / "rate_report.csv")
    write_ensemble_csv(out / "ensemble.csv", report.sweep, [wall] * len(report.sweep) if args.timing else None)
    (out / "rate_summary.txt").write_text(report.summary() + "\n")
    print(report.summary())
    if math.isfinite(report.theory_rate):
        print(f"theory: L1-sup slope -{report.theory_rate:.6f}, Lp-sup slope -{report.theory_lp_rate:.6f}")
    if report.degenerate:
        print("degenerate fit: errors at round-off level")
    return EXIT_OK


# -- plumbing ----------------------------------------------------------------

def _common(p: argparse.ArgumentParser):
    p.add_argument("--config", type=Path, help="flat key = value config file")
    p.add_argument("--out", type=Path, help="output directory (default: config output_dir)")
    p.add_argument("--seed", type=int, help="master seed override")
    p.add_argument("--workers", type=int, default=None, help="worker processes (default: all cores)")
    p.add_argument("--timing", action="store_true", help="add wall_time_s to ensemble CSVs")
    p.add_argument("-v", "--verbose", action="store_true")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="distdrift", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=__version__)
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("besov", help="block norms, Bernstein and Schauder checks")
    _common(p)
    p.add_argument("--func", choices=["sin", "zero", "lacunary", "drift"], default="sin")
    p.add_argument("--gamma", type=float, required=True)
    p.add_argument("--drift-beta", type=float, default=None, help="analyse a distributional drift of this beta")
    p.add_argument("--theta", type=float, default=None, help="also run the Schauder slope check")
    p.set_defaults(func_handler=cmd_besov)

    p = sub.add_parser("yw", help="Yamada-Watanabe property report")
    _common(p)
    p.add_argument("--delta", type=float)
    p.add_argument("--kappa", type=float)
    p.add_argument("--yw-check", nargs=2, type=float, metavar=("DELTA", "KAPPA"))
    p.set_defaults(func_handler=cmd_yw)

    drifts = ["config", "zero", "sin", "constant", "ou", "ou_periodic", "distributional", "holder"]
    p = sub.add_parser("pde", help="solve the Kolmogorov equation, tune lambda")
    _common(p)
    p.add_argument("--drift", choices=drifts, default="config")
    p.add_argument("--amplitude", type=float, default=None)
    p.add_argument("--lambda", dest="lam", type=float, default=None)
    p.set_defaults(func_handler=cmd_pde)

    p = sub.add_parser("simulate", help="one ensemble of Euler paths against a reference")
    _common(p)
    p.add_argument("--drift", choices=drifts, default="config")
    p.add_argument("--amplitude", type=float, default=None)
    p.add_argument("--n", type=int, default=None)
    p.add_argument("--m", type=int, default=None)
    p.add_argument("--paths", type=int, default=None)
    p.set_defaults(func_handler=cmd_simulate)

    p = sub.add_parser("rate-study", help="full n-sweep with m = n^eta and slope fit")
    _common(p)
    p.set_defaults(func_handler=cmd_rate_study)

    p = sub.add_parser("replay", help="re-run a recorded manifest")
    p.add_argument("manifest", type=Path)
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--workers", type=int, default=None)
    p.add_argument("-v", "--verbose", action="store_true")
    return ap


def _write_manifest(out: Path, command: str, args, cfg: ExperimentConfig):
    kept = {k: v for k, v in vars(args).items() if k not in _VOLATILE}
    kept = {k: (list(v) if isinstance(v, tuple) else v) for k, v in kept.items()}
    lines = [f"run.command = {command}", f"run.args = {json.dumps(kept, sort_keys=True)}",
             f"run.version = {__version__}", f"run.seed = {cfg.master_seed}"]
    lines += cfg.snapshot_lines()
    (out / MANIFEST).write_text("\n".join(lines) + "\n")


def _read_manifest(path: Path):
    if not path.is_file():
        raise ConfigError(f"manifest not found: {path}")
    meta = {}
    for line in path.read_text().splitlines():
        if line.startswith("run.") and "=" in line:
            k, v = (s.strip() for s in line.split("=", 1))
            meta[k] = v
    if "run.command" not in meta or "run.args" not in meta:
        raise ConfigError(f"{path} is not a run manifest")
    return meta["run.command"], json.loads(meta["run.args"]), load_config(path)


def _run(command: str, handler, args, cfg: ExperimentConfig) -> int:
    out = cfg.output_dir
    out.mkdir(parents=True, exist_ok=True)
    code = handler(args, cfg, out)
    _write_manifest(out, command, args, cfg)
    return code


def main(argv=None) -> int:
    ap = build_parser()
    args = ap.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        if args.command == "replay":
            command, stored, cfg = _read_manifest(args.manifest)
            cfg.set("output_dir", str(args.out))
            sub_args = ap.parse_args([command] + _required_stub(command))
            for k, v in stored.items():
                setattr(sub_args, k, v)
            sub_args.workers = args.workers
            return _run(command, sub_args.func_handler, sub_args, cfg.validate())
        cfg = load_config(args.config) if args.config else ExperimentConfig()
        if args.seed is not None:
            cfg.set("scheme.master_seed", str(args.seed))
        if args.out is not None:
            cfg.set("output_dir", str(args.out))
        cfg.validate()
        return _run(args.command, args.func_handler, args, cfg)
    except ConfigError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except CheckFailed as e:
        print(f"check failed: {e}", file=sys.stderr)
        return EXIT_CHECK
    except NonConvergence as e:
        print(f"non-convergence: {e}", file=sys.stderr)
        return EXIT_NONCONV


def _required_stub(command: str) -> list[str]:
    # placeholder values for required flags; overwritten from the manifest
    return ["--gamma", "0"] if command == "besov" else []


if __name__ == "__main__":
    sys.exit(main())
