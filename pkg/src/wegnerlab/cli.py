"""Command-line entry point.

Exit codes:
  0  success / all verdicts pass
  1  usage, config or parse error
  2  leading-index search failed
  3  degenerate covariance
  4  sampler or solver failure (sample index reported)
  5  rejection sampler below the acceptance floor
  6  spectral-averaging instance failed
  7  positivity certificate or Wegner bound verdict failed
"""
from __future__ import annotations

import argparse
import csv
import sys
from pathlib import Path

from . import genfunc
from .config import ConfigError, RunConfig
from .covariance import validate
from .exceptions import (
    AcceptanceFloorError,
    CovarianceParseError,
    DegenerateCovarianceError,
    LeadingIndexError,
    PreconditionError,
    MatrixSizeError,
    SampleError,
    TailToleranceError,
    WegnerLabError,
)
from .experiments import (
    WegnerConfig,
    concentration_curve,
    default_threads,
    derive_seed,
    regularity_closed_forms,
    regularity_mc,
    run_wegner_mc,
)
from .spectral import averaging_check, random_averaging_instance

EXIT_OK, EXIT_USAGE, EXIT_LEADING, EXIT_DEGENERATE, EXIT_SAMPLE = 0, 1, 2, 3, 4
EXIT_FLOOR, EXIT_AVERAGING, EXIT_VERDICT = 5, 6, 7


def _write_lines(path: Path, lines):
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


def _write_csv(path: Path, header, rows):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        writer.writerows(rows)


def _fmt(x):
    return repr(float(x)) if isinstance(x, float) else str(x)


def _build_config(args) -> RunConfig:
    if args.config:
        cfg = RunConfig.from_ini(Path(args.config).read_text(encoding="utf-8"))
    else:
        cfg = RunConfig()
    overrides = {
        "kernel": args.covariance, "d": args.d, "L": args.L, "lam": args.lam,
        "samples": args.samples, "seed": args.seed, "threads": args.threads,
        "background": getattr(args, "background", None),
        "background_file": getattr(args, "background_file", None),
        "l_list": getattr(args, "l_list", None), "epsilon": getattr(args, "epsilon", None),
        "mc_l": getattr(args, "mc_l", None), "n_max": getattr(args, "n_max", None),
        "trials": getattr(args, "trials", None),
    }
    for name, value in overrides.items():
        if value is not None:
            cfg.set(name, str(value))
    if args.interval is not None:
        cfg.interval = tuple(args.interval)
    if getattr(args, "deltas", None) is not None:
        cfg.deltas = tuple(args.deltas)
    if args.threads is None and not args.config:
        cfg.threads = default_threads()
    return cfg


def _prepare_out(args, cfg: RunConfig) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.ini").write_text(cfg.to_ini(), encoding="utf-8")
    return out


def cmd_analyze(args) -> int:
    cfg = _build_config(args)
    out = _prepare_out(args, cfg)
    spec = cfg.covariance()
    validation = validate(spec, cfg.L)
    lines = ["[validation]"] + validation.lines()
    if validation.status in ("not_pd", "degenerate") or validation.check("gamma0_positive").passed is False:
        _write_lines(out / "analysis.txt", lines)
        print(f"degenerate covariance: {', '.join(validation.failures())}", file=sys.stderr)
        return EXIT_DEGENERATE
    try:
        analysis = genfunc.analyze(spec, cfg.L, cfg.lam, cfg.interval[1] - cfg.interval[0],
                                   cfg.zero_tol, cfg.tail_tol, cfg.max_total_degree)
    except LeadingIndexError as exc:
        _write_lines(out / "analysis.txt", lines + ["", f"error: {exc}"])
        print(f"leading index search failed: {exc}", file=sys.stderr)
        return EXIT_LEADING
    _write_lines(out / "analysis.txt", lines + ["", "[analysis]"] + analysis.report_lines())
    print(f"I0={analysis.leading.I0} c={analysis.leading.c!r} R_L={analysis.R_L:.6g} "
          f"positivity_min={analysis.positivity.minimum!r}")
    return EXIT_OK if analysis.positivity.passed else EXIT_VERDICT


def cmd_wegner(args) -> int:
    cfg = _build_config(args)
    if cfg.samples < 2:
        raise ConfigError("samples must be at least 2 (standard error undefined otherwise)")
    out = _prepare_out(args, cfg)
    wcfg = WegnerConfig(spec=cfg.covariance(), L=cfg.L, lam=cfg.lam, interval=cfg.interval,
                        background="custom" if cfg.background_file else cfg.background,
                        background_source=cfg.background_file or None, n_samples=cfg.samples,
                        seed=cfg.seed, zero_tol=cfg.zero_tol, tail_tol=cfg.tail_tol,
                        max_total_degree=cfg.max_total_degree, threads=cfg.threads)
    report = run_wegner_mc(wcfg)
    _write_csv(out / "samples.csv", ["index", "trace"], enumerate(report.counts.tolist()))
    _write_lines(out / "summary.txt", report.summary_lines())
    print(f"mean={report.empirical_mean:.6g} se={report.std_error:.3g} "
          f"abstract={report.abstract_bound:.6g} main={report.main_bound:.6g} "
          f"{'pass' if report.passed else 'FAIL'}")
    return EXIT_OK if report.passed else EXIT_VERDICT


def cmd_regularity(args) -> int:
    cfg = _build_config(args)
    if not cfg.l_list:
        raise ConfigError("l_list is empty")
    if any(l < 1 for l in cfg.l_list):
        raise ConfigError("every l must be at least 1")
    if not cfg.epsilon > 0:
        raise ConfigError("epsilon must be positive")
    out = _prepare_out(args, cfg)
    rows = []
    for l in cfg.l_list:
        rep = regularity_closed_forms(l)
        rows.append([l, _fmt(rep.inverse_entry), _fmt(rep.inverse_closed), _fmt(rep.inverse_residual),
                     _fmt(rep.gamma_l_numeric), _fmt(rep.gamma_l_closed), _fmt(rep.variance_residual)])
    _write_csv(out / "closed_forms.csv",
               ["l", "inverse_entry", "inverse_closed", "inverse_residual",
                "gamma_l_numeric", "gamma_l_closed", "variance_residual"], rows)
    curve = concentration_curve(cfg.epsilon, cfg.l_list)
    _write_csv(out / "concentration.csv", ["l", "gamma_l", "probability"],
               [[l, _fmt(v), _fmt(p)] for l, v, p in curve])
    sweep = []
    status = EXIT_OK
    seed = derive_seed(cfg.seed, "regularity")
    for delta in cfg.deltas:
        try:
            est = regularity_mc(cfg.epsilon, delta, cfg.mc_l, cfg.n_max, seed=seed)
        except AcceptanceFloorError as exc:
            print(f"advisory: {exc}", file=sys.stderr)
            sweep.append([_fmt(float(delta)), "", "", "", "", "", _fmt(exc.rate), ""])
            status = EXIT_FLOOR
            continue
        sweep.append([_fmt(float(delta)), _fmt(est.estimate), _fmt(est.ci_low), _fmt(est.ci_high),
                      est.accepted, est.drawn, _fmt(est.acceptance_rate), _fmt(est.point_limit)])
    _write_csv(out / "delta_sweep.csv",
               ["delta", "estimate", "ci_low", "ci_high", "accepted", "drawn", "acceptance_rate",
                "point_limit"], sweep)
    worst_inv = max(float(r[3]) for r in rows)
    worst_var = max(float(r[6]) for r in rows)
    _write_lines(out / "summary.txt", [
        f"epsilon: {cfg.epsilon!r}",
        f"max_inverse_residual: {worst_inv!r}",
        f"max_variance_residual: {worst_var!r}",
        f"concentration_last: l={curve[-1][0]} p={curve[-1][2]!r}",
        f"mc_l: {cfg.mc_l}",
        f"acceptance_floor_breached: {status == EXIT_FLOOR}",
    ])
    print(f"max residuals {worst_inv:.2e} / {worst_var:.2e}; concentration at l={curve[-1][0]}: {curve[-1][2]:.6f}")
    return status


def cmd_averaging_check(args) -> int:
    cfg = _build_config(args)
    if cfg.trials < 1:
        raise ConfigError("trials must be at least 1")
    out = _prepare_out(args, cfg)
    seed = derive_seed(cfg.seed, "averaging")
    rows = []
    failed = []
    for i in range(cfg.trials):
        res = averaging_check(*random_averaging_instance(seed, i))
        ok = res.passed and res.budget_ok
        rows.append([i, _fmt(res.lhs), _fmt(res.rhs), _fmt(res.budget), res.crossings, ok])
        if not ok:
            failed.append(i)
    _write_csv(out / "averaging.csv", ["instance", "lhs", "rhs", "budget", "crossings", "passed"], rows)
    _write_lines(out / "summary.txt", [f"seed: {cfg.seed}", f"instance_seed: {seed}", f"trials: {cfg.trials}",
                                       f"failed: {' '.join(map(str, failed)) or 'none'}"])
    if failed:
        print(f"averaging inequality failed for instances {failed} (instance seed {seed})", file=sys.stderr)
        return EXIT_AVERAGING
    print(f"{cfg.trials} instances pass")
    return EXIT_OK


def _common(p: argparse.ArgumentParser):
    p.add_argument("--config", help="INI run configuration")
    p.add_argument("--out", default="out", help="output directory")
    p.add_argument("--seed", type=int)
    p.add_argument("--threads", type=int, help="worker threads (default: available cores)")
    p.add_argument("--covariance", help="preset name, exponential:A,RATE, table:..., or file:PATH")
    p.add_argument("--d", type=int)
    p.add_argument("--L", type=int)
    p.add_argument("--lambda", dest="lam", type=float)
    p.add_argument("--interval", nargs=2, type=float, metavar=("E1", "E2"))
    p.add_argument("--samples", type=int)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="wegnerlab", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("analyze", help="leading index, R_L, coefficients, positivity, bounds")
    _common(p)
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("wegner", help="Monte Carlo expected eigenvalue count against the bounds")
    _common(p)
    p.add_argument("--background", choices=["laplacian", "zero", "random"])
    p.add_argument("--background-file", dest="background_file", help="custom symmetric matrix file")
    p.set_defaults(func=cmd_wegner)

    p = sub.add_parser("regularity", help="conditional variance closed forms and concentration")
    _common(p)
    p.add_argument("--l-list", dest="l_list", help="e.g. 1-50,500,6000")
    p.add_argument("--epsilon", type=float)
    p.add_argument("--deltas", nargs="+", type=float)
    p.add_argument("--mc-l", dest="mc_l", type=int)
    p.add_argument("--n-max", dest="n_max", type=int)
    p.set_defaults(func=cmd_regularity)

    p = sub.add_parser("averaging-check", help="seeded spectral-averaging inequality suite")
    _common(p)
    p.add_argument("--trials", type=int)
    p.set_defaults(func=cmd_averaging_check)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, CovarianceParseError, MatrixSizeError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except LeadingIndexError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_LEADING
    except DegenerateCovarianceError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DEGENERATE
    except PreconditionError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VERDICT
    except SampleError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_SAMPLE
    except (TailToleranceError, WegnerLabError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
