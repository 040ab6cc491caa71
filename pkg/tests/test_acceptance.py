"""Acceptance criteria 1-9, one test each; a PASS/FAIL line per criterion is printed in the summary."""
import math
import time
from pathlib import Path

import numpy as np
import pytest

from wegnerlab.cli import main
from wegnerlab.config import RunConfig
from wegnerlab.covariance import CovarianceSpec, SHIPPED_KERNELS, preset
from wegnerlab.experiments import (
    WegnerConfig,
    concentration_curve,
    gamma_inverse_corner,
    regularity_closed_forms,
    run_wegner_mc,
)
from wegnerlab.genfunc import analyze, find_leading_index
from wegnerlab.lattice import MultiIndex
from wegnerlab.normal import norm_cdf
from wegnerlab.spectral import averaging_suite, count_below

CONFIGS = Path(__file__).resolve().parent.parent / "configs"


def record(log, number, ok, detail, started):
    log.append(f"{'PASS' if ok else 'FAIL'} [{number}] {detail} ({time.perf_counter() - started:.2f}s)")
    assert ok, detail


def test_criterion_1_closed_form_regularity(acceptance_log):
    t0 = time.perf_counter()
    worst_inv = worst_var = 0.0
    for l in range(1, 51):
        rep = regularity_closed_forms(l)
        worst_inv = max(worst_inv, abs(gamma_inverse_corner(l) - l / (l + 1)))
        worst_var = max(worst_var, abs(rep.gamma_l_numeric - 2 / (l + 1)))
    ok = worst_inv <= 1e-10 and worst_var <= 1e-10
    record(acceptance_log, 1, ok,
           f"closed-form regularity l=1..50: max |inverse err|={worst_inv:.1e}, max |variance err|={worst_var:.1e}", t0)


def test_criterion_2_concentration(acceptance_log):
    t0 = time.perf_counter()
    rows = concentration_curve(0.1, list(range(1, 6001)))
    probs = [p for _, _, p in rows]
    monotone = all(a <= b for a, b in zip(probs, probs[1:]))
    last = probs[-1]
    ok = monotone and last >= 0.99 and abs(last - 0.99383438154253543) <= 1e-12
    record(acceptance_log, 2, ok, f"concentration monotone={monotone}, value at l=6000 = {last:.12f}", t0)


def test_criterion_3_leading_index(acceptance_log):
    t0 = time.perf_counter()
    sign = find_leading_index(CovarianceSpec.from_table({0: 2.0, 1: -1.0, -1: -1.0}))
    iid = find_leading_index(preset("iid", 1))
    exps = [find_leading_index(preset(name, 1)) for name in ("exp_rate0.5", "exp_rate1", "exp_rate2")]
    q = math.exp(-1.0)
    F1 = (1 + q) / (1 - q)
    ok = (sign.I0 == MultiIndex((2,)) and abs(sign.c + 2) <= 1e-9
          and iid.I0 == MultiIndex((0,)) and iid.c == 1.0
          and all(e.I0 == MultiIndex((0,)) and e.c > 0 for e in exps)
          and abs(exps[1].c - F1) <= 1e-9)
    record(acceptance_log, 3, ok,
           f"sign-changing I0={sign.I0} c={sign.c!r}; iid c={iid.c!r}; exponential c={[round(e.c, 9) for e in exps]}",
           t0)


def test_criterion_4_positivity(acceptance_log):
    t0 = time.perf_counter()
    minima = {}
    for name in SHIPPED_KERNELS:
        for d, L in [(1, 5), (1, 20), (2, 5)]:
            minima[(name, d, L)] = analyze(preset(name, d), L).positivity.minimum
    worst = min(minima, key=minima.get)
    ok = all(v >= 1 - 1e-9 for v in minima.values())
    record(acceptance_log, 4, ok,
           f"positivity over {len(SHIPPED_KERNELS)} kernels x 3 boxes: smallest min {minima[worst]:.9f} at {worst}", t0)


WEGNER_CONFIGS = sorted(CONFIGS.glob("*_d?_L*.ini"))


def test_criterion_5_monte_carlo_bounds(acceptance_log):
    t0 = time.perf_counter()
    failures = []
    margins = []
    for path in WEGNER_CONFIGS:
        cfg = RunConfig.from_ini(path.read_text())
        rep = run_wegner_mc(WegnerConfig(
            cfg.covariance(), L=cfg.L, lam=cfg.lam, interval=cfg.interval, background=cfg.background,
            n_samples=cfg.samples, seed=cfg.seed, threads=cfg.threads))
        margins.append(rep.abstract_bound / rep.upper)
        if not (rep.upper <= rep.abstract_bound <= rep.main_bound):
            failures.append(path.name)
    names = {p.name for p in WEGNER_CONFIGS}
    grid = {f"{k}_{b}_d1_L10.ini" for k in ("iid", "exp_rate1", "signchange") for b in ("laplacian", "zero", "random")}
    ok = not failures and grid <= names
    record(acceptance_log, 5, ok,
           f"{len(WEGNER_CONFIGS)} shipped configs, mean+3se <= abstract <= main; "
           f"smallest abstract/(mean+3se) = {min(margins):.1f}; failures={failures}", t0)


def test_criterion_6_zero_background_oracle(acceptance_log):
    t0 = time.perf_counter()
    details = []
    ok = True
    for name in ("iid", "exp_rate1", "signchange"):
        spec = preset(name, 1)
        rep = run_wegner_mc(WegnerConfig(spec, L=10, lam=1.0, interval=(-0.5, 0.5), background="zero",
                                         n_samples=500, seed=20240611))
        sigma = math.sqrt(spec.gamma0)
        exact = 21 * (norm_cdf(0.5 / sigma) - norm_cdf(-0.5 / sigma))
        z = abs(rep.empirical_mean - exact) / rep.std_error
        ok &= z <= 4
        details.append(f"{name}: {rep.empirical_mean:.3f} vs {exact:.3f} ({z:.2f} se)")
    record(acceptance_log, 6, ok, "A=0 oracle " + "; ".join(details), t0)


def test_criterion_7_spectral_averaging(acceptance_log):
    t0 = time.perf_counter()
    results = averaging_suite(20240611, 50)
    ok = len(results) == 50 and all(r.passed and r.budget <= 1e-6 for r in results)
    worst = max(r.lhs - r.rhs for r in results)
    record(acceptance_log, 7, ok,
           f"50 averaging instances pass; max lhs-rhs={worst:.3e}, max budget={max(r.budget for r in results):.1e}",
           t0)


def test_criterion_8_inertia_oracle(acceptance_log):
    t0 = time.perf_counter()
    rng = np.random.default_rng(8)
    mismatches = 0
    for _ in range(200):
        n = int(rng.integers(5, 51))
        G = rng.standard_normal((n, n))
        M = (G + G.T) / 2
        E = float(rng.uniform(-1.5, 1.5) * math.sqrt(n))
        mismatches += count_below(M, E) != int(np.sum(np.linalg.eigvalsh(M) < E))
    record(acceptance_log, 8, mismatches == 0, f"inertia vs eigendecomposition, 200 matrices: {mismatches} mismatches",
           t0)


def _csv_outputs(out: Path) -> dict:
    return {p.name: p.read_bytes() for p in sorted(out.glob("*.csv"))}


def test_criterion_9_determinism(acceptance_log, tmp_path):
    t0 = time.perf_counter()
    commands = {
        "wegner": ["wegner", "--config", str(CONFIGS / "signchange_random_d1_L10.ini")],
        "regularity": ["regularity", "--config", str(CONFIGS / "regularity.ini"), "--n-max", "200000"],
        "averaging-check": ["averaging-check", "--trials", "20", "--seed", "9"],
        "analyze": ["analyze", "--covariance", "exp_rate1", "--L", "6"],
    }
    same = []
    for name, argv in commands.items():
        outputs = []
        for run, threads in enumerate(["1", "1", "4"]):
            out = tmp_path / f"{name}_{run}"
            code = main(argv + ["--threads", threads, "--out", str(out)])
            assert code in (0, 5), f"{name} exited {code}"
            outputs.append((_csv_outputs(out), (out / "summary.txt").read_bytes()
                            if (out / "summary.txt").exists() else (out / "analysis.txt").read_bytes()))
        same.append(outputs[0] == outputs[1] == outputs[2])
    ok = all(same)
    record(acceptance_log, 9, ok,
           f"byte-identical outputs over rerun and threads 1 vs 4: {dict(zip(commands, same))}", t0)
