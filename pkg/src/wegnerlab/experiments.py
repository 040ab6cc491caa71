"""Monte Carlo eigenvalue-count experiment and the conditional-regularity demonstration."""
from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from . import genfunc
from .covariance import CovarianceSpec, preset, validate
from .exceptions import AcceptanceFloorError, DegenerateCovarianceError, PreconditionError, SampleError, WegnerLabError
from .lattice import LatticeBox
from .normal import centered_probability, norm_cdf
from .sampler import conditional, draw_range, prepare, two_sided_window
from .spectral import assemble_hamiltonian, build_background, count_in_interval

# Tags for deriving independent subsystem seeds from one run seed.
SEED_TAGS = {"potential": 1, "background": 2, "regularity": 3, "averaging": 4}


def derive_seed(seed: int, tag: str) -> int:
    """64-bit seed for one subsystem: first word of ``SeedSequence([seed, tag_code])``."""
    seq = np.random.SeedSequence([int(seed) & (2**64 - 1), SEED_TAGS[tag]])
    return int(seq.generate_state(1, dtype=np.uint64)[0])


@dataclass
class WegnerConfig:
    spec: CovarianceSpec
    L: int = 10
    lam: float = 1.0
    interval: tuple = (-0.5, 0.5)
    background: str = "laplacian"
    background_source: str | None = None
    n_samples: int = 500
    seed: int = 0
    zero_tol: float | None = None
    tail_tol: float = genfunc.DEFAULT_TAIL_TOL
    max_total_degree: int = genfunc.DEFAULT_MAX_DEGREE
    threads: int = 1

    @property
    def d(self) -> int:
        return self.spec.d

    @property
    def interval_length(self) -> float:
        return self.interval[1] - self.interval[0]


@dataclass
class WegnerReport:
    config: WegnerConfig
    counts: np.ndarray = field(repr=False)
    empirical_mean: float
    std_error: float
    abstract_bound: float
    main_bound: float
    positivity_margin: float
    analysis: genfunc.Analysis = field(repr=False)

    @property
    def upper(self) -> float:
        return self.empirical_mean + 3.0 * self.std_error

    @property
    def abstract_pass(self) -> bool:
        return self.upper <= self.abstract_bound

    @property
    def main_pass(self) -> bool:
        return self.upper <= self.main_bound

    @property
    def passed(self) -> bool:
        return self.abstract_pass and self.main_pass

    def summary_lines(self) -> list[str]:
        c = self.config
        return [
            f"covariance: {c.spec.describe()}",
            f"d: {c.d}",
            f"L: {c.L}",
            f"lambda: {c.lam!r}",
            f"interval: {c.interval[0]!r} {c.interval[1]!r}",
            f"background: {c.background}",
            f"n_samples: {c.n_samples}",
            f"seed: {c.seed}",
            f"I0: {self.analysis.leading.I0}",
            f"c: {self.analysis.leading.c!r}",
            f"R_L: {self.analysis.R_L!r}",
            f"N: {self.analysis.family.N!r}",
            f"empirical_mean: {self.empirical_mean!r}",
            f"std_error: {self.std_error!r}",
            f"mean_plus_3se: {self.upper!r}",
            f"abstract_bound: {self.abstract_bound!r}",
            f"main_bound: {self.main_bound!r}",
            f"abstract_le_main: {self.abstract_bound <= self.main_bound}",
            f"positivity_margin: {self.positivity_margin!r}",
            f"abstract_verdict: {'pass' if self.abstract_pass else 'FAIL'}",
            f"main_verdict: {'pass' if self.main_pass else 'FAIL'}",
        ]


def _count_range(state, A, lam, E1, E2, start, stop) -> np.ndarray:
    V = draw_range(state, start, stop)
    out = np.empty(stop - start, dtype=np.int64)
    for j, v in enumerate(V):
        try:
            H = assemble_hamiltonian(A, v, lam, sample_index=start + j)
            out[j] = count_in_interval(H, E1, E2)
        except WegnerLabError as exc:
            raise SampleError(str(exc), start + j) from exc
    return out


def sample_counts(state, A, lam, interval, n_samples: int, threads: int = 1) -> np.ndarray:
    """Eigenvalue counts for samples ``0..n_samples-1``; identical for any thread count."""
    E1, E2 = interval
    threads = max(1, int(threads))
    chunk = max(1, -(-n_samples // (4 * threads)))
    ranges = [(s, min(s + chunk, n_samples)) for s in range(0, n_samples, chunk)]
    if threads == 1:
        parts = [_count_range(state, A, lam, E1, E2, s, t) for s, t in ranges]
    else:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            parts = list(pool.map(lambda r: _count_range(state, A, lam, E1, E2, *r), ranges))
    return np.concatenate(parts) if parts else np.empty(0, dtype=np.int64)


def run_wegner_mc(config: WegnerConfig) -> WegnerReport:
    """Average ``Tr chi_I(H)`` over seeded samples and compare with both bounds."""
    if config.n_samples < 2:
        raise ValueError("n_samples must be at least 2 for a standard error")
    if not config.lam > 0:
        raise ValueError("coupling must be positive")
    E1, E2 = config.interval
    if E2 < E1:
        raise ValueError(f"empty interval [{E1}, {E2}]")
    spec = config.spec
    report = validate(spec, config.L)
    if not report.passed:
        raise DegenerateCovarianceError("covariance failed validation: " + ", ".join(report.failures()))
    analysis = genfunc.analyze(spec, config.L, config.lam, E2 - E1, config.zero_tol, config.tail_tol,
                               config.max_total_degree)
    if not analysis.positivity.passed:
        raise PreconditionError(f"positivity certificate failed: min {analysis.positivity.minimum!r}")

    box = LatticeBox(spec.d, config.L)
    state = prepare(spec, box, derive_seed(config.seed, "potential"))
    A = build_background(config.background, box, config.background_source,
                         seed=derive_seed(config.seed, "background"))
    counts = sample_counts(state, A, config.lam, config.interval, config.n_samples, config.threads)
    mean = float(np.mean(counts))
    se = float(np.std(counts, ddof=1) / math.sqrt(len(counts)))
    return WegnerReport(config, counts, mean, se, analysis.abstract_bound, analysis.main_bound,
                        analysis.family.positivity_margin, analysis)


def zero_background_expectation(spec: CovarianceSpec, L: int, lam: float, interval) -> float:
    """Exact ``E Tr chi_I(lam V)``: each site counts independently through its marginal."""
    sigma = math.sqrt(spec.gamma0)
    E1, E2 = interval
    return (2 * L + 1) ** spec.d * (norm_cdf(E2 / (lam * sigma)) - norm_cdf(E1 / (lam * sigma)))


def tridiagonal_kernel() -> CovarianceSpec:
    """``gamma(0) = 2``, ``gamma(+-1) = 1``, zero elsewhere (d = 1)."""
    return preset("tridiag", 1)


def gamma_inverse_corner(l: int) -> float:
    """``(Gamma_l^{-1})_{11}`` for the l x l tridiagonal Toeplitz matrix with 2 on the diagonal."""
    if l < 1:
        raise ValueError("l must be at least 1")
    banded = np.zeros((2, l))
    banded[0, 1:] = 1.0
    banded[1, :] = 2.0
    if l == 1:
        # scipy's banded Hermitian solver rejects 1 x 1 systems
        return float(1.0 / banded[1, 0])
    e1 = np.zeros(l)
    e1[0] = 1.0
    return float(scipy.linalg.solveh_banded(banded, e1)[0])


@dataclass
class RegularityReport:
    l: int
    gamma_l_closed: float
    gamma_l_numeric: float
    inverse_entry: float
    inverse_closed: float
    concentration: float | None = None
    mc_estimate: "ConditionalEstimate | None" = None

    @property
    def variance_residual(self) -> float:
        return abs(self.gamma_l_numeric - self.gamma_l_closed)

    @property
    def inverse_residual(self) -> float:
        return abs(self.inverse_entry - self.inverse_closed)


def regularity_closed_forms(l: int, epsilon: float | None = None) -> RegularityReport:
    """Numerical ``Gamma_l^{-1}(1,1)`` and conditional variance of ``V_0`` against ``l/(l+1)`` and ``2/(l+1)``."""
    if l < 1:
        raise ValueError("l must be at least 1")
    law = conditional(tridiagonal_kernel(), [(0,)], two_sided_window(l))
    closed = 2.0 / (l + 1)
    rep = RegularityReport(l, closed, law.variance, gamma_inverse_corner(l), l / (l + 1))
    if epsilon is not None:
        rep.concentration = centered_probability(epsilon / 2.0, closed)
    return rep


def concentration_curve(epsilon: float, l_list) -> list[tuple[int, float, float]]:
    """Rows ``(l, gamma_l, P(V_0 in [-eps/2, eps/2] | V^l = 0))``."""
    if not epsilon > 0:
        raise ValueError("epsilon must be positive")
    rows = []
    for l in l_list:
        if l < 1:
            raise ValueError("l must be at least 1")
        var = 2.0 / (l + 1)
        rows.append((int(l), var, centered_probability(epsilon / 2.0, var)))
    return rows


def wilson_interval(successes: int, trials: int, z: float = 1.959963984540054) -> tuple[float, float]:
    if trials <= 0:
        return 0.0, 1.0
    p = successes / trials
    denom = 1 + z * z / trials
    center = (p + z * z / (2 * trials)) / denom
    half = z * math.sqrt(p * (1 - p) / trials + z * z / (4 * trials * trials)) / denom
    return max(0.0, center - half), min(1.0, center + half)


@dataclass
class ConditionalEstimate:
    l: int
    epsilon: float
    delta: float
    estimate: float
    hits: int
    accepted: int
    drawn: int
    ci_low: float
    ci_high: float
    point_limit: float

    @property
    def acceptance_rate(self) -> float:
        return self.accepted / self.drawn if self.drawn else 0.0


ACCEPTANCE_FLOOR = 1e-5
PILOT_SIZE = 100_000
CHUNK = 65_536


def regularity_mc(epsilon: float, delta: float, l: int, n_max: int, seed: int = 0,
                  floor: float = ACCEPTANCE_FLOOR, pilot: int = PILOT_SIZE) -> ConditionalEstimate:
    """Rejection estimate of ``P(|V_0| <= eps/2 | |V_k| <= delta for 0 < |k| <= l)``.

    Joint samples on ``-l..l`` come from the seeded sampler; samples outside
    the window are discarded.  After the pilot batch, an acceptance rate
    below ``floor`` aborts with :class:`AcceptanceFloorError` instead of
    grinding through ``n_max`` draws.
    """
    if n_max < 1:
        raise ValueError("n_max must be positive")
    if not (epsilon > 0 and delta > 0) or l < 1:
        raise ValueError("need epsilon > 0, delta > 0, l >= 1")
    state = prepare(tridiagonal_kernel(), LatticeBox(1, l), seed)
    others = np.array([i for i in range(2 * l + 1) if i != l])
    hits = accepted = drawn = 0
    while drawn < n_max:
        stop = min(drawn + CHUNK, n_max)
        V = draw_range(state, drawn, stop)
        window = np.all(np.abs(V[:, others]) <= delta, axis=1)
        accepted += int(window.sum())
        hits += int(np.count_nonzero(np.abs(V[window, l]) <= epsilon / 2.0))
        drawn = stop
        if drawn >= min(pilot, n_max) and accepted / drawn < floor:
            raise AcceptanceFloorError(
                f"acceptance rate {accepted / drawn:.2e} below floor {floor:g} at l={l}, delta={delta}; "
                "use a larger delta or a smaller l", accepted / drawn)
    lo, hi = wilson_interval(hits, accepted)
    return ConditionalEstimate(l, epsilon, delta, hits / accepted, hits, accepted, drawn, lo, hi,
                               centered_probability(epsilon / 2.0, 2.0 / (l + 1)))


DEFAULT_DELTAS = (1.0, 0.5, 0.25, 0.125)


def delta_sweep(epsilon: float, l: int, n_max: int, seed: int = 0, deltas=DEFAULT_DELTAS) -> list[ConditionalEstimate]:
    return [regularity_mc(epsilon, delta, l, n_max, seed=seed) for delta in deltas]


def default_threads() -> int:
    return os.cpu_count() or 1
