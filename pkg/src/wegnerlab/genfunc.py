"""Leading derivative of the covariance generating function and the Wegner constants.

The generating function is ``F(z) = sum_k gamma(-k) z^k``.  Its mixed
partial derivative of order ``I`` at ``z = (1, ..., 1)`` equals
``sum_k gamma(-k) * prod_r k_r (k_r - 1) ... (k_r - i_r + 1)``, which is
what :func:`derivative_at_one` evaluates.  The first multi-index (in total
degree) with a nonzero derivative, together with that derivative ``c``,
fixes the coefficient sequence ``t(k) = 2 k^I0 / c`` on a box of radius
``R_L`` whose covariance-convolution dominates 1 on the box of half-width
``L``.  From ``t`` follow the normalization ``N`` (the variance of
``sum_k t(k) V_k``) and the two expected-eigenvalue-count bounds.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .covariance import EXPONENTIAL, CovarianceSpec, convolve_on_box
from .exceptions import DegenerateCovarianceError, LeadingIndexError, TailToleranceError
from .lattice import (
    LatticeBox,
    MultiIndex,
    axis_falling_factorials,
    falling_factorial_product,
    monomial_grid,
    multi_indices_up_to,
)

DEFAULT_TAIL_TOL = 1e-12
DEFAULT_MAX_DEGREE = 4
MAX_RADIUS = 100_000
POSITIVITY_TOL = 1e-9


def tail_bound(K: int, d: int, degree: int, D: float, alpha: float) -> float:
    """Upper bound on ``sum_{|k|_1 > K} D e^{-alpha |k|_1} |prod_r ff(k_r, i_r)|``.

    Uses ``#{|k|_1 = n} <= 2^d C(n+d-1, d-1)`` and
    ``|ff(k_r, i_r)| <= (|k|_1 + |I|)^{i_r}``.  Summed term by term until the
    ratio of consecutive terms drops below 1, then closed with a geometric
    remainder (the ratios are eventually decreasing).
    """

    def term(n):
        return D * 2**d * math.comb(n + d - 1, d - 1) * (n + degree) ** degree * math.exp(-alpha * n)

    total = 0.0
    n = K + 1
    prev = term(n)
    while True:
        total += prev
        nxt = term(n + 1)
        ratio = nxt / prev if prev > 0 else 0.0
        # ratios of comb*poly*exp terms decrease once past the mode
        if ratio < 1.0 and n > (d + degree) / alpha:
            if prev * ratio / (1.0 - ratio) <= 1e-3 * total or nxt == 0.0:
                return total + nxt / (1.0 - ratio)
        n += 1
        prev = nxt
        if n > K + 10 * MAX_RADIUS:
            return math.inf


def truncation_radius(spec: CovarianceSpec, index: MultiIndex, tail_tol: float,
                      max_radius: int = MAX_RADIUS) -> int:
    D, alpha = spec.envelope_D, spec.envelope_alpha
    bound = lambda K: tail_bound(K, spec.d, index.degree, D, alpha)
    if bound(max_radius) >= tail_tol:
        raise TailToleranceError(
            f"tail tolerance {tail_tol:g} not reachable within radius {max_radius} for I={index}")
    lo, hi = -1, 1
    while bound(hi) >= tail_tol:
        lo, hi = hi, min(2 * hi, max_radius)
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if bound(mid) < tail_tol:
            hi = mid
        else:
            lo = mid
    return hi


def derivative_at_one(spec: CovarianceSpec, index: MultiIndex, tail_tol: float = DEFAULT_TAIL_TOL,
                      return_radius: bool = False):
    """``D^index F(1)``; exact over the support for tables, truncated for exponentials.

    For the exponential kernel the sum runs over the cube of half-width
    ``K``, the smallest radius whose analytic tail bound is below
    ``tail_tol``.  The cube contains the l1 ball of radius ``K``, so the
    omitted terms are covered by that bound.
    """
    if index.d != spec.d:
        raise ValueError(f"multi-index dimension {index.d} != covariance dimension {spec.d}")
    if tail_tol <= 0:
        raise ValueError("tail_tol must be positive")
    if spec.kind == EXPONENTIAL:
        K = truncation_radius(spec, index, tail_tol)
        k = np.arange(-K, K + 1)
        weights = np.exp(-spec.rate * np.abs(k))
        value = spec.amplitude
        for order in index.entries:
            ff = axis_falling_factorials(K, order).astype(float)
            value *= math.fsum(weights * ff)
        radius = K
    else:
        # the coefficient of z^k is gamma(-k), so table entry gamma(p) multiplies z^(-p)
        terms = [g * falling_factorial_product(tuple(-c for c in p), index) for p, g in spec.table]
        value = math.fsum(terms)
        radius = spec.support_radius
    return (value, radius) if return_radius else value


@dataclass
class LeadingIndex:
    I0: MultiIndex
    c: float
    zero_tol: float
    truncation_radius: int
    derivative_table: dict

    def is_zero(self, index: MultiIndex) -> bool:
        return abs(self.derivative_table[index]) <= self.zero_tol


def find_leading_index(spec: CovarianceSpec, zero_tol: float | None = None,
                       max_total_degree: int = DEFAULT_MAX_DEGREE,
                       tail_tol: float = DEFAULT_TAIL_TOL) -> LeadingIndex:
    """First multi-index, by total degree then lexicographically, with a nonzero derivative.

    All derivatives up to ``max_total_degree`` are tabulated first.  Without
    an explicit ``zero_tol`` the threshold is ``1e-9`` times the largest
    tabulated modulus, floored at ``100 * tail_tol`` so truncation error is
    never mistaken for a nonzero value.
    """
    if zero_tol is not None and zero_tol <= 0:
        raise ValueError("zero_tol must be positive")
    indices = multi_indices_up_to(spec.d, max_total_degree)
    table = {}
    radius = 0
    for index in indices:
        table[index], r = derivative_at_one(spec, index, tail_tol, return_radius=True)
        radius = max(radius, r)
    if zero_tol is None:
        scale = max(abs(v) for v in table.values())
        zero_tol = max(1e-9 * scale, 100.0 * tail_tol)
    for index in indices:
        if abs(table[index]) > zero_tol:
            if all(abs(table[j]) <= zero_tol for j in indices if j < index):
                return LeadingIndex(index, table[index], zero_tol, radius, table)
    raise LeadingIndexError(
        f"every derivative up to total degree {max_total_degree} is below {zero_tol:g}", max_total_degree)


def compute_R_L(spec: CovarianceSpec, leading: LeadingIndex, L: float) -> float:
    D, alpha, d = spec.envelope_D, spec.envelope_alpha, spec.d
    c = abs(leading.c)
    if c == 0:
        raise ValueError("leading derivative is zero")
    first = 2 * L + (2 / alpha) * math.log(2 * 3**d * D / (c * (1 - math.exp(-alpha / 2))))
    second = 8 * (d + leading.I0.degree) ** 2 / alpha**2
    return max(first, second)


@dataclass
class CoefficientFamily:
    R_L: float
    radius: int
    I0: MultiIndex
    c: float
    values: np.ndarray
    N: float
    l1_norm: float
    positivity_margin: float | None = None

    @property
    def d(self) -> int:
        return self.values.ndim

    @property
    def support(self) -> np.ndarray:
        """Points of the box of half-width ``floor(R_L)``, matching ``values.ravel()``."""
        return LatticeBox(self.d, self.radius).points

    def l1_bound(self) -> float:
        return (2 / abs(self.c)) * (2 * self.R_L + 1) ** self.d * self.R_L ** self.I0.degree

    def __call__(self, k) -> float:
        k = tuple(int(x) for x in np.atleast_1d(k))
        if any(abs(x) > self.radius for x in k):
            return 0.0
        return float(self.values[tuple(x + self.radius for x in k)])


def build_coefficients(leading: LeadingIndex, R_L: float, spec: CovarianceSpec) -> CoefficientFamily:
    """``t(k) = 2 k^I0 / c`` on the box of half-width ``floor(R_L)``; the same family serves every site."""
    R = int(math.floor(R_L))
    values = (2.0 / leading.c) * monomial_grid(R, leading.I0)
    smoothed = convolve_on_box(spec, values, R, R)
    N = math.fsum((values * smoothed).ravel())
    if not N > 0:
        raise DegenerateCovarianceError(f"normalization N = {N!r} is not positive")
    l1 = math.fsum(np.abs(values).ravel())
    return CoefficientFamily(R_L=float(R_L), radius=R, I0=leading.I0, c=leading.c,
                             values=values, N=N, l1_norm=l1)


@dataclass
class PositivityReport:
    L: int
    minimum: float
    argmin: tuple
    passed: bool
    values: np.ndarray = field(repr=False)


def check_positivity(spec: CovarianceSpec, family: CoefficientFamily, L: int) -> PositivityReport:
    """Minimum over the box of ``m(x) = sum_k t(k) gamma(x - k)``; passes iff it is at least 1."""
    m = convolve_on_box(spec, family.values, family.radius, L)
    flat = int(np.argmin(m))
    argmin = tuple(int(i) - L for i in np.unravel_index(flat, m.shape))
    minimum = float(m.ravel()[flat])
    family.positivity_margin = minimum - 1.0
    return PositivityReport(L, minimum, argmin, minimum >= 1.0 - POSITIVITY_TOL, m)


def _check_bound_args(lam, interval_length):
    if lam <= 0:
        raise ValueError(f"coupling must be positive, got {lam}")
    if interval_length < 0:
        raise ValueError(f"interval length must be non-negative, got {interval_length}")


def abstract_wegner_bound(family: CoefficientFamily, L: int, lam: float, interval_length: float) -> float:
    """``|Lambda_L| sqrt(N) |I| / (sqrt(2 pi) lam)`` with one family for every site."""
    _check_bound_args(lam, interval_length)
    return (2 * L + 1) ** family.d * math.sqrt(family.N) * interval_length / (math.sqrt(2 * math.pi) * lam)


def volume_exponent(d: int, I0: MultiIndex) -> int:
    return 2 * d + I0.degree


def wegner_constant(spec: CovarianceSpec, family: CoefficientFamily, L: int) -> float:
    """``C_W`` from the l1 volume bound, tightest for this ``L``."""
    d = spec.d
    c_prime = (2 * L + 1) ** d * family.l1_norm / (2 * L + 1) ** volume_exponent(d, family.I0)
    return c_prime * math.sqrt(spec.gamma0) / math.sqrt(2 * math.pi)


def main_theorem_bound(spec: CovarianceSpec, leading: LeadingIndex, L: int, lam: float,
                       interval_length: float, family: CoefficientFamily | None = None) -> float:
    """``C_W |I| (2L+1)^(2d+|I0|) / lam``."""
    _check_bound_args(lam, interval_length)
    if family is None:
        family = build_coefficients(leading, compute_R_L(spec, leading, L), spec)
    C_W = wegner_constant(spec, family, L)
    return C_W * interval_length * (2 * L + 1) ** volume_exponent(spec.d, leading.I0) / lam


@dataclass
class Analysis:
    spec: CovarianceSpec
    L: int
    leading: LeadingIndex
    R_L: float
    family: CoefficientFamily
    positivity: PositivityReport
    lam: float = 1.0
    interval_length: float = 1.0

    @property
    def wegner_constant(self) -> float:
        return wegner_constant(self.spec, self.family, self.L)

    @property
    def abstract_bound(self) -> float:
        return abstract_wegner_bound(self.family, self.L, self.lam, self.interval_length)

    @property
    def main_bound(self) -> float:
        return main_theorem_bound(self.spec, self.leading, self.L, self.lam, self.interval_length, self.family)

    def report_lines(self) -> list[str]:
        lead = self.leading
        lines = [
            f"covariance: {self.spec.describe()}",
            f"d: {self.spec.d}",
            f"L: {self.L}",
            f"envelope_D: {self.spec.envelope_D!r}",
            f"envelope_alpha: {self.spec.envelope_alpha!r}",
            f"I0: {lead.I0}",
            f"c: {lead.c!r}",
            f"zero_tol: {lead.zero_tol!r}",
            f"truncation_radius: {lead.truncation_radius}",
            f"R_L: {self.R_L!r}",
            f"support_half_width: {self.family.radius}",
            f"l1_norm: {self.family.l1_norm!r}",
            f"l1_bound: {self.family.l1_bound()!r}",
            f"N: {self.family.N!r}",
            f"positivity_min: {self.positivity.minimum!r}",
            f"positivity_argmin: {self.positivity.argmin}",
            f"positivity_pass: {self.positivity.passed}",
            f"lambda: {self.lam!r}",
            f"interval_length: {self.interval_length!r}",
            f"volume_exponent: {volume_exponent(self.spec.d, lead.I0)}",
            f"wegner_constant: {self.wegner_constant!r}",
            f"abstract_bound: {self.abstract_bound!r}",
            f"main_bound: {self.main_bound!r}",
            f"abstract_le_main: {self.abstract_bound <= self.main_bound}",
            "",
            "[derivatives]",
            "multi_index,value,is_zero",
        ]
        for index, value in lead.derivative_table.items():
            lines.append(f"\"{index}\",{value!r},{lead.is_zero(index)}")
        return lines


def analyze(spec: CovarianceSpec, L: int, lam: float = 1.0, interval_length: float = 1.0,
            zero_tol: float | None = None, tail_tol: float = DEFAULT_TAIL_TOL,
            max_total_degree: int = DEFAULT_MAX_DEGREE) -> Analysis:
    leading = find_leading_index(spec, zero_tol, max_total_degree, tail_tol)
    R_L = compute_R_L(spec, leading, L)
    family = build_coefficients(leading, R_L, spec)
    positivity = check_positivity(spec, family, L)
    return Analysis(spec, L, leading, R_L, family, positivity, lam, interval_length)
