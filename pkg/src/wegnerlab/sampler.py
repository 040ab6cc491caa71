"""Seeded sampling of the Gaussian potential and exact Gaussian conditioning.

Normal variates are produced in blocks: sample ``i`` is row ``i % BLOCK``
of a ``(BLOCK, n)`` standard-normal matrix drawn by numpy's ziggurat
sampler from a Philox generator seeded with
``SeedSequence([base_seed, i // BLOCK])``.  So each sample is a pure
function of ``(base_seed, i)`` regardless of which thread asks for it or in
what order, and neighbouring samples share generator setup cost.
"""
from __future__ import annotations

from collections import OrderedDict
from dataclasses import dataclass, field
from threading import Lock

import numpy as np
import scipy.linalg
import scipy.sparse
import scipy.sparse.linalg

from .covariance import (
    CovarianceSpec,
    assemble_matrix,
    cholesky_with_pivots,
    covariance_block,
    points_array,
)
from .exceptions import DegenerateCovarianceError, DimensionMismatchError
from .lattice import LatticeBox

BLOCK = 1024
_CACHE_BLOCKS = 8


def normal_block(base_seed: int, block: int, n: int) -> np.ndarray:
    seq = np.random.SeedSequence([int(base_seed) & (2**64 - 1), int(block)])
    return np.random.Generator(np.random.Philox(seq)).standard_normal((BLOCK, n))


@dataclass(eq=False)
class SamplerState:
    box: LatticeBox
    cholesky_factor: np.ndarray
    base_seed: int
    covariance: np.ndarray
    _cache: OrderedDict = field(default_factory=OrderedDict, repr=False)
    _lock: Lock = field(default_factory=Lock, repr=False)

    @property
    def n(self) -> int:
        return len(self.box)

    def _block(self, b: int) -> np.ndarray:
        with self._lock:
            if b in self._cache:
                self._cache.move_to_end(b)
                return self._cache[b]
        z = normal_block(self.base_seed, b, self.n)
        with self._lock:
            self._cache[b] = z
            while len(self._cache) > _CACHE_BLOCKS:
                self._cache.popitem(last=False)
        return z

    def standard_normals(self, start: int, stop: int) -> np.ndarray:
        if start < 0 or stop < start:
            raise ValueError(f"bad sample range [{start}, {stop})")
        rows = []
        i = start
        while i < stop:
            b, r = divmod(i, BLOCK)
            take = min(BLOCK - r, stop - i)
            rows.append(self._block(b)[r:r + take])
            i += take
        if not rows:
            return np.empty((0, self.n))
        return np.vstack(rows)


def prepare(spec: CovarianceSpec, box: LatticeBox, seed: int = 0) -> SamplerState:
    """Factor the covariance on ``box``; raises if the process is degenerate there."""
    cov = assemble_matrix(spec, box)
    result = cholesky_with_pivots(cov, scale=spec.gamma0)
    if result.status != "pd":
        raise DegenerateCovarianceError(
            f"degenerate process: covariance on the box is {result.status} "
            f"(pivot {result.pivot_index} = {result.pivot_value!r}, point {box.point(result.pivot_index)})",
            pivot_index=result.pivot_index, pivot_value=result.pivot_value)
    return SamplerState(box=box, cholesky_factor=result.factor, base_seed=int(seed), covariance=cov)


def draw(state: SamplerState, sample_index: int) -> np.ndarray:
    """Potential vector over the box for one sample, ``C @ g``."""
    g = state.standard_normals(sample_index, sample_index + 1)[0]
    return state.cholesky_factor @ g


def draw_range(state: SamplerState, start: int, stop: int) -> np.ndarray:
    """Samples ``start..stop-1`` as rows; row ``j`` equals ``draw(state, start + j)``."""
    g = state.standard_normals(start, stop)
    return g @ state.cholesky_factor.T


@dataclass
class ConditionalGaussian:
    mean: np.ndarray
    variance: np.ndarray


@dataclass
class ConditionalLaw:
    """Law of ``V[target]`` given ``V[given] = v``: mean ``coefficients @ v``, fixed covariance."""

    target: np.ndarray
    given: np.ndarray
    coefficients: np.ndarray
    covariance: np.ndarray

    def __call__(self, v) -> ConditionalGaussian:
        v = np.asarray(v, dtype=float)
        if v.shape[-1] != len(self.given):
            raise DimensionMismatchError(f"conditioning vector has {v.shape[-1]} entries, expected {len(self.given)}")
        return ConditionalGaussian(mean=self.coefficients @ v, variance=self.covariance)

    @property
    def variance(self) -> float:
        """Scalar conditional variance (single target point)."""
        if self.covariance.shape != (1, 1):
            raise ValueError("scalar variance requested for a multi-point target")
        return float(self.covariance[0, 0])


def _sparse_given_block(spec: CovarianceSpec, given: np.ndarray) -> scipy.sparse.csc_matrix:
    index = {tuple(p): i for i, p in enumerate(given.tolist())}
    rows, cols, vals = [], [], []
    for i, p in enumerate(given.tolist()):
        for offset, g in spec.table:
            j = index.get(tuple(a - b for a, b in zip(p, offset)))
            if j is not None:
                rows.append(i)
                cols.append(j)
                vals.append(g)
    n = len(given)
    return scipy.sparse.csc_matrix((vals, (rows, cols)), shape=(n, n))


def conditional(spec: CovarianceSpec, target, given) -> ConditionalLaw:
    """Exact conditional law of ``V[target]`` given ``V[given]`` (Schur complement).

    Finite-support kernels go through a sparse factorization, so conditioning
    sets of many thousands of points stay cheap.
    """
    target = points_array(target, spec.d)
    given = points_array(given, spec.d)
    if {tuple(p) for p in target.tolist()} & {tuple(p) for p in given.tolist()}:
        raise ValueError("target and conditioning sets overlap")
    cross = covariance_block(spec, given, target)  # Cov(V_given, V_target)
    tt = covariance_block(spec, target, target, symmetric=True)
    if len(given) == 0:
        return ConditionalLaw(target, given, np.zeros((len(target), 0)), tt)
    if spec.has_finite_support and len(given) > 64:
        gg = _sparse_given_block(spec, given)
        try:
            lu = scipy.sparse.linalg.splu(gg)
        except RuntimeError:
            raise DegenerateCovarianceError("conditioning block is singular") from None
        solved = lu.solve(cross)
    else:
        gg = covariance_block(spec, given, given, symmetric=True)
        try:
            factor = scipy.linalg.cho_factor(gg, lower=True)
        except np.linalg.LinAlgError:
            raise DegenerateCovarianceError("conditioning block is not positive definite") from None
        solved = scipy.linalg.cho_solve(factor, cross)
    coefficients = solved.T
    cov = tt - cross.T @ solved
    cov = 0.5 * (cov + cov.T)
    return ConditionalLaw(target, given, coefficients, cov)


def two_sided_window(l: int) -> list[tuple[int]]:
    """The points ``-l..-1, 1..l`` used to condition the origin in d = 1."""
    return [(k,) for k in range(-l, 0)] + [(k,) for k in range(1, l + 1)]
