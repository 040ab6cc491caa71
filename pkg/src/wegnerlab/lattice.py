"""Cubic lattice boxes and multi-index arithmetic.

A box of half-width ``L`` in dimension ``d`` is the set of integer points
with every coordinate in ``[-L, L]``.  Points are enumerated
lexicographically, first coordinate slowest, so that the ``i``-th point of
``LatticeBox(d, L)`` is ``np.unravel_index(i, (2L+1,)*d) - L``.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass
from functools import cached_property
from typing import Iterator, Sequence

import numpy as np

from .exceptions import DimensionMismatchError

INT64_MAX = 2**63 - 1


@dataclass(frozen=True)
class LatticeBox:
    d: int
    L: int

    def __post_init__(self):
        if int(self.d) != self.d or self.d < 1:
            raise ValueError(f"dimension must be a positive integer, got {self.d!r}")
        if int(self.L) != self.L or self.L < 0:
            raise ValueError(f"half-width must be a non-negative integer, got {self.L!r}")
        object.__setattr__(self, "d", int(self.d))
        object.__setattr__(self, "L", int(self.L))

    @property
    def side(self) -> int:
        return 2 * self.L + 1

    @property
    def shape(self) -> tuple[int, ...]:
        return (self.side,) * self.d

    def __len__(self) -> int:
        return self.side**self.d

    @cached_property
    def points(self) -> np.ndarray:
        """All points as an ``(n, d)`` int64 array in enumeration order."""
        axes = np.indices(self.shape, dtype=np.int64).reshape(self.d, -1).T
        pts = axes - self.L
        pts.setflags(write=False)
        return pts

    def point(self, i: int) -> tuple[int, ...]:
        if not 0 <= i < len(self):
            raise IndexError(f"index {i} outside box of {len(self)} points")
        return tuple(int(c) - self.L for c in np.unravel_index(i, self.shape))

    def index(self, point: Sequence[int]) -> int:
        point = tuple(int(c) for c in point)
        if len(point) != self.d:
            raise DimensionMismatchError(f"point {point} has dimension {len(point)}, box has {self.d}")
        if any(abs(c) > self.L for c in point):
            raise KeyError(f"point {point} lies outside the box of half-width {self.L}")
        return int(np.ravel_multi_index(tuple(c + self.L for c in point), self.shape))

    def __contains__(self, point) -> bool:
        point = tuple(point)
        return len(point) == self.d and all(abs(int(c)) <= self.L for c in point)


def box_points(box: LatticeBox) -> np.ndarray:
    return box.points


@dataclass(frozen=True, eq=True)
class MultiIndex:
    """Multi-index in N_0^d with the componentwise partial order.

    ``J <= I`` holds iff every entry of ``J`` is at most the matching entry
    of ``I``; ``J < I`` additionally requires ``|J|_1 < |I|_1``.  This is a
    partial order, so do not sort lists of multi-indices with it; use
    :func:`degree_lex_key` instead.
    """

    entries: tuple[int, ...]

    def __post_init__(self):
        entries = tuple(int(e) for e in self.entries)
        if not entries:
            raise ValueError("multi-index needs at least one entry")
        if any(e < 0 for e in entries):
            raise ValueError(f"multi-index entries must be non-negative, got {entries}")
        object.__setattr__(self, "entries", entries)

    @classmethod
    def zero(cls, d: int) -> "MultiIndex":
        return cls((0,) * d)

    @property
    def d(self) -> int:
        return len(self.entries)

    @property
    def degree(self) -> int:
        return sum(self.entries)

    def _check(self, other: "MultiIndex"):
        if not isinstance(other, MultiIndex):
            return NotImplemented
        if other.d != self.d:
            raise DimensionMismatchError(f"cannot compare multi-indices of dimension {self.d} and {other.d}")
        return None

    def __le__(self, other: "MultiIndex") -> bool:
        if self._check(other) is NotImplemented:
            return NotImplemented
        return all(a <= b for a, b in zip(self.entries, other.entries))

    def __lt__(self, other: "MultiIndex") -> bool:
        if self._check(other) is NotImplemented:
            return NotImplemented
        return self <= other and self.degree < other.degree

    def __ge__(self, other: "MultiIndex") -> bool:
        return other.__le__(self)

    def __gt__(self, other: "MultiIndex") -> bool:
        return other.__lt__(self)

    def __iter__(self) -> Iterator[int]:
        return iter(self.entries)

    def __str__(self) -> str:
        return "(" + ",".join(str(e) for e in self.entries) + ")"

    @classmethod
    def parse(cls, text: str) -> "MultiIndex":
        return cls(tuple(int(t) for t in text.strip().strip("()").split(",") if t.strip()))


def degree_lex_key(index: MultiIndex) -> tuple:
    return (index.degree, index.entries)


def multi_indices_of_degree(d: int, degree: int) -> list[MultiIndex]:
    """All multi-indices in dimension ``d`` with total degree ``degree``, lexicographic."""
    out = [
        MultiIndex(entries)
        for entries in itertools.product(range(degree + 1), repeat=d)
        if sum(entries) == degree
    ]
    out.sort(key=lambda m: m.entries)
    return out


def multi_indices_up_to(d: int, max_degree: int) -> list[MultiIndex]:
    return [m for n in range(max_degree + 1) for m in multi_indices_of_degree(d, n)]


def _as_point(k, d: int) -> tuple[int, ...]:
    k = tuple(int(c) for c in np.atleast_1d(k))
    if len(k) != d:
        raise DimensionMismatchError(f"point {k} and multi-index of dimension {d} do not match")
    return k


def monomial(k, index: MultiIndex) -> int:
    """Exact ``prod_r k_r ** i_r`` with ``0 ** 0 == 1``."""
    out = 1
    for c, e in zip(_as_point(k, index.d), index.entries):
        out *= c**e
    return out


def falling_factorial(n: int, i: int) -> int:
    out = 1
    for j in range(i):
        out *= n - j
    return out


def falling_factorial_product(k, index: MultiIndex) -> int:
    """Value at ``z = 1`` of the ``index``-th partial derivative of ``z**k``."""
    out = 1
    for c, e in zip(_as_point(k, index.d), index.entries):
        out *= falling_factorial(c, e)
    return out


def _checked_int64(values: list[int]) -> np.ndarray:
    if any(abs(v) > INT64_MAX for v in values):
        raise OverflowError("exact integer table exceeds the signed 64-bit range")
    return np.array(values, dtype=np.int64)


def axis_powers(R: int, power: int) -> np.ndarray:
    """``k ** power`` for ``k = -R..R`` as exact int64, overflow-checked."""
    return _checked_int64([k**power for k in range(-R, R + 1)])


def axis_falling_factorials(R: int, order: int) -> np.ndarray:
    return _checked_int64([falling_factorial(k, order) for k in range(-R, R + 1)])


def monomial_grid(R: int, index: MultiIndex) -> np.ndarray:
    """``k ** index`` on the box of half-width ``R`` as a float array of shape ``(2R+1,)*d``."""
    grid = np.ones((1,) * index.d)
    for axis, e in enumerate(index.entries):
        shape = [1] * index.d
        shape[axis] = 2 * R + 1
        grid = grid * axis_powers(R, e).astype(float).reshape(shape)
    return np.broadcast_to(grid, (2 * R + 1,) * index.d).copy()
