"""Covariance functions of stationary Gaussian fields on Z^d.

Two kinds are supported: an explicit finite-support table and the
parametric exponential kernel ``gamma(x) = a * exp(-rate * |x|_1)``.  Every
spec carries an exponential envelope ``(D, alpha)`` with
``|gamma(x)| <= D * exp(-alpha * |x|_1)``; the leading-index analysis needs
these constants explicitly.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .exceptions import (
    CovarianceParseError,
    DimensionMismatchError,
    MatrixSizeError,
)
from .lattice import LatticeBox

TABLE = "table"
EXPONENTIAL = "exponential"

DEFAULT_TABLE_ALPHA = math.log(2.0)
DEFAULT_MAX_POINTS = 4096

# Cholesky pivot classification, relative to gamma(0).
NOT_PD_TOL = 1e-10
DEGENERATE_TOL = 1e-12


@dataclass(frozen=True)
class CovarianceSpec:
    d: int
    kind: str
    table: tuple = ()
    amplitude: float = 0.0
    rate: float = 0.0
    envelope_D: float = 0.0
    envelope_alpha: float = 0.0
    envelope_fitted: bool = field(default=False, compare=False)

    @classmethod
    def from_table(cls, table: Mapping, d: int | None = None, D: float | None = None,
                   alpha: float | None = None) -> "CovarianceSpec":
        """Build a table kernel from ``{point: value}``.

        Integer keys are accepted for d = 1.  The table is stored as given,
        not symmetrized, so that :func:`validate` can flag asymmetric input.
        Missing envelope constants are fitted with ``alpha = ln 2`` and the
        smallest admissible ``D``.
        """
        items = []
        for key, value in table.items():
            point = tuple(int(c) for c in np.atleast_1d(key))
            items.append((point, float(value)))
        if not items:
            raise ValueError("covariance table is empty")
        dims = {len(p) for p, _ in items}
        if len(dims) != 1:
            raise DimensionMismatchError(f"table mixes point dimensions {sorted(dims)}")
        table_d = dims.pop()
        if d is not None and d != table_d:
            raise DimensionMismatchError(f"table points have dimension {table_d}, expected {d}")
        if len({p for p, _ in items}) != len(items):
            raise ValueError("duplicate points in covariance table")
        items.sort()
        fitted = D is None
        if alpha is None:
            alpha = DEFAULT_TABLE_ALPHA
        if D is None:
            D = max(abs(v) * math.exp(alpha * sum(abs(c) for c in p)) for p, v in items)
        return cls(d=table_d, kind=TABLE, table=tuple(items), envelope_D=float(D),
                   envelope_alpha=float(alpha), envelope_fitted=fitted)

    @classmethod
    def exponential(cls, amplitude: float, rate: float, d: int = 1) -> "CovarianceSpec":
        if amplitude <= 0 or rate <= 0:
            raise ValueError("exponential kernel needs amplitude > 0 and rate > 0")
        return cls(d=int(d), kind=EXPONENTIAL, amplitude=float(amplitude), rate=float(rate),
                   envelope_D=float(amplitude), envelope_alpha=float(rate))

    @cached_property
    def table_dict(self) -> dict:
        return dict(self.table)

    @cached_property
    def support_radius(self) -> int:
        """Largest coordinate modulus in the table support (None for infinite support)."""
        if self.kind != TABLE:
            return None
        return max(max(abs(c) for c in p) for p, _ in self.table)

    @cached_property
    def _dense(self) -> np.ndarray:
        S = self.support_radius
        arr = np.zeros((2 * S + 1,) * self.d)
        for p, v in self.table:
            arr[tuple(c + S for c in p)] = v
        return arr

    @property
    def gamma0(self) -> float:
        return float(evaluate(self, (0,) * self.d))

    @property
    def has_finite_support(self) -> bool:
        return self.kind == TABLE

    def describe(self) -> str:
        if self.kind == EXPONENTIAL:
            return f"exponential(d={self.d}, amplitude={self.amplitude!r}, rate={self.rate!r})"
        body = ", ".join(f"{p}:{v!r}" for p, v in self.table)
        return f"table(d={self.d}, {{{body}}})"


def evaluate(spec: CovarianceSpec, x) -> float:
    x = np.atleast_1d(np.asarray(x, dtype=np.int64))
    if x.shape != (spec.d,):
        raise DimensionMismatchError(f"point of shape {x.shape} for a d={spec.d} covariance")
    return float(evaluate_many(spec, x[None, :])[0])


def evaluate_many(spec: CovarianceSpec, points: np.ndarray) -> np.ndarray:
    """Vectorized ``gamma`` on an ``(n, d)`` integer array."""
    points = np.asarray(points, dtype=np.int64)
    if points.ndim != 2 or points.shape[1] != spec.d:
        raise DimensionMismatchError(f"expected (n, {spec.d}) points, got shape {points.shape}")
    if spec.kind == EXPONENTIAL:
        return spec.amplitude * np.exp(-spec.rate * np.abs(points).sum(axis=1))
    S = spec.support_radius
    inside = np.all(np.abs(points) <= S, axis=1)
    out = np.zeros(len(points))
    if inside.any():
        idx = tuple((points[inside] + S).T)
        out[inside] = spec._dense[idx]
    return out


@dataclass
class Check:
    name: str
    passed: bool | None
    worst_point: tuple | None = None
    worst_value: float | None = None
    detail: str = ""


@dataclass
class ValidationReport:
    spec: CovarianceSpec
    L: int
    checks: list
    status: str

    @property
    def passed(self) -> bool:
        return all(c.passed is not False for c in self.checks)

    def check(self, name: str) -> Check:
        for c in self.checks:
            if c.name == name:
                return c
        raise KeyError(name)

    def failures(self) -> list:
        return [c.name for c in self.checks if c.passed is False]

    def lines(self) -> list[str]:
        out = [f"covariance: {self.spec.describe()}",
               f"envelope_D: {self.spec.envelope_D!r}",
               f"envelope_alpha: {self.spec.envelope_alpha!r}",
               f"envelope_fitted: {self.spec.envelope_fitted}",
               f"validated_on: Lambda_{2 * self.L} (pointwise), Lambda_{self.L} (definiteness)",
               f"definiteness: {self.status}"]
        for c in self.checks:
            verdict = {True: "pass", False: "FAIL", None: "skipped"}[c.passed]
            extra = f" worst={c.worst_point} value={c.worst_value!r}" if c.worst_point is not None else ""
            out.append(f"check {c.name}: {verdict}{extra} {c.detail}".rstrip())
        return out


def _check_points(spec: CovarianceSpec, L: int) -> np.ndarray:
    pts = LatticeBox(spec.d, 2 * L).points
    if spec.kind == TABLE:
        support = np.array([p for p, _ in spec.table], dtype=np.int64)
        pts = np.unique(np.vstack([pts, support]), axis=0)
    return pts


def validate(spec: CovarianceSpec, L: int) -> ValidationReport:
    """Check the model assumptions on finite boxes; never raises on failure."""
    checks = []
    g0 = spec.gamma0

    if spec.kind == TABLE:
        bad = [(p, v) for p, v in spec.table
               if not math.isclose(v, spec.table_dict.get(tuple(-c for c in p), 0.0),
                                   rel_tol=1e-14, abs_tol=0.0)]
        if bad:
            p, v = max(bad, key=lambda pv: abs(pv[1] - spec.table_dict.get(tuple(-c for c in pv[0]), 0.0)))
            checks.append(Check("symmetry", False, p, v, "gamma(x) != gamma(-x)"))
        else:
            checks.append(Check("symmetry", True))
    else:
        checks.append(Check("symmetry", True, detail="closed form"))
    symmetric = checks[-1].passed

    checks.append(Check("gamma0_positive", bool(0 < g0 < math.inf), (0,) * spec.d, g0))

    pts = _check_points(spec, L)
    vals = evaluate_many(spec, pts)
    l1 = np.abs(pts).sum(axis=1)
    envelope = spec.envelope_D * np.exp(-spec.envelope_alpha * l1)
    excess = np.abs(vals) - envelope * (1 + 1e-12)
    worst = int(np.argmax(excess))
    checks.append(Check("envelope", bool(excess[worst] <= 0), tuple(int(c) for c in pts[worst]),
                        float(vals[worst]), f"D={spec.envelope_D!r} alpha={spec.envelope_alpha!r}"))

    excess = np.abs(vals) - abs(g0) * (1 + 1e-12)
    worst = int(np.argmax(excess))
    checks.append(Check("bounded_by_gamma0", bool(excess[worst] <= 0), tuple(int(c) for c in pts[worst]),
                        float(vals[worst])))

    status = "unchecked"
    if not symmetric:
        checks.append(Check("positive_definite", None, detail="skipped: asymmetric table"))
    elif g0 <= 0:
        checks.append(Check("positive_definite", None, detail="skipped: gamma(0) <= 0"))
    else:
        box = LatticeBox(spec.d, L)
        try:
            result = cholesky_with_pivots(assemble_matrix(spec, box), scale=g0)
        except MatrixSizeError as exc:
            checks.append(Check("positive_definite", None, detail=f"skipped: {exc}"))
        else:
            status = result.status
            if result.status == "pd":
                checks.append(Check("positive_definite", True, detail=f"min pivot {float(result.pivots.min())!r}"))
            else:
                p = box.point(result.pivot_index)
                checks.append(Check("positive_definite", False, p, result.pivot_value,
                                    f"{result.status} at pivot {result.pivot_index}"))
    return ValidationReport(spec, L, checks, status)


def assemble_matrix(spec: CovarianceSpec, box: LatticeBox, max_points: int = DEFAULT_MAX_POINTS) -> np.ndarray:
    """Dense covariance matrix ``gamma(p_i - p_j)`` over ``box``, symmetric by construction."""
    if box.d != spec.d:
        raise DimensionMismatchError(f"box dimension {box.d} != covariance dimension {spec.d}")
    n = len(box)
    if n > max_points:
        raise MatrixSizeError(f"box has {n} points, above the limit of {max_points}")
    return covariance_block(spec, box.points, box.points, symmetric=True)


def covariance_block(spec: CovarianceSpec, rows: np.ndarray, cols: np.ndarray, symmetric=False) -> np.ndarray:
    rows = np.asarray(rows, dtype=np.int64)
    cols = np.asarray(cols, dtype=np.int64)
    if symmetric:
        n = len(rows)
        iu, ju = np.triu_indices(n)
        out = np.empty((n, n))
        upper = evaluate_many(spec, rows[iu] - rows[ju])
        out[iu, ju] = upper
        out[ju, iu] = upper
        return out
    diff = rows[:, None, :] - cols[None, :, :]
    return evaluate_many(spec, diff.reshape(-1, spec.d)).reshape(len(rows), len(cols))


@dataclass
class CholeskyResult:
    factor: np.ndarray | None
    pivots: np.ndarray
    status: str
    pivot_index: int | None = None
    pivot_value: float | None = None


def cholesky_with_pivots(matrix: np.ndarray, scale: float | None = None) -> CholeskyResult:
    """Unpivoted Cholesky that reports the first bad pivot.

    A pivot below ``-1e-10 * scale`` means not positive semidefinite; a pivot
    in ``[-1e-10, 1e-12] * scale`` means degenerate.  ``scale`` defaults to
    the largest diagonal entry.
    """
    A = np.array(matrix, dtype=float)
    n = A.shape[0]
    if scale is None:
        scale = float(np.max(np.abs(np.diag(A)))) if n else 1.0
    C = np.zeros_like(A)
    pivots = np.empty(n)
    for j in range(n):
        pivot = A[j, j] - C[j, :j] @ C[j, :j]
        pivots[j] = pivot
        if pivot < -NOT_PD_TOL * scale:
            return CholeskyResult(None, pivots[: j + 1], "not_pd", j, float(pivot))
        if pivot <= DEGENERATE_TOL * scale:
            return CholeskyResult(None, pivots[: j + 1], "degenerate", j, float(pivot))
        root = math.sqrt(pivot)
        C[j, j] = root
        C[j + 1:, j] = (A[j + 1:, j] - C[j + 1:, :j] @ C[j, :j]) / root
    return CholeskyResult(C, pivots, "pd")


def convolve_on_box(spec: CovarianceSpec, values: np.ndarray, R: int, H: int) -> np.ndarray:
    """``sum_k values[k] * gamma(x - k)`` for every ``x`` in the box of half-width ``H``.

    ``values`` lives on the box of half-width ``R`` (shape ``(2R+1,)*d``) and
    is taken as zero outside it.
    """
    values = np.asarray(values, dtype=float)
    if values.shape != (2 * R + 1,) * spec.d:
        raise DimensionMismatchError(f"values shape {values.shape} does not match half-width {R}, d={spec.d}")
    if spec.kind == EXPONENTIAL:
        x = np.arange(-H, H + 1)
        k = np.arange(-R, R + 1)
        kernel = np.exp(-spec.rate * np.abs(x[:, None] - k[None, :]))
        out = values
        for axis in range(spec.d):
            out = np.moveaxis(np.tensordot(kernel, out, axes=([1], [axis])), 0, axis)
        return spec.amplitude * out
    S = spec.support_radius
    P = max(R, H + S)
    padded = np.zeros((2 * P + 1,) * spec.d)
    inner = tuple(slice(P - R, P + R + 1) for _ in range(spec.d))
    padded[inner] = values
    out = np.zeros((2 * H + 1,) * spec.d)
    for offset, g in spec.table:
        window = tuple(slice(P - H - o, P + H - o + 1) for o in offset)
        out += g * padded[window]
    return out


def _axis_table(d: int, center: float, neighbor: float) -> dict:
    table = {(0,) * d: center}
    for r in range(d):
        for s in (-1, 1):
            p = [0] * d
            p[r] = s
            table[tuple(p)] = neighbor
    return table


SHIPPED_KERNELS = ("iid", "exp_rate0.5", "exp_rate1", "exp_rate2", "signchange", "tridiag")


def preset(name: str, d: int = 1) -> CovarianceSpec:
    """Shipped kernels.

    ``signchange`` is the mean-zero kernel ``2d`` at the origin and ``-1`` at
    nearest neighbours; ``tridiag`` uses ``+1`` instead.  For d = 1 these are
    ``{0: 2, +-1: -1}`` and ``{0: 2, +-1: 1}``.
    """
    if name == "iid":
        return CovarianceSpec.from_table({(0,) * d: 1.0})
    if name.startswith("exp_rate"):
        return CovarianceSpec.exponential(1.0, float(name[len("exp_rate"):]), d)
    if name == "signchange":
        return CovarianceSpec.from_table(_axis_table(d, 2.0 * d, -1.0))
    if name == "tridiag":
        return CovarianceSpec.from_table(_axis_table(d, 2.0 * d, 1.0))
    raise KeyError(f"unknown kernel preset {name!r}; known: {', '.join(SHIPPED_KERNELS)}")


_HEADER_KEYS = {"d", "kind", "D", "alpha", "amplitude", "rate"}


def parse_covariance(text: str) -> CovarianceSpec:
    """Parse the covariance file format.

    The first non-comment line is a header of ``key=value`` tokens with
    ``d`` and ``kind`` required.  For ``kind=table`` each further line is
    ``k_1 ... k_d value``; for ``kind=exponential`` the header carries
    ``amplitude`` and ``rate`` and no data lines may follow.
    """
    header = None
    header_line = None
    table = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if header is None:
            header = {}
            header_line = lineno
            for token in line.split():
                if "=" not in token:
                    raise CovarianceParseError(f"header token {token!r} is not key=value", lineno)
                key, value = token.split("=", 1)
                if key not in _HEADER_KEYS:
                    raise CovarianceParseError(f"unknown header key {key!r}", lineno)
                if key in header:
                    raise CovarianceParseError(f"repeated header key {key!r}", lineno)
                header[key] = value
            for key in ("d", "kind"):
                if key not in header:
                    raise CovarianceParseError(f"header lacks required key {key!r}", lineno)
            try:
                d = int(header["d"])
            except ValueError:
                raise CovarianceParseError(f"d={header['d']!r} is not an integer", lineno) from None
            if d < 1:
                raise CovarianceParseError("d must be positive", lineno)
            if header["kind"] not in (TABLE, EXPONENTIAL):
                raise CovarianceParseError(f"kind must be 'table' or 'exponential', got {header['kind']!r}", lineno)
            continue
        if header["kind"] == EXPONENTIAL:
            raise CovarianceParseError("exponential kernels take no data lines", lineno)
        tokens = line.split()
        if len(tokens) != d + 1:
            raise CovarianceParseError(f"expected {d} coordinates and a value, got {len(tokens)} tokens", lineno)
        try:
            point = tuple(int(t) for t in tokens[:d])
            value = float(tokens[d])
        except ValueError:
            raise CovarianceParseError(f"cannot parse {line!r}", lineno) from None
        if not math.isfinite(value):
            raise CovarianceParseError("non-finite covariance value", lineno)
        if point in table:
            raise CovarianceParseError(f"duplicate point {point}", lineno)
        table[point] = value
    if header is None:
        raise CovarianceParseError("empty covariance file", None)

    def _float(key):
        try:
            return float(header[key])
        except ValueError:
            raise CovarianceParseError(f"{key}={header[key]!r} is not a number", header_line) from None

    if header["kind"] == EXPONENTIAL:
        for key in ("amplitude", "rate"):
            if key not in header:
                raise CovarianceParseError(f"exponential header lacks {key!r}", header_line)
        try:
            return CovarianceSpec.exponential(_float("amplitude"), _float("rate"), d)
        except ValueError as exc:
            raise CovarianceParseError(str(exc), header_line) from None
    if not table:
        raise CovarianceParseError("table kernel has no data lines", header_line)
    D = _float("D") if "D" in header else None
    alpha = _float("alpha") if "alpha" in header else None
    return CovarianceSpec.from_table(table, d=d, D=D, alpha=alpha)


def read_covariance(path) -> CovarianceSpec:
    return parse_covariance(Path(path).read_text(encoding="utf-8"))


def format_covariance(spec: CovarianceSpec) -> str:
    if spec.kind == EXPONENTIAL:
        return f"d={spec.d} kind=exponential amplitude={spec.amplitude!r} rate={spec.rate!r}\n"
    lines = [f"d={spec.d} kind=table D={spec.envelope_D!r} alpha={spec.envelope_alpha!r}"]
    lines += [" ".join(str(c) for c in p) + f" {v!r}" for p, v in spec.table]
    return "\n".join(lines) + "\n"


def points_array(points: Sequence, d: int) -> np.ndarray:
    arr = np.asarray(points, dtype=np.int64)
    if arr.ndim == 1 and d == 1:
        arr = arr[:, None]
    if arr.ndim != 2 or arr.shape[1] != d:
        raise DimensionMismatchError(f"expected points of dimension {d}, got shape {arr.shape}")
    return arr
