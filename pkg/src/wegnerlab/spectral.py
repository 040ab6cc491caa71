"""Dense symmetric spectral tools: inertia counting, projectors, spectral averaging."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy.integrate
import scipy.linalg

from .exceptions import CovarianceParseError, FactorizationError, MatrixSizeError, PreconditionError
from .lattice import LatticeBox
from .normal import INV_SQRT_2PI, norm_cdf, norm_pdf

BK_ALPHA = (1.0 + math.sqrt(17.0)) / 8.0
ZERO_PIVOT_TOL = 1e-14
RETRY_SHIFT = 1e-12
MAX_RETRIES = 8
SNAP_TOL = 1e-12
EIG_SIZE_CAP = 2000
ZETA_CUTOFF = 8.0


@dataclass
class SymmetricOperator:
    entries: np.ndarray
    label: dict = field(default_factory=dict)

    def __post_init__(self):
        self.entries = np.asarray(self.entries, dtype=float)
        if self.entries.ndim != 2 or self.entries.shape[0] != self.entries.shape[1]:
            raise MatrixSizeError(f"operator must be square, got shape {self.entries.shape}")
        if not np.array_equal(self.entries, self.entries.T):
            raise ValueError("operator matrix is not exactly symmetric")

    @property
    def size(self) -> int:
        return self.entries.shape[0]


def _as_matrix(M) -> np.ndarray:
    return M.entries if isinstance(M, SymmetricOperator) else np.asarray(M, dtype=float)


def laplacian(box: LatticeBox) -> np.ndarray:
    """Nearest-neighbour Laplacian on the box: ``2d`` on the diagonal, ``-1`` between neighbours."""
    n = len(box)
    A = np.zeros((n, n))
    np.fill_diagonal(A, 2.0 * box.d)
    grid = np.arange(n).reshape(box.shape)
    for axis in range(box.d):
        lo = np.take(grid, range(box.side - 1), axis=axis).ravel()
        hi = np.take(grid, range(1, box.side), axis=axis).ravel()
        A[lo, hi] = -1.0
        A[hi, lo] = -1.0
    return A


def random_symmetric(n: int, seed: int) -> np.ndarray:
    g = np.random.default_rng([int(seed), n]).standard_normal((n, n))
    return (g + g.T) / 2.0


def read_matrix(path, expected_size: int | None = None) -> np.ndarray:
    """Dense matrix file, one whitespace-separated row per line; must be exactly symmetric."""
    rows = []
    for lineno, raw in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        try:
            rows.append([float(t) for t in line.split()])
        except ValueError:
            raise CovarianceParseError(f"non-numeric entry in {line!r}", lineno) from None
        if rows and len(rows[-1]) != len(rows[0]):
            raise CovarianceParseError(f"row has {len(rows[-1])} entries, expected {len(rows[0])}", lineno)
    A = np.array(rows)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise MatrixSizeError(f"matrix in {path} is not square: shape {A.shape}")
    if expected_size is not None and A.shape[0] != expected_size:
        raise MatrixSizeError(f"matrix in {path} has size {A.shape[0]}, box needs {expected_size}")
    if not np.array_equal(A, A.T):
        i, j = np.unravel_index(np.argmax(np.abs(A - A.T)), A.shape)
        raise ValueError(f"matrix in {path} is not symmetric at ({i}, {j})")
    return A


def build_background(kind: str, box: LatticeBox, custom_source=None, seed: int = 0) -> SymmetricOperator:
    """Background operator: ``laplacian``, ``zero``, ``random`` (seeded) or ``custom`` (matrix file or array)."""
    n = len(box)
    if kind == "laplacian":
        A = laplacian(box)
    elif kind == "zero":
        A = np.zeros((n, n))
    elif kind == "random":
        A = random_symmetric(n, seed)
    elif kind == "custom":
        if custom_source is None:
            raise ValueError("custom background needs a matrix file or array")
        if isinstance(custom_source, (str, Path)):
            A = read_matrix(custom_source, expected_size=n)
        else:
            A = np.asarray(custom_source, dtype=float)
            if A.shape != (n, n):
                raise MatrixSizeError(f"custom background has shape {A.shape}, box needs ({n}, {n})")
            if not np.array_equal(A, A.T):
                raise ValueError("custom background is not symmetric")
    else:
        raise ValueError(f"unknown background kind {kind!r}")
    label = {"background": kind}
    if kind == "random":
        label["seed"] = seed
    return SymmetricOperator(A, label)


def assemble_hamiltonian(A, V, lam: float, sample_index: int | None = None) -> SymmetricOperator:
    """``A + lam * diag(V)``."""
    if not lam > 0:
        raise ValueError(f"coupling must be positive, got {lam}")
    base = _as_matrix(A)
    V = np.asarray(V, dtype=float)
    if V.shape != (base.shape[0],):
        raise MatrixSizeError(f"potential of shape {V.shape} for an operator of size {base.shape[0]}")
    H = base.copy()
    H[np.diag_indices_from(H)] += lam * V
    label = dict(A.label) if isinstance(A, SymmetricOperator) else {"background": "custom"}
    label.update(lam=lam, sample_index=sample_index)
    return SymmetricOperator(H, label)


def _swap(S: np.ndarray, i: int, j: int):
    if i != j:
        S[[i, j], :] = S[[j, i], :]
        S[:, [i, j]] = S[:, [j, i]]


def inertia(M, zero_tol: float = 0.0) -> tuple[int, int, int]:
    """``(negative, zero, positive)`` pivot counts of a Bunch-Kaufman LDL^T factorization.

    By Sylvester's law these are the eigenvalue sign counts.  Pivots (or
    2x2 pivot determinants, suitably scaled) with modulus at most
    ``zero_tol`` are counted as zero.
    """
    S = np.array(_as_matrix(M), dtype=float)
    n = S.shape[0]
    neg = zero = pos = 0
    k = 0
    while k < n:
        akk = abs(S[k, k])
        if k + 1 < n:
            col = np.abs(S[k + 1:, k])
            imax = k + 1 + int(np.argmax(col))
            colmax = col[imax - k - 1]
        else:
            imax, colmax = k, 0.0
        step = 1
        if max(akk, colmax) <= zero_tol:
            # column is (numerically) zero: a zero eigen-direction
            zero += 1
            k += 1
            continue
        if akk < BK_ALPHA * colmax:
            row = np.abs(S[imax, k:])
            row[imax - k] = 0.0
            rowmax = row.max()
            if akk * rowmax >= BK_ALPHA * colmax * colmax:
                pass
            elif abs(S[imax, imax]) >= BK_ALPHA * rowmax:
                _swap(S, k, imax)
            else:
                _swap(S, k + 1, imax)
                step = 2
        if step == 1:
            p = S[k, k]
            if abs(p) <= zero_tol:
                zero += 1
            elif p < 0:
                neg += 1
            else:
                pos += 1
            if abs(p) > 0:
                w = S[k + 1:, k]
                S[k + 1:, k + 1:] -= np.outer(w, w) / p
        else:
            D = S[k:k + 2, k:k + 2]
            det = D[0, 0] * D[1, 1] - D[0, 1] * D[1, 0]
            dscale = np.abs(D).max()
            if abs(det) <= zero_tol * dscale:
                zero += 1
                neg += int(D[0, 0] + D[1, 1] < 0)
                pos += int(D[0, 0] + D[1, 1] >= 0)
            elif det < 0:
                neg += 1
                pos += 1
            elif D[0, 0] + D[1, 1] < 0:
                neg += 2
            else:
                pos += 2
            if abs(det) > 0:
                W = S[k + 2:, k:k + 2]
                Dinv = np.array([[D[1, 1], -D[0, 1]], [-D[1, 0], D[0, 0]]]) / det
                S[k + 2:, k + 2:] -= W @ Dinv @ W.T
        k += step
    return neg, zero, pos


def _scale(M: np.ndarray, E: float = 0.0) -> float:
    s = max(float(np.abs(M).max()) if M.size else 0.0, abs(E))
    return s if s > 0 else 1.0


def count_below(M, E: float) -> int:
    """Number of eigenvalues strictly below ``E``, from the inertia of ``M - E``.

    A numerically zero pivot means ``E`` sits on an eigenvalue; ``E`` is then
    nudged downward (which keeps that eigenvalue out of a strict count) and
    the factorization is retried.
    """
    A = _as_matrix(M)
    scale = _scale(A, E)
    n = A.shape[0]
    shift = E
    for attempt in range(MAX_RETRIES):
        neg, zero, _ = inertia(A - shift * np.eye(n), zero_tol=ZERO_PIVOT_TOL * scale)
        if zero == 0:
            return neg
        shift = E - RETRY_SHIFT * scale * 2**attempt
    raise FactorizationError(f"inertia factorization kept hitting zero pivots near E={E!r}")


def count_in_interval(M, E1: float, E2: float) -> int:
    """Eigenvalues in the closed interval ``[E1, E2]``; endpoints snapped outward by ``1e-12 * scale``."""
    if E2 < E1:
        raise ValueError(f"empty interval [{E1}, {E2}]")
    A = _as_matrix(M)
    snap = SNAP_TOL * _scale(A, max(abs(E1), abs(E2)))
    return count_below(A, E2 + snap) - count_below(A, E1 - snap)


def eig_symmetric(M) -> tuple[np.ndarray, np.ndarray]:
    """Ascending eigenvalues and orthonormal eigenvectors (columns)."""
    A = _as_matrix(M)
    if A.shape[0] > EIG_SIZE_CAP:
        raise MatrixSizeError(f"dense eigensolver capped at {EIG_SIZE_CAP}, got {A.shape[0]}")
    try:
        w, Q = np.linalg.eigh(A)
    except np.linalg.LinAlgError as exc:
        raise FactorizationError(f"eigensolver did not converge: {exc}") from None
    return w, Q


def spectral_projector(M, E1: float, E2: float) -> np.ndarray:
    A = _as_matrix(M)
    w, Q = eig_symmetric(A)
    snap = SNAP_TOL * _scale(A, max(abs(E1), abs(E2)))
    sel = (w >= E1 - snap) & (w <= E2 + snap)
    Qs = Q[:, sel]
    return Qs @ Qs.T


@dataclass
class AveragingResult:
    lhs: float
    rhs: float
    budget: float
    passed: bool
    crossings: int

    @property
    def budget_ok(self) -> bool:
        return self.budget <= 1e-6


def _crossings(H: np.ndarray, U: np.ndarray, E: float, lo: float, hi: float) -> np.ndarray:
    """Couplings ``zeta`` in ``(lo, hi)`` at which ``E`` is an eigenvalue of ``H + zeta U``."""
    n = H.shape[0]
    shifted = H - E * np.eye(n)
    try:
        np.linalg.cholesky(U)
        zetas = scipy.linalg.eigh(-shifted, U, eigvals_only=True)
    except np.linalg.LinAlgError:
        vals = scipy.linalg.eigvals(shifted, -U)
        vals = vals[np.isfinite(vals)]
        zetas = vals[np.abs(vals.imag) <= 1e-9 * (1 + np.abs(vals.real))].real
    return np.sort(zetas[(zetas > lo) & (zetas < hi)])


def averaging_check(H, U, J, psi, interval, quadrature_cfg: dict | None = None) -> AveragingResult:
    """Gaussian average of ``<psi, J chi_I(H + zeta U) J psi>`` against ``|I| / sqrt(2 pi)``.

    The integrand is smooth except where an eigenvalue of ``H + zeta U``
    crosses an endpoint of ``I``; those crossings are located exactly from
    the generalized eigenproblem and the integral is split there.  Each
    piece goes to adaptive Gauss-Kronrod.  The error budget is the sum of the
    piece error estimates plus the Gaussian mass beyond the cutoff.
    """
    cfg = {"cutoff": ZETA_CUTOFF, "epsabs": 1e-13, "epsrel": 1e-11, "limit": 200}
    cfg.update(quadrature_cfg or {})
    H = np.asarray(_as_matrix(H), dtype=float)
    U = np.asarray(_as_matrix(U), dtype=float)
    J = np.asarray(_as_matrix(J), dtype=float)
    psi = np.asarray(psi, dtype=float)
    E1, E2 = float(interval[0]), float(interval[1])
    n = H.shape[0]

    for name, X in (("H", H), ("U", U), ("J", J)):
        if X.shape != (n, n):
            raise PreconditionError(f"{name} has shape {X.shape}, expected ({n}, {n})")
        if not np.allclose(X, X.T, rtol=0, atol=1e-12 * max(1.0, np.abs(X).max())):
            raise PreconditionError(f"{name} is not symmetric")
    if psi.shape != (n,) or abs(np.linalg.norm(psi) - 1.0) > 1e-10:
        raise PreconditionError("psi must be a unit vector of matching size")
    if E2 < E1:
        raise PreconditionError(f"interval [{E1}, {E2}] is empty")
    if np.linalg.eigvalsh(J).min() < -1e-10:
        raise PreconditionError("J is not positive semidefinite")
    gap = np.linalg.eigvalsh(U - J @ J).min()
    if gap < -1e-10:
        raise PreconditionError(f"J^2 <= U violated: smallest eigenvalue of U - J^2 is {gap!r}")

    rhs = (E2 - E1) * INV_SQRT_2PI
    phi = J @ psi
    if E2 == E1:
        return AveragingResult(0.0, rhs, 0.0, True, 0)

    def integrand(zeta):
        w, Q = np.linalg.eigh(H + zeta * U)
        sel = (w >= E1) & (w <= E2)
        proj = Q[:, sel].T @ phi
        return float(proj @ proj) * norm_pdf(zeta)

    cut = cfg["cutoff"]
    breaks = np.concatenate([[-cut], _crossings(H, U, E1, -cut, cut), _crossings(H, U, E2, -cut, cut), [cut]])
    breaks = np.unique(breaks)
    lhs = 0.0
    err = 0.0
    for a, b in zip(breaks[:-1], breaks[1:]):
        if b - a <= 0:
            continue
        val, est = scipy.integrate.quad(integrand, a, b, epsabs=cfg["epsabs"], epsrel=cfg["epsrel"],
                                        limit=cfg["limit"])
        lhs += val
        err += est
    tail = 2.0 * norm_cdf(-cut) * float(phi @ phi)
    budget = err + tail
    return AveragingResult(lhs, rhs, budget, lhs <= rhs + budget, len(breaks) - 2)


def random_averaging_instance(seed: int, index: int):
    """Seeded instance satisfying the hypotheses: ``U`` positive definite, ``J = c Id`` with ``c^2 <= min eig U``."""
    rng = np.random.default_rng([int(seed), int(index)])
    n = int(rng.integers(3, 9))
    H = rng.standard_normal((n, n))
    H = (H + H.T) / 2.0
    B = rng.standard_normal((n, n))
    U = B @ B.T / n + 0.1 * np.eye(n)
    U = (U + U.T) / 2.0
    c = math.sqrt(np.linalg.eigvalsh(U).min()) * rng.uniform(0.3, 1.0)
    J = c * np.eye(n)
    psi = rng.standard_normal(n)
    psi /= np.linalg.norm(psi)
    center = rng.uniform(-3.0, 3.0)
    half = rng.uniform(0.05, 1.0)
    return H, U, J, psi, (center - half, center + half)


def averaging_suite(seed: int, trials: int) -> list[AveragingResult]:
    if trials < 1:
        raise ValueError("trials must be at least 1")
    return [averaging_check(*random_averaging_instance(seed, i)) for i in range(trials)]
