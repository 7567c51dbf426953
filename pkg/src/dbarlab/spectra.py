"""Bottom of the spectrum of ``H`` and the inverse ``H^{-1}``.

``smallest_eigs`` is a block shift-invert Lanczos method around zero with
full reorthogonalisation and thick restarts.  Each cycle builds the block
Krylov space ``span{X, H^{-1}X, H^{-2}X, ...}`` (``krylov_factor`` blocks)
and extracts Ritz pairs with ``H`` itself rather than the inverse, which
keeps the smallest eigenvalues accurate to roughly machine precision times
``|H|``.  The block is at least ``k`` wide, so degenerate Landau clusters
up to that size are captured without relying on rounding to split them.
"""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
import scipy.linalg as la
import scipy.sparse as sp
from scipy.sparse.linalg import splu

from .errors import ConsistencyError, ConvergenceError, UsageError
from .grid import FieldC, Grid2D, _values
from .operators import SparseHermitianOp

log = logging.getLogger(__name__)


def _matrix(H) -> sp.csr_matrix:
    return H.matrix if isinstance(H, SparseHermitianOp) else sp.csr_matrix(H)


# inverse -------------------------------------------------------------------


@dataclass
class CGResult:
    x: np.ndarray
    iterations: int
    residual: float


def conjugate_gradient(H, g, tol: float = 1e-10, max_iter: int | None = None) -> CGResult:
    """Jacobi-preconditioned CG on ``H w = g``.

    ``g`` may hold several right-hand sides as columns; they are iterated
    together but converge independently.  The stopping test is the true
    relative residual ``|Hw - g| / |g| <= tol`` for every column.
    """
    A = _matrix(H)
    g = np.asarray(g, dtype=complex)
    single = g.ndim == 1
    G = g[:, None] if single else g
    n, b = G.shape
    if n != A.shape[0]:
        raise UsageError(f"right-hand side has {n} rows, operator has {A.shape[0]}")
    max_iter = max_iter or 20 * n
    gnorm = np.linalg.norm(G, axis=0)
    active = gnorm > 0
    X = np.zeros_like(G)
    minv = 1.0 / A.diagonal().real
    if np.any(minv <= 0):
        raise UsageError("operator diagonal must be positive for Jacobi preconditioning")
    minv = minv[:, None]
    total = 0
    rel = np.zeros(b)
    # A few restarts from the current iterate guard against drift between
    # the recursive and the true residual.
    for _ in range(4):
        Rr = G - A @ X
        rel = np.where(active, np.linalg.norm(Rr, axis=0) / np.where(active, gnorm, 1), 0.0)
        todo = rel > tol
        if not todo.any():
            break
        Z = minv * Rr
        P = Z.copy()
        rz = np.einsum("ij,ij->j", Rr.conj(), Z).real
        while total < max_iter:
            AP = A @ P
            pap = np.einsum("ij,ij->j", P.conj(), AP).real
            alpha = np.where(todo & (pap > 0), rz / np.where(pap > 0, pap, 1), 0.0)
            X += alpha * P
            Rr -= alpha * AP
            total += 1
            res = np.linalg.norm(Rr, axis=0) / np.where(active, gnorm, 1)
            todo &= res > 0.5 * tol
            if not todo.any():
                break
            Z = minv * Rr
            rz_new = np.einsum("ij,ij->j", Rr.conj(), Z).real
            beta = np.where(todo, rz_new / np.where(rz > 0, rz, 1), 0.0)
            P = Z + beta * P
            rz = rz_new
        if total >= max_iter:
            break
    Rr = G - A @ X
    rel = np.where(active, np.linalg.norm(Rr, axis=0) / np.where(active, gnorm, 1), 0.0)
    worst = float(rel.max()) if b else 0.0
    if worst > tol:
        raise ConvergenceError(
            f"CG stopped after {total} iterations at relative residual {worst:.3e} > {tol:.1e}",
            residual=worst,
            iterations=total,
        )
    return CGResult(X[:, 0] if single else X, total, worst)


def apply_inverse(H, g, tol: float = 1e-10, max_iter: int | None = None) -> np.ndarray:
    """``H^{-1} g`` by preconditioned conjugate gradients."""
    if isinstance(H, SparseHermitianOp) and isinstance(g, FieldC):
        g = _values(H.grid.points, g)
    return conjugate_gradient(H, g, tol, max_iter).x


# eigenpairs ----------------------------------------------------------------


@dataclass
class EigenResult:
    """Lowest eigenpairs, ascending.

    ``vectors`` are orthonormal in the ``h**2``-weighted inner product of
    the grid; ``residuals`` are ``|Hv - lambda v| / |v|``.
    """

    lambdas: np.ndarray
    vectors: np.ndarray
    residuals: np.ndarray
    converged: np.ndarray
    iterations: int
    tol: float
    grid: Grid2D | None = None

    @property
    def k(self) -> int:
        return int(self.lambdas.size)

    @property
    def lower_bound_constant(self) -> float:
        """``C_h = 1 / lambda_1`` so that ``|u|^2 <= C_h <Hu, u>``."""
        return 1.0 / float(self.lambdas[0])


def _orthonormal_block(W: np.ndarray, basis: list[np.ndarray], drop: float = 1e-10) -> np.ndarray:
    """Orthogonalise ``W`` against ``basis`` (twice) and itself; drop dependent columns."""
    for _ in range(2):
        for Q in basis:
            W = W - Q @ (Q.conj().T @ W)
    Q, R = la.qr(W, mode="economic", pivoting=False)
    d = np.abs(np.diag(R))
    scale = d.max() if d.size else 0.0
    if scale == 0.0:
        return W[:, :0]
    keep = d > drop * scale
    Q = Q[:, keep]
    # One more pass restores orthogonality lost in the QR of a nearly
    # dependent block.
    for B in basis:
        Q = Q - B @ (B.conj().T @ Q)
    Q, _ = la.qr(Q, mode="economic")
    return Q


def smallest_eigs(
    H,
    k: int,
    tol: float = 1e-8,
    *,
    inner: str = "lu",
    max_restarts: int = 5,
    krylov_factor: int = 6,
    seed: int = 0,
    inner_tol: float | None = None,
    guard: int | None = None,
) -> EigenResult:
    """``k`` smallest eigenpairs of the Hermitian positive definite ``H``.

    Parameters
    ----------
    H : SparseHermitianOp or sparse matrix
    k : int
        Number of pairs; ``1 <= k <= n // 4``.
    tol : float
        Residual tolerance ``|Hv - lambda v| / |v|`` for convergence.
    inner : {"lu", "cg"}
        How ``H^{-1}`` is applied: a sparse LU factorisation, or
        preconditioned CG at ``inner_tol`` (default ``tol / 10``).
    max_restarts : int
        Thick restarts after the first cycle.  Pairs that still miss the
        tolerance are returned with ``converged = False``.
    guard : int, optional
        Extra block columns beyond ``k`` (default ``max(4, k // 4)``, capped
        so the block stays within ``n // 4``).  They keep the wanted pairs
        converging when ``k`` cuts through a near-degenerate cluster.
    """
    A = _matrix(H)
    n = A.shape[0]
    if not 1 <= k <= n // 4:
        raise UsageError(f"k={k} must satisfy 1 <= k <= n/4 = {n // 4}")
    if inner == "lu":
        lu = splu(A.tocsc())
        solve = lu.solve
    elif inner == "cg":
        itol = inner_tol if inner_tol is not None else tol / 10

        def solve(X):
            return conjugate_gradient(A, X, itol).x

    else:
        raise UsageError(f"unknown inner solver {inner!r}")

    nblocks = max(2, int(krylov_factor))
    guard = max(4, k // 4) if guard is None else int(guard)
    b = max(k, min(k + guard, n // nblocks))
    rng = np.random.default_rng(seed)
    X = rng.standard_normal((n, b)) + 1j * rng.standard_normal((n, b))
    X, _ = la.qr(X, mode="economic")

    keep = X
    for cycle in range(max_restarts + 1):
        # The restart keeps the best Ritz vectors (up to half the basis) and
        # grows new blocks from the inverse applied to the leading block.
        basis = [keep]
        W = keep[:, :b]
        while sum(B.shape[1] for B in basis) + b <= nblocks * b:
            W = _orthonormal_block(solve(W), basis)
            if W.shape[1] == 0:
                break
            basis.append(W)
        Q = np.hstack(basis)
        HQ = A @ Q
        T = Q.conj().T @ HQ
        T = 0.5 * (T + T.conj().T)
        theta_all, S_all = la.eigh(T)
        S = S_all[:, :b]
        theta = theta_all[:b]
        Y = Q @ S
        HY = HQ @ S
        res = np.linalg.norm(HY - Y * theta, axis=0)
        conv = res <= tol
        log.debug("cycle %d: basis %d, %d/%d converged, max residual %.2e",
                  cycle, Q.shape[1], conv[:k].sum(), k, res[:k].max())
        if conv[:k].all():
            break
        p = min(Q.shape[1], (nblocks // 2) * b)
        keep = Q @ S_all[:, :p]
    theta, Y, res, conv = theta[:k], Y[:, :k], res[:k], conv[:k]
    h = H.grid.h if isinstance(H, SparseHermitianOp) else 1.0
    grid = H.grid if isinstance(H, SparseHermitianOp) else None
    return EigenResult(theta, Y / h, res, conv, cycle + 1, tol, grid)


# derived quantities ----------------------------------------------------------


class ClusterCount(NamedTuple):
    count: int
    saturated: bool


def cluster_count(e: EigenResult, center: float, halfwidth: float) -> ClusterCount:
    """Converged eigenvalues within ``halfwidth`` of ``center``.

    The count is flagged saturated when the window reaches the largest
    computed eigenvalue, since more eigenvalues may lie beyond ``k``.
    """
    lam = e.lambdas[e.converged]
    inside = np.abs(lam - center) <= halfwidth
    saturated = bool(e.lambdas[-1] <= center + halfwidth)
    return ClusterCount(int(inside.sum()), saturated)


class SingularValues(NamedTuple):
    sigma: np.ndarray
    partial_trace: np.ndarray


def solution_singular_values(e: EigenResult) -> SingularValues:
    """``sigma_j = lambda_j**-1/2`` (descending) and partial sums of ``sigma_j**2``."""
    if np.any(np.asarray(e.lambdas) <= 0):
        raise ConsistencyError("H has a non-positive eigenvalue; T is not defined")
    sigma = 1.0 / np.sqrt(e.lambdas)
    return SingularValues(sigma, np.cumsum(sigma**2))


def landau_levels(B: float, count: int) -> np.ndarray:
    """``(1/4)((2n + 1) B + B)``, the spectrum of ``H`` for constant field ``B``."""
    n = np.arange(count)
    return 0.25 * ((2 * n + 1) * B + B)


def edge_fraction(grid: Grid2D, vector: np.ndarray, width: float) -> float:
    """Share of ``|v|^2`` within ``width`` of the truncation boundary."""
    p = np.abs(vector) ** 2
    near = grid.boundary_distance() <= width
    return float(p[near].sum() / p.sum())


def write_eigen_csv(path, e: EigenResult) -> None:
    """``index,lambda,residual,converged`` with round-trip float formatting."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["index", "lambda", "residual", "converged"])
        for i, (lam, r, c) in enumerate(zip(e.lambdas, e.residuals, e.converged), start=1):
            w.writerow([i, repr(float(lam)), repr(float(r)), "true" if c else "false"])


def read_eigen_csv(path) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        rows = list(reader)
    lam = np.array([float(r["lambda"]) for r in rows])
    res = np.array([float(r["residual"]) for r in rows])
    conv = np.array([r["converged"] == "true" for r in rows])
    return lam, res, conv
