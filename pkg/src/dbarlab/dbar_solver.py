"""Canonical (minimal weighted norm) solution of ``dbar u = f``.

In the gauge ``v = u exp(-phi)``, ``g = f exp(-phi)`` the equation reads
``Dbar v = g`` and the solution orthogonal to the kernel of ``Dbar`` (the
weighted Bergman space) is ``v = T g`` with ``T = D H^{-1}``.  Since ``H``
is the Gram matrix of the stacked factor ``[D; E]``, the discrete solution
is the pair ``(D w, E w)`` with ``w = H^{-1} g``.  Its first component is
the physical ``v``; the second is the doubler-penalty component, which
vanishes like ``h**2`` on smooth data.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import gammaincc

from . import weights as wt
from .errors import DomainTooLargeError, UsageError
from .grid import FieldC, Grid2D, PointSet, _values
from .operators import DEFAULT_PENALTY, SparseHermitianOp, assemble_H
from .spectra import conjugate_gradient

# exp(phi) overflows doubles a little above 709.
PHI_BUDGET = 700.0


@dataclass
class SolveReport:
    """Result of :func:`canonical_solve`.

    Attributes
    ----------
    u : FieldC
        The solution on the rows of ``D`` (grid interior plus stencil ring).
    v : np.ndarray
        ``u exp(-phi)`` on the same points; numerically safer than ``u``.
    residual_rel : float
        ``|D^* (Tg) - g| / |g|`` for the stacked factor, i.e. the CG residual.
    consistency_defect : float
        ``|D^H v - g| / |g|`` for the physical component alone.
    weighted_norm : float
        ``|u|_phi``.
    penalty_norm : float
        Norm of the penalty component of ``Tg``.
    ortho_defect : float
        Largest normalised overlap with ``z**k``, ``k <= K``.
    truncation_tail : float or None
        Share of the mass of ``exp(-2 phi)`` outside the inscribed disk of
        radius ``R``; bounds the truncation error of weighted norms.
    """

    u: FieldC
    v: np.ndarray
    residual_rel: float
    consistency_defect: float
    weighted_norm: float
    penalty_norm: float
    ortho_defect: float
    cg_iterations: int
    truncation_tail: float | None = None
    w: np.ndarray | None = None

    def to_dict(self) -> dict:
        return {
            "residual_rel": self.residual_rel,
            "consistency_defect": self.consistency_defect,
            "weighted_norm": self.weighted_norm,
            "weighted_norm_sq": self.weighted_norm**2,
            "penalty_norm": self.penalty_norm,
            "orthogonality_defect": self.ortho_defect,
            "cg_iterations": self.cg_iterations,
            "truncation_tail": self.truncation_tail,
            "points": self.u.points.n,
        }


def _check_budget(weight: wt.WeightModel, points: PointSet) -> np.ndarray:
    phi = wt.evaluate(weight, points.z)
    if np.max(phi) > PHI_BUDGET:
        r = float(np.min(np.abs(points.z[phi > PHI_BUDGET])))
        raise DomainTooLargeError(
            f"phi exceeds {PHI_BUDGET:g} at |z| = {r:.3g}; shrink the grid below this radius",
            radius=r,
        )
    return phi


def transform(H: SparseHermitianOp, g, tol: float = 1e-10, max_iter: int | None = None):
    """``T g = ([D; E] H^{-1} g)`` together with ``H^{-1} g`` and the CG record."""
    if H.factor is None:
        raise UsageError("the solution operator needs a factored H")
    cg = conjugate_gradient(H, _values(H.grid.points, g), tol, max_iter)
    v, v_aux = H.factor.apply(cg.x)
    return v, v_aux, cg


def canonical_solve(
    grid: Grid2D,
    weight: wt.WeightModel,
    f,
    tol: float = 1e-10,
    *,
    H: SparseHermitianOp | None = None,
    penalty: float = DEFAULT_PENALTY,
    max_iter: int | None = None,
    K: int = 10,
) -> SolveReport:
    """Minimal ``L^2_phi`` solution of ``dbar u = f`` for ``f`` on the grid interior."""
    H = H or assemble_H(grid, weight, penalty)
    op = H.factor
    _check_budget(weight, op.rows)
    phi_in = wt.evaluate(weight, grid.z)
    f = _values(grid.points, f)
    g = f * np.exp(-phi_in)
    v, v_aux, cg = transform(H, g, tol, max_iter)
    gnorm = np.linalg.norm(g)
    if gnorm == 0:
        residual = consistency = 0.0
    else:
        residual = float(np.linalg.norm(op.adjoint(v, v_aux) - g) / gnorm)
        consistency = float(np.linalg.norm(op.adjoint(v) - g) / gnorm)
    phi_rows = wt.evaluate(weight, op.rows.z)
    u = FieldC(op.rows, v * np.exp(phi_rows))
    h = grid.h
    report = SolveReport(
        u=u,
        v=v,
        residual_rel=residual,
        consistency_defect=consistency,
        weighted_norm=float(np.linalg.norm(v) * h),
        penalty_norm=float(np.linalg.norm(v_aux) * h),
        ortho_defect=0.0,
        cg_iterations=cg.iterations,
        truncation_tail=truncation_tail(weight, grid.R),
        w=cg.x,
    )
    report.ortho_defect = orthogonality_defect(grid, weight, report, K)
    return report


def truncation_tail(weight: wt.WeightModel, R: float) -> float | None:
    """Relative mass of ``exp(-2 phi)`` outside the disk of radius ``R`` (radial weights)."""
    if weight.kind != "monomial":
        return None
    m = weight.m
    # int_R^inf exp(-2 r^m) r dr over int_0^inf, via the regularised
    # incomplete gamma function with s = 2/m and x = 2 R^m.
    return float(gammaincc(2.0 / m, 2.0 * R**m))


def _weighted_parts(weight, u) -> tuple[PointSet, np.ndarray, np.ndarray]:
    """Points, ``u exp(-phi)`` and ``exp(-phi)`` for a field or report."""
    if isinstance(u, SolveReport):
        pts = u.u.points
        e = np.exp(-wt.evaluate(weight, pts.z))
        return pts, u.v, e
    if not isinstance(u, FieldC):
        raise UsageError("expected a FieldC or a SolveReport")
    pts = u.points
    e = np.exp(-wt.evaluate(weight, pts.z))
    return pts, u.values * e, e


def orthogonality_defect(grid: Grid2D, weight: wt.WeightModel, u, K: int = 10) -> float:
    """``max_{0 <= k <= K} |<u, z^k>_phi| / (|u|_phi |z^k|_phi)``.

    Zero for the canonical solution, which is orthogonal to every
    holomorphic function in ``L^2_phi``.
    """
    pts, v, e = _weighted_parts(weight, u)
    unorm = np.linalg.norm(v)
    if unorm == 0:
        return 0.0
    z = pts.z
    worst = 0.0
    if K < 0:
        raise UsageError("K must be nonnegative")
    for k in range(K + 1):
        p = z**k * e
        pn = np.linalg.norm(p)
        if not np.isfinite(pn) or pn < 1e-300:
            raise UsageError(f"|z^{k}|_phi underflows on this grid; reduce K")
        worst = max(worst, abs(np.vdot(p, v)) / (unorm * pn))
    return float(worst)


def minimality_probe(
    grid: Grid2D,
    weight: wt.WeightModel,
    u,
    trials: int = 100,
    seed: int = 0,
    degree: int = 5,
) -> float:
    """Smallest change ``|u + p|_phi - |u|_phi`` over random holomorphic ``p``.

    Each trial draws a polynomial of the given degree with complex normal
    coefficients and tries both ``p`` itself and the multiple of ``p`` that
    minimises the norm along that direction.  A canonical solution gives a
    nonnegative result up to rounding.
    """
    pts, v, e = _weighted_parts(weight, u)
    rng = np.random.default_rng(seed)
    z = pts.z
    base = np.linalg.norm(v)
    powers = np.stack([z**d * e for d in range(degree + 1)], axis=1)
    best = np.inf
    for _ in range(trials):
        c = rng.standard_normal(degree + 1) + 1j * rng.standard_normal(degree + 1)
        p = powers @ c
        pp = np.vdot(p, p).real
        t = -np.vdot(p, v) / pp if pp > 0 else 0.0
        for step in (1.0, t):
            best = min(best, np.linalg.norm(v + step * p) - base)
    return float(best * grid.h)


def builtin_rhs(name: str, grid: Grid2D) -> np.ndarray:
    """Named right-hand sides: ``one``, ``zbar`` and ``gaussian``."""
    z = grid.z
    if name == "one":
        return np.ones(grid.n, dtype=complex)
    if name == "zbar":
        return np.conj(z)
    if name == "gaussian":
        return np.exp(-np.abs(z) ** 2).astype(complex)
    raise UsageError(f"unknown built-in right-hand side {name!r}")
