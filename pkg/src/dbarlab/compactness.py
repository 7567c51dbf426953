"""Numerical evidence for or against compactness of the canonical solution operator.

Three independent signatures are computed:

``laplacian_divergence``
    ``Delta phi`` grows without bound: the outermost sampled ring minimum is
    large in absolute terms and a fixed factor above the innermost.
    Supports *compact*.
``local_energy_growth``
    The local ground energy on unit balls, minimised over a ring of
    centres, increases strictly with the ring radius and with a clear
    slope.  Supports *compact*.
``bounded_magnetic_energy``
    The magnetic energy ``int_{Q_w} (B**2 + B)`` over unit balls stays flat
    and positive while the number of low-lying eigenvalues grows with the
    truncation radius, i.e. an infinitely degenerate bottom of the
    spectrum.  Supports *non-compact*.

These are finite-size estimates.  A verdict of ``Compact`` or ``NonCompact``
means the corresponding signature was observed on the sampled radii; it
is evidence, not proof.
"""

from __future__ import annotations

import enum
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np

from . import weights as wt
from .errors import ConfigError, ConsistencyError, ResolutionError
from .grid import Grid2D, ball_inside, ball_quadrature, ball_subgrid, build_grid
from .operators import DEFAULT_PENALTY, SparseHermitianOp, assemble_H
from .spectra import cluster_count, smallest_eigs

log = logging.getLogger(__name__)

# Above this much flux through one lattice cell the covariant stencils no
# longer resolve the local magnetic length; on |z|^4 the local energies at
# radius 4 collapse once it exceeds about 2.
FLUX_WARN = 1.5


class Verdict(str, enum.Enum):
    COMPACT = "Compact"
    NONCOMPACT = "NonCompact"
    INCONCLUSIVE = "Inconclusive"


@dataclass
class DiagnoseParams:
    radii: Sequence[float] = (1.0, 2.0, 3.0, 4.0)
    samples_per_ring: int = 8
    ball_radius: float = 1.0
    flat_band: float = 0.15
    laplacian_ratio: float = 4.0
    laplacian_min: float = 10.0
    mu_rel_slope: float = 0.1
    degeneracy_radii: Sequence[float] = (4.0, 6.0)
    degeneracy_h: float = 0.1
    degeneracy_growth: float = 1.5
    cluster_halfwidth: float = 0.2
    degeneracy_k: int = 48
    penalty: float = DEFAULT_PENALTY
    eig_tol: float = 1e-8
    seed: int = 0
    workers: int = 1

    def validate(self) -> None:
        radii = list(self.radii)
        if len(radii) < 2 or any(r < 0 for r in radii) or sorted(radii) != radii:
            raise ConfigError("diagnose radii must be at least two increasing nonnegative values")
        if self.samples_per_ring < 1:
            raise ConfigError("samples_per_ring must be positive")
        for name in ("ball_radius", "flat_band", "laplacian_ratio", "degeneracy_h",
                     "degeneracy_growth", "cluster_halfwidth"):
            if getattr(self, name) <= 0:
                raise ConfigError(f"{name} must be positive")
        d = list(self.degeneracy_radii)
        if len(d) < 2 or sorted(d) != d:
            raise ConfigError("degeneracy_radii must hold at least two increasing radii")
        if self.degeneracy_k < 1:
            raise ConfigError("degeneracy_k must be positive")


def ring_centers(radius: float, samples: int) -> np.ndarray:
    """``samples`` equally spaced points on the circle (the origin for radius 0)."""
    if radius == 0:
        return np.zeros(1, dtype=complex)
    return radius * np.exp(2j * np.pi * np.arange(samples) / samples)


# local ground energy ----------------------------------------------------------


def local_ground_energy(
    grid: Grid2D,
    weight: wt.WeightModel,
    z0: complex,
    r: float = 1.0,
    *,
    H: SparseHermitianOp | None = None,
    penalty: float = DEFAULT_PENALTY,
    min_points: int = 16,
    tol: float = 1e-8,
) -> float:
    """Smallest eigenvalue of ``H`` restricted to the ball ``B(z0, r)``.

    The restriction is a principal submatrix, i.e. Dirichlet conditions on
    the ball.  It can only increase when the ball shrinks.
    """
    if not ball_inside(grid, z0, r):
        raise ConfigError(f"ball B({z0}, {r}) is not inside the grid")
    H = H or assemble_H(grid, weight, penalty)
    idx = ball_subgrid(grid, z0, r)
    if idx.size < min_points:
        raise ResolutionError(
            f"ball B({z0}, {r}) holds {idx.size} grid points, need {min_points}; reduce h"
        )
    sub = H.matrix[idx][:, idx]
    k = max(1, min(4, idx.size // 4))
    e = smallest_eigs(sub, k, tol)
    return float(e.lambdas[0])


@dataclass
class MuProfile:
    radii: list
    values: list
    slope: float
    samples: list = field(default_factory=list)

    def strictly_increasing(self) -> bool:
        return all(b > a for a, b in zip(self.values, self.values[1:]))

    def to_dict(self) -> dict:
        return {
            "radii": list(self.radii),
            "mu_hat": list(self.values),
            "slope": self.slope,
            "samples": [{"center": [c.real, c.imag], "mu": m} for c, m in self.samples],
        }


def _slope(x, y) -> float:
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.size < 2:
        return 0.0
    return float(np.polyfit(x, y, 1)[0])


def mu_profile(
    grid: Grid2D,
    weight: wt.WeightModel,
    radii: Sequence[float],
    samples_per_ring: int = 8,
    *,
    ball_radius: float = 1.0,
    H: SparseHermitianOp | None = None,
    penalty: float = DEFAULT_PENALTY,
    workers: int = 1,
) -> MuProfile:
    """``mu_hat(r) = min`` local ground energy over unit balls centred on ``|z| = r``."""
    H = H or assemble_H(grid, weight, penalty)
    jobs = []
    for r in radii:
        for c in ring_centers(float(r), samples_per_ring):
            if not ball_inside(grid, c, ball_radius):
                raise ConfigError(f"ring radius {r} plus ball radius exceeds the grid")
            jobs.append((float(r), complex(c)))

    def run(job):
        return local_ground_energy(grid, weight, job[1], ball_radius, H=H)

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            mus = list(pool.map(run, jobs))
    else:
        mus = [run(j) for j in jobs]
    values = [min(m for (r, _), m in zip(jobs, mus) if r == float(rr)) for rr in radii]
    if not values:
        return MuProfile([], [], 0.0, [])
    samples = [(c, m) for (_, c), m in zip(jobs, mus)]
    return MuProfile([float(r) for r in radii], values, _slope(radii, values), samples)


# magnetic energy ------------------------------------------------------------------


def magnetic_integral(
    grid: Grid2D, weight: wt.WeightModel, w: complex, radius: float = 1.0, refine: int = 4
) -> float:
    """``int_{|z - w| < radius} (B**2 + B) dA`` with ``B = Delta phi``.

    Midpoint quadrature on cells of size ``grid.h / refine``.
    """
    if not ball_inside(grid, w, radius):
        raise ConfigError(f"ball B({w}, {radius}) is not inside the grid")

    def density(z):
        b = wt.laplacian(weight, z)
        return b * b + b

    return ball_quadrature(density, w, radius, grid.h / refine)


def laplacian_ring_min(weight: wt.WeightModel, radius: float, samples: int = 64) -> float:
    return float(np.min(wt.laplacian(weight, ring_centers(radius, samples))))


# classification ------------------------------------------------------------------


@dataclass
class CompactnessReport:
    verdict: Verdict
    criteria_fired: list
    laplacian_profile: list
    mu_profile: dict
    magnetic_profile: list
    degeneracy: list
    flux_per_plaquette: float
    warnings: list
    params: dict

    def to_dict(self) -> dict:
        d = asdict(self)
        d["verdict"] = self.verdict.value
        return d


def degeneracy_counts(
    weight: wt.WeightModel,
    radii: Sequence[float],
    h: float,
    shape: str = "square",
    *,
    halfwidth: float = 0.2,
    k0: int = 48,
    penalty: float = DEFAULT_PENALTY,
    tol: float = 1e-8,
    seed: int = 0,
) -> list[dict]:
    """Eigenvalue counts within ``halfwidth`` of ``lambda_1`` for growing truncations.

    ``k`` doubles until the window no longer reaches the last computed
    eigenvalue (or ``k`` hits ``n / 4``).
    """
    out = []
    for R in radii:
        grid = build_grid(float(R), h, shape)
        H = assemble_H(grid, weight, penalty)
        k = min(k0, grid.n // 4)
        while True:
            e = smallest_eigs(H, k, tol, seed=seed)
            lam1 = float(e.lambdas[0])
            cc = cluster_count(e, lam1, halfwidth)
            if not cc.saturated or k >= grid.n // 4:
                break
            k = min(2 * k, grid.n // 4)
        out.append({"R": float(R), "n": grid.n, "k": k, "lambda_1": lam1,
                    "count": cc.count, "saturated": cc.saturated})
        log.info("degeneracy R=%g: %d eigenvalues within %g of %.4f (k=%d)",
                 R, cc.count, halfwidth, lam1, k)
    return out


def classify(
    grid: Grid2D, weight: wt.WeightModel, params: DiagnoseParams | None = None
) -> CompactnessReport:
    """Combine the three signatures into a verdict.

    Raises :class:`ConsistencyError` when a compact and a non-compact
    signature fire together.
    """
    p = params or DiagnoseParams()
    p.validate()
    radii = [float(r) for r in p.radii]
    fired = []
    warnings = []

    lap = [laplacian_ring_min(weight, r) for r in radii]
    inner = max(lap[0], 0.0)
    if lap[-1] >= p.laplacian_min and lap[-1] >= p.laplacian_ratio * inner:
        fired.append("laplacian_divergence")

    H = assemble_H(grid, weight, p.penalty)
    mp = mu_profile(grid, weight, radii, p.samples_per_ring,
                    ball_radius=p.ball_radius, H=H, workers=p.workers)
    mean_mu = float(np.mean(mp.values))
    if mp.strictly_increasing() and mp.slope >= p.mu_rel_slope * abs(mean_mu):
        fired.append("local_energy_growth")

    magnetic = []
    for r in radii:
        for c in ring_centers(r, p.samples_per_ring):
            magnetic.append((abs(c), magnetic_integral(grid, weight, c, p.ball_radius)))
    F = np.array([m for _, m in magnetic])
    mean_F = float(F.mean())
    flat = mean_F > 0 and (F.max() - F.min()) / mean_F <= p.flat_band
    # The band is meaningless for a vanishing field: the weight then has no
    # uniform lower bound on unit-ball mass and no Landau structure.
    positive = float(F.min()) > 1e-8

    degeneracy = []
    if flat and positive:
        degeneracy = degeneracy_counts(
            weight, p.degeneracy_radii, p.degeneracy_h, grid.shape,
            halfwidth=p.cluster_halfwidth, k0=p.degeneracy_k, penalty=p.penalty,
            tol=p.eig_tol, seed=p.seed,
        )
        counts = [d["count"] for d in degeneracy]
        if any(d["saturated"] for d in degeneracy):
            warnings.append("degeneracy count saturated at k = n/4")
        growth = all(b >= p.degeneracy_growth * a for a, b in zip(counts, counts[1:]) if a > 0)
        if growth and min(counts) > 0:
            fired.append("bounded_magnetic_energy")

    ring_pts = np.concatenate([ring_centers(r, p.samples_per_ring) for r in radii])
    flux = float(np.max(wt.flux_per_plaquette(weight, ring_pts, grid.h)))
    flux = max(flux, float(np.max(wt.flux_per_plaquette(
        weight, ring_pts * (1 + p.ball_radius / max(radii[-1], 1e-12)), grid.h))))
    if flux > FLUX_WARN:
        warnings.append(
            f"flux per lattice cell reaches {flux:.2f}; local energies at large radii "
            "are under-resolved, reduce h"
        )

    compact = {"laplacian_divergence", "local_energy_growth"} & set(fired)
    noncompact = {"bounded_magnetic_energy"} & set(fired)
    if compact and noncompact:
        raise ConsistencyError(
            "compact and non-compact signatures fired together",
            evidence={"fired": fired, "laplacian": lap, "mu": mp.values, "degeneracy": degeneracy},
        )
    if compact:
        verdict = Verdict.COMPACT
    elif noncompact:
        verdict = Verdict.NONCOMPACT
    else:
        verdict = Verdict.INCONCLUSIVE

    params = {k: (list(v) if isinstance(v, (list, tuple)) else v) for k, v in asdict(p).items()}
    return CompactnessReport(
        verdict=verdict,
        criteria_fired=fired,
        laplacian_profile=[[r, v] for r, v in zip(radii, lap)],
        mu_profile=mp.to_dict(),
        magnetic_profile=[[float(r), float(m)] for r, m in magnetic],
        degeneracy=degeneracy,
        flux_per_plaquette=flux,
        warnings=warnings,
        params=params,
    )
