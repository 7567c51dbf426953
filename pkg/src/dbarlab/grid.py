"""Uniform lattice discretisation of a truncated region of the plane.

A :class:`Grid2D` holds the lattice points ``(i*h, j*h)`` lying strictly
inside the truncation domain (a square ``|x|, |y| < R`` or a disk
``|z| < R``).  Fields vanish outside, i.e. homogeneous Dirichlet data.

Difference operators are assembled by :func:`stencil_matrix`, which maps
interior values to an arbitrary set of lattice rows.  Rectangular operators
(interior to closure) keep the Gram products ``A^H A`` equal to principal
submatrices of the corresponding infinite-lattice operators.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
import scipy.sparse as sp

from .errors import ConfigError, EmptyRegionError, ResolutionError, UsageError

SHAPES = ("square", "disk")

# Lattice padding around the interior; bounds the stencil reach that
# neighbourhood() and stencil_matrix() can handle.
_PAD = 8


@dataclass(frozen=True, eq=False)
class PointSet:
    """A finite set of lattice points ``(i*h, j*h)`` in a fixed order."""

    h: float
    i: np.ndarray
    j: np.ndarray

    @property
    def n(self) -> int:
        return int(self.i.size)

    @property
    def x(self) -> np.ndarray:
        return self.i * self.h

    @property
    def y(self) -> np.ndarray:
        return self.j * self.h

    @property
    def z(self) -> np.ndarray:
        return self.x + 1j * self.y

    def same_as(self, other: "PointSet") -> bool:
        return self is other or (
            self.h == other.h
            and np.array_equal(self.i, other.i)
            and np.array_equal(self.j, other.j)
        )


@dataclass(frozen=True, eq=False)
class Grid2D:
    """Interior lattice points of the truncated domain.

    Use :func:`build_grid` to construct one.  Points are ordered
    lexicographically by ``(i, j)``.
    """

    R: float
    h: float
    shape: str
    N: int
    points: PointSet
    _lookup: np.ndarray = field(repr=False)
    _cache: dict = field(default_factory=dict, repr=False)

    @property
    def n(self) -> int:
        return self.points.n

    @property
    def x(self) -> np.ndarray:
        return self.points.x

    @property
    def y(self) -> np.ndarray:
        return self.points.y

    @property
    def z(self) -> np.ndarray:
        return self.points.z

    @property
    def L(self) -> int:
        """Half width of the padded index box used for lookups."""
        return self.N + _PAD

    def keys(self, i, j) -> np.ndarray:
        w = 2 * self.L + 1
        return (np.asarray(i) + self.L) * w + (np.asarray(j) + self.L)

    def index_of(self, i, j) -> np.ndarray:
        """Interior index of lattice points, ``-1`` where not interior."""
        i = np.asarray(i)
        j = np.asarray(j)
        inside = (np.abs(i) <= self.L) & (np.abs(j) <= self.L)
        out = np.full(i.shape, -1, dtype=np.int64)
        out[inside] = self._lookup[self.keys(i[inside], j[inside])]
        return out

    def neighbourhood(self, offsets: Iterable[tuple[int, int]]) -> PointSet:
        """Interior points together with ``q - o`` for every offset ``o``.

        These are exactly the rows an operator ``(Au)(p) = sum c u(p + o)``
        can reach when ``u`` is supported on the interior.
        """
        offsets = tuple(sorted(set((int(a), int(b)) for a, b in offsets)))
        if offsets in self._cache:
            return self._cache[offsets]
        if any(max(abs(a), abs(b)) > _PAD for a, b in offsets):
            raise UsageError(f"stencil reach exceeds lattice padding {_PAD}")
        ii = [self.points.i] + [self.points.i - a for a, _ in offsets]
        jj = [self.points.j] + [self.points.j - b for _, b in offsets]
        keys = np.unique(self.keys(np.concatenate(ii), np.concatenate(jj)))
        w = 2 * self.L + 1
        pts = PointSet(self.h, keys // w - self.L, keys % w - self.L)
        self._cache[offsets] = pts
        return pts

    def boundary_distance(self, z=None) -> np.ndarray:
        """Distance from points to the truncation boundary."""
        z = self.z if z is None else np.asarray(z)
        if self.shape == "disk":
            return self.R - np.abs(z)
        return self.R - np.maximum(np.abs(z.real), np.abs(z.imag))


def build_grid(R: float, h: float, shape: str = "square") -> Grid2D:
    """Lattice points strictly inside the square or disk of radius ``R``.

    >>> build_grid(1.0, 0.5).n
    9
    """
    if shape not in SHAPES:
        raise ConfigError(f"unknown grid shape {shape!r}; expected one of {SHAPES}")
    if not (np.isfinite(R) and np.isfinite(h)) or h <= 0 or R <= 0:
        raise ConfigError(f"grid needs R > 0 and h > 0, got R={R}, h={h}")
    if h > R / 2:
        raise ConfigError(f"spacing h={h} is coarser than R/2={R / 2}")
    # Points on the boundary itself are excluded (Dirichlet nodes).
    N = int(np.ceil(R / h - 1e-9)) - 1
    idx = np.arange(-N, N + 1)
    ii, jj = np.meshgrid(idx, idx, indexing="ij")
    ii = ii.ravel()
    jj = jj.ravel()
    if shape == "square":
        mask = np.ones(ii.size, dtype=bool)
    else:
        r2 = (ii * h) ** 2 + (jj * h) ** 2
        mask = r2 < R * R * (1 - 1e-12)
    ii = ii[mask]
    jj = jj[mask]
    L = N + _PAD
    lookup = np.full((2 * L + 1) ** 2, -1, dtype=np.int64)
    lookup[(ii + L) * (2 * L + 1) + (jj + L)] = np.arange(ii.size)
    return Grid2D(float(R), float(h), shape, N, PointSet(float(h), ii, jj), lookup)


# Field values bound to a point set -----------------------------------------


@dataclass
class FieldC:
    """Complex samples on a :class:`PointSet` (grid interior or closure)."""

    points: PointSet
    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=complex)
        if self.values.shape[0] != self.points.n:
            raise UsageError(
                f"field has {self.values.shape[0]} values but the point set has {self.points.n}"
            )


def _values(points: PointSet, u) -> np.ndarray:
    if isinstance(u, FieldC):
        if not u.points.same_as(points):
            raise UsageError("field is bound to a different point set")
        return u.values
    u = np.asarray(u)
    if u.shape[0] != points.n:
        raise UsageError(f"expected {points.n} values, got {u.shape[0]}")
    return u


def integrate(grid: Grid2D | PointSet, u, v) -> complex:
    """Discrete inner product ``sum u * conj(v) * h**2``.

    Either argument may be a :class:`FieldC` or a plain array whose length
    matches the point set.
    """
    points = grid.points if isinstance(grid, Grid2D) else grid
    a = _values(points, u)
    b = _values(points, v)
    return complex(np.vdot(b, a)) * points.h**2


def norm(grid: Grid2D | PointSet, u) -> float:
    points = grid.points if isinstance(grid, Grid2D) else grid
    a = _values(points, u)
    return float(np.linalg.norm(a)) * points.h


# Stencils ------------------------------------------------------------------

def stencil_matrix(
    grid: Grid2D,
    terms: Sequence[tuple],
    rows: PointSet | None = None,
) -> tuple[sp.csr_matrix, PointSet]:
    """Assemble ``(Au)(p) = sum_o c_o(p) u(p + o)`` for interior ``u``.

    ``terms`` holds ``(di, dj, c)`` with ``c`` either a constant or a
    callable of the row coordinates ``(x_p, y_p)``.  By default the rows are
    every lattice point the stencil reaches; pass ``rows`` to restrict them
    (entries landing outside ``rows`` are dropped).
    """
    if rows is None:
        rows = grid.neighbourhood([(di, dj) for di, dj, _ in terms])
    row_keys = grid.keys(rows.i, rows.j)
    order = np.argsort(row_keys, kind="stable")
    sorted_keys = row_keys[order]
    qi = grid.points.i
    qj = grid.points.j
    cols_all = np.arange(grid.n)
    R_, C_, V_ = [], [], []
    for di, dj, coef in terms:
        pi = qi - di
        pj = qj - dj
        keys = grid.keys(pi, pj)
        pos = np.clip(np.searchsorted(sorted_keys, keys), 0, rows.n - 1)
        keep = sorted_keys[pos] == keys
        r = order[pos]
        if callable(coef):
            vals = np.broadcast_to(coef(pi[keep] * grid.h, pj[keep] * grid.h), (int(keep.sum()),))
        else:
            vals = np.full(int(keep.sum()), coef, dtype=complex)
        R_.append(r[keep])
        C_.append(cols_all[keep])
        V_.append(np.asarray(vals, dtype=complex))
    A = sp.coo_matrix(
        (np.concatenate(V_), (np.concatenate(R_), np.concatenate(C_))),
        shape=(rows.n, grid.n),
    ).tocsr()
    A.sum_duplicates()
    return A, rows


FORWARD_OFFSETS = ((1, 0), (0, 1))


def forward_rows(grid: Grid2D) -> PointSet:
    """Rows of the forward difference operators: interior plus lower/left ring."""
    return grid.neighbourhood(FORWARD_OFFSETS)


def forward_difference(grid: Grid2D, axis: int) -> sp.csr_matrix:
    """Forward difference ``(u(p + e) - u(p)) / h`` on :func:`forward_rows`."""
    e = (1, 0) if axis == 0 else (0, 1)
    A, _ = stencil_matrix(
        grid, [(e[0], e[1], 1.0 / grid.h), (0, 0, -1.0 / grid.h)], forward_rows(grid)
    )
    return A


def dz_forward(grid: Grid2D) -> sp.csr_matrix:
    """First-order ``d/dz = (d_x - i d_y) / 2`` with forward differences."""
    return 0.5 * (forward_difference(grid, 0) - 1j * forward_difference(grid, 1))


def dzbar_backward(grid: Grid2D) -> sp.csr_matrix:
    """Adjoint partner of :func:`dz_forward`: ``-(dz_forward)^H``.

    This is the backward-difference ``d/dzbar`` from forward rows to interior.
    """
    return -dz_forward(grid).conj().T.tocsr()


# Fourth-order central first-derivative weights, offset -> weight.
CENTRAL4 = {1: 8.0 / 12.0, -1: -8.0 / 12.0, 2: -1.0 / 12.0, -2: 1.0 / 12.0}


def central_rows(grid: Grid2D) -> PointSet:
    offsets = [(s, 0) for s in CENTRAL4] + [(0, s) for s in CENTRAL4]
    return grid.neighbourhood(offsets)


def dz_central(grid: Grid2D) -> sp.csr_matrix:
    """Fourth-order central ``d/dz`` on :func:`central_rows`."""
    h = grid.h
    terms = [(s, 0, 0.5 * a / h) for s, a in CENTRAL4.items()]
    terms += [(0, s, -0.5j * a / h) for s, a in CENTRAL4.items()]
    A, _ = stencil_matrix(grid, terms, central_rows(grid))
    return A


def embed(grid: Grid2D, rows: PointSet) -> sp.csr_matrix:
    """0/1 matrix copying interior values onto ``rows`` (zero elsewhere)."""
    A, _ = stencil_matrix(grid, [(0, 0, 1.0)], rows)
    return A


# Subgrids and quadrature ---------------------------------------------------


def ball_subgrid(grid: Grid2D, z0: complex, r: float, min_points: int = 1) -> np.ndarray:
    """Indices of interior points with ``|z - z0| < r``."""
    if r <= 0:
        raise UsageError("ball radius must be positive")
    idx = np.nonzero(np.abs(grid.z - z0) < r)[0]
    if idx.size < min_points:
        raise EmptyRegionError(
            f"ball at {z0} of radius {r} holds {idx.size} points, need {min_points}"
        )
    return idx


def ball_inside(grid: Grid2D, z0: complex, r: float) -> bool:
    """Whether the closed ball lies strictly inside the truncation domain."""
    if grid.shape == "disk":
        return abs(z0) + r < grid.R
    return max(abs(z0.real), abs(z0.imag)) + r < grid.R


def ball_quadrature(fn, z0: complex, r: float, spacing: float) -> float:
    """Midpoint rule for ``int_{|z - z0| < r} fn(z) dA`` on cells of size ``spacing``.

    Cells are centred on a lattice anchored at ``z0``.  ``spacing`` larger
    than ``r`` is rejected because the ball would hold a single cell.
    """
    if spacing > r:
        raise ResolutionError(f"quadrature spacing {spacing} exceeds radius {r}")
    m = int(np.ceil(r / spacing))
    off = (np.arange(-m, m) + 0.5) * spacing
    X, Y = np.meshgrid(off, off, indexing="ij")
    inside = X**2 + Y**2 < r * r
    pts = z0 + X[inside] + 1j * Y[inside]
    return float(np.sum(fn(pts)).real) * spacing**2


# CSV ---------------------------------------------------------------------


def write_field_csv(path, points: PointSet | Grid2D, values) -> None:
    """Write ``x,y,re,im`` rows."""
    points = points.points if isinstance(points, Grid2D) else points
    values = _values(points, values)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["x", "y", "re", "im"])
        for x, y, v in zip(points.x, points.y, values):
            w.writerow([repr(float(x)), repr(float(y)), repr(float(v.real)), repr(float(v.imag))])


def read_field_csv(path, grid: Grid2D) -> FieldC:
    """Read an ``x,y,re,im`` file and bind it to the interior of ``grid``.

    Points missing from the file are zero; points off the lattice or
    outside the interior raise :class:`UsageError`.
    """
    path = Path(path)
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = [s.strip() for s in next(reader)]
        if header != ["x", "y", "re", "im"]:
            raise UsageError(f"{path}: expected header x,y,re,im, got {header}")
        data = np.array([[float(s) for s in row] for row in reader if row], dtype=float)
    values = np.zeros(grid.n, dtype=complex)
    if data.size:
        i = np.rint(data[:, 0] / grid.h).astype(np.int64)
        j = np.rint(data[:, 1] / grid.h).astype(np.int64)
        off = np.abs(data[:, 0] - i * grid.h) + np.abs(data[:, 1] - j * grid.h) > 1e-6 * grid.h
        k = grid.index_of(i, j)
        if off.any() or (k < 0).any():
            raise UsageError(f"{path}: samples off the grid interior")
        values[k] = data[:, 2] + 1j * data[:, 3]
    return FieldC(grid.points, values)
