"""Subharmonic weights ``phi`` and the magnetic data they induce.

A weight determines everything downstream:

* the Wirtinger derivative ``phi_z = (phi_x - i phi_y) / 2``,
* the Laplacian ``Delta phi`` (the magnetic field strength),
* the vector potential ``A = (-phi_y, phi_x)`` with ``curl A = Delta phi``.

Two kinds are supported.  ``monomial`` is ``phi(z) = |z|**m`` with closed
form derivatives; ``tabulated`` samples ``phi`` on a regular table and uses
centred second-order differences, interpolated bilinearly between nodes.
"""

from __future__ import annotations

import csv
import hashlib
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np
from scipy.interpolate import RegularGridInterpolator

from .errors import ConfigError, DomainError, SingularityError, SubharmonicityError
from .grid import ball_quadrature

# Gauss-Legendre nodes on [0, 1] for line integrals of the vector potential.
_GL_T, _GL_W = np.polynomial.legendre.leggauss(8)
_GL_T = 0.5 * (_GL_T + 1.0)
_GL_W = 0.5 * _GL_W


@dataclass(frozen=True)
class _Table:
    xs: np.ndarray
    ys: np.ndarray
    phi: np.ndarray
    spacing: float
    interp: dict = field(compare=False, repr=False)


@dataclass(frozen=True)
class WeightModel:
    """A subharmonic weight, either ``|z|**m`` or a tabulated field."""

    kind: str
    m: float = 2.0
    table: _Table | None = field(default=None, compare=False, repr=False)
    source: str = ""

    # constructors -------------------------------------------------------

    @classmethod
    def monomial(cls, m: float) -> "WeightModel":
        if not np.isfinite(m) or m < 2:
            raise ConfigError(f"monomial weights need m >= 2, got m={m}")
        return cls("monomial", float(m))

    @classmethod
    def tabulated(cls, xs, ys, phi, source: str = "") -> "WeightModel":
        """Weight sampled on the tensor grid ``xs`` x ``ys`` (``phi[i, j]``)."""
        xs = np.asarray(xs, dtype=float)
        ys = np.asarray(ys, dtype=float)
        phi = np.asarray(phi, dtype=float)
        if phi.shape != (xs.size, ys.size):
            raise ConfigError(f"table shape {phi.shape} does not match axes {xs.size}x{ys.size}")
        if xs.size < 5 or ys.size < 5:
            raise ConfigError("tabulated weight needs at least 5 nodes per axis")
        dx = np.diff(xs)
        dy = np.diff(ys)
        hx = dx.mean()
        if not (np.allclose(dx, hx, rtol=1e-6) and np.allclose(dy, hx, rtol=1e-6)):
            raise ConfigError("tabulated weight must use one uniform spacing in x and y")
        if not np.all(np.isfinite(phi)):
            raise ConfigError("tabulated weight contains non-finite values")
        px, py = np.gradient(phi, hx, hx, edge_order=2)
        lap = np.full_like(phi, np.nan)
        lap[1:-1, 1:-1] = (
            phi[2:, 1:-1] + phi[:-2, 1:-1] + phi[1:-1, 2:] + phi[1:-1, :-2] - 4 * phi[1:-1, 1:-1]
        ) / hx**2
        inner = (xs[1:-1], ys[1:-1])

        def make(values):
            return RegularGridInterpolator(inner, values[1:-1, 1:-1], method="linear")

        interp = {
            "phi": RegularGridInterpolator((xs, ys), phi, method="linear"),
            "phi_x": make(px),
            "phi_y": make(py),
            "lap": make(lap),
        }
        return cls("tabulated", 0.0, _Table(xs, ys, phi, float(hx), interp), source)

    @classmethod
    def from_function(cls, fn: Callable, half_width: float, spacing: float) -> "WeightModel":
        """Tabulate ``fn(x, y)`` on ``[-half_width, half_width]**2``."""
        n = int(np.ceil(half_width / spacing))
        axis = np.arange(-n, n + 1) * spacing
        X, Y = np.meshgrid(axis, axis, indexing="ij")
        return cls.tabulated(axis, axis, np.broadcast_to(fn(X, Y), X.shape), source="function")

    @classmethod
    def from_csv(cls, path) -> "WeightModel":
        """Read a ``x,y,phi`` table covering a full regular grid."""
        path = Path(path)
        try:
            with open(path, newline="") as fh:
                reader = csv.reader(fh)
                header = [s.strip() for s in next(reader)]
                rows = [[float(s) for s in row] for row in reader if row]
        except (OSError, StopIteration, ValueError) as exc:
            raise ConfigError(f"cannot read weight table {path}: {exc}") from exc
        if header != ["x", "y", "phi"]:
            raise ConfigError(f"{path}: expected header x,y,phi, got {header}")
        data = np.asarray(rows, dtype=float)
        xs = np.unique(data[:, 0])
        ys = np.unique(data[:, 1])
        if data.shape[0] != xs.size * ys.size:
            raise ConfigError(f"{path}: samples do not form a full tensor grid")
        phi = np.full((xs.size, ys.size), np.nan)
        phi[np.searchsorted(xs, data[:, 0]), np.searchsorted(ys, data[:, 1])] = data[:, 2]
        return cls.tabulated(xs, ys, phi, source=str(path))

    # queries -------------------------------------------------------------

    def describe(self) -> dict:
        if self.kind == "monomial":
            return {"kind": "monomial", "m": self.m}
        t = self.table
        digest = hashlib.sha256(np.ascontiguousarray(t.phi).tobytes()).hexdigest()[:16]
        return {
            "kind": "tabulated",
            "source": self.source,
            "extent": [float(t.xs[0]), float(t.xs[-1]), float(t.ys[0]), float(t.ys[-1])],
            "spacing": t.spacing,
            "checksum": digest,
        }

    def _lookup(self, name: str, z) -> np.ndarray:
        t = self.table
        z = np.asarray(z, dtype=complex)
        x = z.real.ravel()
        y = z.imag.ravel()
        if name == "phi":
            lo_x, hi_x, lo_y, hi_y = t.xs[0], t.xs[-1], t.ys[0], t.ys[-1]
        else:
            lo_x, hi_x, lo_y, hi_y = t.xs[1], t.xs[-2], t.ys[1], t.ys[-2]
        eps = 1e-9 * t.spacing
        bad = (x < lo_x - eps) | (x > hi_x + eps) | (y < lo_y - eps) | (y > hi_y + eps)
        if bad.any():
            k = int(np.argmax(bad))
            raise DomainError(f"point {complex(x[k], y[k])} outside the tabulated weight domain")
        pts = np.column_stack([np.clip(x, lo_x, hi_x), np.clip(y, lo_y, hi_y)])
        return t.interp[name](pts).reshape(z.shape)

    def phi(self, z) -> np.ndarray:
        z = np.asarray(z, dtype=complex)
        if self.kind == "monomial":
            return np.abs(z) ** self.m
        return self._lookup("phi", z)

    def gradient(self, z) -> tuple[np.ndarray, np.ndarray]:
        """Real gradient ``(phi_x, phi_y)``."""
        z = np.asarray(z, dtype=complex)
        if self.kind == "monomial":
            r2 = np.abs(z) ** 2
            with np.errstate(divide="ignore", invalid="ignore"):
                s = np.where(r2 > 0, self.m * r2 ** ((self.m - 2) / 2), 0.0 if self.m > 2 else 2.0)
            return s * z.real, s * z.imag
        return self._lookup("phi_x", z), self._lookup("phi_y", z)


def evaluate(w: WeightModel, z) -> np.ndarray:
    """``phi(z)``; vectorised over arrays of points."""
    return w.phi(z)


def wirtinger_gradient(w: WeightModel, z) -> np.ndarray:
    """``phi_z = (phi_x - i phi_y) / 2``.

    For ``|z|**2`` this is ``conj(z)``.
    """
    px, py = w.gradient(z)
    return 0.5 * (px - 1j * py)


def laplacian(w: WeightModel, z) -> np.ndarray:
    """``Delta phi = 4 phi_{z zbar}``, nonnegative for subharmonic weights."""
    z = np.asarray(z, dtype=complex)
    if w.kind == "monomial":
        r2 = np.abs(z) ** 2
        if w.m < 2 and np.any(r2 == 0):
            raise SingularityError(f"Laplacian of |z|^{w.m} is singular at 0")
        with np.errstate(divide="ignore", invalid="ignore"):
            return np.where(r2 > 0, w.m**2 * r2 ** ((w.m - 2) / 2), 4.0 if w.m == 2 else 0.0)
    lap = w._lookup("lap", z)
    tol = 1e-8 * max(1.0, float(np.nanmax(np.abs(lap))))
    if np.any(lap < -tol):
        k = int(np.argmin(lap))
        raise SubharmonicityError(
            f"tabulated weight has Laplacian {lap.ravel()[k]:.3g} < 0 at {np.ravel(z)[k]}"
        )
    return lap


def vector_potential(w: WeightModel, z) -> tuple[np.ndarray, np.ndarray]:
    """``A = (-phi_y, phi_x)``, a gauge with ``curl A = Delta phi``."""
    px, py = w.gradient(z)
    return -py, px


def magnetic_field(w: WeightModel, z) -> np.ndarray:
    """``B = d_x A_2 - d_y A_1``.

    For monomials the derivatives of ``A`` are taken in closed form, which
    gives an independent route to ``Delta phi``.  Tabulated weights have no
    second derivative table beyond the Laplacian, so ``B`` equals it.
    """
    z = np.asarray(z, dtype=complex)
    if w.kind != "monomial":
        return laplacian(w, z)
    m = w.m
    x, y = z.real, z.imag
    r2 = x * x + y * y
    with np.errstate(divide="ignore", invalid="ignore"):
        s = np.where(r2 > 0, m * r2 ** ((m - 2) / 2), 0.0)
        ds = np.where(r2 > 0, m * (m - 2) * r2 ** ((m - 4) / 2), 0.0)
    # A_2 = s x, A_1 = -s y with s = m r^(m-2); ds is (1/r) d s/dr.
    dA2_dx = s + ds * x * x
    dA1_dy = -(s + ds * y * y)
    out = dA2_dx - dA1_dy
    return np.where(r2 > 0, out, 4.0 if m == 2 else 0.0)


def line_integral(w: WeightModel, z0, dz) -> np.ndarray:
    """``int A . dl`` along the segments ``z0 -> z0 + dz`` (vectorised)."""
    z0 = np.asarray(z0, dtype=complex)
    dz = np.broadcast_to(np.asarray(dz, dtype=complex), z0.shape)
    pts = z0[..., None] + _GL_T * dz[..., None]
    a1, a2 = vector_potential(w, pts)
    along = a1 * dz.real[..., None] + a2 * dz.imag[..., None]
    return along @ _GL_W


def flux_per_plaquette(w: WeightModel, z, h: float) -> np.ndarray:
    """Magnetic flux ``Delta phi * h**2`` through a lattice cell at ``z``."""
    return laplacian(w, z) * h * h


# doubling -------------------------------------------------------------------


@dataclass
class DoublingReport:
    """Sampled doubling ratios of ``nu = Delta phi dA``.

    ``C_hat`` is the largest observed ``nu(B(z, 2r)) / nu(B(z, r))``, and
    ``delta_hat`` the smallest ``nu(B(z, 1))`` over the sampled centres.
    """

    C_hat: float
    delta_hat: float
    samples: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "C_hat": self.C_hat,
            "delta_hat": self.delta_hat,
            "samples": [
                {"center": [c.real, c.imag], "radius": r, "nu_r": a, "nu_2r": b, "ratio": q}
                for c, r, a, b, q in self.samples
            ],
        }


def ball_measure(w: WeightModel, z0: complex, r: float, resolution: float) -> float:
    """``nu(B(z0, r))`` by midpoint quadrature with cell size ``resolution``."""
    return ball_quadrature(lambda z: laplacian(w, z), z0, r, resolution)


def doubling_report(
    w: WeightModel,
    centers: Sequence[complex],
    radii: Sequence[float],
    resolution: float,
) -> DoublingReport:
    """Estimate the doubling constant and the unit-ball lower bound."""
    radii = [float(r) for r in radii]
    centers = [complex(c) for c in centers]
    if not radii or not centers:
        raise ConfigError("doubling report needs at least one centre and one radius")
    if resolution > min(radii):
        raise ConfigError(
            f"quadrature resolution {resolution} is coarser than the smallest radius {min(radii)}"
        )
    samples = []
    for c in centers:
        for r in radii:
            a = ball_measure(w, c, r, resolution)
            b = ball_measure(w, c, 2 * r, resolution)
            samples.append((c, r, a, b, b / a if a > 0 else np.inf))
    C_hat = max(s[4] for s in samples)
    delta_hat = min(ball_measure(w, c, 1.0, resolution) for c in centers)
    return DoublingReport(float(C_hat), float(delta_hat), samples)
