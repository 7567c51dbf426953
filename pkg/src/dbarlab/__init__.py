"""Numerical laboratory for the weighted dbar equation on the plane.

The canonical solution of ``dbar u = f`` in ``L^2(exp(-2 phi))`` is tied to
the magnetic Schroedinger operator ``H = Dbar D`` with field ``Delta phi``.
This package discretises ``D``, ``H`` and the solution operator on a
truncated lattice, computes the bottom of the spectrum, and collects
numerical evidence on whether the solution operator is compact.
"""

__version__ = "0.1.0"

from .errors import (
    ConfigError,
    ConsistencyError,
    ConvergenceError,
    DbarlabError,
    DomainError,
    DomainTooLargeError,
)
from .grid import FieldC, Grid2D, build_grid, integrate
from .weights import WeightModel
from .operators import assemble_D, assemble_Dbar, assemble_H, assemble_schrodinger
from .spectra import apply_inverse, cluster_count, smallest_eigs
from .dbar_solver import canonical_solve, minimality_probe, orthogonality_defect
from .compactness import Verdict, classify, local_ground_energy, magnetic_integral, mu_profile

__all__ = [
    "ConfigError", "ConsistencyError", "ConvergenceError", "DbarlabError", "DomainError",
    "DomainTooLargeError", "FieldC", "Grid2D", "build_grid", "integrate", "WeightModel",
    "assemble_D", "assemble_Dbar", "assemble_H", "assemble_schrodinger", "apply_inverse",
    "cluster_count", "smallest_eigs", "canonical_solve", "minimality_probe",
    "orthogonality_defect", "Verdict", "classify", "local_ground_energy", "magnetic_integral",
    "mu_profile",
]
