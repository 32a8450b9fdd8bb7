"""Quadrature by fundamental solutions (QFS) for layer potentials in 2D and 3D.

Submodules:

* :mod:`qfs.curve2d` analytic curves, trapezoid rules, shifted curves, spectral resampling
* :mod:`qfs.kernels` fundamental solutions and layer-potential matrices (compiled or numpy)
* :mod:`qfs.densela` stable solve operators and GMRES
* :mod:`qfs.core` one-body QFS-B / QFS-D operators
* :mod:`qfs.reference` Kress quadrature, plain rule and an adaptive oracle
* :mod:`qfs.multibody` multi-body Helmholtz and Stokes solvers, geometry generation
* :mod:`qfs.laplace3d` QFS-D for 3D Laplace on ellipsoids
* :mod:`qfs.experiments` convergence and spectrum studies (used by the CLI)
"""
from .core import (
    QfsConfig,
    QfsConfigurationError,
    QfsOperator,
    evaluate_potential,
    evaluate_pressure,
    explicit_source_matrix,
    load_operator,
    nystrom_matrix,
    qfs_apply,
    qfsb_precompute,
    qfsd_precompute,
    save_operator,
    two_sided_nystrom,
)
from .curve2d import AnalyticCurve, circle_curve, ptr_quadrature, starfish_curve, upsampling_matrix
from .kernels import BACKEND, KernelSpec, potential_apply, potential_matrix, stokes_pressure_matrix
from .reference import adaptive_near_oracle, kress_nystrom_matrix

__version__ = "0.1.0"

__all__ = [
    "AnalyticCurve",
    "BACKEND",
    "KernelSpec",
    "QfsConfig",
    "QfsConfigurationError",
    "QfsOperator",
    "adaptive_near_oracle",
    "circle_curve",
    "evaluate_potential",
    "evaluate_pressure",
    "explicit_source_matrix",
    "kress_nystrom_matrix",
    "load_operator",
    "nystrom_matrix",
    "potential_apply",
    "potential_matrix",
    "ptr_quadrature",
    "qfs_apply",
    "qfsb_precompute",
    "qfsd_precompute",
    "save_operator",
    "starfish_curve",
    "stokes_pressure_matrix",
    "two_sided_nystrom",
    "upsampling_matrix",
]
