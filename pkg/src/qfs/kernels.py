"""
Fundamental solutions and layer-potential matrices.

Conventions
-----------
* r = x - y (target minus source), n_y the outward source normal.
* Laplace 2D:   G = -(1/2pi) log r,          D = (1/2pi) (r.n) / r^2
* Helmholtz 2D: G = (i/4) H0(kr),            D = (ik/4) H1(kr) (r.n) / r
* Stokes 2D:    G = (1/4pi mu)(-log r I + r r^T / r^2),  D = (1/pi)(r.n) r r^T / r^4
* Laplace 3D:   G = 1/(4pi r),               D = (r.n) / (4pi r^3)

Stokes matrices use the blocked layout: rows [u1 at all targets; u2 at all
targets], columns [f1 at all sources; f2 at all sources].

Quadrature weights multiply column j only when the source carries them: a
:class:`~qfs.curve2d.BoundaryQuadrature` passes its PTR weights, while proxy
sources (:class:`~qfs.curve2d.OffsetCurveSamples` or bare point arrays) get
unit weights unless ``weights`` is given explicitly.

Backend: the compiled extension ``qfs._ckernels`` is used when importable;
setting the environment variable QFS_PURE_PYTHON=1 forces the numpy fallback.
"""
from __future__ import annotations

import os
from dataclasses import dataclass, replace

import numpy as np

from . import _kernels_py

__all__ = [
    "KernelSpec",
    "CoincidentPointError",
    "BACKEND",
    "get_backend",
    "potential_matrix",
    "potential_apply",
    "stokes_pressure_matrix",
    "laplace_potential_matrix_3d",
    "laplace_apply_3d",
]

PDES = ("laplace2d", "laplace3d", "helmholtz2d", "stokes2d")


def get_backend(name: str | None = None):
    """Return the kernel implementation module ('cython', 'python' or default)."""
    if name == "python":
        return _kernels_py
    if name == "cython":
        from . import _ckernels
        return _ckernels
    if os.environ.get("QFS_PURE_PYTHON", "") not in ("", "0"):
        return _kernels_py
    try:
        from . import _ckernels
        return _ckernels
    except ImportError:
        return _kernels_py


_impl = get_backend()
BACKEND = "cython" if _impl is not _kernels_py else "python"


class CoincidentPointError(ValueError):
    """A target coincides with a source point."""

    def __init__(self, i, j, target, source):
        fmt = lambda p: "(" + ", ".join(f"{float(c):.17g}" for c in p) + ")"
        super().__init__(f"target {i} at {fmt(target)} coincides with source {j} at {fmt(source)}")
        self.pair = (i, j)


@dataclass(frozen=True)
class KernelSpec:
    """PDE family, mixture S/D coefficients (alpha, beta) and parameters."""

    pde: str
    alpha: complex = 1.0
    beta: complex = 0.0
    k: float | None = None
    mu: float | None = None

    def __post_init__(self):
        pde = self.pde.lower()
        if pde not in PDES:
            raise ValueError(f"unknown pde {self.pde!r}; choose from {PDES}")
        object.__setattr__(self, "pde", pde)
        if self.alpha == 0 and self.beta == 0:
            raise ValueError("mixture (alpha, beta) must not be (0, 0)")
        if pde == "helmholtz2d" and not (self.k is not None and self.k > 0):
            raise ValueError("Helmholtz needs a wavenumber k > 0")
        if pde == "stokes2d":
            if self.mu is None:
                object.__setattr__(self, "mu", 1.0)
            if not self.mu > 0:
                raise ValueError("Stokes needs viscosity mu > 0")
        if pde != "helmholtz2d" and (np.imag(self.alpha) != 0 or np.imag(self.beta) != 0):
            raise ValueError("complex mixtures are only meaningful for Helmholtz")

    @property
    def dof(self) -> int:
        return 2 if self.pde == "stokes2d" else 1

    @property
    def dim(self) -> int:
        return 3 if self.pde == "laplace3d" else 2

    @property
    def dtype(self):
        return complex if self.pde == "helmholtz2d" else float

    def with_mixture(self, alpha, beta) -> "KernelSpec":
        return replace(self, alpha=alpha, beta=beta)

    @property
    def slp(self) -> "KernelSpec":
        return self.with_mixture(1.0, 0.0)

    @property
    def dlp(self) -> "KernelSpec":
        return self.with_mixture(0.0, 1.0)


def _as_sources(sources, normals, weights, dim):
    """Extract (points, normals, weights) following the weight convention."""
    from .curve2d import BoundaryQuadrature

    if hasattr(sources, "points") or hasattr(sources, "nodes"):
        pts = sources.nodes if hasattr(sources, "nodes") else sources.points
        if normals is None:
            normals = getattr(sources, "normals", None)
        if weights is None and isinstance(sources, BoundaryQuadrature):
            weights = sources.weights
        if weights is None and getattr(sources, "is_quadrature", False):
            weights = sources.weights
    else:
        pts = sources
    pts = np.ascontiguousarray(pts, dtype=float).reshape(-1, dim)
    n = pts.shape[0]
    nrm = np.zeros((n, dim)) if normals is None else np.ascontiguousarray(normals, dtype=float).reshape(n, dim)
    w = np.ones(n) if weights is None else np.ascontiguousarray(weights, dtype=float).reshape(n)
    return pts, nrm, w


def _tol2(T, S):
    scale = max(float(np.max(np.abs(T))) if T.size else 0.0,
                float(np.max(np.abs(S))) if S.size else 0.0, 1.0)
    return (1e-14 * scale) ** 2


def _check(result, T, S):
    A, bad = result
    if bad >= 0:
        n = S.shape[0]
        i, j = divmod(bad, n)
        raise CoincidentPointError(i, j, T[i], S[j])
    return A


def potential_matrix(spec: KernelSpec, targets, sources, normals=None, weights=None,
                     backend=None) -> np.ndarray:
    """Dense matrix of alpha*S + beta*D from sources to targets."""
    impl = _impl if backend is None else get_backend(backend)
    T = np.ascontiguousarray(targets, dtype=float).reshape(-1, spec.dim)
    S, Nn, w = _as_sources(sources, normals, weights, spec.dim)
    if spec.beta != 0 and normals is None and not hasattr(sources, "normals"):
        raise ValueError("double-layer kernel needs source normals")
    tol2 = _tol2(T, S)
    a, b = spec.alpha, spec.beta
    if spec.pde == "laplace2d":
        return _check(impl.laplace2d(T, S, Nn, w, float(np.real(a)), float(np.real(b)), tol2), T, S)
    if spec.pde == "laplace3d":
        return _check(impl.laplace3d(T, S, Nn, w, float(np.real(a)), float(np.real(b)), tol2), T, S)
    if spec.pde == "helmholtz2d":
        return _check(impl.helmholtz2d(T, S, Nn, w, float(spec.k), complex(a), complex(b), tol2), T, S)
    return _check(impl.stokes2d(T, S, Nn, w, float(spec.mu), float(np.real(a)), float(np.real(b)), tol2), T, S)


def potential_apply(spec: KernelSpec, targets, sources, density, normals=None, weights=None,
                    backend=None) -> np.ndarray:
    """Matrix-free direct sum: potential_matrix(...) @ density."""
    impl = _impl if backend is None else get_backend(backend)
    T = np.ascontiguousarray(targets, dtype=float).reshape(-1, spec.dim)
    S, Nn, w = _as_sources(sources, normals, weights, spec.dim)
    tol2 = _tol2(T, S)
    a, b = spec.alpha, spec.beta
    dens = np.asarray(density)
    if spec.pde == "helmholtz2d":
        d = np.ascontiguousarray(dens, dtype=complex)
        return _check(impl.helmholtz2d_apply(T, S, Nn, w, float(spec.k), complex(a), complex(b), d, tol2), T, S)
    if np.iscomplexobj(dens):
        return (potential_apply(spec, T, S, dens.real, Nn, w, backend)
                + 1j * potential_apply(spec, T, S, dens.imag, Nn, w, backend))
    d = np.ascontiguousarray(dens, dtype=float)
    a, b = float(np.real(a)), float(np.real(b))
    if spec.pde == "laplace2d":
        return _check(impl.laplace2d_apply(T, S, Nn, w, a, b, d, tol2), T, S)
    if spec.pde == "laplace3d":
        return _check(impl.laplace3d_apply(T, S, Nn, w, a, b, d, tol2), T, S)
    return _check(impl.stokes2d_apply(T, S, Nn, w, float(spec.mu), a, b, d, tol2), T, S)


def stokes_pressure_matrix(mu: float, targets, sources, mixture=(1.0, 0.0), normals=None,
                           weights=None, backend=None) -> np.ndarray:
    """Pressure rows (M, 2N) of alpha*Gp + beta*Dp, blocked source columns."""
    if mu <= 0:
        raise ValueError("mu must be positive")
    impl = _impl if backend is None else get_backend(backend)
    T = np.ascontiguousarray(targets, dtype=float).reshape(-1, 2)
    S, Nn, w = _as_sources(sources, normals, weights, 2)
    alpha, beta = mixture
    return _check(impl.stokes2d_pressure(T, S, Nn, w, float(mu), float(alpha), float(beta),
                                         _tol2(T, S)), T, S)


def laplace_potential_matrix_3d(targets, sources, mixture=(1.0, 0.0), normals=None,
                                weights=None, backend=None) -> np.ndarray:
    spec = KernelSpec("laplace3d", *mixture)
    return potential_matrix(spec, targets, sources, normals, weights, backend)


def laplace_apply_3d(targets, sources, density, mixture=(1.0, 0.0), normals=None,
                     weights=None, backend=None) -> np.ndarray:
    spec = KernelSpec("laplace3d", *mixture)
    return potential_apply(spec, targets, sources, density, normals, weights, backend)
