import os
import subprocess
import sys

import numpy as np
import pytest
from scipy.special import hankel1

from qfs import kernels
from qfs.curve2d import circle_curve, ptr_quadrature, starfish_curve
from qfs.kernels import (
    CoincidentPointError,
    KernelSpec,
    get_backend,
    potential_apply,
    potential_matrix,
    stokes_pressure_matrix,
)

try:
    get_backend("cython")
    HAVE_CYTHON = True
except ImportError:
    HAVE_CYTHON = False

SPECS = [
    KernelSpec("laplace2d", 0.7, -0.4),
    KernelSpec("helmholtz2d", -3j, 1.0, k=3.0),
    KernelSpec("stokes2d", 1.0, 0.5, mu=0.8),
    KernelSpec("laplace3d", 1.0, 1.0),
]


def random_config(spec, rng, n=37, m=23):
    d = spec.dim
    S = rng.standard_normal((n, d))
    Nn = rng.standard_normal((n, d))
    Nn /= np.linalg.norm(Nn, axis=1, keepdims=True)
    T = rng.standard_normal((m, d)) + 4.0
    return T, S, Nn


@pytest.mark.skipif(not HAVE_CYTHON, reason="compiled kernels not built")
@pytest.mark.parametrize("spec", SPECS, ids=lambda s: s.pde)
def test_backends_agree(spec):
    rng = np.random.default_rng(1)
    T, S, Nn = random_config(spec, rng)
    w = rng.uniform(0.5, 1.5, len(S))
    A = potential_matrix(spec, T, S, Nn, w, backend="cython")
    B = potential_matrix(spec, T, S, Nn, w, backend="python")
    assert np.max(np.abs(A - B)) <= 1e-14 * np.max(np.abs(B))
    dens = rng.standard_normal(A.shape[1])
    a = potential_apply(spec, T, S, dens, Nn, w, backend="cython")
    b = potential_apply(spec, T, S, dens, Nn, w, backend="python")
    assert np.max(np.abs(a - b)) <= 1e-13 * np.max(np.abs(b))


@pytest.mark.skipif(not HAVE_CYTHON, reason="compiled kernels not built")
def test_pressure_backends_agree():
    rng = np.random.default_rng(2)
    T, S, Nn = random_config(KernelSpec("stokes2d", mu=1.0), rng)
    A = stokes_pressure_matrix(1.3, T, S, (1.0, 0.7), Nn, backend="cython")
    B = stokes_pressure_matrix(1.3, T, S, (1.0, 0.7), Nn, backend="python")
    assert np.allclose(A, B, rtol=1e-14, atol=0)


@pytest.mark.parametrize("spec", SPECS, ids=lambda s: s.pde)
def test_apply_matches_matrix(spec):
    rng = np.random.default_rng(3)
    T, S, Nn = random_config(spec, rng)
    A = potential_matrix(spec, T, S, Nn)
    dens = rng.standard_normal(A.shape[1])
    assert np.allclose(potential_apply(spec, T, S, dens, Nn), A @ dens, rtol=1e-12, atol=1e-14)


def test_pure_python_env_forces_fallback():
    env = dict(os.environ, QFS_PURE_PYTHON="1")
    out = subprocess.run([sys.executable, "-c", "import qfs.kernels as k; print(k.BACKEND)"],
                         env=env, capture_output=True, text=True, check=True)
    assert out.stdout.strip() == "python"
    assert kernels.get_backend("python").__name__.endswith("_kernels_py")


def test_laplace_slp_and_gauss_law_on_circle():
    q = ptr_quadrature(circle_curve(), 64)
    x = np.array([[2.0, 1.0], [0.2, -0.3]])
    u = potential_apply(KernelSpec("laplace2d", 1.0, 0.0), x, q, np.ones(q.N))
    # unit density on the unit circle: -log|x| outside, 0 inside
    assert np.allclose(u, [-np.log(np.hypot(2, 1)), 0.0], atol=1e-14)
    d = potential_apply(KernelSpec("laplace2d", 0.0, 1.0), x, q, np.ones(q.N))
    assert np.allclose(d, [0.0, -1.0], atol=1e-14)


def test_helmholtz_entry():
    k = 2.5
    spec = KernelSpec("helmholtz2d", 1.0, 0.0, k=k)
    A = potential_matrix(spec, [[1.0, 2.0]], [[0.0, 0.5]])
    assert np.isclose(A[0, 0], 0.25j * hankel1(0, k * np.hypot(1.0, 1.5)))


def test_stokes_blocked_layout_and_symmetry():
    spec = KernelSpec("stokes2d", 1.0, 0.0, mu=1.0)
    T = np.array([[1.0, 0.3], [-0.5, 2.0]])
    S = np.array([[0.0, 0.0], [0.2, -0.1], [0.4, 0.4]])
    G = potential_matrix(spec, T, S)
    assert G.shape == (4, 6)
    # the Stokeslet tensor is symmetric: the (u1, f2) block equals the (u2, f1) block
    assert np.allclose(G[:2, 3:], G[2:, :3])


def test_stokes_dlp_gauss_law():
    # the Stokes DLP of a constant density is -f inside and 0 outside
    q = ptr_quadrature(starfish_curve(), 200)
    spec = KernelSpec("stokes2d", 0.0, 1.0, mu=1.0)
    f = np.concatenate([np.full(q.N, 0.3), np.full(q.N, -1.1)])
    u = potential_apply(spec, [[0.1, 0.0], [2.5, 1.0]], q, f)
    assert np.allclose(u, [-0.3, 0.0, 1.1, 0.0], atol=1e-12)


def test_laplace3d_point_source():
    spec = KernelSpec("laplace3d", 1.0, 0.0)
    A = potential_matrix(spec, [[0.0, 0.0, 2.0]], [[0.0, 0.0, 0.0]])
    assert np.isclose(A[0, 0], 1 / (8 * np.pi))


def test_coincident_point_raises():
    spec = KernelSpec("laplace2d")
    with pytest.raises(CoincidentPointError):
        potential_matrix(spec, [[0.0, 0.0], [1.0, 1.0]], [[1.0, 1.0]])


def test_dlp_needs_normals():
    with pytest.raises(ValueError):
        potential_matrix(KernelSpec("laplace2d", 0.0, 1.0), [[2.0, 0.0]], [[0.0, 0.0]])


def test_kernel_spec_validation():
    with pytest.raises(ValueError):
        KernelSpec("maxwell3d")
    s = KernelSpec("stokes2d", 1.0, 1.0, mu=2.0)
    assert s.dof == 2 and s.dim == 2
    assert s.slp.beta == 0 and s.dlp.alpha == 0
