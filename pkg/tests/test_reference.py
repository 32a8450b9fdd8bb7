import numpy as np
import pytest

from qfs import reference
from qfs.curve2d import circle_curve, ptr_quadrature, starfish_curve
from qfs.kernels import KernelSpec


def test_kress_slp_eigenvalues_on_circle():
    N = 64
    t = 2 * np.pi * np.arange(N) / N
    A = reference.kress_nystrom_matrix(circle_curve(), N, KernelSpec("laplace2d", 1.0, 0.0))
    # the unit-circle SLP maps cos(n t) to cos(n t) / (2n)
    assert np.allclose(A @ np.cos(3 * t), np.cos(3 * t) / 6, atol=1e-14)
    assert np.allclose(A @ np.ones(N), 0, atol=1e-14)


def test_kress_dlp_jump():
    N = 120
    spec = KernelSpec("laplace2d", 0.0, 1.0)
    Ae = reference.kress_nystrom_matrix(starfish_curve(), N, spec, "exterior")
    Ai = reference.kress_nystrom_matrix(starfish_curve(), N, spec, "interior")
    assert np.allclose(Ae - Ai, np.eye(N))
    assert np.allclose(Ae @ np.ones(N), 0, atol=1e-8)
    with pytest.raises(ValueError):
        reference.kress_nystrom_matrix(starfish_curve(), N, spec, "sideways")


def test_kress_helmholtz_convergence():
    spec = KernelSpec("helmholtz2d", 1.0, 1.0, k=3.0)
    f = lambda t: np.exp(np.sin(t))  # noqa: E731
    vals = []
    for N in (140, 200):
        q = ptr_quadrature(starfish_curve(), N)
        vals.append((reference.kress_nystrom_matrix(starfish_curve(), N, spec) @ f(q.params))[0])
    assert abs(vals[0] - vals[1]) < 1e-8


def test_kress_weights_symmetry():
    R = reference.kress_weights(16)
    assert R.shape == (16,)
    assert np.allclose(R[1:], R[1:][::-1])


def test_oracle_matches_far_plain_rule():
    spec = KernelSpec("laplace2d", 1.0, 1.0)
    f = lambda t: 1 + 0.3 * np.cos(2 * t)  # noqa: E731
    x = np.array([2.0, 0.5])
    val, err = reference.adaptive_near_oracle(starfish_curve(), f, x, spec)
    plain = reference.plain_evaluate(starfish_curve(), 400, spec, f, x[None])[0]
    assert abs(val - plain) < 1e-13
    assert err < 1e-10


def test_oracle_near_gauss_law():
    spec = KernelSpec("laplace2d", 0.0, 1.0)
    c = starfish_curve()
    q = ptr_quadrature(c, 16)
    x = q.nodes[3] + 1e-4 * q.normals[3]
    val, _ = reference.adaptive_near_oracle(c, lambda t: np.ones_like(t), x, spec)
    assert abs(val) < 1e-12


def test_oracle_stokes_samples_and_callable_agree():
    spec = KernelSpec("stokes2d", 1.0, 0.0, mu=1.0)
    c = starfish_curve()
    N = 64
    t = 2 * np.pi * np.arange(N) / N
    dens = lambda s: np.concatenate([np.cos(s), np.sin(2 * s)])  # noqa: E731
    x = np.array([1.6, 0.4])
    a, _ = reference.adaptive_near_oracle(c, dens, x, spec)
    b, _ = reference.adaptive_near_oracle(c, dens(t), x, spec)
    assert np.allclose(a, b, atol=1e-13)


def test_trig_interpolant_exact():
    N = 12
    t = 2 * np.pi * np.arange(N) / N
    f = lambda s: np.cos(2 * s) + np.sin(5 * s) + 0.5 * np.cos(6 * s)  # noqa: E731
    tt = np.linspace(0, 6, 17)
    assert np.allclose(reference.trig_interpolant(f(t))(tt), f(tt), atol=1e-13)


def test_density_has_nearby_pole():
    t = np.linspace(0, 2 * np.pi, 400)
    tau = reference.test_density("laplace2d", t)
    assert np.all(np.isfinite(tau))
    assert np.max(np.abs(tau)) > 5
    assert reference.test_density("stokes2d", t).shape == (800,)
    with pytest.raises(ValueError):
        reference.test_density("maxwell", t)
