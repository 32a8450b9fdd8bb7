import numpy as np
import pytest
from scipy.spatial.transform import Rotation

from qfs.kernels import KernelSpec, potential_apply
from qfs.laplace3d import (
    DEFAULT_SEMIAXES,
    Ellipsoid,
    default_parameters,
    ellipsoid_distance,
    ellipsoid_quadrature,
    evaluate_cluster,
    grow_cluster,
    loop_sizes,
    min_curvature_radius,
    qfs3d_precompute,
    solve_ellipsoid_cluster,
    surface_upsample_matrix,
)

SPHERE = (1.0, 1.0, 1.0)


def test_loop_sizes():
    v, w, n = loop_sizes(32)
    assert np.isclose(w.sum(), 2)
    assert np.all(n % 2 == 0) and np.all(n >= 8)
    assert np.all(n > 4 * 32 / 3 * np.sqrt(1 - v ** 2))
    assert n.sum() == 932
    with pytest.raises(ValueError):
        loop_sizes(1)


def test_sphere_area_and_normals():
    q = ellipsoid_quadrature(SPHERE, 24)
    assert abs(q.weights.sum() - 4 * np.pi) < 1e-10
    assert np.allclose(q.normals, q.nodes)
    with pytest.raises(ValueError):
        ellipsoid_quadrature(SPHERE, 4)


def test_ellipsoid_normals_are_gradient_direction():
    a = np.array(DEFAULT_SEMIAXES)
    q = ellipsoid_quadrature(a, 16)
    g = q.nodes / a ** 2
    g /= np.linalg.norm(g, axis=1, keepdims=True)
    assert np.allclose(q.normals, g)
    assert np.allclose(np.sum((q.nodes / a) ** 2, axis=1), 1)


def test_surface_upsampling():
    Nv, rho = 24, 3
    q, qt = ellipsoid_quadrature(SPHERE, Nv), ellipsoid_quadrature(SPHERE, Nv * rho)
    L = surface_upsample_matrix(Nv, rho)
    assert L.shape == (qt.N, q.N)
    assert np.max(np.abs(L @ np.ones(q.N) - 1)) < 1e-13
    z = lambda p: p[:, 2]  # noqa: E731
    assert np.max(np.abs(L @ z(q.nodes) - z(qt.nodes))) < 1e-12
    # a degree-3 spherical harmonic (up to normalization)
    y32 = lambda p: p[:, 2] * (p[:, 0] ** 2 - p[:, 1] ** 2)  # noqa: E731
    assert np.max(np.abs(L @ y32(q.nodes) - y32(qt.nodes))) < 1e-10
    with pytest.raises(ValueError):
        surface_upsample_matrix(Nv, 0.5)


def test_single_layer_of_one_on_sphere():
    q = ellipsoid_quadrature(SPHERE, 24)
    u = potential_apply(KernelSpec("laplace3d", 1.0, 0.0), np.array([[0.0, 0.0, 2.0]]), q.nodes,
                        q.weights)
    assert np.isclose(u[0], 0.5, atol=1e-12)


def test_default_parameters():
    d, dc, rho = default_parameters(DEFAULT_SEMIAXES, 24)
    assert np.isclose(min_curvature_radius(DEFAULT_SEMIAXES), 0.5 ** 2 / 1.5)
    assert np.isclose(d, 0.72 / 6) and d == dc and rho == 4
    d64, _, _ = default_parameters(DEFAULT_SEMIAXES, 64)
    assert np.isclose(d64, 9 * 0.5 / 64)


def test_precompute_rejects_bad_delta():
    q = ellipsoid_quadrature(DEFAULT_SEMIAXES, 12)
    with pytest.raises(ValueError):
        qfs3d_precompute(q, delta=0.5)
    with pytest.raises(ValueError):
        qfs3d_precompute(q, delta_c=-1.0)


def test_one_body_matrix_is_well_conditioned():
    for Nv in (16, 24):
        op = qfs3d_precompute(ellipsoid_quadrature(DEFAULT_SEMIAXES, Nv))
        assert 2 < np.linalg.cond(op.nystrom) < 4


def test_ellipsoid_distance_of_spheres():
    I = np.eye(3)
    A = Ellipsoid(SPHERE, I, np.zeros(3))
    B = Ellipsoid(SPHERE, Rotation.random(random_state=1).as_matrix(), np.array([3.0, 1.0, 0.0]))
    assert np.isclose(ellipsoid_distance(A, B), np.sqrt(10) - 2, atol=1e-8)
    C = Ellipsoid(SPHERE, I, np.array([1.5, 0.0, 0.0]))
    assert ellipsoid_distance(A, C) < 1e-8


def test_grow_cluster_gaps():
    dmin = 0.1
    bodies = grow_cluster(3, dmin, seed=2)
    assert len(bodies) == 3
    gaps = [min(ellipsoid_distance(b, o) for o in bodies[:k]) for k, b in enumerate(bodies) if k]
    assert np.allclose(gaps, dmin, atol=1e-6)
    with pytest.raises(ValueError):
        grow_cluster(0, dmin)


def test_zero_voltage_gives_zero_field():
    sol = solve_ellipsoid_cluster([Ellipsoid(DEFAULT_SEMIAXES, np.eye(3), np.zeros(3))], Nv=12,
                                  voltages=[0.0])
    assert np.all(evaluate_cluster(sol, [[3.0, 0.0, 0.0]]) == 0)


def test_sphere_capacitance():
    body = Ellipsoid(SPHERE, np.eye(3), np.zeros(3))
    sol = solve_ellipsoid_cluster([body], Nv=16, voltages=[1.0], gmres_tol=1e-12)
    assert sol.converged
    u = evaluate_cluster(sol, [[0.0, 0.0, 2.0], [0.0, 3.0, 0.0]])
    assert np.allclose(u, [1 / 2, 1 / 3], atol=1e-9)


def test_cluster_rejects_mixed_shapes():
    bodies = [Ellipsoid(SPHERE, np.eye(3), np.zeros(3)),
              Ellipsoid(DEFAULT_SEMIAXES, np.eye(3), np.array([5.0, 0, 0]))]
    with pytest.raises(ValueError):
        solve_ellipsoid_cluster(bodies, Nv=12)
    with pytest.raises(ValueError):
        solve_ellipsoid_cluster(bodies[:1], Nv=12, voltages=[1.0, 2.0])
