import json

import numpy as np
import pytest

from qfs.curve2d import circle_curve
from qfs.multibody import (
    Body,
    BodyCollection,
    DenseCachedBackend,
    base_resolution,
    direct_backend,
    evaluate_field,
    evaluate_pressure_field,
    generate_bodies,
    get_summation_backend,
    minimum_separation,
    pairwise_separations,
    register_backend,
    solve_helmholtz_scattering,
    solve_stokes_driven_flow,
)
from qfs.kernels import KernelSpec


@pytest.fixture(scope="module")
def pair():
    return BodyCollection((Body((0.0, 0.0), 1.0, 0.2, 3, 0.1), Body((2.6, 0.4), 0.8, 0.1, 4, 0.0)), 0.3)


@pytest.fixture(scope="module")
def helm(pair):
    return solve_helmholtz_scattering(pair, 3.0, gmres_tol=1e-11, backend="dense", level=2)


def test_minimum_separation_of_circles():
    assert np.isclose(minimum_separation(circle_curve(1.0), circle_curve(1.0, (2.5, 0.0))), 0.5, atol=1e-10)
    assert np.isclose(minimum_separation(circle_curve(1.0), circle_curve(0.5, (0.3, 2.0))),
                      np.hypot(0.3, 2.0) - 1.5, atol=1e-10)


def test_base_resolution():
    n = base_resolution(1.0, 0.04)
    assert n % 2 == 0 and n >= 2 * np.pi / 0.2
    assert base_resolution(0.01, 1.0) == 16


def test_generator_is_deterministic_and_separated():
    a = generate_bodies(6, 0.05, seed=11)
    b = generate_bodies(6, 0.05, seed=11)
    assert a.bodies == b.bodies
    assert a.bodies != generate_bodies(6, 0.05, seed=12).bodies
    seps = [s for _, _, s in pairwise_separations(a)]
    assert min(seps) >= 0.05
    # one pair ends up nearly touching
    assert any(0.05 < s <= 0.055 for s in seps)


def test_generator_with_outer_circle():
    c = generate_bodies(4, 0.1, seed=2, outer_radius=6.0)
    assert c.outer is not None and c.outer.outer
    assert all(s >= 0.1 for _, _, s in pairwise_separations(c))
    assert len(c.resolutions(2)) == 5


def test_generator_rejects_bad_input():
    with pytest.raises(ValueError):
        generate_bodies(3, -0.1)


def test_json_roundtrip():
    c = generate_bodies(3, 0.1, seed=4, outer_radius=5.0)
    c2 = BodyCollection.from_json(json.loads(json.dumps(c.to_json())))
    assert c2.bodies == c.bodies and c2.outer == c.outer and c2.dmin == c.dmin


def test_backend_contract():
    rng = np.random.default_rng(0)
    spec = KernelSpec("helmholtz2d", -2j, 1.0, k=2.0)
    calls = []

    def stub(qspec, sources, normals, strengths, targets):
        calls.append(1)
        return direct_backend(qspec, sources, normals, strengths, targets)

    register_backend("stub", stub, 0.0)
    dense = DenseCachedBackend()
    for _ in range(100):
        S = rng.uniform(-1, 1, (20, 2))
        Nn = rng.standard_normal((20, 2))
        Nn /= np.linalg.norm(Nn, axis=1, keepdims=True)
        T = rng.uniform(2, 3, (7, 2))
        q = rng.standard_normal(20) + 1j * rng.standard_normal(20)
        ref = direct_backend(spec, S, Nn, q, T)
        assert np.array_equal(get_summation_backend("stub")(spec, S, Nn, q, T), ref)
        assert np.allclose(dense(spec, S, Nn, q, T), ref, rtol=1e-13, atol=0)
    assert len(calls) == 100
    with pytest.raises(ValueError):
        get_summation_backend("no-such-backend")


def test_helmholtz_boundary_data_reproduced(helm, pair):
    # u_scat = -u_inc on each boundary; proxies evaluate on the nodes directly
    for q in helm.quads:
        u = evaluate_field(helm, q.nodes)
        assert np.max(np.abs(u + np.exp(1j * 3.0 * q.nodes[:, 0]))) < 1e-10
    assert helm.converged


def test_helmholtz_preconditioning_and_backends_agree(helm, pair):
    plain = solve_helmholtz_scattering(pair, 3.0, gmres_tol=1e-11, backend="direct", level=2,
                                       precondition=False)
    a, b = np.concatenate(helm.densities), np.concatenate(plain.densities)
    assert np.max(np.abs(a - b)) <= 10 * 1e-11 * np.max(np.abs(a))
    x0 = np.array([[1.3, 3.0]])
    assert evaluate_field(helm, x0, backend="direct")[0] == pytest.approx(evaluate_field(plain, x0)[0], abs=1e-9)
    assert helm.iters < plain.iters


def test_helmholtz_qfs_matches_kress(pair):
    qf = solve_helmholtz_scattering(pair, 3.0, gmres_tol=1e-11, backend="dense", level=4)
    kr = solve_helmholtz_scattering(pair, 3.0, gmres_tol=1e-11, level=4, quadrature="kress")
    x0 = np.array([[1.3, 3.0], [-2.0, -1.5]])
    assert np.max(np.abs(evaluate_field(qf, x0) - evaluate_field(kr, x0))) < 1e-10
    assert abs(kr.iters - qf.iters) <= 2


def test_helmholtz_radiation_decay(helm):
    r = np.geomspace(50, 500, 12)
    x = np.stack([r * np.cos(0.7), r * np.sin(0.7)], axis=1)
    u = np.abs(evaluate_field(helm, x))
    slope = np.polyfit(np.log(r), np.log(u), 1)[0]
    assert abs(slope + 0.5) < 0.05


def test_helmholtz_needs_exterior():
    c = generate_bodies(2, 0.2, seed=1, outer_radius=6.0)
    with pytest.raises(ValueError):
        solve_helmholtz_scattering(c, 1.0)


def test_stokes_driven_flow_small():
    c = BodyCollection((Body((0.5, 0.0), 0.8, 0.1, 3, 0.0),), 0.2, outer=Body((0.0, 0.0), 3.0, outer=True))
    sol = solve_stokes_driven_flow(c, gmres_tol=1e-10, backend="dense", level=2)
    assert sol.converged
    # wall velocity (1, 0) on the circle, no slip on the inclusion
    for i, q in enumerate(sol.quads):
        u = evaluate_field(sol, q.nodes)
        assert np.allclose(u[:q.N], 1.0 if i == 0 else 0.0, atol=1e-9)
        assert np.allclose(u[q.N:], 0.0, atol=1e-9)
    p = evaluate_pressure_field(sol, [[0.0, 2.0], [-1.5, 0.0]])
    assert np.all(np.isfinite(p))
    with pytest.raises(ValueError):
        evaluate_pressure_field(solve_helmholtz_scattering(
            BodyCollection((Body((0.0, 0.0), 1.0),), 0.2), 1.0, level=1), [[3.0, 0.0]])


def test_stokes_needs_outer_circle(pair):
    with pytest.raises(ValueError):
        solve_stokes_driven_flow(pair)
