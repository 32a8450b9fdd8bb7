import numpy as np
import pytest

from qfs import reference
from qfs.core import (
    QfsConfig,
    QfsConfigurationError,
    choose_sources,
    evaluate_potential,
    even_ceil,
    explicit_source_matrix,
    load_operator,
    qfs_apply,
    qfsb_precompute,
    qfsd_precompute,
    save_operator,
    two_sided_nystrom,
)
from qfs.curve2d import circle_curve, starfish_curve
from qfs.kernels import KernelSpec


@pytest.fixture(scope="module")
def laplace_op():
    return qfsd_precompute(starfish_curve(), 200, KernelSpec("laplace2d", 1.0, 0.0), cfg=QfsConfig(eps=1e-10))


def test_even_ceil():
    assert [even_ceil(x) for x in (3.0, 4.0, 4.2, 5.999999999999)] == [4, 4, 6, 6]


def test_config_validation():
    with pytest.raises(ValueError):
        QfsConfig(eps=1e-17)
    with pytest.raises(ValueError):
        QfsConfig(upsilon=0.5)
    with pytest.raises(ValueError):
        QfsConfig(variant="X")
    with pytest.raises(ValueError):
        QfsConfig(factorization="qr")
    assert QfsConfig().upsampling(KernelSpec("stokes2d", mu=1.0)) == (1.3, 1.5)
    assert QfsConfig().upsampling(KernelSpec("laplace2d")) == (1.0, 1.0)


def test_source_rule():
    cfg = QfsConfig(eps=1e-10)
    sc = choose_sources(starfish_curve(), 300, cfg)
    assert sc.P == 300 and not sc.fallback
    assert np.isclose(sc.delta, np.log(1e10) / 300)
    # a coarse N would need a shift beyond the valid range: fall back to the largest shift
    sc = choose_sources(starfish_curve(), 80, cfg)
    assert sc.fallback and sc.P > 80 and sc.P % 2 == 0


def test_operator_shapes_and_ratio_condition(laplace_op):
    op = laplace_op
    assert op.N == 200 and op.P % 2 == 0 and op.Nc % 2 == 0 and op.N_up % 2 == 0
    assert op.ratio_condition()
    assert op.nystrom.shape == (200, 200)


def test_nystrom_matches_kress():
    op = qfsd_precompute(starfish_curve(), 300, KernelSpec("laplace2d", 1.0, 0.0), cfg=QfsConfig(eps=1e-10))
    K = reference.kress_nystrom_matrix(op.curve, op.N, op.spec)
    tau = np.exp(np.cos(op.quad.params))
    assert np.max(np.abs(op.nystrom @ tau - K @ tau)) < 1e-9 * np.max(np.abs(K @ tau))


def test_near_evaluation_vs_oracle(laplace_op):
    op = laplace_op
    tau = np.cos(3 * op.quad.params) + 0.5
    z = op.curve.z(np.array([0.3]))[0]
    dz = op.curve.z(np.array([0.3]), 1)[0]
    n = -1j * dz / abs(dz)
    x = np.array([(z + 1e-3 * n).real, (z + 1e-3 * n).imag])
    ref, _ = reference.adaptive_near_oracle(op.curve, tau, x, op.spec)
    u = evaluate_potential(op, qfs_apply(op, tau), x[None])[0]
    assert abs(u - ref) < 1e-8


def test_explicit_matrix_agrees_with_parenthesized(laplace_op):
    # strengths differ (E is ill-conditioned) but the potentials they generate agree
    op = laplace_op
    tau = np.sin(2 * op.quad.params)
    far = np.array([[2.0, 1.0], [0.0, -1.8]])
    u1 = evaluate_potential(op, explicit_source_matrix(op) @ tau, far)
    u2 = evaluate_potential(op, qfs_apply(op, tau), far)
    assert np.allclose(u1, u2, atol=1e-7)


def test_dlp_gauss_law():
    op = qfsd_precompute(starfish_curve(), 160, KernelSpec("laplace2d", 0.0, 1.0), cfg=QfsConfig(eps=1e-8))
    sigma = qfs_apply(op, np.ones(op.N))
    x = op.quad.nodes + 1e-12 * op.quad.normals
    assert np.max(np.abs(evaluate_potential(op, sigma, x))) < 1e-7


def test_interior_dlp_gauss_law():
    cfg = QfsConfig(eps=1e-10, interior=True)
    op = qfsd_precompute(starfish_curve(), 200, KernelSpec("laplace2d", 0.0, 1.0), cfg=cfg)
    u = evaluate_potential(op, qfs_apply(op, np.ones(op.N)), [[0.1, -0.2], [0.5, 0.3]])
    assert np.allclose(u, -1.0, atol=1e-9)


def test_qfsb_helmholtz_far_field():
    curve = starfish_curve()
    spec = KernelSpec("helmholtz2d", 1.0, 0.0, k=5.0)
    N = 240
    A = reference.kress_nystrom_matrix(curve, N, spec)
    op = qfsb_precompute(curve, N, spec, A, cfg=QfsConfig(eps=1e-10))
    tau = np.exp(np.cos(op.quad.params))
    far = np.array([[2.5, 1.0]])
    ref = reference.plain_evaluate(curve, 800, spec, lambda t: np.exp(np.cos(t)), far)
    assert abs(evaluate_potential(op, qfs_apply(op, tau), far)[0] - ref[0]) < 1e-9
    with pytest.raises(ValueError):
        qfsb_precompute(curve, N, spec, A[:10, :10])


def test_stokes_interior_nullspace_fix():
    cfg = QfsConfig(eps=1e-10, interior=True)
    spec = KernelSpec("stokes2d", 0.0, 1.0, mu=1.0)
    op = qfsd_precompute(starfish_curve(), 200, spec, cfg=cfg)
    assert op.null_vec is not None
    assert op.pressure_ref is not None
    # DLP of a constant density is -f inside
    f = np.concatenate([np.full(op.N, 0.4), np.full(op.N, -0.2)])
    u = evaluate_potential(op, qfs_apply(op, f), [[0.1, 0.1]])
    assert np.allclose(u, [-0.4, 0.2], atol=1e-8)


def test_charge_fix_on_unit_disk():
    spec = KernelSpec("laplace2d", 1.0, 0.0)
    curve = circle_curve()
    A = reference.kress_nystrom_matrix(curve, 80, spec)
    op = qfsb_precompute(curve, 80, spec, A, cfg=QfsConfig(eps=1e-10, charge_fix=True, check_rank=False))
    u = evaluate_potential(op, qfs_apply(op, np.ones(80)), [[2.0, 0.0]])
    assert abs(u[0] + np.log(2.0)) < 1e-9


def test_two_sided_nystrom_jump():
    curve = starfish_curve()
    spec = KernelSpec("laplace2d", 0.0, 1.0)
    ext = qfsd_precompute(curve, 300, spec, cfg=QfsConfig(eps=1e-10))
    int_ = qfsd_precompute(curve, 300, spec, cfg=QfsConfig(eps=1e-10, interior=True))
    # on smooth densities, exterior minus interior limits of the DLP is the identity jump
    tau = np.exp(np.sin(ext.quad.params))
    assert np.allclose(ext.nystrom @ tau - int_.nystrom @ tau, tau, atol=1e-10)
    A2 = two_sided_nystrom(ext, int_)
    K = reference.kress_nystrom_matrix(curve, 300, spec)
    assert np.allclose(A2 @ tau, K @ tau, atol=1e-10)


def test_save_load_roundtrip(laplace_op, tmp_path):
    path = tmp_path / "op.npz"
    save_operator(laplace_op, path)
    op2 = load_operator(path)
    tau = np.cos(op2.quad.params)
    assert np.array_equal(qfs_apply(op2, tau), qfs_apply(laplace_op, tau))


def test_invalid_configuration_raises():
    # a huge prescribed shift cannot produce a valid source curve
    with pytest.raises(QfsConfigurationError):
        qfsd_precompute(starfish_curve(), 100, KernelSpec("laplace2d"), cfg=QfsConfig(delta=0.9))
