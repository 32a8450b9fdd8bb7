import numpy as np
import pytest

from qfs.densela import (
    SingularSystemError,
    apply_solve,
    gmres,
    left_solve,
    lu_factor,
    right_part,
    svd_factor,
)


@pytest.fixture
def system():
    rng = np.random.default_rng(0)
    M = rng.standard_normal((30, 30)) + 30 * np.eye(30)
    return M, rng.standard_normal(30)


@pytest.mark.parametrize("factor", [svd_factor, lu_factor])
def test_square_solve(system, factor):
    M, b = system
    op = factor(M)
    assert np.allclose(apply_solve(op, b), np.linalg.solve(M, b), rtol=1e-12)
    assert np.allclose(apply_solve(op, np.stack([b, 2 * b], axis=1))[:, 1], 2 * np.linalg.solve(M, b))
    assert op.cond() >= 1


@pytest.mark.parametrize("factor", [svd_factor, lu_factor])
def test_parenthesized_product(system, factor):
    M, _ = system
    rng = np.random.default_rng(1)
    B = rng.standard_normal((5, 30))
    C = rng.standard_normal((30, 7))
    op = factor(M)
    assert np.allclose(left_solve(op, B) @ right_part(op, C), B @ np.linalg.solve(M, C), rtol=1e-11)


def test_tall_least_squares():
    rng = np.random.default_rng(2)
    M = rng.standard_normal((40, 10))
    b = rng.standard_normal(40)
    x = apply_solve(svd_factor(M), b)
    assert np.allclose(x, np.linalg.lstsq(M, b, rcond=None)[0])


def test_svd_cutoff_truncates():
    M = np.diag([1.0, 1e-3, 1e-15])
    op = svd_factor(M, cutoff=1e-10)
    assert len(op.singular_values) == 2


def test_lu_errors():
    with pytest.raises(ValueError):
        lu_factor(np.ones((3, 4)))
    with pytest.raises(SingularSystemError):
        lu_factor(np.zeros((3, 3)))
    with pytest.raises(ValueError):
        apply_solve(lu_factor(np.eye(3)), np.ones(4))


def test_gmres_real_and_complex(system):
    M, b = system
    res = gmres(lambda x: M @ x, b, tol=1e-12)
    assert res.converged
    assert np.linalg.norm(M @ res.x - b) <= 1e-11 * np.linalg.norm(b)
    assert res.residuals[0] == pytest.approx(1.0)
    Mc = M + 1j * np.eye(30)
    rc = gmres(lambda x: Mc @ x, b.astype(complex), tol=1e-12)
    assert np.allclose(Mc @ rc.x, b)


def test_gmres_zero_rhs_and_unpacking():
    x, iters, res = gmres(lambda v: v, np.zeros(5))
    assert iters == 0 and not np.any(x)


def test_gmres_iteration_count_identity_plus_low_rank():
    rng = np.random.default_rng(3)
    U = rng.standard_normal((50, 3))
    M = np.eye(50) + U @ U.T / 50
    res = gmres(lambda x: M @ x, rng.standard_normal(50), tol=1e-12)
    assert res.iters <= 4
