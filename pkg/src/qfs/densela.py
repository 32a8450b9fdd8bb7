"""
Dense factorizations and a non-restarted GMRES.

The solve operators never form an explicit inverse: an SVD solve is applied
as V (Sigma^{-1} (U^* rhs)) and an LU solve as U^{-1} (L^{-1} (Pbar rhs)),
always innermost product first.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla

__all__ = [
    "StableSolveOperator",
    "SingularSystemError",
    "svd_factor",
    "lu_factor",
    "apply_solve",
    "left_solve",
    "right_part",
    "GmresResult",
    "gmres",
]


class SingularSystemError(np.linalg.LinAlgError):
    pass


@dataclass(frozen=True, eq=False)
class StableSolveOperator:
    """Factorization of an (m x n) matrix M usable for least-squares solves.

    kind 'svd': factors (U, s, Vh) with M = U diag(s) Vh (thin).
    kind 'lu':  factors (perm, L, U) with M[perm] = L U.
    """

    kind: str
    factors: tuple
    shape: tuple

    @property
    def singular_values(self):
        if self.kind != "svd":
            raise AttributeError("singular values only available for svd factorizations")
        return self.factors[1]

    def cond(self) -> float:
        if self.kind == "svd":
            s = self.factors[1]
            return float(s[0] / s[-1]) if s[-1] > 0 else np.inf
        d = np.abs(np.diag(self.factors[2]))
        return float(d.max() / d.min()) if d.min() > 0 else np.inf


def svd_factor(M, cutoff: float | None = None) -> StableSolveOperator:
    """Thin SVD. Square or tall matrices give least-squares solves; a wide
    matrix (more proxy sources than matching points) gives the minimum-norm
    solution through the same formula.

    ``cutoff`` (relative) truncates tiny singular values; it is off by default.
    """
    M = np.asarray(M)
    m, n = M.shape
    try:
        U, s, Vh = sla.svd(M, full_matrices=False, lapack_driver="gesdd")
    except np.linalg.LinAlgError:
        try:
            U, s, Vh = sla.svd(M, full_matrices=False, lapack_driver="gesvd")
        except np.linalg.LinAlgError as exc:
            raise np.linalg.LinAlgError(f"SVD did not converge: {exc}") from exc
    if cutoff is not None:
        keep = s > cutoff * s[0]
        U, s, Vh = U[:, keep], s[keep], Vh[keep]
    return StableSolveOperator("svd", (U, s, Vh), (m, n))


def lu_factor(M) -> StableSolveOperator:
    """Partially pivoted LU of a square matrix, M[perm] = L U."""
    M = np.asarray(M)
    m, n = M.shape
    if m != n:
        raise ValueError(f"lu_factor needs a square matrix, got {m}x{n}")
    P, L, U = sla.lu(M)
    perm = np.argmax(P, axis=0)  # row i of L U is row perm[i] of M
    d = np.abs(np.diag(U))
    zero = np.flatnonzero(d == 0)
    if zero.size:
        raise SingularSystemError(f"zero pivot at index {int(zero[0])}")
    return StableSolveOperator("lu", (perm, L, U), (m, n))


def apply_solve(op: StableSolveOperator, rhs):
    """Least-squares / exact solve with the factored matrix; rhs may be a matrix."""
    rhs = np.asarray(rhs)
    if rhs.shape[0] != op.shape[0]:
        raise ValueError(f"rhs has {rhs.shape[0]} rows, operator has {op.shape[0]}")
    if op.kind == "svd":
        U, s, Vh = op.factors
        if s[-1] == 0:
            raise SingularSystemError("zero singular value; the system is rank deficient")
        t = U.conj().T @ rhs
        t = t / (s[:, None] if t.ndim == 2 else s)
        return Vh.conj().T @ t
    perm, L, U = op.factors
    y = sla.solve_triangular(L, rhs[perm], lower=True, unit_diagonal=True, check_finite=False)
    return sla.solve_triangular(U, y, lower=False, check_finite=False)


def left_solve(op: StableSolveOperator, B):
    """The factor-side half of B M^{-1}: returns (B V Sigma^{-1}) for svd, (B U^{-1}) for lu.

    Combined with :func:`right_part` this gives the printed association
    (B Y) Z or (B U^{-1}) (L^{-1} (Pbar C)).
    """
    if op.kind == "svd":
        U, s, Vh = op.factors
        return (B @ Vh.conj().T) / s
    perm, L, U = op.factors
    # X U = B  <=>  U^T X^T = B^T
    return sla.solve_triangular(U, np.asarray(B).T, trans="T", lower=False,
                                check_finite=False).T


def right_part(op: StableSolveOperator, C):
    """U^* C for svd, L^{-1}(Pbar C) for lu."""
    if op.kind == "svd":
        return op.factors[0].conj().T @ C
    perm, L, U = op.factors
    return sla.solve_triangular(L, np.asarray(C)[perm], lower=True, unit_diagonal=True,
                                check_finite=False)


@dataclass
class GmresResult:
    x: np.ndarray
    iters: int
    residuals: list
    converged: bool

    def __iter__(self):  # allows x, iters, res = gmres(...)
        return iter((self.x, self.iters, self.residuals))


def gmres(matvec, b, tol: float = 1e-10, max_iter: int = 500, x0=None) -> GmresResult:
    """Non-restarted GMRES with modified Gram-Schmidt and selective reorthogonalization.

    ``residuals`` holds the relative residual estimate after each iteration
    (starting with the initial one). Warns if ``max_iter`` is reached.
    """
    b = np.asarray(b)
    dtype = np.result_type(b.dtype, np.float64)
    n = b.shape[0]
    x0 = np.zeros(n, dtype=dtype) if x0 is None else np.asarray(x0, dtype=dtype)
    r0 = b - matvec(x0) if np.any(x0) else b.astype(dtype)
    bnorm = np.linalg.norm(b)
    if bnorm == 0:
        return GmresResult(np.zeros(n, dtype=dtype), 0, [0.0], True)
    beta = np.linalg.norm(r0)
    res = [beta / bnorm]
    if res[0] <= tol:
        return GmresResult(x0, 0, res, True)
    m = min(max_iter, n)
    V = np.zeros((m + 1, n), dtype=dtype)
    H = np.zeros((m + 1, m), dtype=dtype)
    cs = np.zeros(m, dtype=dtype)
    sn = np.zeros(m, dtype=dtype)
    g = np.zeros(m + 1, dtype=dtype)
    g[0] = beta
    V[0] = r0 / beta
    k = 0
    converged = False
    for k in range(m):
        w = np.asarray(matvec(V[k]), dtype=dtype)
        wnorm0 = np.linalg.norm(w)
        for i in range(k + 1):
            H[i, k] = np.vdot(V[i], w)
            w = w - H[i, k] * V[i]
        if np.linalg.norm(w) < 0.7 * wnorm0:
            # one reorthogonalization pass
            for i in range(k + 1):
                c = np.vdot(V[i], w)
                H[i, k] += c
                w = w - c * V[i]
        hn = np.linalg.norm(w)
        H[k + 1, k] = hn
        for i in range(k):
            t = cs[i] * H[i, k] + sn[i] * H[i + 1, k]
            H[i + 1, k] = -np.conj(sn[i]) * H[i, k] + cs[i] * H[i + 1, k]
            H[i, k] = t
        a, c = H[k, k], H[k + 1, k]
        den = np.sqrt(abs(a) ** 2 + abs(c) ** 2)
        if den == 0:
            cs[k], sn[k] = 1.0, 0.0
        else:
            cs[k] = abs(a) / den
            sn[k] = (a / abs(a)) * np.conj(c) / den if a != 0 else 1.0
        H[k, k] = cs[k] * a + sn[k] * c
        H[k + 1, k] = 0.0
        g[k + 1] = -np.conj(sn[k]) * g[k]
        g[k] = cs[k] * g[k]
        res.append(abs(g[k + 1]) / bnorm)
        if res[-1] <= tol or hn <= 1e-14 * wnorm0:
            converged = True
            break
        V[k + 1] = w / hn
    iters = k + 1
    y = sla.solve_triangular(H[:iters, :iters], g[:iters], lower=False, check_finite=False)
    x = x0 + V[:iters].T @ y
    if not converged:
        warnings.warn(f"GMRES reached max_iter={max_iter} with relative residual {res[-1]:.2e}",
                      RuntimeWarning, stacklevel=2)
    return GmresResult(x, iters, res, converged)
