"""
Pure numpy kernel fills and direct sums. Same signatures as the compiled
``_ckernels`` module; selected automatically when the extension is missing
or when QFS_PURE_PYTHON is set.

All fills take targets T (M,d), sources S (N,d), source normals Nn (N,d) and
source weights w (N,), and return (matrix, bad) where ``bad`` is -1 or the
flat index i*N+j of the first target/source pair closer than sqrt(tol2).
"""
import numpy as np
from scipy.special import hankel1

CHUNK = 512


def _geom(T, S, tol2):
    dx = T[:, 0, None] - S[None, :, 0]
    dy = T[:, 1, None] - S[None, :, 1]
    r2 = dx * dx + dy * dy
    bad = np.flatnonzero(r2 <= tol2)
    return dx, dy, r2, (int(bad[0]) if bad.size else -1)


def laplace2d(T, S, Nn, w, alpha, beta, tol2):
    dx, dy, r2, bad = _geom(T, S, tol2)
    if bad >= 0:
        return None, bad
    A = np.zeros(r2.shape)
    if alpha != 0.0:
        A += (-alpha / (4 * np.pi)) * np.log(r2)
    if beta != 0.0:
        A += (beta / (2 * np.pi)) * (dx * Nn[:, 0] + dy * Nn[:, 1]) / r2
    return A * w, -1


def helmholtz2d(T, S, Nn, w, k, alpha, beta, tol2):
    dx, dy, r2, bad = _geom(T, S, tol2)
    if bad >= 0:
        return None, bad
    r = np.sqrt(r2)
    A = np.zeros(r.shape, dtype=complex)
    if alpha != 0:
        A += (alpha * 0.25j) * hankel1(0, k * r)
    if beta != 0:
        A += (beta * 0.25j * k) * hankel1(1, k * r) * (dx * Nn[:, 0] + dy * Nn[:, 1]) / r
    return A * w, -1


def stokes2d(T, S, Nn, w, mu, alpha, beta, tol2):
    dx, dy, r2, bad = _geom(T, S, tol2)
    if bad >= 0:
        return None, bad
    M, N = r2.shape
    A = np.zeros((2 * M, 2 * N))
    xx, xy, yy = dx * dx / r2, dx * dy / r2, dy * dy / r2
    if alpha != 0.0:
        c = alpha / (4 * np.pi * mu)
        lg = -0.5 * np.log(r2)
        A[:M, :N] += c * (lg + xx)
        A[:M, N:] += c * xy
        A[M:, :N] += c * xy
        A[M:, N:] += c * (lg + yy)
    if beta != 0.0:
        rn = (dx * Nn[:, 0] + dy * Nn[:, 1]) / r2 * (beta / np.pi)
        A[:M, :N] += rn * xx
        A[:M, N:] += rn * xy
        A[M:, :N] += rn * xy
        A[M:, N:] += rn * yy
    return A * np.concatenate([w, w]), -1


def stokes2d_pressure(T, S, Nn, w, mu, alpha, beta, tol2):
    dx, dy, r2, bad = _geom(T, S, tol2)
    if bad >= 0:
        return None, bad
    M, N = r2.shape
    A = np.zeros((M, 2 * N))
    if alpha != 0.0:
        A[:, :N] += (alpha / (2 * np.pi)) * dx / r2
        A[:, N:] += (alpha / (2 * np.pi)) * dy / r2
    if beta != 0.0:
        c = beta * mu / np.pi
        rn2 = 2 * (dx * Nn[:, 0] + dy * Nn[:, 1]) / (r2 * r2)
        A[:, :N] += c * (-Nn[:, 0] / r2 + rn2 * dx)
        A[:, N:] += c * (-Nn[:, 1] / r2 + rn2 * dy)
    return A * np.concatenate([w, w]), -1


def laplace3d(T, S, Nn, w, alpha, beta, tol2):
    dx = T[:, 0, None] - S[None, :, 0]
    dy = T[:, 1, None] - S[None, :, 1]
    dz = T[:, 2, None] - S[None, :, 2]
    r2 = dx * dx + dy * dy + dz * dz
    bad = np.flatnonzero(r2 <= tol2)
    if bad.size:
        return None, int(bad[0])
    r = np.sqrt(r2)
    A = np.zeros(r.shape)
    if alpha != 0.0:
        A += (alpha / (4 * np.pi)) / r
    if beta != 0.0:
        A += (beta / (4 * np.pi)) * (dx * Nn[:, 0] + dy * Nn[:, 1] + dz * Nn[:, 2]) / (r2 * r)
    return A * w, -1


def _chunked_apply(fill, T, dens, *args):
    M = T.shape[0]
    out = None
    for a in range(0, M, CHUNK):
        A, bad = fill(T[a:a + CHUNK], *args)
        if bad >= 0:
            N = args[0].shape[0]
            return None, (a + bad // N) * N + bad % N
        part = A @ dens
        if out is None:
            out = np.zeros((M,) + part.shape[1:], dtype=part.dtype)
        out[a:a + CHUNK] = part
    return out, -1


def laplace2d_apply(T, S, Nn, w, alpha, beta, dens, tol2):
    return _chunked_apply(laplace2d, T, dens, S, Nn, w, alpha, beta, tol2)


def helmholtz2d_apply(T, S, Nn, w, k, alpha, beta, dens, tol2):
    return _chunked_apply(helmholtz2d, T, dens, S, Nn, w, k, alpha, beta, tol2)


def laplace3d_apply(T, S, Nn, w, alpha, beta, dens, tol2):
    return _chunked_apply(laplace3d, T, dens, S, Nn, w, alpha, beta, tol2)


def stokes2d_apply(T, S, Nn, w, mu, alpha, beta, dens, tol2):
    # dens blocked (2N,), output blocked (2M,)
    M = T.shape[0]
    out = np.zeros(2 * M)
    for a in range(0, M, CHUNK):
        b = min(a + CHUNK, M)
        A, bad = stokes2d(T[a:b], S, Nn, w, mu, alpha, beta, tol2)
        if bad >= 0:
            N = S.shape[0]
            return None, (a + bad // N) * N + bad % N
        v = A @ dens
        m = b - a
        out[a:b] = v[:m]
        out[M + a:M + b] = v[m:]
    return out, -1
