# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""
Compiled kernel fills and direct (matrix-free) sums. Mirrors _kernels_py.
"""
import numpy as np
cimport numpy as cnp
from libc.math cimport log, sqrt, M_PI
from scipy.special.cython_special cimport hankel1

cnp.import_array()


def laplace2d(double[:, ::1] T, double[:, ::1] S, double[:, ::1] Nn, double[::1] w,
              double alpha, double beta, double tol2):
    cdef Py_ssize_t M = T.shape[0], N = S.shape[0], i, j
    cdef double dx, dy, r2, v
    cdef double ca = -alpha / (4 * M_PI), cb = beta / (2 * M_PI)
    out = np.empty((M, N))
    cdef double[:, ::1] A = out
    for i in range(M):
        for j in range(N):
            dx = T[i, 0] - S[j, 0]
            dy = T[i, 1] - S[j, 1]
            r2 = dx * dx + dy * dy
            if r2 <= tol2:
                return None, i * N + j
            v = 0.0
            if alpha != 0.0:
                v = ca * log(r2)
            if beta != 0.0:
                v = v + cb * (dx * Nn[j, 0] + dy * Nn[j, 1]) / r2
            A[i, j] = v * w[j]
    return out, -1


def helmholtz2d(double[:, ::1] T, double[:, ::1] S, double[:, ::1] Nn, double[::1] w,
                double k, double complex alpha, double complex beta, double tol2):
    cdef Py_ssize_t M = T.shape[0], N = S.shape[0], i, j
    cdef double dx, dy, r2, r
    cdef double complex v
    cdef double complex ca = alpha * 0.25j, cb = beta * 0.25j * k
    out = np.empty((M, N), dtype=complex)
    cdef double complex[:, ::1] A = out
    for i in range(M):
        for j in range(N):
            dx = T[i, 0] - S[j, 0]
            dy = T[i, 1] - S[j, 1]
            r2 = dx * dx + dy * dy
            if r2 <= tol2:
                return None, i * N + j
            r = sqrt(r2)
            v = 0.0
            if alpha != 0.0:
                v = ca * hankel1(0.0, k * r)
            if beta != 0.0:
                v = v + cb * hankel1(1.0, k * r) * (dx * Nn[j, 0] + dy * Nn[j, 1]) / r
            A[i, j] = v * w[j]
    return out, -1


def stokes2d(double[:, ::1] T, double[:, ::1] S, double[:, ::1] Nn, double[::1] w,
             double mu, double alpha, double beta, double tol2):
    cdef Py_ssize_t M = T.shape[0], N = S.shape[0], i, j
    cdef double dx, dy, r2, lg, xx, xy, yy, rn, a11, a12, a22
    cdef double ca = alpha / (4 * M_PI * mu), cb = beta / M_PI
    out = np.empty((2 * M, 2 * N))
    cdef double[:, ::1] A = out
    for i in range(M):
        for j in range(N):
            dx = T[i, 0] - S[j, 0]
            dy = T[i, 1] - S[j, 1]
            r2 = dx * dx + dy * dy
            if r2 <= tol2:
                return None, i * N + j
            xx = dx * dx / r2
            xy = dx * dy / r2
            yy = dy * dy / r2
            a11 = 0.0
            a12 = 0.0
            a22 = 0.0
            if alpha != 0.0:
                lg = -0.5 * log(r2)
                a11 = ca * (lg + xx)
                a12 = ca * xy
                a22 = ca * (lg + yy)
            if beta != 0.0:
                rn = cb * (dx * Nn[j, 0] + dy * Nn[j, 1]) / r2
                a11 = a11 + rn * xx
                a12 = a12 + rn * xy
                a22 = a22 + rn * yy
            A[i, j] = a11 * w[j]
            A[i, N + j] = a12 * w[j]
            A[M + i, j] = a12 * w[j]
            A[M + i, N + j] = a22 * w[j]
    return out, -1


def stokes2d_pressure(double[:, ::1] T, double[:, ::1] S, double[:, ::1] Nn, double[::1] w,
                      double mu, double alpha, double beta, double tol2):
    cdef Py_ssize_t M = T.shape[0], N = S.shape[0], i, j
    cdef double dx, dy, r2, rn2, p1, p2
    cdef double ca = alpha / (2 * M_PI), cb = beta * mu / M_PI
    out = np.empty((M, 2 * N))
    cdef double[:, ::1] A = out
    for i in range(M):
        for j in range(N):
            dx = T[i, 0] - S[j, 0]
            dy = T[i, 1] - S[j, 1]
            r2 = dx * dx + dy * dy
            if r2 <= tol2:
                return None, i * N + j
            p1 = ca * dx / r2
            p2 = ca * dy / r2
            if beta != 0.0:
                rn2 = 2 * (dx * Nn[j, 0] + dy * Nn[j, 1]) / (r2 * r2)
                p1 = p1 + cb * (-Nn[j, 0] / r2 + rn2 * dx)
                p2 = p2 + cb * (-Nn[j, 1] / r2 + rn2 * dy)
            A[i, j] = p1 * w[j]
            A[i, N + j] = p2 * w[j]
    return out, -1


def laplace3d(double[:, ::1] T, double[:, ::1] S, double[:, ::1] Nn, double[::1] w,
              double alpha, double beta, double tol2):
    cdef Py_ssize_t M = T.shape[0], N = S.shape[0], i, j
    cdef double dx, dy, dz, r2, r
    cdef double ca = alpha / (4 * M_PI), cb = beta / (4 * M_PI)
    out = np.empty((M, N))
    cdef double[:, ::1] A = out
    for i in range(M):
        for j in range(N):
            dx = T[i, 0] - S[j, 0]
            dy = T[i, 1] - S[j, 1]
            dz = T[i, 2] - S[j, 2]
            r2 = dx * dx + dy * dy + dz * dz
            if r2 <= tol2:
                return None, i * N + j
            r = sqrt(r2)
            A[i, j] = w[j] * (ca / r + cb * (dx * Nn[j, 0] + dy * Nn[j, 1] + dz * Nn[j, 2]) / (r2 * r))
    return out, -1


def laplace2d_apply(double[:, ::1] T, double[:, ::1] S, double[:, ::1] Nn, double[::1] w,
                    double alpha, double beta, double[::1] dens, double tol2):
    cdef Py_ssize_t M = T.shape[0], N = S.shape[0], i, j
    cdef double dx, dy, r2, v, acc
    cdef double ca = -alpha / (4 * M_PI), cb = beta / (2 * M_PI)
    out = np.empty(M)
    cdef double[::1] u = out
    for i in range(M):
        acc = 0.0
        for j in range(N):
            dx = T[i, 0] - S[j, 0]
            dy = T[i, 1] - S[j, 1]
            r2 = dx * dx + dy * dy
            if r2 <= tol2:
                return None, i * N + j
            v = 0.0
            if alpha != 0.0:
                v = ca * log(r2)
            if beta != 0.0:
                v = v + cb * (dx * Nn[j, 0] + dy * Nn[j, 1]) / r2
            acc = acc + v * w[j] * dens[j]
        u[i] = acc
    return out, -1


def helmholtz2d_apply(double[:, ::1] T, double[:, ::1] S, double[:, ::1] Nn, double[::1] w,
                      double k, double complex alpha, double complex beta,
                      double complex[::1] dens, double tol2):
    cdef Py_ssize_t M = T.shape[0], N = S.shape[0], i, j
    cdef double dx, dy, r2, r
    cdef double complex v, acc
    cdef double complex ca = alpha * 0.25j, cb = beta * 0.25j * k
    out = np.empty(M, dtype=complex)
    cdef double complex[::1] u = out
    for i in range(M):
        acc = 0.0
        for j in range(N):
            dx = T[i, 0] - S[j, 0]
            dy = T[i, 1] - S[j, 1]
            r2 = dx * dx + dy * dy
            if r2 <= tol2:
                return None, i * N + j
            r = sqrt(r2)
            v = 0.0
            if alpha != 0.0:
                v = ca * hankel1(0.0, k * r)
            if beta != 0.0:
                v = v + cb * hankel1(1.0, k * r) * (dx * Nn[j, 0] + dy * Nn[j, 1]) / r
            acc = acc + v * w[j] * dens[j]
        u[i] = acc
    return out, -1


def stokes2d_apply(double[:, ::1] T, double[:, ::1] S, double[:, ::1] Nn, double[::1] w,
                   double mu, double alpha, double beta, double[::1] dens, double tol2):
    cdef Py_ssize_t M = T.shape[0], N = S.shape[0], i, j
    cdef double dx, dy, r2, lg, xx, xy, yy, rn, a11, a12, a22, f1, f2, u1, u2
    cdef double ca = alpha / (4 * M_PI * mu), cb = beta / M_PI
    out = np.empty(2 * M)
    cdef double[::1] u = out
    for i in range(M):
        u1 = 0.0
        u2 = 0.0
        for j in range(N):
            dx = T[i, 0] - S[j, 0]
            dy = T[i, 1] - S[j, 1]
            r2 = dx * dx + dy * dy
            if r2 <= tol2:
                return None, i * N + j
            xx = dx * dx / r2
            xy = dx * dy / r2
            yy = dy * dy / r2
            a11 = 0.0
            a12 = 0.0
            a22 = 0.0
            if alpha != 0.0:
                lg = -0.5 * log(r2)
                a11 = ca * (lg + xx)
                a12 = ca * xy
                a22 = ca * (lg + yy)
            if beta != 0.0:
                rn = cb * (dx * Nn[j, 0] + dy * Nn[j, 1]) / r2
                a11 = a11 + rn * xx
                a12 = a12 + rn * xy
                a22 = a22 + rn * yy
            f1 = w[j] * dens[j]
            f2 = w[j] * dens[N + j]
            u1 = u1 + a11 * f1 + a12 * f2
            u2 = u2 + a12 * f1 + a22 * f2
        u[i] = u1
        u[M + i] = u2
    return out, -1


def laplace3d_apply(double[:, ::1] T, double[:, ::1] S, double[:, ::1] Nn, double[::1] w,
                    double alpha, double beta, double[::1] dens, double tol2):
    cdef Py_ssize_t M = T.shape[0], N = S.shape[0], i, j
    cdef double dx, dy, dz, r2, r, acc
    cdef double ca = alpha / (4 * M_PI), cb = beta / (4 * M_PI)
    out = np.empty(M)
    cdef double[::1] u = out
    for i in range(M):
        acc = 0.0
        for j in range(N):
            dx = T[i, 0] - S[j, 0]
            dy = T[i, 1] - S[j, 1]
            dz = T[i, 2] - S[j, 2]
            r2 = dx * dx + dy * dy + dz * dz
            if r2 <= tol2:
                return None, i * N + j
            r = sqrt(r2)
            acc = acc + w[j] * dens[j] * (ca / r + cb * (dx * Nn[j, 0] + dy * Nn[j, 1] + dz * Nn[j, 2]) / (r2 * r))
        u[i] = acc
    return out, -1
