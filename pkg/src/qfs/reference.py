"""
Gold-standard comparators.

* Kress product quadrature for on-surface Nystrom matrices (log-singular
  kernels split as K1 log(4 sin^2((t-s)/2)) + K2).
* Plain periodic trapezoid rule with analytic diagonal limits for the smooth
  double-layer kernels.
* Adaptive Gauss-Kronrod (7/15) integration of the density interpolant for
  near-boundary targets.
"""
from __future__ import annotations

import warnings

import numpy as np
from scipy.special import hankel1, j0, j1

from .curve2d import AnalyticCurve, BoundaryQuadrature, ptr_quadrature
from .kernels import KernelSpec, potential_apply

__all__ = [
    "kress_weights",
    "kress_nystrom_matrix",
    "plain_dlp_matrix",
    "plain_evaluate",
    "adaptive_near_oracle",
    "gauss_kronrod_15",
    "trig_interpolant",
    "test_density",
    "T_STAR",
]

EULER_GAMMA = 0.57721566490153286061
T_STAR = 0.5 + 0.15j

# Kronrod 15-point abscissae (nonnegative half) and weights; Gauss 7-point
# weights on the odd-indexed Kronrod abscissae (QUADPACK qk15).
_XGK = np.array([
    0.991455371120812639206854697526329, 0.949107912342758524526189684047851,
    0.864864423359769072789712788640926, 0.741531185599394439863864773280788,
    0.586087235467691130294144845693013, 0.405845151377397166906606412076961,
    0.207784955007898467600689403773245, 0.000000000000000000000000000000000])
_WGK = np.array([
    0.022935322010529224963732008058970, 0.063092092629978553290700663189204,
    0.104790010322250183839876322541518, 0.140653259715525918745189590510238,
    0.169004726639267902826583426598550, 0.190350578064785409913256402421014,
    0.204432940075298892414161999234649, 0.209482141084727828012999174891714])
_WG = np.array([
    0.129484966168869693270611432679082, 0.279705391489276667901467771423780,
    0.381830050505118944950369775488975, 0.417959183673469387755102040816327])


def gauss_kronrod_15():
    """Full 15 Kronrod nodes on [-1, 1], Kronrod weights, and embedded Gauss weights."""
    x = np.concatenate([-_XGK[:-1], _XGK[::-1]])
    wk = np.concatenate([_WGK[:-1], _WGK[::-1]])
    wg = np.zeros(15)
    # Gauss nodes are Kronrod indices 1, 3, 5 (and mirror) plus the centre
    half = np.zeros(8)
    half[[1, 3, 5, 7]] = _WG
    wg = np.concatenate([half[:-1], half[::-1]])
    return x, wk, wg


def kress_weights(N: int) -> np.ndarray:
    """R_j for j = 0..N-1 (function of (t_i - t_j) index difference)."""
    if N % 2:
        raise ValueError("N must be even")
    d = 2 * np.pi * np.arange(N) / N
    m = np.arange(1, N // 2)
    R = -(4 * np.pi / N) * (np.cos(np.outer(d, m)) / m).sum(axis=1)
    R -= (4 * np.pi / N**2) * np.cos((N // 2) * d)
    return R


def _kress_R_matrix(N):
    R = kress_weights(N)
    idx = (np.arange(N)[:, None] - np.arange(N)[None, :]) % N
    return R[idx]


def _geometry(curve, N):
    q = ptr_quadrature(curve, N)
    x = q.nodes
    dx = x[:, 0, None] - x[None, :, 0]
    dy = x[:, 1, None] - x[None, :, 1]
    r2 = dx * dx + dy * dy
    np.fill_diagonal(r2, 1.0)
    t = q.params
    logsin = np.log(4 * np.sin(0.5 * (t[:, None] - t[None, :])) ** 2 + np.eye(N))
    return q, dx, dy, r2, logsin


def _slp_laplace(q, r2, logsin, R, h):
    sp = q.speeds
    K1 = -1 / (4 * np.pi) * np.ones_like(r2)
    K = -1 / (4 * np.pi) * np.log(r2)
    K2 = K - K1 * logsin
    np.fill_diagonal(K2, -np.log(sp) / (2 * np.pi))
    return (R * K1 + h * K2) * sp


def _dlp_laplace(q, dx, dy, r2, h):
    n = q.normals
    D = (dx * n[:, 0] + dy * n[:, 1]) / r2 / (2 * np.pi)
    np.fill_diagonal(D, -q.curvature / (4 * np.pi))
    return D * h * q.speeds


def _slp_helmholtz(q, r2, logsin, R, h, k):
    sp = q.speeds
    r = np.sqrt(r2)
    M = 0.25j * hankel1(0, k * r)
    M1 = -j0(k * r) / (4 * np.pi)
    M2 = M - M1 * logsin
    np.fill_diagonal(M1, -1 / (4 * np.pi))
    np.fill_diagonal(M2, 0.25j - EULER_GAMMA / (2 * np.pi) - np.log(k * sp / 2) / (2 * np.pi))
    return (R * M1 + h * M2) * sp


def _dlp_helmholtz(q, dx, dy, r2, logsin, R, h, k):
    sp = q.speeds
    n = q.normals
    r = np.sqrt(r2)
    rn = (dx * n[:, 0] + dy * n[:, 1]) / r
    L = 0.25j * k * hankel1(1, k * r) * rn
    L1 = -k / (4 * np.pi) * j1(k * r) * rn
    L2 = L - L1 * logsin
    np.fill_diagonal(L1, 0.0)
    np.fill_diagonal(L2, -q.curvature / (4 * np.pi))
    return (R * L1 + h * L2) * sp


def _slp_stokes(q, dx, dy, r2, logsin, R, h, mu):
    N = q.N
    sp = q.speeds
    c = 1 / (4 * np.pi * mu)
    lg = -0.5 * np.log(r2)
    K1 = -c / 2 * np.ones((N, N))
    blocks = []
    tau = q.tangents
    for (a, b) in ((dx, dx), (dx, dy), (dy, dy)):
        blocks.append(a * b / r2)
    diag_rr = (tau[:, 0] ** 2, tau[:, 0] * tau[:, 1], tau[:, 1] ** 2)
    out = np.zeros((2 * N, 2 * N))
    for bi, (rr, dd, sl) in enumerate(zip(blocks, diag_rr, ((0, 0), (0, 1), (1, 1)))):
        iso = sl[0] == sl[1]
        K = c * (rr + (lg if iso else 0.0))
        k1 = K1 if iso else np.zeros((N, N))
        K2 = K - k1 * logsin
        np.fill_diagonal(K2, c * ((-np.log(sp) if iso else 0.0) + dd))
        Bk = (R * k1 + h * K2) * sp
        i, j = sl
        out[i * N:(i + 1) * N, j * N:(j + 1) * N] = Bk
        if i != j:
            out[j * N:(j + 1) * N, i * N:(i + 1) * N] = Bk
    return out


def _dlp_stokes(q, dx, dy, r2, h):
    N = q.N
    n = q.normals
    tau = q.tangents
    rn = (dx * n[:, 0] + dy * n[:, 1]) / r2 / np.pi
    out = np.zeros((2 * N, 2 * N))
    w = h * q.speeds
    for (i, j, a, b) in ((0, 0, dx, dx), (0, 1, dx, dy), (1, 1, dy, dy)):
        Bk = rn * a * b / r2
        np.fill_diagonal(Bk, -q.curvature / (2 * np.pi) * tau[:, i] * tau[:, j])
        Bk = Bk * w
        out[i * N:(i + 1) * N, j * N:(j + 1) * N] = Bk
        if i != j:
            out[j * N:(j + 1) * N, i * N:(i + 1) * N] = Bk
    return out


def plain_dlp_matrix(curve: AnalyticCurve, N: int, spec: KernelSpec) -> np.ndarray:
    """Principal-value DLP matrix by the plain rule with analytic diagonals (no jump)."""
    q, dx, dy, r2, _ = _geometry(curve, N)
    h = 2 * np.pi / N
    if spec.pde == "laplace2d":
        return _dlp_laplace(q, dx, dy, r2, h)
    if spec.pde == "stokes2d":
        return _dlp_stokes(q, dx, dy, r2, h)
    raise ValueError("plain-rule DLP matrices are available for Laplace and Stokes only")


def kress_nystrom_matrix(curve: AnalyticCurve, N: int, spec: KernelSpec,
                         side: str = "exterior") -> np.ndarray:
    """On-surface limit of alpha*S + beta*D from ``side`` (jump +-beta/2 included)."""
    if spec.pde not in ("laplace2d", "helmholtz2d", "stokes2d"):
        raise ValueError(f"Kress quadrature not available for {spec.pde}")
    if side not in ("exterior", "interior"):
        raise ValueError("side must be 'exterior' or 'interior'")
    q, dx, dy, r2, logsin = _geometry(curve, N)
    R = _kress_R_matrix(N)
    h = 2 * np.pi / N
    a, b = spec.alpha, spec.beta
    n = spec.dof * N
    A = np.zeros((n, n), dtype=spec.dtype)
    if a != 0:
        if spec.pde == "laplace2d":
            A += a * _slp_laplace(q, r2, logsin, R, h)
        elif spec.pde == "helmholtz2d":
            A += a * _slp_helmholtz(q, r2, logsin, R, h, spec.k)
        else:
            A += a * _slp_stokes(q, dx, dy, r2, logsin, R, h, spec.mu)
    if b != 0:
        if spec.pde == "laplace2d":
            A += b * _dlp_laplace(q, dx, dy, r2, h)
        elif spec.pde == "helmholtz2d":
            A += b * _dlp_helmholtz(q, dx, dy, r2, logsin, R, h, spec.k)
        else:
            A += b * _dlp_stokes(q, dx, dy, r2, h)
        A += (0.5 if side == "exterior" else -0.5) * b * np.eye(n)
    return A


def trig_interpolant(samples):
    """Callable evaluating the trigonometric interpolant of equispaced samples
    (axis 0), Nyquist mode split symmetrically."""
    samples = np.asarray(samples)
    N = samples.shape[0]
    c = np.fft.fft(samples, axis=0) / N
    k = np.fft.fftfreq(N, 1.0 / N)
    c = c.copy()
    c[N // 2] *= 0.5
    k = np.concatenate([k, [N // 2]])
    c = np.concatenate([c, c[N // 2:N // 2 + 1]], axis=0)
    real = not np.iscomplexobj(samples)

    def f(t):
        v = np.exp(1j * np.multiply.outer(np.asarray(t), k)) @ c
        return v.real if real else v

    return f


def test_density(pde: str, t, t_star: complex = T_STAR):
    """Densities with a complex singularity at distance Im(t_star) from the real axis.

    Laplace: Re[(0.5 + sin(3t+1)) cot((t - t*)/2)]; Helmholtz: the same without
    Re; Stokes: two components with phases e^{4i}, e^{5i}, returned blocked.
    """
    t = np.asarray(t, dtype=float)
    cot = 1 / np.tan(0.5 * (t - t_star))
    if pde == "laplace2d" or pde == "laplace3d":
        return np.real((0.5 + np.sin(3 * t + 1)) * cot)
    if pde == "helmholtz2d":
        return (0.5 + np.sin(3 * t + 1)) * cot
    if pde == "stokes2d":
        u = np.real(np.exp(4j) * (0.5 + np.sin(3 * t + 1)) * cot)
        v = np.real(np.exp(5j) * (0.5 + np.cos(2 * t - 1)) * cot)
        return np.concatenate([u, v])
    raise ValueError(pde)


def plain_evaluate(curve: AnalyticCurve, N: int, spec: KernelSpec, density, targets):
    """Plain PTR evaluation with N nodes; ``density`` is an array (length dof*N) or a
    callable of t returning it."""
    q = ptr_quadrature(curve, N)
    tau = density(q.params) if callable(density) else np.asarray(density)
    return potential_apply(spec, targets, q, tau, weights=q.weights)


def adaptive_near_oracle(curve: AnalyticCurve, density, target, spec: KernelSpec,
                         tol: float = 1e-12, max_intervals: int = 200000, initial: int = 64):
    """Adaptive G7/K15 integration over the parameter of alpha*G + beta*D times the density.

    ``density``: samples (trig interpolant is used) or a callable of t returning
    values (blocked for Stokes, i.e. shape (2, M) is accepted as well).
    Returns (value, error_estimate). Panels are accepted at ``tol`` relative to
    the integral's magnitude, or once the Gauss/Kronrod difference reaches the
    rounding level of the integrand. Accuracy is limited by cancellation in
    the integrand for targets very close to the curve (~1e-5 and below).
    """
    if not callable(density):
        dens_arr = np.asarray(density)
        if spec.dof == 2:
            N = dens_arr.shape[0] // 2
            fi = trig_interpolant(np.stack([dens_arr[:N], dens_arr[N:]], axis=1))
            dens_fn = lambda t: fi(t).T  # noqa: E731
        else:
            dens_fn = trig_interpolant(dens_arr)
    else:
        if spec.dof == 2:
            dens_fn = lambda t: np.asarray(density(t)).reshape(2, -1)  # noqa: E731
        else:
            dens_fn = density
    x = np.asarray(target, dtype=float).reshape(2)
    xg, wk, wg = gauss_kronrod_15()

    def integrand(s):
        flat = s.ravel()
        z = curve.z(flat)
        dz = curve.z(flat, 1)
        sp = np.abs(dz)
        nrm = np.stack([dz.imag, -dz.real], axis=1) / sp[:, None]
        pts = np.stack([z.real, z.imag], axis=1)
        dv = dens_fn(flat)
        if spec.dof == 2:
            out = []
            # G(x, y) tau: apply the kernel to both components via a 1-target matrix
            from .kernels import potential_matrix
            K = potential_matrix(spec, x[None, :], pts, nrm, sp)  # (2, 2M)
            M = flat.size
            u1 = K[0, :M] * dv[0] + K[0, M:] * dv[1]
            u2 = K[1, :M] * dv[0] + K[1, M:] * dv[1]
            out = np.stack([u1, u2], axis=-1)
            return out.reshape(s.shape + (2,))
        from .kernels import potential_matrix
        K = potential_matrix(spec, x[None, :], pts, nrm, sp)[0]
        return (K * dv).reshape(s.shape)

    # bound the memory of one integrand call (the interpolant costs O(N) per point)
    n_dens = np.asarray(density).shape[0] if not callable(density) else 64
    chunk = max(16, 2_000_000 // (15 * max(n_dens, 64)))
    a = np.linspace(0, 2 * np.pi, initial + 1)
    lo, hi = a[:-1], a[1:]
    total = 0.0
    err_total = 0.0
    scale = None
    while lo.size:
        mid, half = 0.5 * (lo + hi), 0.5 * (hi - lo)
        s = mid[:, None] + half[:, None] * xg[None, :]
        f = np.concatenate([integrand(s[i:i + chunk]) for i in range(0, s.shape[0], chunk)])
        if spec.dof == 2:
            Ik = np.einsum("ijk,j->ik", f, wk) * half[:, None]
            Ig = np.einsum("ijk,j->ik", f, wg) * half[:, None]
            err = np.abs(Ik - Ig).max(axis=1)
            size = np.einsum("ijk,j->ik", np.abs(f), wk).max(axis=1) * half
        else:
            Ik = (f @ wk) * half
            Ig = (f @ wg) * half
            err = np.abs(Ik - Ig)
            size = (np.abs(f) @ wk) * half
        if scale is None:
            scale = max(np.abs(Ik.sum(axis=0)).max(), 1e-300)
        ok = err <= tol * max(scale, 1.0) * (2 * half) / (2 * np.pi)
        # panels whose Gauss/Kronrod difference is at the rounding level of the
        # integrand cannot improve by splitting; kernels lose about |x| / r
        # relative digits in forming x - y near the target
        zs = curve.z(s.ravel()).reshape(s.shape)
        rmin = np.abs(zs - complex(x[0], x[1])).min(axis=1)
        amp = np.maximum(1.0, (np.abs(complex(x[0], x[1])) + 1.0) / np.maximum(rmin, 1e-300))
        ok |= err <= 50 * np.finfo(float).eps * size * amp
        ok |= half < 1e-13
        total = total + Ik[ok].sum(axis=0)
        err_total += err[ok].sum()
        if (~ok).sum() * 2 > max_intervals:
            warnings.warn("adaptive oracle hit the interval cap", RuntimeWarning)
            total = total + Ik[~ok].sum(axis=0)
            err_total += err[~ok].sum()
            break
        lo, hi = lo[~ok], hi[~ok]
        mid = 0.5 * (lo + hi)
        lo, hi = np.concatenate([lo, mid]), np.concatenate([mid, hi])
    return total, err_total
