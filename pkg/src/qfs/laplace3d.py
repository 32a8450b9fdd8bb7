"""
QFS-D for the 3D Laplace equation on triaxial ellipsoids.

Surface rule: Gauss-Legendre in v on [-1, 1], and on each loop v = v_j an
n_j-point periodic trapezoid rule in u, with n_j the smallest even integer
above max((4 Nv / 3) sqrt(1 - v_j^2), 8). The parameterization is
r(u, v) = (a sqrt(1-v^2) cos u, b sqrt(1-v^2) sin u, c v).

Sources sit at x - delta n, check points at x + delta_c n; delta, delta_c and
the upsampling factor rho are user parameters (see :func:`default_parameters`
for the defaults; no rule ties them to a tolerance). The one-body Nystrom matrix is the two-sided average of
exterior and interior QFS matrices with the jump I/2 added explicitly.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.spatial.transform import Rotation

from .densela import gmres, lu_factor
from .kernels import KernelSpec, potential_apply, potential_matrix

__all__ = [
    "EllipsoidQuadrature",
    "ellipsoid_quadrature",
    "loop_sizes",
    "surface_upsample_matrix",
    "min_curvature_radius",
    "default_parameters",
    "Qfs3dOperator",
    "qfs3d_precompute",
    "Ellipsoid",
    "ellipsoid_distance",
    "grow_cluster",
    "ClusterSolution",
    "solve_ellipsoid_cluster",
    "evaluate_cluster",
    "DEFAULT_SEMIAXES",
]

DEFAULT_SEMIAXES = (0.5, 1.0, 1.5)


def loop_sizes(Nv: int):
    """Gauss-Legendre nodes and weights in v and the per-loop node counts n_j."""
    if Nv < 2:
        raise ValueError("Nv must be >= 2")
    v, wv = np.polynomial.legendre.leggauss(Nv)
    x = np.maximum(4 * Nv / 3 * np.sqrt(1 - v ** 2), 8)
    n = np.floor(x).astype(int) + 1
    n += n % 2
    return v, wv, n


@dataclass(frozen=True, eq=False)
class EllipsoidQuadrature:
    semiaxes: tuple
    Nv: int
    v: np.ndarray
    loops: np.ndarray
    nodes: np.ndarray
    weights: np.ndarray
    normals: np.ndarray
    u: np.ndarray

    is_quadrature = True

    @property
    def N(self) -> int:
        return self.nodes.shape[0]

    @property
    def points(self):
        return self.nodes

    def transformed(self, rotation, center) -> "EllipsoidQuadrature":
        """Rigidly moved copy (rotation matrix applied about the origin, then shift)."""
        R = np.asarray(rotation, dtype=float)
        c = np.asarray(center, dtype=float)
        return EllipsoidQuadrature(self.semiaxes, self.Nv, self.v, self.loops, self.nodes @ R.T + c,
                                   self.weights, self.normals @ R.T, self.u)


def ellipsoid_quadrature(semiaxes=(1.0, 1.0, 1.0), Nv: int = 24) -> EllipsoidQuadrature:
    """Product rule on the axis-aligned ellipsoid with the given semiaxes."""
    if Nv < 8:
        raise ValueError("Nv must be >= 8")
    a, b, c = map(float, semiaxes)
    v, wv, n = loop_sizes(Nv)
    us, vs, ws = [], [], []
    for vj, wj, nj in zip(v, wv, n):
        u = 2 * np.pi * np.arange(nj) / nj
        us.append(u)
        vs.append(np.full(nj, vj))
        ws.append(np.full(nj, wj * 2 * np.pi / nj))
    u, vv, w1 = np.concatenate(us), np.concatenate(vs), np.concatenate(ws)
    s = np.sqrt(1 - vv ** 2)
    X = np.stack([a * s * np.cos(u), b * s * np.sin(u), c * vv], axis=1)
    ru = np.stack([-a * s * np.sin(u), b * s * np.cos(u), np.zeros_like(u)], axis=1)
    rv = np.stack([-a * vv / s * np.cos(u), -b * vv / s * np.sin(u), np.full_like(u, c)], axis=1)
    cr = np.cross(ru, rv)
    jac = np.linalg.norm(cr, axis=1)
    return EllipsoidQuadrature((a, b, c), Nv, v, n, X, w1 * jac, cr / jac[:, None], u)


def min_curvature_radius(semiaxes) -> float:
    """Smallest principal radius of curvature, min(a)^2 / max(a)."""
    ax = np.sort(np.asarray(semiaxes, dtype=float))
    return float(ax[0] ** 2 / ax[2])


def default_parameters(semiaxes, Nv: int):
    """Default (delta, delta_c, rho).

    delta = delta_c = min(0.72 r_c, 9 a_min / Nv) with r_c the smallest
    curvature radius, and rho = 4. The first bound keeps the source surface
    clear of its focal set; the second keeps the proxy matrix within working
    precision as the mesh refines. Checks further out than delta degrade the
    two-sided spectrum. On the (1/2, 1, 3/2) ellipsoid this gives 0.12 for
    Nv <= 37.
    """
    ax = np.asarray(semiaxes, dtype=float)
    d = min(0.72 * min_curvature_radius(ax), 9.0 * ax.min() / Nv)
    return d, d, 4.0


def _bary_matrix(x, w, xt):
    """Barycentric Lagrange interpolation matrix from nodes x (weights w) to xt."""
    diff = xt[:, None] - x[None, :]
    exact = diff == 0
    diff[exact] = 1.0
    M = w[None, :] / diff
    M = M / M.sum(axis=1, keepdims=True)
    rows = np.flatnonzero(exact.any(axis=1))
    for r in rows:
        M[r] = exact[r].astype(float)
    return M


def _gl_bary_weights(x, wq):
    """Barycentric weights of Gauss-Legendre nodes: (-1)^j sqrt((1 - x_j^2) w_j)."""
    return (-1.0) ** np.arange(x.size) * np.sqrt((1 - x ** 2) * wq)


def surface_upsample_matrix(Nv: int, rho: float) -> np.ndarray:
    """Spectral interpolation from the Nv rule to the round(rho Nv) rule.

    Per-loop DFTs, zero padding to the largest loop mode, barycentric
    interpolation in v per Fourier mode (odd modes divided by sqrt(1-v^2)
    first), then inverse DFTs on the new loops.
    """
    if rho < 1:
        raise ValueError("rho must be >= 1")
    Nt = int(round(rho * Nv))
    v, wv, n = loop_sizes(Nv)
    vt, _, nt = loop_sizes(Nt)
    Mx = int(n.max() // 2)
    modes = np.arange(-Mx, Mx + 1)
    N = int(n.sum())
    off = np.concatenate([[0], np.cumsum(n)])
    # analysis: coefficient of mode m on loop j, Nyquist split evenly
    Cf = np.zeros((Nv, modes.size, N), dtype=complex)
    for j, nj in enumerate(n):
        u = 2 * np.pi * np.arange(nj) / nj
        F = np.exp(-1j * np.outer(modes, u)) / nj
        F[np.abs(modes) > nj // 2] = 0
        F[np.abs(modes) == nj // 2] *= 0.5
        Cf[j, :, off[j]:off[j + 1]] = F
    bw = _gl_bary_weights(v, wv)
    I = _bary_matrix(v, bw, vt)
    sq, sqt = np.sqrt(1 - v ** 2), np.sqrt(1 - vt ** 2)
    I_odd = sqt[:, None] * I / sq[None, :]
    odd = (modes % 2) == 1
    D = np.empty((Nt, modes.size, N), dtype=complex)
    D[:, ~odd] = np.einsum("kj,jmn->kmn", I, Cf[:, ~odd])
    D[:, odd] = np.einsum("kj,jmn->kmn", I_odd, Cf[:, odd])
    rows = []
    for k, nk in enumerate(nt):
        u = 2 * np.pi * np.arange(nk) / nk
        G = np.exp(1j * np.outer(u, modes))
        G[:, np.abs(modes) > nk // 2] = 0
        rows.append((G @ D[k]).real)
    return np.vstack(rows)


@dataclass(eq=False)
class Qfs3dOperator:
    quad: EllipsoidQuadrature
    spec: KernelSpec
    delta: float
    delta_c: float
    rho: float
    sources: np.ndarray
    checks: np.ndarray
    X: np.ndarray
    X_int: np.ndarray | None
    nystrom: np.ndarray
    info: dict = field(default_factory=dict)

    @property
    def N(self) -> int:
        return self.quad.N

    def strengths(self, tau):
        return self.X @ tau

    def evaluate(self, sigma, targets):
        return potential_apply(KernelSpec("laplace3d", 1.0, 0.0), targets, self.sources, sigma)


def _one_side(quad, up, L, spec, delta, delta_c, exterior):
    sgn = 1.0 if exterior else -1.0
    src = quad.nodes - sgn * delta * quad.normals
    chk = quad.nodes + sgn * delta_c * quad.normals
    slp = KernelSpec("laplace3d", 1.0, 0.0)
    E = potential_matrix(slp, chk, src)
    C = potential_matrix(spec, chk, up) @ L
    op = lu_factor(E)
    perm, Lf, Uf = op.factors
    from scipy.linalg import solve_triangular
    X = solve_triangular(Uf, solve_triangular(Lf, C[perm], lower=True, unit_diagonal=True,
                                              check_finite=False), check_finite=False)
    B = potential_matrix(slp, quad.nodes, src)
    return src, chk, X, B @ X


def qfs3d_precompute(quad: EllipsoidQuadrature, delta: float | None = None,
                     delta_c: float | None = None, rho: float | None = None, mixture=(1.0, 1.0),
                     two_sided: bool = True) -> Qfs3dOperator:
    """QFS-D with pure-SLP proxies for the representation alpha S + beta D.

    Unset parameters come from :func:`default_parameters`. X (sources from
    density) is stored explicitly. ``two_sided`` averages the exterior and
    interior matrices and adds (beta/2) I.
    """
    d0, dc0, rho0 = default_parameters(quad.semiaxes, quad.Nv)
    delta = d0 if delta is None else delta
    delta_c = dc0 if delta_c is None else delta_c
    rho = rho0 if rho is None else rho
    rc = min_curvature_radius(quad.semiaxes)
    if not 0 < delta < rc:
        raise ValueError(f"delta={delta} must lie in (0, {rc:.4g}), the smallest curvature radius")
    if not delta_c > 0:
        raise ValueError("delta_c must be positive")
    spec = KernelSpec("laplace3d", *mixture)
    up = ellipsoid_quadrature(quad.semiaxes, int(round(rho * quad.Nv)))
    L = surface_upsample_matrix(quad.Nv, rho)
    src, chk, X, Ae = _one_side(quad, up, L, spec, delta, delta_c, True)
    X_int = None
    A = Ae
    if two_sided:
        _, _, X_int, Ai = _one_side(quad, up, L, spec, delta, delta_c, False)
        A = 0.5 * (Ae + Ai) + 0.5 * mixture[1] * np.eye(quad.N)
    return Qfs3dOperator(quad, spec, delta, delta_c, rho, src, chk, X, X_int, A,
                         info={"N_up": up.N, "one_sided": Ae})


# ---------------------------------------------------------------- clusters

@dataclass(frozen=True, eq=False)
class Ellipsoid:
    semiaxes: tuple
    rotation: np.ndarray
    center: np.ndarray

    def to_local(self, p):
        return (np.asarray(p) - self.center) @ self.rotation

    def to_global(self, q):
        return np.asarray(q) @ self.rotation.T + self.center

    def project(self, p):
        """Closest point of the solid ellipsoid to p (Newton on the Lagrange multiplier)."""
        a = np.asarray(self.semiaxes, dtype=float)
        q = self.to_local(p)
        if np.sum((q / a) ** 2) <= 1:
            return np.asarray(p, dtype=float)
        a2 = a * a
        lam = 0.0
        for _ in range(100):
            t = a * q / (a2 + lam)
            g = np.sum(t * t) - 1
            dg = -2 * np.sum(t * t / (a2 + lam))
            step = g / dg
            lam -= step
            if abs(step) <= 1e-15 * max(lam, 1.0):
                break
        return self.to_global(a2 * q / (a2 + lam))


def ellipsoid_distance(A: Ellipsoid, B: Ellipsoid, tol: float = 1e-10, max_iter: int = 100000) -> float:
    """Distance between two solid ellipsoids by alternating projection (0 if they intersect)."""
    x = A.project(B.center)
    y = B.project(x)
    for _ in range(max_iter):
        xn = A.project(y)
        yn = B.project(xn)
        if np.linalg.norm(xn - x) + np.linalg.norm(yn - y) < tol:
            x, y = xn, yn
            break
        x, y = xn, yn
    return float(np.linalg.norm(x - y))


def grow_cluster(K: int, dmin: float, semiaxes=DEFAULT_SEMIAXES, seed=None,
                 max_attempts: int = 100, tol: float = 1e-6):
    """Random orientations; each new body slides towards the origin along a
    random line until its distance to the cluster is dmin (to ``tol``)."""
    if K < 1:
        raise ValueError("K must be >= 1")
    rng = np.random.default_rng(seed)
    bodies = [Ellipsoid(tuple(semiaxes), Rotation.random(random_state=rng).as_matrix(), np.zeros(3))]
    reach = 2 * max(semiaxes)
    for k in range(1, K):
        for _ in range(max_attempts):
            R = Rotation.random(random_state=rng).as_matrix()
            d = rng.normal(size=3)
            d /= np.linalg.norm(d)
            far = reach * (k + 2)

            def gap(t):
                e = Ellipsoid(tuple(semiaxes), R, t * d)
                return min(ellipsoid_distance(e, o) for o in bodies)

            lo, hi = 0.0, far
            if gap(hi) <= dmin or gap(lo) >= dmin:
                continue
            while hi - lo > 1e-12:
                mid = 0.5 * (lo + hi)
                g = gap(mid)
                if abs(g - dmin) < tol:
                    lo = hi = mid
                    break
                if g > dmin:
                    hi = mid
                else:
                    lo = mid
            bodies.append(Ellipsoid(tuple(semiaxes), R, hi * d))
            break
        else:
            raise RuntimeError(f"could not place body {k + 1} of {K} after {max_attempts} attempts")
    return bodies


@dataclass(eq=False)
class ClusterSolution:
    bodies: list
    op: Qfs3dOperator
    quads: list
    tau: np.ndarray
    sigma: list
    iters: int
    residuals: list
    converged: bool
    voltages: np.ndarray
    E_inc: np.ndarray
    srcs: list = field(default_factory=list)


def solve_ellipsoid_cluster(bodies, Nv: int = 24, voltages=None, E_inc=(0.0, 0.0, 0.0),
                            delta: float | None = None, delta_c: float | None = None,
                            rho: float | None = None, gmres_tol: float = 1e-8, seed=None,
                            max_iter: int = 500, op: Qfs3dOperator | None = None) -> ClusterSolution:
    """Dense completed-representation solve (1/2 + D + S) tau = V_j - E_inc . x.

    All bodies share one shape, so the one-body matrix A_0 and X are computed
    once in local coordinates; off-diagonal blocks are B^{(i,j)} X.
    Unset ``delta``, ``delta_c``, ``rho`` follow :func:`default_parameters`.
    """
    bodies = list(bodies)
    semi = bodies[0].semiaxes
    if any(tuple(b.semiaxes) != tuple(semi) for b in bodies):
        raise ValueError("all ellipsoids must share their semiaxes")
    K = len(bodies)
    if voltages is None:
        voltages = np.random.default_rng(seed).uniform(-0.5, 0.5, K)
    voltages = np.asarray(voltages, dtype=float)
    if voltages.shape != (K,):
        raise ValueError("need one voltage per body")
    if op is None:
        op = qfs3d_precompute(ellipsoid_quadrature(semi, Nv), delta, delta_c, rho)
    base = op.quad
    quads = [base.transformed(b.rotation, b.center) for b in bodies]
    srcs = [op.sources @ b.rotation.T + b.center for b in bodies]
    N0 = base.N
    A = np.empty((K * N0, K * N0))
    slp = KernelSpec("laplace3d", 1.0, 0.0)
    for j in range(K):
        for i in range(K):
            blk = op.nystrom if i == j else potential_matrix(slp, quads[i].nodes, srcs[j]) @ op.X
            A[i * N0:(i + 1) * N0, j * N0:(j + 1) * N0] = blk
    E = np.asarray(E_inc, dtype=float)
    f = np.concatenate([V - q.nodes @ E for V, q in zip(voltages, quads)])
    res = gmres(lambda x: A @ x, f, tol=gmres_tol, max_iter=max_iter)
    tau = res.x.real
    sigma = [op.X @ tau[i * N0:(i + 1) * N0] for i in range(K)]
    return ClusterSolution(bodies, op, quads, tau, sigma, res.iters, res.residuals, res.converged,
                           voltages, E, srcs)


def evaluate_cluster(sol: ClusterSolution, targets):
    """Scattered potential u (without the applied field) at exterior targets."""
    T = np.asarray(targets, dtype=float).reshape(-1, 3)
    src = np.concatenate(sol.srcs)
    return potential_apply(KernelSpec("laplace3d", 1.0, 0.0), T, src, np.concatenate(sol.sigma))
