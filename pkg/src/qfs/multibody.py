"""
Boundary value problems on many bodies.

Geometry: random star-shaped bodies placed by a center sampler, then grown
and shrunk until some pairs are nearly touching (:func:`generate_bodies`).

Solvers: exterior Helmholtz Dirichlet scattering with the combined field
representation, and Stokes flow inside a confining circle driven by wall
velocity. Both use one-body right preconditioning and GMRES. The matvec:

1. split the preconditioned density into per-body pieces,
2. tau_i = (A_ii)^{-1} tau~_i,
3. sigma_i = qfs_apply(op_i, tau_i),
4. a single summation backend call from all proxy sources to all nodes.

The same matvec with other targets evaluates the solution anywhere in the
fluid. The reference (``quadrature='kress'``) path uses Kress self blocks
and plain rules on upsampled source curves for everything else.
"""
from __future__ import annotations

import hashlib
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.spatial import cKDTree

from .core import QfsConfig, even_ceil, qfs_apply, qfsd_precompute
from .curve2d import AnalyticCurve, ptr_quadrature, starfish_curve, upsampling_matrix
from .densela import gmres
from .kernels import KernelSpec, potential_apply, potential_matrix, stokes_pressure_matrix
from .reference import kress_nystrom_matrix

__all__ = [
    "Body",
    "BodyCollection",
    "BvpSolution",
    "GeometryError",
    "spiral_sampler",
    "disk_sampler",
    "generate_bodies",
    "minimum_separation",
    "ring_separation",
    "pairwise_separations",
    "base_resolution",
    "direct_backend",
    "DenseCachedBackend",
    "register_backend",
    "get_summation_backend",
    "BACKENDS",
    "solve_helmholtz_scattering",
    "solve_stokes_driven_flow",
    "evaluate_field",
    "evaluate_pressure_field",
    "fluid_far_point",
]

FREQS = np.arange(3, 8)
FREQ_PROBS = np.array([16, 8, 4, 2, 1]) / 31.0


class GeometryError(RuntimeError):
    pass


# --------------------------------------------------------------------- geometry

@dataclass(frozen=True)
class Body:
    """Polar body r(t) = r (1 + a cos(f t + phi)) about ``center``.

    ``outer`` marks a confining circle (the fluid is inside it).
    """

    center: tuple
    r: float
    a: float = 0.0
    f: int = 3
    phi: float = 0.0
    outer: bool = False

    @property
    def curve(self) -> AnalyticCurve:
        return starfish_curve(self.r, self.a, self.f, self.phi, self.center)

    @property
    def max_radius(self) -> float:
        return self.r * (1 + abs(self.a))

    def with_max_radius(self, R: float) -> "Body":
        return replace(self, r=R / (1 + abs(self.a)))

    def moved(self, center) -> "Body":
        return replace(self, center=(float(center[0]), float(center[1])))

    def to_json(self) -> dict:
        return {"center": list(self.center), "r0": self.r, "a": self.a, "f": int(self.f),
                "phi": self.phi, "outer": self.outer}

    @classmethod
    def from_json(cls, d: dict) -> "Body":
        return cls(tuple(d["center"]), d["r0"], d.get("a", 0.0), int(d.get("f", 3)),
                   d.get("phi", 0.0), bool(d.get("outer", False)))


@dataclass(frozen=True)
class BodyCollection:
    bodies: tuple
    dmin: float
    r0: float = 1.0
    seed: int | None = None
    outer: Body | None = None
    info: dict = field(default_factory=dict, compare=False)

    @property
    def K(self) -> int:
        return len(self.bodies)

    def all_bodies(self):
        """Outer circle first (if any), then the inclusions."""
        return ((self.outer,) if self.outer is not None else ()) + tuple(self.bodies)

    def resolutions(self, level: int = 1):
        """Per-body node counts: ``level`` times the base resolution."""
        return [level * base_resolution(b.max_radius, self.dmin) for b in self.all_bodies()]

    def to_json(self) -> dict:
        return {"dmin": self.dmin, "r0": self.r0, "seed": self.seed,
                "outer": None if self.outer is None else self.outer.to_json(),
                "bodies": [b.to_json() for b in self.bodies],
                "separations": self.info.get("separations")}

    @classmethod
    def from_json(cls, d: dict) -> "BodyCollection":
        outer = Body.from_json(d["outer"]) if d.get("outer") else None
        return cls(tuple(Body.from_json(b) for b in d["bodies"]), d["dmin"], d.get("r0", 1.0),
                   d.get("seed"), outer)


def base_resolution(R: float, dmin: float) -> int:
    """Smallest even N with 2 pi R / N <= sqrt(dmin) (at least 16)."""
    return max(even_ceil(2 * np.pi * R / np.sqrt(dmin)), 16)


def spiral_sampler(a: float = 3.0, b: float = 1.0, p: float = 1.0,
                   s_range=(np.pi, 2.5 * np.pi), noise: float = 1.0):
    """Centers near two entwined spirals (as s + b)^p (cos(s + xi), sin(s + xi)), xi in {0, pi}."""
    def sample(rng):
        xi = np.pi * rng.integers(2)
        s = rng.uniform(*s_range)
        rad = (a * s + b) ** p
        return np.array([rad * np.cos(s + xi), rad * np.sin(s + xi)]) + rng.uniform(-noise, noise, 2)
    return sample


def disk_sampler(radius: float):
    """Rejection sampling in the square [-radius, radius]^2, keeping |c| <= radius."""
    def sample(rng):
        while True:
            c = rng.uniform(-radius, radius, 2)
            if np.hypot(*c) <= radius:
                return c
    return sample


def _coarse_points(body: Body, M: int = 128):
    t = 2 * np.pi * np.arange(M) / M
    return body.curve.points(t)


def _approx_sep(bi: Body, bj: Body, M: int = 128) -> float:
    pi, pj = _coarse_points(bi, M), _coarse_points(bj, M)
    if _overlap(bi, bj, pi, pj):
        return 0.0
    d, _ = cKDTree(pj).query(pi)
    return float(d.min())


def _overlap(bi, bj, pi, pj) -> bool:
    import shapely
    return bool(shapely.Polygon(pi).intersects(shapely.Polygon(pj)))


def _ring_sep_approx(body: Body, ring: Body, M: int = 128) -> float:
    p = _coarse_points(body, M) - np.asarray(ring.center)
    return float(ring.r - np.hypot(p[:, 0], p[:, 1]).max())


def minimum_separation(ci: AnalyticCurve, cj: AnalyticCurve, M: int = 256) -> float:
    """Distance between two disjoint closed curves by Newton refinement of the
    closest parameter pair found on an M x M grid."""
    t = 2 * np.pi * np.arange(M) / M
    zi, zj = ci.z(t), cj.z(t)
    D = np.abs(zi[:, None] - zj[None, :])
    i, j = np.unravel_index(np.argmin(D), D.shape)
    coarse = float(D[i, j])
    s, u = t[i], t[j]
    converged = False
    for _ in range(60):
        d = ci.z(s) - cj.z(u)
        d1s, d2s = ci.z(s, 1), ci.z(s, 2)
        d1u, d2u = cj.z(u, 1), cj.z(u, 2)
        g = np.array([np.real(np.conj(d) * d1s), -np.real(np.conj(d) * d1u)])
        H = np.array([[abs(d1s) ** 2 + np.real(np.conj(d) * d2s), -np.real(np.conj(d1s) * d1u)],
                      [-np.real(np.conj(d1s) * d1u), abs(d1u) ** 2 - np.real(np.conj(d) * d2u)]])
        try:
            step = np.linalg.solve(H, g)
        except np.linalg.LinAlgError:
            break
        s, u = s - step[0], u - step[1]
        if np.max(np.abs(step)) < 1e-13:
            converged = True
            break
    dist = float(abs(ci.z(s) - cj.z(u)))
    if not converged or not np.isfinite(dist) or dist > coarse + 1e-12:
        warnings.warn("Newton refinement of the curve distance failed; using a fine grid",
                      RuntimeWarning, stacklevel=2)
        tf = 2 * np.pi * np.arange(16 * M) / (16 * M)
        d, _ = cKDTree(cj.points(tf)).query(ci.points(tf))
        return float(d.min())
    return dist


def ring_separation(curve: AnalyticCurve, ring_radius: float, ring_center=(0.0, 0.0),
                    M: int = 256) -> float:
    """Gap between a body inside a circle and the circle (Newton on |Z - c|^2)."""
    c = complex(*ring_center)
    t = 2 * np.pi * np.arange(M) / M
    s = t[np.argmax(np.abs(curve.z(t) - c))]
    for _ in range(50):
        d = curve.z(s) - c
        d1, d2 = curve.z(s, 1), curve.z(s, 2)
        g = np.real(np.conj(d) * d1)
        h = abs(d1) ** 2 + np.real(np.conj(d) * d2)
        if h >= 0:
            break
        step = g / h
        s -= step
        if abs(step) < 1e-14:
            break
    return float(ring_radius - abs(curve.z(s) - c))


def pairwise_separations(coll: BodyCollection, exact: bool = True):
    """List of (i, j, distance); j = -1 stands for the outer circle."""
    out = []
    bodies = coll.bodies
    C = np.array([b.center for b in bodies]).reshape(-1, 2)
    R = np.array([b.max_radius for b in bodies])
    for i in range(len(bodies)):
        for j in range(i + 1, len(bodies)):
            gap = np.hypot(*(C[i] - C[j])) - R[i] - R[j]
            if gap > 10 * coll.dmin + 1.0 and not exact:
                continue
            if exact:
                d = minimum_separation(bodies[i].curve, bodies[j].curve)
            else:
                d = _approx_sep(bodies[i], bodies[j])
            out.append((i, j, d))
        if coll.outer is not None:
            o = coll.outer
            d = ring_separation(bodies[i].curve, o.r, o.center) if exact else _ring_sep_approx(bodies[i], o)
            out.append((i, -1, d))
    return out


class _Layout:
    """Mutable helper for growing/shrinking bodies with neighbor distances."""

    def __init__(self, bodies, dmin, ring, exact=False):
        self.bodies = list(bodies)
        self.dmin = dmin
        self.ring = ring
        self.exact = exact

    def sep_to_others(self, i, body=None):
        b = self.bodies[i] if body is None else body
        best = np.inf
        for j, o in enumerate(self.bodies):
            if j == i:
                continue
            gap = np.hypot(b.center[0] - o.center[0], b.center[1] - o.center[1]) - b.max_radius - o.max_radius
            if gap > 2 * self.dmin + 0.5:
                best = min(best, gap)
                continue
            if self.exact:
                if _overlap(b, o, _coarse_points(b), _coarse_points(o)):
                    d = 0.0
                else:
                    d = minimum_separation(b.curve, o.curve)
            else:
                d = _approx_sep(b, o)
            best = min(best, d)
        if self.ring is not None:
            rs = (ring_separation(b.curve, self.ring.r, self.ring.center) if self.exact
                  else _ring_sep_approx(b, self.ring))
            best = min(best, rs)
        return best

    def rescue(self, i):
        """Shrink body i in steps of dmin/10 until its separation exceeds dmin,
        then bisect the radius so that the separation lands in (dmin, 1.1 dmin]."""
        d = self.dmin
        b = self.bodies[i]
        big = b.max_radius
        sep = self.sep_to_others(i)
        while sep <= d:
            big = b.max_radius
            b = b.with_max_radius(b.max_radius - d / 10)
            if b.max_radius <= d:
                raise GeometryError(f"body {i} cannot be separated from its neighbors")
            sep = self.sep_to_others(i, b)
        small = b.max_radius
        lo_b = b
        for _ in range(40):
            if sep <= 1.1 * d:
                break
            mid = lo_b.with_max_radius(0.5 * (small + big))
            s_mid = self.sep_to_others(i, mid)
            if s_mid > d:
                small, b, sep = mid.max_radius, mid, s_mid
            else:
                big = mid.max_radius
        self.bodies[i] = b
        return sep

    def expand(self, i):
        d = self.dmin
        b = self.bodies[i]
        R = b.max_radius
        while True:
            cand = b.with_max_radius(b.max_radius + d)
            sep = self.sep_to_others(i, cand)
            b = cand
            if sep < d:
                self.bodies[i] = b
                self.rescue(i)
                return
            if b.max_radius > 1.5 * R:
                self.bodies[i] = b
                return


def generate_bodies(K: int, dmin: float, r0: float = 1.0, center_sampler=None, seed=None,
                    max_attempts: int = 100_000, outer_radius: float | None = None,
                    ensure_close_pair: bool = True) -> BodyCollection:
    """Random polydisperse star bodies with minimum separation ``dmin``.

    Centers are accepted when at least 2 r0 from all earlier centers. Shapes
    get a random frequency in 3..7 (weights 16:8:4:2:1), amplitude uniform in
    [0, 0.3 (3/f)^1.5] and rotation uniform in [0, 2 pi). All bodies are scaled
    to maximum radius r0 + dmin/2, then three rounds of expand/rescue on 10% of
    the bodies, then a final rescue with Newton distances. ``outer_radius``
    adds a confining circle centered at the origin that bodies keep dmin away
    from. With ``ensure_close_pair`` a body is finally translated towards its
    nearest neighbor if no pair ended up in (dmin, 1.1 dmin].
    """
    if K < 0:
        raise ValueError("K must be >= 0")
    if dmin <= 0 or r0 <= 0:
        raise ValueError("dmin and r0 must be positive")
    rng = np.random.default_rng(seed)
    if center_sampler is None:
        center_sampler = disk_sampler(2 * r0 * np.sqrt(max(K, 1)) + r0)
    ring = None if outer_radius is None else Body((0.0, 0.0), float(outer_radius), outer=True)
    centers = []
    for k in range(K):
        for _ in range(max_attempts):
            c = np.asarray(center_sampler(rng), dtype=float)
            if all(np.hypot(*(c - o)) >= 2 * r0 for o in centers):
                centers.append(c)
                break
        else:
            raise GeometryError(f"could not place center {k + 1} of {K} in {max_attempts} attempts")
    bodies = []
    for c in centers:
        f = int(rng.choice(FREQS, p=FREQ_PROBS))
        a = float(rng.uniform(0, 0.3 * (3 / f) ** 1.5))
        phi = float(rng.uniform(0, 2 * np.pi))
        bodies.append(Body((float(c[0]), float(c[1])), r0, a, f, phi))
    bodies = [b.with_max_radius(r0 + dmin / 2) for b in bodies]
    lay = _Layout(bodies, dmin, ring)
    if ring is not None:
        for i in range(K):
            if lay.sep_to_others(i) < dmin:
                lay.rescue(i)
    nsel = max(1, int(round(0.1 * K))) if K else 0
    for _ in range(3):
        for i in rng.choice(K, size=nsel, replace=False) if K else []:
            lay.expand(int(i))
    lay.exact = True
    for i in range(K):
        if lay.sep_to_others(i) < dmin:
            lay.rescue(i)
    coll = BodyCollection(tuple(lay.bodies), dmin, r0, seed, ring)
    if ensure_close_pair and K >= 2:
        coll = _close_one_pair(coll, lay)
    seps = pairwise_separations(coll)
    coll.info["separations"] = {"min": min(s for *_, s in seps) if seps else None,
                                "close_pairs": [(i, j) for i, j, s in seps
                                                if j >= 0 and dmin < s <= 1.1 * dmin]}
    return coll


def _close_one_pair(coll: BodyCollection, lay: _Layout) -> BodyCollection:
    d = coll.dmin
    seps = [(s, i, j) for i, j, s in pairwise_separations(coll) if j >= 0]
    if any(d < s <= 1.1 * d for s, _, _ in seps):
        return coll
    for s0, i, j in sorted(seps):
        bi, bj = lay.bodies[i], lay.bodies[j]
        ci, cj = np.asarray(bi.center), np.asarray(bj.center)
        u = (ci - cj) / np.hypot(*(ci - cj))
        # translate body j towards body i by x, bisecting for a gap in (d, 1.1 d]
        lo, hi = 0.0, float(np.hypot(*(ci - cj)))
        target = 1.05 * d
        for _ in range(60):
            x = 0.5 * (lo + hi)
            trial_j = bj.moved(cj + x * u)
            if _overlap(bi, trial_j, _coarse_points(bi), _coarse_points(trial_j)):
                s = 0.0
            else:
                s = minimum_separation(bi.curve, trial_j.curve)
            if d < s <= 1.1 * d:
                break
            if s > target:
                lo = x
            else:
                hi = x
        moved = bj.moved(cj + x * u)
        trial = list(lay.bodies)
        trial[j] = moved
        lay2 = _Layout(trial, d, lay.ring, exact=True)
        if lay2.sep_to_others(j) > d:
            lay.bodies = trial
            return replace(coll, bodies=tuple(trial), info=dict(coll.info))
    return coll


def fluid_far_point(coll: BodyCollection, M: int = 64):
    """A grid point in the fluid maximizing the distance to all boundaries."""
    pts = np.concatenate([_coarse_points(b, 256) for b in coll.all_bodies()])
    if coll.outer is not None:
        R = coll.outer.r
        lo, hi = np.array(coll.outer.center) - R, np.array(coll.outer.center) + R
    else:
        lo, hi = pts.min(0) - 1, pts.max(0) + 1
    g = np.stack(np.meshgrid(np.linspace(lo[0], hi[0], M), np.linspace(lo[1], hi[1], M)), -1).reshape(-1, 2)
    import shapely
    inside = np.zeros(len(g), bool)
    for b in coll.bodies:
        inside |= shapely.contains_xy(shapely.Polygon(_coarse_points(b, 256)), g[:, 0], g[:, 1])
    if coll.outer is not None:
        inside |= np.hypot(*(g - np.asarray(coll.outer.center)).T) >= coll.outer.r
    d, _ = cKDTree(pts).query(g)
    d[inside] = -1
    return g[int(np.argmax(d))]


# -------------------------------------------------------------------- backends

def direct_backend(qspec: KernelSpec, sources, normals, strengths, targets):
    """Direct O(N M) proxy sum; the default implementation of the summation contract."""
    return potential_apply(qspec, targets, sources, strengths, normals, np.ones(len(sources)))


class DenseCachedBackend:
    """Direct summation through a cached dense matrix (fast repeated matvecs)."""

    tol = 1e-13

    def __init__(self, max_entries: int = 60_000_000):
        self.max_entries = max_entries
        self._cache = {}

    @staticmethod
    def _key(qspec, *arrays):
        h = hashlib.sha1(repr((qspec.pde, complex(qspec.alpha), complex(qspec.beta), qspec.k,
                               qspec.mu)).encode())
        for a in arrays:
            h.update(np.ascontiguousarray(a).tobytes())
        return h.hexdigest()

    def __call__(self, qspec, sources, normals, strengths, targets):
        n = qspec.dof ** 2 * len(sources) * len(targets)
        if n > self.max_entries:
            return direct_backend(qspec, sources, normals, strengths, targets)
        key = self._key(qspec, sources, normals, targets)
        M = self._cache.get(key)
        if M is None:
            M = potential_matrix(qspec, targets, sources, normals, np.ones(len(sources)))
            self._cache = {key: M}  # keep only the most recent operator
        return M @ strengths


BACKENDS = {"direct": (direct_backend, 0.0)}


def register_backend(name: str, fn, tol: float) -> None:
    """Add a summation backend with its declared relative tolerance versus direct."""
    BACKENDS[name] = (fn, float(tol))


def get_summation_backend(backend):
    if backend is None:
        return direct_backend
    if callable(backend):
        return backend
    if backend == "dense":
        return DenseCachedBackend()
    try:
        return BACKENDS[backend][0]
    except KeyError:
        raise ValueError(f"unknown summation backend {backend!r}; have {sorted(BACKENDS)} and 'dense'")


# --------------------------------------------------------------------- solvers

@dataclass(eq=False)
class BvpSolution:
    pde: str
    spec: KernelSpec
    coll: BodyCollection
    quadrature: str
    Ns: list
    quads: list
    densities: list
    strengths: list
    ops: list
    iters: int
    residuals: list
    converged: bool
    info: dict = field(default_factory=dict)


def _to_global_blocked(parts, dof):
    """Per-body vectors [x_i; y_i] -> [x_1 .. x_K; y_1 .. y_K] (identity for dof 1)."""
    if dof == 1:
        return np.concatenate(parts)
    return np.concatenate([np.concatenate([p[:len(p) // 2] for p in parts]),
                           np.concatenate([p[len(p) // 2:] for p in parts])])


def _from_global_blocked(vec, sizes, dof):
    """Inverse of :func:`_to_global_blocked` for target values."""
    if dof == 1:
        return np.split(vec, np.cumsum(sizes)[:-1])
    n = sum(sizes)
    x, y = vec[:n], vec[n:]
    xs, ys = np.split(x, np.cumsum(sizes)[:-1]), np.split(y, np.cumsum(sizes)[:-1])
    return [np.concatenate([a, b]) for a, b in zip(xs, ys)]


def _kress_upsample_count(quad, dist, N, max_factor=64):
    """Plain-rule resolution giving ~1e-16 error at distance ``dist``."""
    smax = float(quad.speeds.max())
    need = np.log(1e16) * smax / max(dist, 1e-300)
    return int(min(max(even_ceil(need), N), max_factor * N))


def _min_dist(points, quad):
    d, _ = cKDTree(quad.nodes).query(points)
    return float(d.min())


def _plain_upsampled_matrix(spec, targets, curve, quad, pressure_mu=None):
    """Plain-rule matrix from density samples on ``quad`` to targets, upsampled
    by the distance rule; pressure rows when ``pressure_mu`` is set."""
    N = quad.N
    dist = _min_dist(targets, quad)
    Nup = _kress_upsample_count(quad, dist, N)
    qup = ptr_quadrature(curve, Nup)
    L = upsampling_matrix(N, Nup)
    if spec.dof > 1:
        L = np.kron(np.eye(2), L)
    if pressure_mu is not None:
        M = stokes_pressure_matrix(pressure_mu, targets, qup, (np.real(spec.alpha), np.real(spec.beta)))
    else:
        M = potential_matrix(spec, targets, qup)
    return M @ L


class _Problem:
    """Block system shared by the Helmholtz and Stokes solvers."""

    def __init__(self, coll, specs, Ns, cfg, quadrature, backend, workers):
        self.coll = coll
        self.bodies = coll.all_bodies()
        self.specs = specs
        self.Ns = Ns
        self.cfg = cfg
        self.quadrature = quadrature
        self.backend = get_summation_backend(backend)
        self.dof = specs[0].dof
        self.curves = [b.curve for b in self.bodies]
        self.quads = [ptr_quadrature(c, N) for c, N in zip(self.curves, Ns)]
        self.sizes = [q.N for q in self.quads]
        self.nodes = np.concatenate([q.nodes for q in self.quads])
        self.offsets = np.concatenate([[0], np.cumsum([self.dof * n for n in self.sizes])])
        self.rank1 = [None] * len(self.bodies)
        self.ops = [None] * len(self.bodies)
        self.workers = workers
        if quadrature == "qfs":
            self._build_qfs()
        elif quadrature == "kress":
            self._build_kress()
        else:
            raise ValueError("quadrature must be 'qfs' or 'kress'")

    def _cfg_for(self, body):
        return replace(self.cfg, interior=True) if body.outer else self.cfg

    def _build_qfs(self):
        def one(i):
            return qfsd_precompute(self.curves[i], self.Ns[i], self.specs[i], cfg=self._cfg_for(self.bodies[i]))
        idx = range(len(self.bodies))
        if self.workers > 1:
            with ThreadPoolExecutor(self.workers) as ex:
                self.ops = list(ex.map(one, idx))
        else:
            self.ops = [one(i) for i in idx]
        qspecs = {(complex(o.qspec.alpha), complex(o.qspec.beta)) for o in self.ops}
        if len(qspecs) != 1:
            raise ValueError("all bodies must share one proxy mixture for the summation call")
        self.qspec = self.ops[0].qspec
        self.src = np.concatenate([o.sources.points for o in self.ops])
        self.src_n = np.concatenate([o.sources.normals for o in self.ops])
        self.diag = []
        for i, op in enumerate(self.ops):
            A = op.nystrom.copy()
            if self.bodies[i].outer:
                self.rank1[i] = self._nn(self.quads[i])
                A = A + self.rank1[i]
            self.diag.append(A)
        self.inv = [np.linalg.inv(A) for A in self.diag]

    def _build_kress(self):
        n = self.offsets[-1]
        self.full = np.zeros((n, n), dtype=self.specs[0].dtype)
        self.diag = []
        for i, (c, q, spec, body) in enumerate(zip(self.curves, self.quads, self.specs, self.bodies)):
            A = kress_nystrom_matrix(c, q.N, spec, side="interior" if body.outer else "exterior")
            if body.outer:
                self.rank1[i] = self._nn(q)
                A = A + self.rank1[i]
            self.diag.append(A)
        for j, (c, q, spec) in enumerate(zip(self.curves, self.quads, self.specs)):
            sj = slice(self.offsets[j], self.offsets[j + 1])
            self.full[sj, sj] = self.diag[j]
            for i in range(len(self.bodies)):
                if i == j:
                    continue
                si = slice(self.offsets[i], self.offsets[i + 1])
                self.full[si, sj] = _plain_upsampled_matrix(spec, self.quads[i].nodes, c, q)
        self.inv = [np.linalg.inv(A) for A in self.diag]

    def _nn(self, q):
        """Rank-one n n^T with arc-length weights on the source side (blocked)."""
        nb = np.concatenate([q.normals[:, 0], q.normals[:, 1]])
        w = np.concatenate([q.weights, q.weights])
        return np.outer(nb, w * nb)

    def split(self, v):
        return [v[self.offsets[i]:self.offsets[i + 1]] for i in range(len(self.bodies))]

    def densities(self, vt, precondition):
        parts = self.split(vt)
        return [Ai @ p for Ai, p in zip(self.inv, parts)] if precondition else parts

    def strengths(self, taus):
        return [qfs_apply(op, t) for op, t in zip(self.ops, taus)]

    def matvec(self, vt, precondition=True):
        taus = self.densities(vt, precondition)
        if self.quadrature == "kress":
            return self.full @ np.concatenate(taus)
        sig = _to_global_blocked(self.strengths(taus), self.dof)
        u = self.backend(self.qspec, self.src, self.src_n, sig, self.nodes)
        out = _from_global_blocked(u, self.sizes, self.dof)
        for i, R in enumerate(self.rank1):
            if R is not None:
                out[i] = out[i] + R @ taus[i]
        return np.concatenate(out)

    def solve(self, rhs, tol, precondition, max_iter):
        res = gmres(lambda v: self.matvec(v, precondition), rhs, tol=tol, max_iter=max_iter)
        taus = self.densities(res.x, precondition)
        sig = self.strengths(taus) if self.quadrature == "qfs" else [None] * len(taus)
        return res, taus, sig


def _default_cfg(cfg, gmres_tol):
    if cfg is not None:
        return cfg
    return QfsConfig(eps=max(min(gmres_tol, 1e-6), 1e-14), speed_fraction=0.5)


def solve_helmholtz_scattering(coll: BodyCollection, k: float, direction=(1.0, 0.0),
                               gmres_tol: float = 1e-12, cfg: QfsConfig | None = None,
                               backend="direct", level: int = 1, Ns=None,
                               quadrature: str = "qfs", precondition: bool = True,
                               amplitude: float = 1.0, max_iter: int = 2000,
                               workers: int = 1) -> BvpSolution:
    """Sound-soft scattering of u_inc = amplitude e^{i k d.x} by all bodies.

    CFIE representation u = (D - i k S) tau; data f = -u_inc on each boundary.
    """
    if coll.outer is not None:
        raise ValueError("Helmholtz scattering is posed in the exterior; remove the outer circle")
    d = np.asarray(direction, dtype=float)
    d = d / np.linalg.norm(d)
    spec = KernelSpec("helmholtz2d", -1j * k, 1.0, k=k)
    Ns = list(Ns) if Ns is not None else coll.resolutions(level)
    cfg = _default_cfg(cfg, gmres_tol)
    prob = _Problem(coll, [spec] * coll.K, Ns, cfg, quadrature, backend, workers)
    f = -amplitude * np.exp(1j * k * (prob.nodes @ d))
    res, taus, sig = prob.solve(f, gmres_tol, precondition, max_iter)
    return BvpSolution("helmholtz2d", spec, coll, quadrature, Ns, prob.quads, taus, sig, prob.ops,
                       res.iters, res.residuals, res.converged,
                       info={"k": k, "direction": d, "problem": prob})


def solve_stokes_driven_flow(coll: BodyCollection, mu: float = 1.0, gmres_tol: float = 1e-9,
                             cfg: QfsConfig | None = None, backend="direct", level: int = 1,
                             Ns=None, quadrature: str = "qfs", precondition: bool = True,
                             wall_velocity=(1.0, 0.0), max_iter: int = 2000,
                             workers: int = 1) -> BvpSolution:
    """Stokes flow inside the outer circle with no-slip inclusions.

    Outer circle: interior DLP plus the rank-one n n^T completion; inclusions:
    the completed S + D representation.
    """
    if coll.outer is None:
        raise ValueError("driven flow needs an outer circle (generate_bodies(..., outer_radius=R))")
    inc = KernelSpec("stokes2d", 1.0, 1.0, mu=mu)
    wall = KernelSpec("stokes2d", 0.0, 1.0, mu=mu)
    specs = [wall] + [inc] * coll.K
    Ns = list(Ns) if Ns is not None else coll.resolutions(level)
    cfg = _default_cfg(cfg, gmres_tol)
    prob = _Problem(coll, specs, Ns, cfg, quadrature, backend, workers)
    f = []
    for i, q in enumerate(prob.quads):
        if i == 0:
            f.append(np.concatenate([np.full(q.N, wall_velocity[0]), np.full(q.N, wall_velocity[1])]))
        else:
            f.append(np.zeros(2 * q.N))
    res, taus, sig = prob.solve(np.concatenate(f), gmres_tol, precondition, max_iter)
    return BvpSolution("stokes2d", inc, coll, quadrature, Ns, prob.quads, taus, sig, prob.ops,
                       res.iters, res.residuals, res.converged,
                       info={"mu": mu, "specs": specs, "problem": prob})


def evaluate_field(sol: BvpSolution, targets, backend=None):
    """Solution values at targets in the solution domain (Stokes: blocked velocity)."""
    T = np.asarray(targets, dtype=float).reshape(-1, 2)
    prob = sol.info["problem"]
    if sol.quadrature == "qfs":
        be = get_summation_backend(backend) if backend is not None else prob.backend
        sig = _to_global_blocked(sol.strengths, prob.dof)
        return be(prob.qspec, prob.src, prob.src_n, sig, T)
    out = 0
    for c, q, spec, tau in zip(prob.curves, prob.quads, prob.specs, sol.densities):
        out = out + _plain_upsampled_matrix(spec, T, c, q) @ tau
    return out


def evaluate_pressure_field(sol: BvpSolution, targets):
    """Stokes pressure at targets (QFS proxies, or upsampled plain rule for 'kress')."""
    if sol.pde != "stokes2d":
        raise ValueError("pressure is defined for Stokes only")
    T = np.asarray(targets, dtype=float).reshape(-1, 2)
    prob = sol.info["problem"]
    mu = sol.info["mu"]
    out = np.zeros(len(T))
    if sol.quadrature == "qfs":
        for op, s in zip(prob.ops, sol.strengths):
            out += stokes_pressure_matrix(mu, T, op.sources.points,
                                          (np.real(op.qspec.alpha), np.real(op.qspec.beta)),
                                          normals=op.sources.normals, weights=np.ones(op.P)) @ s
        return out
    for c, q, spec, tau in zip(prob.curves, prob.quads, prob.specs, sol.densities):
        out += _plain_upsampled_matrix(spec, T, c, q, pressure_mu=mu) @ tau
    return out
