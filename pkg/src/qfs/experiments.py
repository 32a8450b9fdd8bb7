"""
Reproducible studies behind the command-line harness and the acceptance suite.

Each function returns plain data (dicts of arrays or lists of row dicts) so it
can be written to CSV or checked against a tolerance. Nothing here plots.
"""
from __future__ import annotations

import time

import numpy as np

from .core import (
    QfsConfig,
    evaluate_potential,
    explicit_source_matrix,
    qfs_apply,
    qfsb_precompute,
    qfsd_precompute,
)
from .curve2d import (
    circle_curve,
    estimate_max_shift,
    nyquist_decay_ratio,
    ptr_quadrature,
    shifted_curve_samples,
    starfish_curve,
    upsampling_matrix,
)
from .kernels import KernelSpec, potential_matrix
from .reference import (
    T_STAR,
    adaptive_near_oracle,
    kress_nystrom_matrix,
    plain_evaluate,
    test_density,
)

__all__ = [
    "MIXTURES",
    "one_body_spec",
    "test_targets",
    "converge2d",
    "fit_rate",
    "summarize_convergence",
    "gauss_law_2d",
    "gauss_law_3d",
    "shift_geometry",
    "eigen_decay",
    "dalias_smallest_singular_value",
    "stokes_spectrum",
    "capacity_fix_study",
    "ptr_rate",
    "upsampling_exactness",
    "stability_study",
    "helmholtz_levels",
    "stokes_levels",
    "laplace3d_study",
    "sphere_capacitance",
]

MIXTURES = {"slp": (1.0, 0.0), "dlp": (0.0, 1.0), "both": (1.0, 1.0)}
PDE_NAMES = {"laplace": "laplace2d", "helmholtz": "helmholtz2d", "stokes": "stokes2d",
             "laplace2d": "laplace2d", "helmholtz2d": "helmholtz2d", "stokes2d": "stokes2d"}


def one_body_spec(pde: str, mixture="slp", k: float = 20.0, mu: float = 0.7) -> KernelSpec:
    """Kernel of the one-body tests: Helmholtz k = 20, Stokes mu = 0.7."""
    pde = PDE_NAMES[pde]
    mix = MIXTURES[mixture] if isinstance(mixture, str) else tuple(mixture)
    if pde == "helmholtz2d":
        return KernelSpec(pde, mix[0], mix[1], k=k)
    if pde == "stokes2d":
        return KernelSpec(pde, mix[0], mix[1], mu=mu)
    return KernelSpec(pde, mix[0], mix[1])


def test_targets(curve, t0: float = 0.3, dist: float = 1e-4, side: str = "exterior",
                 far=None):
    """(near, far) targets: ``dist`` off the boundary at parameter t0, and a far point."""
    z = curve.z(np.array([t0]))[0]
    dz = curve.z(np.array([t0]), 1)[0]
    n = -1j * dz / abs(dz)
    s = 1.0 if side == "exterior" else -1.0
    p = z + s * dist * n
    if far is None:
        far = (1.8, 1.2) if side == "exterior" else (0.1, -0.2)
    return np.array([p.real, p.imag]), np.asarray(far, dtype=float)


def _split(u, dof):
    """Values per target: scalars, or (u1, u2) rows for Stokes' blocked output."""
    u = np.asarray(u)
    if dof == 1:
        return u
    m = u.shape[0] // 2
    return np.stack([u[:m], u[m:]], axis=1)


def converge2d(pde="laplace", mixture="slp", variant="D", eps=1e-12, Ns=None,
               side="exterior", curve=None, t0=0.3, dist=1e-4, oracle=True,
               k=20.0, mu=0.7, cfg_overrides=None):
    """Convergence of one-body evaluation errors against gold standards.

    For each N returns the QFS error and the plain-rule error at the near and
    far targets, the error of the adaptive oracle run on the N-point density
    interpolant (near target), and the Nyquist decay ratio of the samples.
    References: adaptive integration of the exact density (near) and a
    2 max(N) plain rule (far).
    """
    curve = curve or starfish_curve()
    spec = one_body_spec(pde, mixture, k, mu)
    Ns = list(Ns or range(100, 601, 50))
    near, far = test_targets(curve, t0, dist, side)
    dens = lambda t: test_density(spec.pde, t)  # noqa: E731
    ref_near, _ = adaptive_near_oracle(curve, dens, near, spec)
    ref_far = _split(plain_evaluate(curve, 2 * max(Ns) + 400, spec, dens, far[None]), spec.dof)[0]
    cfg = QfsConfig(eps=eps, variant=variant.upper(), interior=(side == "interior"),
                    **(cfg_overrides or {}))
    rows = []
    for N in Ns:
        t = time.perf_counter()
        if cfg.variant == "D":
            op = qfsd_precompute(curve, N, spec, cfg=cfg)
        else:
            A = kress_nystrom_matrix(curve, N, spec, side=side)
            op = qfsb_precompute(curve, N, spec, A, cfg=cfg)
        tau = dens(op.quad.params)
        u = _split(evaluate_potential(op, qfs_apply(op, tau), np.vstack([near, far])), spec.dof)
        plain = _split(plain_evaluate(curve, N, spec, tau, np.vstack([near, far])), spec.dof)
        row = {
            "N": N,
            "qfs_near": float(np.max(np.abs(u[0] - ref_near))),
            "qfs_far": float(np.max(np.abs(u[1] - ref_far))),
            "plain_near": float(np.max(np.abs(plain[0] - ref_near))),
            "plain_far": float(np.max(np.abs(plain[1] - ref_far))),
            "nyquist_ratio": nyquist_decay_ratio(tau if spec.dof == 1 else tau.reshape(2, -1).T),
            "P": op.P,
            "delta": op.delta,
            "fallback": bool(op.info.get("fallback", False)),
        }
        if oracle:
            val, _ = adaptive_near_oracle(curve, tau, near, spec)
            row["oracle_near"] = float(np.max(np.abs(val - ref_near)))
        row["seconds"] = time.perf_counter() - t
        rows.append(row)
    return rows


def fit_rate(Ns, errs, floor: float, ceiling: float = 1e-2) -> float:
    """Exponential rate d in err ~ C exp(-d N) by least squares on log errors in (floor, ceiling)."""
    Ns = np.asarray(Ns, dtype=float)
    errs = np.asarray(errs, dtype=float)
    m = (errs > floor) & (errs < ceiling)
    if m.sum() < 2:
        return float("nan")
    return float(-np.polyfit(Ns[m], np.log(errs[m]), 1)[0])


def summarize_convergence(rows, eps: float, delta_star: float = float(np.imag(T_STAR))):
    """Rate, saturation and far-target tracking of a :func:`converge2d` run.

    * ``rate``: fit of the near-target QFS error over N without the source
      fallback, errors in (100 eps, 1e-2); ``expected`` = delta_star / 2.
    * ``saturation``: max near error over the last three N.
    * ``far_lag``: how many N steps the QFS far error needs beyond the plain
      rule to drop below 100 eps (None if it never does).
    """
    Ns = np.array([r["N"] for r in rows])
    near = np.array([r["qfs_near"] for r in rows])
    far = np.array([r["qfs_far"] for r in rows])
    plain = np.array([r["plain_far"] for r in rows])
    keep = ~np.array([r.get("fallback", False) for r in rows])
    rate = fit_rate(Ns[keep], near[keep], 100 * eps)

    def first_below(e):
        idx = np.flatnonzero(e <= 100 * eps)
        return int(idx[0]) if idx.size else None

    iq, ip = first_below(far), first_below(plain)
    lag = None if iq is None or ip is None else iq - ip
    return {"rate": rate, "expected": delta_star / 2, "saturation": float(near[-3:].max()),
            "far_final": float(far[-3:].max()), "far_lag": lag}


def gauss_law_2d(eps: float, N: int = 200, curve=None):
    """max |D[1]| at exterior targets on the boundary, 1e-12 off it, and far away."""
    curve = curve or starfish_curve()
    spec = KernelSpec("laplace2d", 0.0, 1.0)
    op = qfsd_precompute(curve, N, spec, cfg=QfsConfig(eps=eps))
    sigma = qfs_apply(op, np.ones(N))
    q = ptr_quadrature(curve, 2 * N)
    off = q.nodes[1::2]
    nrm = q.normals[1::2]
    out = {
        "on_boundary": op.quad.nodes,
        "at_1e-12": off + 1e-12 * nrm,
        "near_1e-4": off + 1e-4 * nrm,
        "far": 2.5 * q.nodes[::7] + np.array([0.2, -0.1]),
    }
    return {name: float(np.max(np.abs(evaluate_potential(op, sigma, pts)))) for name, pts in out.items()}


def gauss_law_3d(Nv: int = 24, semiaxes=(1.0, 1.0, 1.0), **params):
    """Same as :func:`gauss_law_2d` for the 3D QFS of the double layer on an ellipsoid."""
    from .laplace3d import ellipsoid_quadrature, qfs3d_precompute

    q = ellipsoid_quadrature(semiaxes, Nv)
    op = qfs3d_precompute(q, mixture=(0.0, 1.0), **params)
    sigma = op.strengths(np.ones(q.N))
    out = {
        "on_boundary": q.nodes,
        "at_1e-12": q.nodes + 1e-12 * q.normals,
        "near_1e-4": q.nodes + 1e-4 * q.normals,
        "far": 2.0 * q.nodes[::5] + np.array([0.3, -0.2, 0.1]),
    }
    return {name: float(np.max(np.abs(op.evaluate(sigma, pts)))) for name, pts in out.items()}


def shift_geometry(curve=None, variant="imaginary", tol=1e-4):
    """Largest valid source (interior) and check (exterior) shifts."""
    curve = curve or starfish_curve()
    return {
        "delta0_interior": estimate_max_shift(curve, "interior", tol=tol, variant=variant),
        "delta0_exterior": estimate_max_shift(curve, "exterior", tol=tol, variant=variant),
    }


def eigen_decay(delta: float, N: int = 128):
    """Circulant eigenvalues of the Laplace SLP map from N arclength-weighted
    sources on the radius exp(-delta) circle to N targets on the unit circle.

    Returns modes n = 0..N/2, the computed eigenvalues, the decay law
    exp(-delta(|n|+1)) / (2|n|), and the same law summed over aliases n + mN
    (the exact eigenvalue of the discrete map).
    """
    src = shifted_curve_samples(circle_curve(), delta, N, "interior", "imaginary")
    tgt = ptr_quadrature(circle_curve(), N)
    G = potential_matrix(KernelSpec("laplace2d"), tgt.nodes, src.points, weights=src.weights)
    lam = np.fft.fft(G[0])  # first row of a circulant; eigenvalues up to conjugation
    n = np.arange(N // 2 + 1)

    def law(m):
        m = np.abs(m).astype(float)
        with np.errstate(divide="ignore", invalid="ignore"):
            return np.where(m == 0, 0.0, np.exp(-delta * (m + 1)) / (2 * np.where(m == 0, 1, m)))

    aliased = sum(law(n + j * N) for j in range(-6, 7))
    return {"n": n, "computed": np.abs(lam[: N // 2 + 1]), "law": law(n), "aliased": aliased}


def dalias_smallest_singular_value(eps: float, N: int = 128, radius: float = 1.0):
    """Singular values of the unweighted SLP proxy-to-boundary matrix on concentric
    circles, with the source circle placed by the tolerance rule delta = ln(1/eps) / N.

    On the unit circle the constant mode of the SLP vanishes (unit logarithmic
    capacity), so ``smin`` is set by aliasing there; ``smin_nonconstant`` is the
    smallest singular value over the other modes.
    """
    delta = np.log(1.0 / eps) / N
    circ = circle_curve(radius)
    src = shifted_curve_samples(circ, delta, N, "interior", "imaginary")
    tgt = ptr_quadrature(circ, N)
    B = potential_matrix(KernelSpec("laplace2d"), tgt.nodes, src.points)
    lam = np.abs(np.fft.fft(B[0]))
    s = np.linalg.svd(B, compute_uv=False)
    return {"delta": delta, "smin": float(s[-1]), "smin_nonconstant": float(lam[1:].min()),
            "constant_mode": float(lam[0]), "sqrt_eps": float(np.sqrt(eps))}


def stokes_spectrum(N: int = 200, upsilon: float = 1.3, upsilon_c: float = 1.5, eps: float = 1e-12,
                    mu: float = 0.7, curve=None, kress=None):
    """Condition numbers and eigenvalues of the completed Stokes operator 1/2 + D + S
    filled by QFS-D and by Kress quadrature."""
    curve = curve or starfish_curve()
    spec = KernelSpec("stokes2d", 1.0, 1.0, mu=mu)
    op = qfsd_precompute(curve, N, spec, cfg=QfsConfig(eps=eps, upsilon=upsilon, upsilon_c=upsilon_c))
    K = kress_nystrom_matrix(curve, N, spec) if kress is None else kress
    ev = np.linalg.eigvals(op.nystrom)
    kq, kk = np.linalg.cond(op.nystrom), np.linalg.cond(K)
    return {"kappa_qfs": float(kq), "kappa_kress": float(kk), "ratio": float(kq / kk),
            "eigenvalues": ev, "frac_near_half": float(np.mean(np.abs(ev - 0.5) < 0.25))}


def capacity_fix_study(eps: float = 1e-10, N: int = 120, variant: str = "B"):
    """Laplace SLP on the unit disk (capacity 1) with and without the charge row.

    The density 1 + cos t + 0.3 sin 3t has an exact exterior SLP; the error is the
    max over two exterior targets.
    """
    curve = circle_curve()
    spec = KernelSpec("laplace2d", 1.0, 0.0)
    tg = np.array([[2.0, 0.3], [0.0, 1.5]])
    r = np.hypot(tg[:, 0], tg[:, 1])
    th = np.arctan2(tg[:, 1], tg[:, 0])
    exact = -np.log(r) + np.cos(th) / (2 * r) + 0.3 * np.sin(3 * th) / (6 * r ** 3)
    out = {}
    for fix in (False, True):
        cfg = QfsConfig(eps=eps, charge_fix=fix, variant=variant, check_rank=False)
        if variant.upper() == "D":
            op = qfsd_precompute(curve, N, spec, cfg=cfg)
        else:
            op = qfsb_precompute(curve, N, spec, kress_nystrom_matrix(curve, N, spec), cfg=cfg)
        t = op.quad.params
        u = evaluate_potential(op, qfs_apply(op, 1 + np.cos(t) + 0.3 * np.sin(3 * t)), tg)
        out["with_fix" if fix else "without_fix"] = float(np.max(np.abs(u - exact)))
    return out


def ptr_rate(Ns=None):
    """Trapezoid-rule errors for the integral of 1/(1.5 - cos t) and the fitted rate."""
    Ns = np.asarray(Ns if Ns is not None else np.arange(4, 41, 2))
    exact = 2 * np.pi / np.sqrt(1.5 ** 2 - 1)
    errs = np.array([abs(2 * np.pi / N * np.sum(1 / (1.5 - np.cos(2 * np.pi * np.arange(N) / N))) - exact)
                     for N in Ns])
    return {"N": Ns, "err": errs, "rate": fit_rate(Ns, errs, 1e-14, 1.0),
            "expected": float(np.arccosh(1.5))}


def upsampling_exactness(N: int = 32, Nt: int = 96, seed: int = 0):
    """Max error of the upsampling matrix on a random band-limited trigonometric polynomial
    (Nyquist mode as a cosine)."""
    rng = np.random.default_rng(seed)
    a = rng.standard_normal(N // 2)
    b = rng.standard_normal(N // 2)
    c = rng.standard_normal()

    def f(t):
        m = np.arange(N // 2)
        return (np.cos(np.outer(t, m)) @ a + np.sin(np.outer(t, m)) @ b + c * np.cos(N / 2 * t))

    t, tt = 2 * np.pi * np.arange(N) / N, 2 * np.pi * np.arange(Nt) / Nt
    return float(np.max(np.abs(upsampling_matrix(N, Nt) @ f(t) - f(tt))))


def stability_study(eps: float = 1e-12, Ns=(300, 400, 500), curve=None):
    """Near-target errors of sigma = Y(Z tau) versus an explicitly formed X tau (Laplace SLP)."""
    curve = curve or starfish_curve()
    spec = KernelSpec("laplace2d", 1.0, 0.0)
    near, _ = test_targets(curve)
    dens = lambda t: test_density("laplace2d", t)  # noqa: E731
    ref, _ = adaptive_near_oracle(curve, dens, near, spec)
    rows = []
    for N in Ns:
        op = qfsd_precompute(curve, N, spec, cfg=QfsConfig(eps=eps))
        tau = dens(op.quad.params)
        u1 = evaluate_potential(op, qfs_apply(op, tau), near[None])[0]
        u2 = evaluate_potential(op, explicit_source_matrix(op) @ tau, near[None])[0]
        rows.append({"N": N, "parenthesized": float(abs(u1 - ref)), "explicit": float(abs(u2 - ref))})
    return rows


def helmholtz_levels(coll, k=10.0, levels=(1, 2, 3, 4, 5), kress_levels=(), gmres_tol=1e-12,
                     backend="dense", target=(0.0, 0.0), **kw):
    """Refinement study of the multibody scattering solve at one target."""
    from .multibody import evaluate_field, solve_helmholtz_scattering

    x0 = np.asarray(target, dtype=float)[None, :]
    rows, prev = [], None
    for lev in levels:
        t = time.perf_counter()
        sol = solve_helmholtz_scattering(coll, k, gmres_tol=gmres_tol, backend=backend, level=lev, **kw)
        u = complex(evaluate_field(sol, x0)[0])
        row = {"level": lev, "unknowns": int(sum(sol.Ns)), "iters": sol.iters, "u_re": u.real,
               "u_im": u.imag, "self_diff": float("nan") if prev is None else abs(u - prev),
               "seconds": time.perf_counter() - t}
        prev = u
        if lev in kress_levels:
            t = time.perf_counter()
            solk = solve_helmholtz_scattering(coll, k, gmres_tol=gmres_tol, level=lev,
                                              quadrature="kress", **kw)
            uk = complex(evaluate_field(solk, x0)[0])
            row.update(kress_iters=solk.iters, kress_diff=abs(uk - u),
                       kress_seconds=time.perf_counter() - t)
        rows.append(row)
    return rows


def stokes_levels(coll, levels=(2, 3, 4), kress_levels=(), gmres_tol=1e-9, backend="dense",
                  target=None, targets_p=None, cfg=None, **kw):
    """Refinement study of the confined Stokes solve at one far point.

    Differences are normalized by max|u| and by the pressure drop p_drop (the range
    of p over ``targets_p``, by default points on a circle of radius 0.9 R).
    """
    from .multibody import evaluate_field, evaluate_pressure_field, fluid_far_point, solve_stokes_driven_flow

    x0 = (fluid_far_point(coll) if target is None else np.asarray(target, dtype=float))[None, :]
    if targets_p is None:
        R = coll.outer.r
        th = 2 * np.pi * np.arange(16) / 16
        targets_p = 0.9 * R * np.stack([np.cos(th), np.sin(th)], axis=1) + np.asarray(coll.outer.center)
    rows, prev = [], None
    for lev in levels:
        t = time.perf_counter()
        sol = solve_stokes_driven_flow(coll, gmres_tol=gmres_tol, backend=backend, level=lev, cfg=cfg, **kw)
        u = evaluate_field(sol, x0)
        p = float(evaluate_pressure_field(sol, x0)[0])
        pr = evaluate_pressure_field(sol, targets_p)
        p_drop = float(np.ptp(pr))
        umax = float(np.max(np.abs(u)))
        ref = _pressure_reference_check(sol)
        row = {"level": lev, "unknowns": int(2 * sum(sol.Ns)), "iters": sol.iters,
               "u1": float(u[0]), "u2": float(u[1]), "p": p, "p_drop": p_drop,
               "u_self_diff": float("nan") if prev is None else float(np.max(np.abs(u - prev[0])) / umax),
               "p_self_diff": float("nan") if prev is None else abs(p - prev[1]) / p_drop,
               "pressure_ref_err": ref, "seconds": time.perf_counter() - t}
        prev = (u, p)
        if lev in kress_levels:
            t = time.perf_counter()
            solk = solve_stokes_driven_flow(coll, gmres_tol=gmres_tol, level=lev, quadrature="kress", **kw)
            uk = evaluate_field(solk, x0)
            pk = float(evaluate_pressure_field(solk, x0)[0])
            row.update(kress_iters=solk.iters, kress_u_diff=float(np.max(np.abs(uk - u)) / umax),
                       kress_p_diff=abs(pk - p) / p_drop, kress_seconds=time.perf_counter() - t)
        rows.append(row)
    return rows


def _pressure_reference_check(sol):
    """|proxy pressure - plain pressure| at the outer body's reference point."""
    from .core import evaluate_pressure
    from .kernels import stokes_pressure_matrix

    if sol.quadrature != "qfs" or sol.coll.outer is None:
        return float("nan")
    op = sol.ops[0]
    x = op.pressure_ref["point"][None, :]
    pq = evaluate_pressure(op, sol.strengths[0], x)
    pp = stokes_pressure_matrix(op.spec.mu, x, sol.quads[0], (np.real(op.spec.alpha), np.real(op.spec.beta)))
    return float(abs(pq - pp @ sol.densities[0])[0])


def laplace3d_study(K: int = 2, dmin: float = 0.1, Nvs=(16, 24, 32), seed: int = 5, semiaxes=None,
                    target=None, **params):
    """Self-convergence of a K-ellipsoid cluster at one far target."""
    from .laplace3d import DEFAULT_SEMIAXES, evaluate_cluster, grow_cluster, solve_ellipsoid_cluster

    semi = DEFAULT_SEMIAXES if semiaxes is None else semiaxes
    rng = np.random.default_rng(seed)
    bodies = grow_cluster(K, dmin, semi, seed=seed)
    V = rng.uniform(-0.5, 0.5, K)
    E = rng.uniform(-0.2, 0.2, 3)
    if target is None:
        c = np.mean([b.center for b in bodies], axis=0)
        target = c + 3.5 * np.array([1.0, -1.0, 2.0]) / np.sqrt(6)
    rows, prev = [], None
    for Nv in Nvs:
        t = time.perf_counter()
        sol = solve_ellipsoid_cluster(bodies, Nv, V, E, **params)
        u = float(evaluate_cluster(sol, target)[0])
        rows.append({"Nv": Nv, "N_per_body": sol.op.N, "iters": sol.iters, "u": u,
                     "self_diff": float("nan") if prev is None else abs(u - prev),
                     "kappa_A0": float(np.linalg.cond(sol.op.nystrom)),
                     "seconds": time.perf_counter() - t})
        prev = u
    return {"bodies": bodies, "rows": rows, "target": np.asarray(target)}


def sphere_capacitance(Nv: int = 24, R: float = 2.0, **params):
    """Unit sphere held at V = 1: returns u at distance R (exact 1/R)."""
    from .laplace3d import Ellipsoid, evaluate_cluster, solve_ellipsoid_cluster

    sol = solve_ellipsoid_cluster([Ellipsoid((1.0, 1.0, 1.0), np.eye(3), np.zeros(3))], Nv, [1.0], **params)
    return {"u": float(evaluate_cluster(sol, [[0.0, 0.0, R]])[0]), "exact": 1.0 / R, "iters": sol.iters}

