"""
Quadrature by fundamental solutions on a single smooth closed curve.

A :class:`QfsOperator` maps a density tau sampled at N boundary nodes to
proxy strengths sigma on a source curve gamma (P points, displaced by delta
away from the evaluation side). The proxy sum then evaluates the layer
potential anywhere on the evaluation side, including on the boundary.

Two variants:

* ``D`` (desingularized): sigma matches potentials at N_c check points
  displaced by delta_c towards the evaluation side, computed by an upsampled
  plain rule C = C~ L.
* ``B``: sigma matches a user-supplied on-surface Nystrom matrix A at the
  boundary nodes.

Proxy matrices (E, B) are weightless; density-side matrices (C, A) carry
the boundary quadrature weights.
"""
from __future__ import annotations

import functools
import json
import warnings
from dataclasses import dataclass, field, replace

import numpy as np

from . import densela
from .curve2d import (
    AnalyticCurve,
    BoundaryQuadrature,
    OffsetCurveSamples,
    estimate_max_shift,
    offset_validity,
    ptr_quadrature,
    shifted_curve_samples,
    upsampling_matrix,
)
from .kernels import KernelSpec, potential_apply, potential_matrix, stokes_pressure_matrix

__all__ = [
    "QfsConfig",
    "QfsOperator",
    "QfsConfigurationError",
    "default_qfs_mixture",
    "even_ceil",
    "choose_sources",
    "choose_check_points",
    "qfsd_precompute",
    "qfsb_precompute",
    "qfs_apply",
    "explicit_source_matrix",
    "evaluate_potential",
    "evaluate_pressure",
    "nystrom_matrix",
    "two_sided_nystrom",
    "apply_laplace_charge_fix",
    "apply_stokes_nullspace_fix",
    "save_operator",
    "load_operator",
]

FORMAT_VERSION = 1


class QfsConfigurationError(ValueError):
    pass


@dataclass(frozen=True)
class QfsConfig:
    """Tolerance and geometry parameters.

    ``upsilon``/``upsilon_c`` default per PDE (Stokes 1.3 / 1.5, else 1).
    ``eps_mach`` is a fixed formula constant, not the platform epsilon.
    ``factorization`` None picks LU for square systems without rank fixes and
    SVD otherwise. ``offset`` selects the source/check curve recipe (see
    :func:`qfs.curve2d.offset_points`). ``stokes_fix`` None means automatic
    (on for interior Stokes).
    """

    eps: float = 1e-12
    upsilon: float | None = None
    upsilon_c: float | None = None
    eps_mach: float = 1e-16
    interior: bool = False
    variant: str = "D"
    factorization: str | None = None
    offset: str = "imaginary"
    charge_fix: bool = False
    stokes_fix: bool | None = None
    check_rank: bool = True
    rank_tol: float = 1e-14
    delta: float | None = None
    delta_c: float | None = None
    speed_fraction: float | None = None
    shift_cap: float = 1.0

    def __post_init__(self):
        if not (self.eps_mach < self.eps < 1):
            raise ValueError("need eps_mach < eps < 1")
        for name in ("upsilon", "upsilon_c"):
            v = getattr(self, name)
            if v is not None and v < 1:
                raise ValueError(f"{name} must be >= 1")
        if self.variant not in ("B", "D"):
            raise ValueError("variant must be 'B' or 'D'")
        if self.factorization not in (None, "svd", "lu"):
            raise ValueError("factorization must be 'svd', 'lu' or None")

    def upsampling(self, spec: KernelSpec):
        stokes = spec.pde == "stokes2d"
        u = self.upsilon if self.upsilon is not None else (1.3 if stokes else 1.0)
        uc = self.upsilon_c if self.upsilon_c is not None else (1.5 if stokes else 1.0)
        return u, uc

    @property
    def source_side(self) -> str:
        return "exterior" if self.interior else "interior"

    @property
    def check_side(self) -> str:
        return "interior" if self.interior else "exterior"


def default_qfs_mixture(spec: KernelSpec):
    """Robust proxy mixtures: Laplace SLP, Helmholtz CFIE (eta = k), Stokes and 3D Laplace S+D."""
    if spec.pde == "laplace2d":
        return (1.0, 0.0)
    if spec.pde == "helmholtz2d":
        return (-1j * spec.k, 1.0)
    return (1.0, 1.0)


def even_ceil(x: float) -> int:
    n = int(np.ceil(x - 1e-12))
    return n + (n % 2)


@functools.lru_cache(maxsize=256)
def _max_shift(curve, side, variant, speed_fraction, cap):
    return estimate_max_shift(curve, side, cap=cap, variant=variant, speed_fraction=speed_fraction)


@dataclass(frozen=True, eq=False)
class SourceChoice:
    P: int
    delta: float
    samples: OffsetCurveSamples
    fallback: bool


@dataclass(frozen=True, eq=False)
class CheckChoice:
    Nc: int
    delta_c: float
    samples: OffsetCurveSamples
    rho: float
    N_up: int
    capped: bool


def choose_sources(curve: AnalyticCurve, N: int, cfg: QfsConfig,
                   spec: KernelSpec | None = None) -> SourceChoice:
    """P and delta from the tolerance, falling back to the largest valid shift."""
    if N % 2:
        raise ValueError("N must be even")
    ups = cfg.upsampling(spec)[0] if spec is not None else (cfg.upsilon or 1.0)
    side = cfg.source_side
    sign = 1.0 if side == "interior" else -1.0
    logeps = np.log(1.0 / cfg.eps)
    P = N
    fallback = False
    if cfg.delta is not None:
        delta = float(cfg.delta)
    else:
        delta = logeps / P
        ok, _ = offset_validity(curve, sign * delta, 0, cfg.offset, cfg.speed_fraction)
        if not ok:
            d0 = _max_shift(curve, side, cfg.offset, cfg.speed_fraction, cfg.shift_cap)
            if d0 <= 0:
                raise QfsConfigurationError(
                    "no valid source curve: even tiny shifts self-intersect or cross the boundary")
            delta = d0
            P = int(np.ceil(logeps / delta))
            fallback = True
    P = even_ceil(ups * P)
    samples = shifted_curve_samples(curve, delta, P, side, cfg.offset, cfg.speed_fraction)
    if not samples.valid:
        raise QfsConfigurationError(f"source curve at delta={delta:.4g} invalid: {samples.reason}")
    return SourceChoice(P, delta, samples, fallback)


def choose_check_points(curve: AnalyticCurve, N: int, P: int, delta: float, cfg: QfsConfig,
                        spec: KernelSpec | None = None) -> CheckChoice:
    """Check curve at delta_c from the ratio condition, and the boundary upsampling rho."""
    ups_c = cfg.upsampling(spec)[1] if spec is not None else (cfg.upsilon_c or 1.0)
    side = cfg.check_side
    sign = 1.0 if side == "interior" else -1.0
    capped = False
    if cfg.delta_c is not None:
        dc = float(cfg.delta_c)
    else:
        dc = (np.log(cfg.eps_mach) / np.log(cfg.eps) - 1.0) * delta
        ok, _ = offset_validity(curve, sign * dc, 0, cfg.offset, cfg.speed_fraction)
        if not ok:
            dc0 = _max_shift(curve, side, cfg.offset, cfg.speed_fraction, cfg.shift_cap)
            if dc0 <= 0:
                raise QfsConfigurationError("no valid check curve: even tiny shifts are invalid")
            dc = min(dc, dc0)
            capped = True
    Nc = even_ceil(ups_c * N)
    rho = max(np.log(1.0 / cfg.eps_mach) / (dc * N), 1.0)
    N_up = even_ceil(rho * N)
    samples = shifted_curve_samples(curve, dc, Nc, side, cfg.offset, cfg.speed_fraction)
    if not samples.valid:
        raise QfsConfigurationError(f"check curve at delta_c={dc:.4g} invalid: {samples.reason}")
    return CheckChoice(Nc, dc, samples, rho, N_up, capped)


@dataclass(eq=False)
class QfsOperator:
    """Precomputed QFS data for one curve. Treat as immutable after construction."""

    spec: KernelSpec
    qspec: KernelSpec
    cfg: QfsConfig
    curve: AnalyticCurve | None
    quad: BoundaryQuadrature
    sources: OffsetCurveSamples
    checks: OffsetCurveSamples | None
    delta: float
    delta_c: float | None
    rho: float
    N_up: int
    match: np.ndarray          # E (variant D) or B (variant B), possibly augmented
    rhs: np.ndarray            # C (variant D) or A (variant B), possibly augmented
    Bmat: np.ndarray           # boundary from source
    solve_op: densela.StableSolveOperator
    nystrom: np.ndarray
    src_up: np.ndarray | None = None
    fixes: tuple = ()
    null_vec: np.ndarray | None = None
    pressure_ref: dict | None = None
    info: dict = field(default_factory=dict)

    @property
    def N(self) -> int:
        return self.quad.N

    @property
    def P(self) -> int:
        return self.sources.M

    @property
    def Nc(self) -> int:
        return self.checks.M if self.checks is not None else self.N

    @property
    def variant(self) -> str:
        return self.cfg.variant

    def ratio_condition(self) -> bool:
        if self.delta_c is None:
            return True
        lhs = self.delta / (self.delta + self.delta_c)
        return lhs >= np.log(self.cfg.eps) / np.log(self.cfg.eps_mach) - 1e-12


def _blocked_normals(pts: OffsetCurveSamples | BoundaryQuadrature):
    n = pts.normals
    return np.concatenate([n[:, 0], n[:, 1]])


def _proxy_matrix(qspec, targets, sources: OffsetCurveSamples):
    return potential_matrix(qspec, targets, sources.points, sources.normals, np.ones(sources.M))


def _factor(match, kind, cfg, what):
    if kind == "lu":
        try:
            op = densela.lu_factor(match)
        except densela.SingularSystemError as exc:
            raise QfsConfigurationError(f"{what} is singular ({exc})") from exc
    else:
        op = densela.svd_factor(match)
    if cfg.check_rank:
        if op.kind == "svd":
            s = op.factors[1]
            small = s[-1] / s[0]
        else:
            d = np.abs(np.diag(op.factors[2]))
            small = d.min() / d.max()
        if not small > cfg.rank_tol:
            raise QfsConfigurationError(
                f"{what} is numerically rank deficient (relative size {small:.2e}). "
                "For interior Stokes use stokes_fix=True; for Laplace SLP on unit-capacity "
                "curves use charge_fix=True; otherwise change eps or the upsampling factors, "
                "or pass check_rank=False to proceed anyway.")
    return op


def _synthesize(match, rhs, Bmat, kind, cfg, what):
    """Factor the matching system and form the Nystrom matrix in stable order."""
    op = _factor(match, kind, cfg, what)
    nyst = densela.left_solve(op, Bmat) @ densela.right_part(op, rhs)
    return op, nyst


def _factorization_kind(cfg, shape, augmented):
    if cfg.factorization is not None:
        if cfg.factorization == "lu" and augmented:
            raise QfsConfigurationError("rank fixes make the system rectangular; use svd")
        return cfg.factorization
    return "lu" if shape[0] == shape[1] and not augmented else "svd"


def qfsd_precompute(curve: AnalyticCurve, N: int, spec: KernelSpec, qfs_mixture=None,
                    cfg: QfsConfig | None = None) -> QfsOperator:
    """Desingularized QFS: sources, checks, E, C = C~ L, B, factorization and A~.

    ``spec`` carries the user's representation mixture (alpha, beta).
    """
    cfg = cfg or QfsConfig(variant="D")
    if cfg.variant != "D":
        cfg = replace(cfg, variant="D")
    qmix = default_qfs_mixture(spec) if qfs_mixture is None else qfs_mixture
    qspec = spec.with_mixture(*qmix)
    quad = ptr_quadrature(curve, N)
    sc = choose_sources(curve, N, cfg, spec)
    cc = choose_check_points(curve, N, sc.P, sc.delta, cfg, spec)
    dof = spec.dof

    E = _proxy_matrix(qspec, cc.samples.points, sc.samples)
    quad_up = ptr_quadrature(curve, cc.N_up)
    Ct = potential_matrix(spec, cc.samples.points, quad_up)
    L = upsampling_matrix(N, cc.N_up)
    C = Ct @ (np.kron(np.eye(dof), L) if dof > 1 else L)
    Bmat = _proxy_matrix(qspec, quad.nodes, sc.samples)

    op = QfsOperator(spec, qspec, cfg, curve, quad, sc.samples, cc.samples, sc.delta, cc.delta_c,
                     cc.rho, cc.N_up, E, C, Bmat, None, None,
                     info={"fallback": sc.fallback, "check_capped": cc.capped, "qfs_mixture": qmix})
    return _finish(op)


def qfsb_precompute(curve: AnalyticCurve, N: int, spec: KernelSpec, A, qfs_mixture=None,
                    cfg: QfsConfig | None = None) -> QfsOperator:
    """QFS-B: match the user's on-surface Nystrom matrix A at the N nodes."""
    cfg = cfg or QfsConfig(variant="B")
    if cfg.variant != "B":
        cfg = replace(cfg, variant="B")
    qmix = default_qfs_mixture(spec) if qfs_mixture is None else qfs_mixture
    qspec = spec.with_mixture(*qmix)
    quad = ptr_quadrature(curve, N)
    A = np.asarray(A)
    if A.shape != (spec.dof * N, spec.dof * N):
        raise ValueError(f"A must be {spec.dof * N} x {spec.dof * N}")
    sc = choose_sources(curve, N, cfg, spec)
    Bmat = _proxy_matrix(qspec, quad.nodes, sc.samples)
    op = QfsOperator(spec, qspec, cfg, curve, quad, sc.samples, None, sc.delta, None,
                     1.0, N, Bmat, A, Bmat, None, None,
                     info={"fallback": sc.fallback, "qfs_mixture": qmix})
    return _finish(op)


def _match_points(op):
    return op.checks if op.checks is not None else op.quad


def _finish(op: QfsOperator) -> QfsOperator:
    """Downsample surplus sources, apply configured rank fixes, factor, synthesize."""
    cfg = op.cfg
    dof = op.spec.dof
    n_match, n_src = op.match.shape
    if n_src > n_match:
        # more sources than matching points: strengths are interpolated from a
        # coarser set of n_match/dof values (sources stay at the P points).
        # A wide minimum-norm solve instead leaves the field between the
        # matching points uncontrolled.
        L = upsampling_matrix(n_match // dof, n_src // dof)
        op.src_up = np.kron(np.eye(dof), L) if dof > 1 else L
        op.match = op.match @ op.src_up
        op.Bmat = op.Bmat @ op.src_up
        op.info["coarse_sources"] = n_match // dof
    stokes_fix = cfg.stokes_fix
    if stokes_fix is None:
        stokes_fix = op.spec.pde == "stokes2d" and cfg.interior
    if cfg.charge_fix:
        op = apply_laplace_charge_fix(op, (op.spec.alpha, op.spec.beta), _defer=True)
    if stokes_fix:
        op = apply_stokes_nullspace_fix(op, _defer=True)
    return _refactor(op)


def _refactor(op: QfsOperator) -> QfsOperator:
    kind = _factorization_kind(op.cfg, op.match.shape, bool(op.fixes))
    what = "check-from-source matrix E" if op.variant == "D" else "boundary-from-source matrix B"
    op.solve_op, op.nystrom = _synthesize(op.match, op.rhs, op.Bmat, kind, op.cfg, what)
    if "stokes" in op.fixes:
        _stokes_null_and_pressure(op)
    return op


def _coarse(op, row):
    """Map a row vector over the P sources to the factorized (coarse) source space."""
    return row @ op.src_up if op.src_up is not None else row


def apply_laplace_charge_fix(op: QfsOperator, user_mixture=None, _defer=False) -> QfsOperator:
    """Append the total-charge row: [alpha w_j] on the density side, ones on the source side."""
    if op.spec.pde != "laplace2d":
        raise ValueError("the charge fix applies to 2D Laplace only")
    if op.cfg.factorization == "lu":
        raise QfsConfigurationError("the charge fix gives a rectangular system; use svd")
    if "charge" in op.fixes:
        return op
    alpha = np.real((user_mixture or (op.spec.alpha, op.spec.beta))[0])
    ones = _coarse(op, np.ones(op.P))
    new = replace(op, match=np.vstack([op.match, ones[None, :]]),
                  rhs=np.vstack([op.rhs, alpha * op.quad.weights[None, :]]),
                  fixes=op.fixes + ("charge",), cfg=replace(op.cfg, charge_fix=True),
                  info=dict(op.info))
    return new if _defer else _refactor(new)


def apply_stokes_nullspace_fix(op: QfsOperator, _defer=False) -> QfsOperator:
    """Interior Stokes: E <- E + n_check (w_src n_src)^T plus a pressure-constant correction.

    The correction adds to sigma a multiple of the proxy direction v that
    produces zero velocity inside (the near-null vector of the unmodified
    matching matrix), chosen so the proxy pressure agrees with the plain-rule
    pressure at one interior reference point. Since E v = 0 implies
    E_aug v = n_check (w n)^T v, v is recovered as E_aug^+ n_check from the
    factorization already computed.
    """
    if op.spec.pde != "stokes2d":
        raise ValueError("the nullspace fix applies to 2D Stokes only")
    if not op.cfg.interior:
        warnings.warn("exterior Stokes needs no nullspace fix; operator unchanged", RuntimeWarning)
        return op
    if "stokes" in op.fixes:
        return op
    nc = _blocked_normals(_match_points(op))
    ws = _coarse(op, np.concatenate([op.sources.weights, op.sources.weights]) * _blocked_normals(op.sources))
    match = op.match + np.outer(nc, ws)
    new = replace(op, match=match, fixes=op.fixes + ("stokes",),
                  cfg=replace(op.cfg, stokes_fix=True), info=dict(op.info))
    new.info["unfixed_match"] = op.match
    return new if _defer else _refactor(new)


def _stokes_null_and_pressure(op: QfsOperator) -> None:
    nc = _blocked_normals(_match_points(op))
    v = densela.apply_solve(op.solve_op, nc)
    v = v / np.linalg.norm(v)
    unfixed = op.info.pop("unfixed_match", None)
    if unfixed is not None:
        op.info["null_residual"] = float(np.linalg.norm(unfixed @ v) / np.linalg.norm(unfixed))
    op.null_vec = v
    op.pressure_ref = _pressure_reference(op, v)


def _pressure_reference(op, null_vec):
    """Interior reference point far from the boundary and the pressure maps there."""
    import shapely

    poly = shapely.Polygon(op.quad.nodes)
    cand = np.asarray(poly.centroid.coords[0])
    if not poly.contains(shapely.Point(cand)):
        cand = np.asarray(poly.representative_point().coords[0])
    x = cand[None, :]
    mu = op.spec.mu
    p_plain = stokes_pressure_matrix(mu, x, op.quad, (np.real(op.spec.alpha), np.real(op.spec.beta)))
    p_proxy = stokes_pressure_matrix(mu, x, op.sources.points, (np.real(op.qspec.alpha), np.real(op.qspec.beta)),
                                     normals=op.sources.normals, weights=np.ones(op.P))
    p_proxy = _coarse(op, p_proxy[0])
    p_null = float(p_proxy @ null_vec)
    return {"point": cand, "p_plain": p_plain[0], "p_proxy": p_proxy, "p_null": p_null}


def qfs_apply(op: QfsOperator, tau) -> np.ndarray:
    """Proxy strengths sigma from density samples tau (innermost product first)."""
    tau = np.asarray(tau)
    n = op.spec.dof * op.N
    if tau.shape[0] != n:
        raise ValueError(f"density must have length {n}, got {tau.shape[0]}")
    sigma = densela.apply_solve(op.solve_op, op.rhs @ tau)
    if op.pressure_ref is not None:
        ref = op.pressure_ref
        diff = ref["p_plain"] @ tau - ref["p_proxy"] @ sigma
        sigma = sigma + np.multiply.outer(op.null_vec, diff / ref["p_null"])
    if op.src_up is not None:
        sigma = op.src_up @ sigma
    return sigma


def explicit_source_matrix(op: QfsOperator) -> np.ndarray:
    """The explicit X with sigma = X tau. For stability comparisons only."""
    X = densela.apply_solve(op.solve_op, np.eye(op.match.shape[0])) @ op.rhs
    if op.src_up is not None:
        X = op.src_up @ X
    return X


def evaluate_potential(op: QfsOperator, sigma, targets, spec_override: KernelSpec | None = None):
    """Weightless proxy sum at arbitrary targets on the evaluation side."""
    qspec = spec_override or op.qspec
    T = np.asarray(targets, dtype=float).reshape(-1, 2)
    sigma = np.asarray(sigma)
    if sigma.ndim == 2:
        return potential_matrix(qspec, T, op.sources.points, op.sources.normals, np.ones(op.P)) @ sigma
    return potential_apply(qspec, T, op.sources.points, sigma, op.sources.normals, np.ones(op.P))


def evaluate_pressure(op: QfsOperator, sigma, targets):
    if op.spec.pde != "stokes2d":
        raise ValueError("pressure is defined for Stokes only")
    T = np.asarray(targets, dtype=float).reshape(-1, 2)
    M = stokes_pressure_matrix(op.spec.mu, T, op.sources.points,
                               (np.real(op.qspec.alpha), np.real(op.qspec.beta)),
                               normals=op.sources.normals, weights=np.ones(op.P))
    return M @ sigma


def nystrom_matrix(op: QfsOperator) -> np.ndarray:
    """A~ = (B Y) Z, the on-surface limit from the evaluation side (jump included)."""
    return op.nystrom


def two_sided_nystrom(ext: QfsOperator, int_: QfsOperator) -> np.ndarray:
    """Average of exterior and interior QFS matrices plus the exterior jump (beta/2) I."""
    n = ext.nystrom.shape[0]
    return 0.5 * (ext.nystrom + int_.nystrom) + 0.5 * ext.spec.beta * np.eye(n)


def save_operator(op: QfsOperator, path) -> None:
    """Serialize geometry and factors with a version header (npz)."""
    header = {
        "version": FORMAT_VERSION,
        "spec": [op.spec.pde, _cplx(op.spec.alpha), _cplx(op.spec.beta), op.spec.k, op.spec.mu],
        "qspec": [_cplx(op.qspec.alpha), _cplx(op.qspec.beta)],
        "cfg": {k: v for k, v in op.cfg.__dict__.items()},
        "delta": op.delta, "delta_c": op.delta_c, "rho": op.rho, "N_up": op.N_up,
        "kind": op.solve_op.kind, "fixes": list(op.fixes),
        "has_checks": op.checks is not None,
    }
    arrays = {
        "quad_nodes": op.quad.nodes, "quad_weights": op.quad.weights, "quad_normals": op.quad.normals,
        "quad_speeds": op.quad.speeds, "quad_params": op.quad.params, "quad_curv": op.quad.curvature,
        "quad_tan": op.quad.tangents,
        "src_points": op.sources.points, "src_normals": op.sources.normals,
        "src_weights": op.sources.weights, "src_params": op.sources.params,
        "match": op.match, "rhs": op.rhs, "Bmat": op.Bmat, "nystrom": op.nystrom,
    }
    for i, f in enumerate(op.solve_op.factors):
        arrays[f"factor{i}"] = f
    if op.checks is not None:
        arrays.update(chk_points=op.checks.points, chk_normals=op.checks.normals,
                      chk_weights=op.checks.weights, chk_params=op.checks.params)
    if op.src_up is not None:
        arrays["src_up"] = op.src_up
    if op.null_vec is not None:
        arrays["null_vec"] = op.null_vec
        arrays["pref_plain"] = op.pressure_ref["p_plain"]
        arrays["pref_proxy"] = op.pressure_ref["p_proxy"]
        arrays["pref_point"] = op.pressure_ref["point"]
        header["p_null"] = op.pressure_ref["p_null"]
    if op.curve is not None:
        arrays["curve_modes"] = op.curve.modes
        arrays["curve_coeffs"] = op.curve.coeffs
    arrays["header"] = np.frombuffer(json.dumps(header).encode(), dtype=np.uint8)
    np.savez(path, **arrays)


def _cplx(z):
    z = complex(z)
    return [z.real, z.imag]


def load_operator(path) -> QfsOperator:
    d = np.load(path, allow_pickle=False)
    header = json.loads(bytes(d["header"]).decode())
    if header.get("version") != FORMAT_VERSION:
        raise ValueError(f"unsupported operator file version {header.get('version')}")
    pde, a, b, k, mu = header["spec"]
    spec = KernelSpec(pde, complex(*a) if pde == "helmholtz2d" else a[0],
                      complex(*b) if pde == "helmholtz2d" else b[0], k, mu)
    qa, qb = header["qspec"]
    qspec = spec.with_mixture(complex(*qa) if pde == "helmholtz2d" else qa[0],
                              complex(*qb) if pde == "helmholtz2d" else qb[0])
    cfg = QfsConfig(**header["cfg"])
    quad = BoundaryQuadrature(d["quad_nodes"], d["quad_weights"], d["quad_normals"], d["quad_speeds"],
                              d["quad_params"], d["quad_curv"], d["quad_tan"])
    src = OffsetCurveSamples(d["src_points"], d["src_normals"], d["src_weights"], d["src_params"],
                             -header["delta"] if cfg.interior else header["delta"], cfg.source_side)
    chk = None
    if header["has_checks"]:
        dc = header["delta_c"]
        chk = OffsetCurveSamples(d["chk_points"], d["chk_normals"], d["chk_weights"], d["chk_params"],
                                 dc if cfg.interior else -dc, cfg.check_side)
    nf = 3
    factors = tuple(d[f"factor{i}"] for i in range(nf))
    solve_op = densela.StableSolveOperator(header["kind"], factors, d["match"].shape)
    curve = AnalyticCurve(d["curve_modes"], d["curve_coeffs"]) if "curve_modes" in d else None
    pref = None
    if "null_vec" in d:
        pref = {"point": d["pref_point"], "p_plain": d["pref_plain"], "p_proxy": d["pref_proxy"],
                "p_null": header["p_null"]}
    return QfsOperator(spec, qspec, cfg, curve, quad, src, chk, header["delta"], header["delta_c"],
                       header["rho"], header["N_up"], d["match"], d["rhs"], d["Bmat"], solve_op,
                       d["nystrom"], d["src_up"] if "src_up" in d else None, tuple(header["fixes"]),
                       d["null_vec"] if "null_vec" in d else None, pref)
