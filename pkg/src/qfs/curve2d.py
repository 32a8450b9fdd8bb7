"""
Analytic closed curves in the plane, periodic trapezoid quadrature, offset
(source / check) curves and spectral resampling.

Curves are stored as Fourier coefficients of the complex parameterization
Z(t) = x1(t) + i x2(t), t in [0, 2pi). Points are returned as real (M, 2)
arrays; complex arithmetic is used internally.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import shapely

__all__ = [
    "AnalyticCurve",
    "BoundaryQuadrature",
    "OffsetCurveSamples",
    "starfish_curve",
    "circle_curve",
    "curve_from_nodes",
    "curve_from_json",
    "curve_to_json",
    "ptr_quadrature",
    "VARIANTS",
    "offset_points",
    "shifted_curve_samples",
    "imaginary_shift_samples",
    "offset_validity",
    "estimate_max_shift",
    "upsampling_matrix",
    "resample_periodic",
    "nyquist_decay_ratio",
]


def _c2r(z):
    z = np.asarray(z)
    return np.stack([z.real, z.imag], axis=-1)


@dataclass(frozen=True, eq=False)
class AnalyticCurve:
    """Closed curve given by a finite Fourier series of Z(t)."""

    modes: np.ndarray
    coeffs: np.ndarray
    meta: str = ""

    def __post_init__(self):
        modes = np.asarray(self.modes, dtype=int).ravel()
        coeffs = np.asarray(self.coeffs, dtype=complex).ravel()
        if modes.shape != coeffs.shape:
            raise ValueError("modes and coeffs must have equal length")
        # merge duplicate modes so that evaluation and shifting stay exact
        umodes, inv = np.unique(modes, return_inverse=True)
        ucoeffs = np.zeros(umodes.size, dtype=complex)
        np.add.at(ucoeffs, inv, coeffs)
        object.__setattr__(self, "modes", umodes)
        object.__setattr__(self, "coeffs", ucoeffs)

    @property
    def bandwidth(self) -> int:
        nz = self.modes[np.abs(self.coeffs) > 0]
        return int(np.max(np.abs(nz))) if nz.size else 0

    def z(self, t, order: int = 0):
        """Z^{(order)}(t); t may be complex (analytic continuation)."""
        t = np.asarray(t)
        c = self.coeffs * (1j * self.modes) ** order
        return np.exp(1j * np.multiply.outer(t, self.modes)) @ c

    def points(self, t):
        return _c2r(self.z(t))

    def signed_area(self, M: int = 1024) -> float:
        t = 2 * np.pi * np.arange(M) / M
        z, dz = self.z(t), self.z(t, 1)
        return 0.5 * np.mean(np.imag(np.conj(z) * dz)) * 2 * np.pi

    def perimeter(self, M: int = 2048) -> float:
        t = 2 * np.pi * np.arange(M) / M
        return 2 * np.pi * np.mean(np.abs(self.z(t, 1)))

    def shifted_coeffs(self, delta: float) -> "AnalyticCurve":
        """Curve t -> Z(t + i delta), via mode reweighting by exp(-delta n)."""
        return AnalyticCurve(self.modes, self.coeffs * np.exp(-delta * self.modes),
                             meta=f"{self.meta} imag-shift {delta:g}")

    def translated(self, shift) -> "AnalyticCurve":
        s = complex(shift[0], shift[1])
        modes = np.concatenate([self.modes, [0]])
        coeffs = np.concatenate([self.coeffs, [s]])
        return AnalyticCurve(modes, coeffs, meta=self.meta)

    def scaled_about(self, center, factor: float) -> "AnalyticCurve":
        c = complex(center[0], center[1])
        modes = np.concatenate([self.modes, [0]])
        coeffs = np.concatenate([self.coeffs * factor, [(1 - factor) * c]])
        return AnalyticCurve(modes, coeffs, meta=self.meta)


@dataclass(frozen=True, eq=False)
class BoundaryQuadrature:
    """Periodic trapezoid rule on a curve: nodes, weights, outward normals."""

    nodes: np.ndarray
    weights: np.ndarray
    normals: np.ndarray
    speeds: np.ndarray
    params: np.ndarray
    curvature: np.ndarray
    tangents: np.ndarray

    @property
    def N(self) -> int:
        return self.nodes.shape[0]

    @property
    def points(self):
        return self.nodes


@dataclass(frozen=True, eq=False)
class OffsetCurveSamples:
    """Samples of a displaced copy of a boundary curve (proxy sources or checks).

    ``shift`` is the signed parameter s: s > 0 moves into the body, s < 0 out.
    ``weights`` are arc-length PTR weights of the displaced curve itself.
    """

    points: np.ndarray
    normals: np.ndarray
    weights: np.ndarray
    params: np.ndarray
    shift: float
    side: str
    valid: bool = True
    reason: str = ""

    @property
    def M(self) -> int:
        return self.points.shape[0]


def starfish_curve(r0: float = 1.0, a: float = 0.3, f: int = 5, phi: float = 0.2,
                   center=(0.0, 0.0)) -> AnalyticCurve:
    """Polar curve r(t) = r0 (1 + a cos(f t + phi)) about ``center``."""
    if r0 <= 0:
        raise ValueError("r0 must be positive")
    if abs(a) >= 1:
        raise ValueError("|a| must be < 1 (the family self-intersects otherwise)")
    c = complex(center[0], center[1])
    modes = [0, 1, 1 + f, 1 - f]
    coeffs = [c, r0, 0.5 * r0 * a * np.exp(1j * phi), 0.5 * r0 * a * np.exp(-1j * phi)]
    meta = f"starfish r0={r0:g} a={a:g} f={f} phi={phi:g} center=({c.real:g},{c.imag:g})"
    return AnalyticCurve(np.array(modes), np.array(coeffs), meta=meta)


def circle_curve(radius: float = 1.0, center=(0.0, 0.0)) -> AnalyticCurve:
    return starfish_curve(radius, 0.0, 3, 0.0, center)


def curve_from_nodes(nodes) -> AnalyticCurve:
    """Spectral interpolant of equispaced-in-parameter samples (even count)."""
    nodes = np.asarray(nodes)
    z = nodes if np.iscomplexobj(nodes) and nodes.ndim == 1 else nodes[:, 0] + 1j * nodes[:, 1]
    N = z.size
    if N % 2:
        raise ValueError("node count must be even")
    c = np.fft.fft(z) / N
    modes = np.fft.fftfreq(N, 1.0 / N).astype(int)
    # split the Nyquist coefficient evenly between +-N/2
    ny = N // 2
    modes = np.concatenate([modes, [ny]])
    c = np.concatenate([c, [0.5 * c[ny]]])
    c[ny] *= 0.5
    return AnalyticCurve(modes, c, meta=f"from {N} nodes")


def curve_from_json(obj: dict) -> AnalyticCurve:
    """Build a curve from a geometry-JSON body entry.

    Either starfish keys (center, r0, a, f, phi) or ``Z_coeffs`` as [re, im]
    pairs in FFT mode order (optionally with explicit ``modes``).
    """
    if "Z_coeffs" in obj:
        c = np.array([complex(re, im) for re, im in obj["Z_coeffs"]])
        if "modes" in obj:
            modes = np.asarray(obj["modes"], dtype=int)
        else:
            modes = np.fft.fftfreq(c.size, 1.0 / c.size).astype(int)
        return AnalyticCurve(modes, c, meta=obj.get("meta", "json"))
    return starfish_curve(obj.get("r0", 1.0), obj.get("a", 0.0), int(obj.get("f", 3)),
                          obj.get("phi", 0.0), tuple(obj.get("center", (0.0, 0.0))))


def curve_to_json(curve: AnalyticCurve) -> dict:
    return {
        "modes": [int(m) for m in curve.modes],
        "Z_coeffs": [[float(c.real), float(c.imag)] for c in curve.coeffs],
        "meta": curve.meta,
    }


def ptr_quadrature(curve: AnalyticCurve, N: int) -> BoundaryQuadrature:
    if N % 2 or N < 8:
        raise ValueError("N must be even and >= 8")
    t = 2 * np.pi * np.arange(N) / N
    dz = curve.z(t, 1)
    d2z = curve.z(t, 2)
    speed = np.abs(dz)
    if np.any(speed <= 0):
        raise ValueError("parameterization is not regular")
    tau = dz / speed
    return BoundaryQuadrature(
        nodes=curve.points(t),
        weights=(2 * np.pi / N) * speed,
        normals=_c2r(-1j * tau),
        speeds=speed,
        params=t,
        curvature=np.imag(np.conj(dz) * d2z) / speed**3,
        tangents=_c2r(tau),
    )


VARIANTS = ("offset", "taylor", "imaginary")


def offset_points(curve: AnalyticCurve, t, s: float, variant: str = "offset"):
    """Displaced curve at signed shift s and its t-derivative.

    ``offset``: Z + i s Z' + s^2 Z'', i.e. x - s|x'|n + s^2 x''.
    ``taylor``: Z + i s Z' - (s^2/2) Z'', the quadratic Taylor polynomial of
    Z(t + i s).
    ``imaginary``: Z(t + i s) itself.
    """
    if variant == "imaginary":
        sh = curve.shifted_coeffs(s)
        return sh.z(t), sh.z(t, 1)
    if variant not in VARIANTS:
        raise ValueError(f"unknown offset variant {variant!r}; use one of {VARIANTS}")
    q = -0.5 if variant == "taylor" else 1.0
    z = curve.z(t) + 1j * s * curve.z(t, 1) + q * s * s * curve.z(t, 2)
    dz = curve.z(t, 1) + 1j * s * curve.z(t, 2) + q * s * s * curve.z(t, 3)
    return z, dz


def _samples(z, dz, t, s, side, valid=True, reason=""):
    speed = np.abs(dz)
    M = z.size
    return OffsetCurveSamples(
        points=_c2r(z),
        normals=_c2r(-1j * dz / speed),
        weights=(2 * np.pi / M) * speed,
        params=t,
        shift=float(s),
        side=side,
        valid=valid,
        reason=reason,
    )


def _boundary_polygon(curve: AnalyticCurve, M: int):
    t = 2 * np.pi * np.arange(M) / M
    return shapely.Polygon(curve.points(t))


def _check_points(curve, z, dz, inward: bool, speed_fraction=None, t=None):
    """Validity of a sampled displaced curve: (ok, reason)."""
    dzb = curve.z(t, 1)
    align = np.real(np.conj(dz) * dzb)
    if np.any(align <= 0):
        return False, "tangent reversal (curve folds back)"
    if speed_fraction is not None and np.any(np.abs(dz) < speed_fraction * np.abs(dzb)):
        return False, "local speed below fraction of boundary speed"
    pts = _c2r(z)
    if not shapely.LinearRing(pts).is_simple:
        return False, "self-intersection"
    poly = _boundary_polygon(curve, max(4 * z.size, 4096))
    if inward:
        ok = np.all(shapely.contains_xy(poly, pts[:, 0], pts[:, 1]))
        return (True, "") if ok else (False, "leaves the body")
    ok = not np.any(shapely.intersects_xy(poly, pts[:, 0], pts[:, 1]))
    return (True, "") if ok else (False, "enters the body")


def _validation_count(curve, M):
    return int(max(M, 16 * max(curve.bandwidth, 1), 1024))


def offset_validity(curve: AnalyticCurve, s: float, M: int = 0, variant: str = "offset",
                    speed_fraction=None):
    """Check the displaced curve at signed shift s on a fine polyline."""
    Mv = _validation_count(curve, M)
    t = 2 * np.pi * np.arange(Mv) / Mv
    if variant == "imaginary":
        growth = np.sum(np.abs(curve.coeffs * np.exp(-s * curve.modes))) / np.sum(np.abs(curve.coeffs))
        if growth > 1e6:
            return False, "outside the strip of analyticity"
    z, dz = offset_points(curve, t, s, variant)
    return _check_points(curve, z, dz, inward=s > 0, speed_fraction=speed_fraction, t=t)


def shifted_curve_samples(curve: AnalyticCurve, delta: float, M: int, side: str = "interior",
                          variant: str = "offset", speed_fraction=None) -> OffsetCurveSamples:
    """M equispaced samples of the curve displaced by delta to ``side``.

    Invalid geometry is reported through ``valid``/``reason`` rather than raised.
    """
    if delta <= 0:
        raise ValueError("delta must be positive; use side to choose direction")
    if side not in ("interior", "exterior"):
        raise ValueError("side must be 'interior' or 'exterior'")
    s = delta if side == "interior" else -delta
    t = 2 * np.pi * np.arange(M) / M
    z, dz = offset_points(curve, t, s, variant)
    ok, why = offset_validity(curve, s, M, variant, speed_fraction)
    return _samples(z, dz, t, s, side, ok, why)


def imaginary_shift_samples(curve: AnalyticCurve, delta: float, M: int) -> OffsetCurveSamples:
    """Samples of Z(t + i delta); delta > 0 moves inside a ccw curve."""
    shifted = curve.shifted_coeffs(delta)
    growth = np.sum(np.abs(shifted.coeffs)) / np.sum(np.abs(curve.coeffs))
    if growth > 1e6:
        raise ValueError(f"imaginary shift {delta} outside the strip of analyticity "
                         f"(coefficient growth {growth:.3g})")
    t = 2 * np.pi * np.arange(M) / M
    z, dz = shifted.z(t), shifted.z(t, 1)
    Mv = _validation_count(curve, M)
    tv = 2 * np.pi * np.arange(Mv) / Mv
    ok, why = _check_points(curve, shifted.z(tv), shifted.z(tv, 1), inward=delta > 0, t=tv)
    side = "interior" if delta > 0 else "exterior"
    return _samples(z, dz, t, delta, side, ok, why)


def estimate_max_shift(curve: AnalyticCurve, side: str = "interior", M: int = 0,
                       cap: float = 1.0, tol: float = 1e-3, variant: str = "offset",
                       speed_fraction=None) -> float:
    """Bisection for the supremum of valid shifts in (0, cap].

    Returns a valid value within ``tol`` of the supremum, ``cap`` if the cap
    itself is valid, and 0 if even a tiny shift fails.
    """
    sign = 1.0 if side == "interior" else -1.0

    def ok(d):
        return offset_validity(curve, sign * d, M, variant, speed_fraction)[0]

    if ok(cap):
        return float(cap)
    lo, hi = 0.0, float(cap)
    if not ok(0.1 * tol):
        return 0.0
    lo = 0.1 * tol
    while hi - lo > 0.5 * tol:
        mid = 0.5 * (lo + hi)
        if ok(mid):
            lo = mid
        else:
            hi = mid
    return lo


def upsampling_matrix(N: int, Nt: int) -> np.ndarray:
    """Trigonometric interpolation matrix from N to Nt equispaced samples.

    Entries (1/N) phi_N(2 pi [l/Nt - j/N]) with the Nyquist mode carried by a
    single cos((N/2)s) term.
    """
    if N % 2 or Nt % 2:
        raise ValueError("N and Nt must be even")
    if Nt < N:
        raise ValueError("downsampling is not supported (Nt < N)")
    l = np.arange(Nt)[:, None]
    j = np.arange(N)[None, :]
    q = np.mod(l * N - j * Nt, N * Nt)
    s = 2 * np.pi * q / (N * Nt)
    m = N // 2 - 1
    half = np.sin(0.5 * s)
    zero = q == 0
    with np.errstate(divide="ignore", invalid="ignore"):
        dirichlet = np.where(zero, 2 * m + 1, np.sin((m + 0.5) * s) / np.where(zero, 1.0, half))
    return (dirichlet + np.cos(0.5 * N * s)) / N


def resample_periodic(values, Nt: int) -> np.ndarray:
    """FFT resampling of periodic samples along axis 0 (same convention as
    :func:`upsampling_matrix`)."""
    values = np.asarray(values)
    N = values.shape[0]
    if Nt == N:
        return values.copy()
    c = np.fft.fft(values, axis=0)
    out = np.zeros((Nt,) + values.shape[1:], dtype=complex)
    h = N // 2
    out[:h] = c[:h]
    out[Nt - h + 1:] = c[h + 1:]
    # cos((N/2)s) convention: split the Nyquist bin
    out[h] += 0.5 * c[h]
    out[Nt - h] += 0.5 * c[h]
    res = np.fft.ifft(out, axis=0) * (Nt / N)
    return res if np.iscomplexobj(values) else res.real


def nyquist_decay_ratio(samples) -> float:
    """|tau_hat_{N/2}| / |tau_hat_0| of the discrete Fourier coefficients."""
    samples = np.asarray(samples)
    N = samples.shape[0]
    if N % 2:
        raise ValueError("need an even number of samples")
    c = np.fft.fft(samples, axis=0) / N
    c0 = np.abs(c[0]).max() if c.ndim > 1 else abs(c[0])
    cn = np.abs(c[N // 2]).max() if c.ndim > 1 else abs(c[N // 2])
    if c0 == 0:
        return float("inf")
    return float(cn / c0)
