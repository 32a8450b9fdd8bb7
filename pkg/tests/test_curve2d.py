import json

import numpy as np
import pytest

from qfs.curve2d import (
    AnalyticCurve,
    circle_curve,
    curve_from_json,
    curve_from_nodes,
    curve_to_json,
    estimate_max_shift,
    imaginary_shift_samples,
    nyquist_decay_ratio,
    offset_points,
    offset_validity,
    ptr_quadrature,
    resample_periodic,
    shifted_curve_samples,
    starfish_curve,
    upsampling_matrix,
)


def test_circle_quadrature():
    q = ptr_quadrature(circle_curve(2.0, (1.0, -1.0)), 64)
    assert q.N == 64
    assert np.isclose(q.weights.sum(), 4 * np.pi)
    # outward normals point away from the center
    radial = (q.nodes - [1.0, -1.0]) / 2.0
    assert np.allclose(q.normals, radial)
    assert np.allclose(q.curvature, 0.5)


def test_starfish_is_ccw_and_smooth():
    c = starfish_curve()
    assert c.signed_area() > 0
    q = ptr_quadrature(c, 200)
    # perimeter by PTR converges spectrally to the fine estimate
    assert abs(q.weights.sum() - c.perimeter(4096)) < 1e-9
    assert abs(ptr_quadrature(c, 400).weights.sum() - c.perimeter(4096)) < 1e-13
    assert np.allclose(np.linalg.norm(q.normals, axis=1), 1)
    assert np.allclose(np.sum(q.normals * q.tangents, axis=1), 0, atol=1e-15)


@pytest.mark.parametrize("N", [7, 6, 0])
def test_ptr_rejects_bad_N(N):
    with pytest.raises(ValueError):
        ptr_quadrature(circle_curve(), N)


def test_starfish_rejects_bad_parameters():
    with pytest.raises(ValueError):
        starfish_curve(a=1.2)
    with pytest.raises(ValueError):
        starfish_curve(r0=-1)


def test_imaginary_shift_of_circle():
    s = imaginary_shift_samples(circle_curve(), 0.3, 32)
    assert np.allclose(np.linalg.norm(s.points, axis=1), np.exp(-0.3))
    sh = circle_curve().shifted_coeffs(0.3)
    assert np.allclose(np.abs(sh.z(np.linspace(0, 1, 5))), np.exp(-0.3))


def test_offset_variants_agree_to_second_order():
    c = starfish_curve()
    t = np.linspace(0, 2 * np.pi, 50, endpoint=False)
    s = 1e-3
    zi, _ = offset_points(c, t, s, "imaginary")
    zt, _ = offset_points(c, t, s, "taylor")
    assert np.max(np.abs(zi - zt)) < 1e-8
    with pytest.raises(ValueError):
        offset_points(c, t, s, "bogus")


def test_offset_validity_detects_large_shift():
    c = starfish_curve()
    ok, _ = offset_validity(c, 0.05, variant="imaginary")
    bad, reason = offset_validity(c, 0.5, variant="imaginary")
    assert ok and not bad
    assert reason


def test_estimate_max_shift_bounds():
    c = starfish_curve()
    d_in = estimate_max_shift(c, "interior", variant="imaginary")
    d_out = estimate_max_shift(c, "exterior", variant="imaginary")
    assert 0 < d_out < d_in < 1
    # circle: every interior imaginary shift is valid up to the cap
    assert estimate_max_shift(circle_curve(), "interior", variant="imaginary") > 0.9


def test_shifted_samples_side():
    c = starfish_curve()
    inner = shifted_curve_samples(c, 0.1, 80, "interior", "imaginary")
    outer = shifted_curve_samples(c, 0.05, 80, "exterior", "imaginary")
    r_b = np.linalg.norm(ptr_quadrature(c, 80).nodes, axis=1)
    assert np.all(np.linalg.norm(inner.points, axis=1) < r_b)
    assert np.all(np.linalg.norm(outer.points, axis=1) > r_b)
    assert inner.valid and outer.valid


def test_upsampling_matrix_exact_for_bandlimited():
    N, Nt = 16, 40
    t, tt = 2 * np.pi * np.arange(N) / N, 2 * np.pi * np.arange(Nt) / Nt
    f = lambda x: 1 + np.cos(3 * x) - 0.5 * np.sin(7 * x) + 0.25 * np.cos(8 * x)  # noqa: E731
    U = upsampling_matrix(N, Nt)
    assert U.shape == (Nt, N)
    assert np.max(np.abs(U @ f(t) - f(tt))) < 1e-13
    assert np.allclose(resample_periodic(f(t), Nt), U @ f(t))


def test_upsampling_identity_and_no_downsampling():
    assert np.allclose(upsampling_matrix(12, 12), np.eye(12))
    with pytest.raises(ValueError):
        upsampling_matrix(24, 12)


def test_nyquist_ratio_tracks_resolution():
    t = lambda N: 2 * np.pi * np.arange(N) / N  # noqa: E731
    f = lambda x: 1 / (1.5 - np.cos(x))  # noqa: E731
    assert nyquist_decay_ratio(f(t(16))) > nyquist_decay_ratio(f(t(32))) > 0


def test_curve_from_nodes_reproduces_curve():
    c = starfish_curve()
    N = 64
    t = 2 * np.pi * np.arange(N) / N
    c2 = curve_from_nodes(c.points(t))
    tt = np.linspace(0, 2 * np.pi, 37)
    assert np.max(np.abs(c2.z(tt) - c.z(tt))) < 1e-13


def test_json_roundtrip():
    c = starfish_curve(1.2, 0.2, 4, 0.7, (0.5, -1.0))
    c2 = curve_from_json(json.loads(json.dumps(curve_to_json(c))))
    tt = np.linspace(0, 2 * np.pi, 11)
    assert np.allclose(c.z(tt), c2.z(tt))
    c3 = curve_from_json({"center": [0.5, -1.0], "r0": 1.2, "a": 0.2, "f": 4, "phi": 0.7})
    assert np.allclose(c.z(tt), c3.z(tt))


def test_analytic_curve_merges_modes_and_checks_lengths():
    c = AnalyticCurve([1, 1, 0], [0.5, 0.5, 0.0])
    assert list(c.modes) == [0, 1]
    with pytest.raises(ValueError):
        AnalyticCurve([1, 2], [1.0])
