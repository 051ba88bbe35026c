import math

import numpy as np
import pytest

from signorini_lab.coefficients import identity
from signorini_lab.errors import DomainError, SizeCapError, UnsupportedDimension
from signorini_lab.fields import GridSpec, sample_function
from signorini_lab.frequency import frequency, frequency_sweep, geometric_radii
from signorini_lab.geometry import (FreeBoundarySet, beta, beta_bruteforce, contact_order, default_library,
                                    extract_free_boundary, frequency_vs_contact, homogeneous_library,
                                    library_by_lambda, mean_flatness_experiment, minkowski_content,
                                    verify_signorini_exact)


def test_library_w32_branches():
    w = homogeneous_library(2, "two_m_minus_half", 1)
    assert w.lam == 1.5
    x = np.array([0.3, 0.7, -0.2, -0.9])
    pts = np.stack([x, np.zeros_like(x)], -1)
    assert np.allclose(w.value(pts), np.where(x > 0, np.abs(x) ** 1.5, 0.0), atol=1e-15)
    p = np.array([[0.3, 0.4], [0.3, -0.4]])
    assert w.value(p)[0] == w.value(p)[1]


def test_library_w2_and_w3():
    w2 = homogeneous_library(2, "two_m", 1)
    p = np.random.default_rng(0).uniform(-1, 1, (30, 2))
    assert np.allclose(w2.value(p), p[:, 0] ** 2 - p[:, 1] ** 2, atol=1e-14)
    w3 = homogeneous_library(2, "two_m_plus_one", 1)
    x = np.array([-0.8, -0.3, 0.4, 0.9])
    assert np.allclose(w3.value(np.stack([x, 0 * x], -1)), 0.0, atol=1e-15)
    assert np.allclose(w3.flux(x), -3 * x ** 2)
    with pytest.raises(UnsupportedDimension):
        homogeneous_library(3, "two_m", 1)


def test_library_is_signorini():
    for w in default_library(3):
        assert w.lam >= 1.5
        assert verify_signorini_exact(w).ok(1e-8)
    # polynomial member: the high-precision stencil sees only working-precision round-off
    assert verify_signorini_exact(library_by_lambda(2.0)).max_laplacian <= 1e-30


def test_sign_flip_detected():
    rep = verify_signorini_exact(library_by_lambda(1.5), sign=-1.0)
    assert not rep.ok() and rep.min_trace < 0
    rep = verify_signorini_exact(library_by_lambda(3.0), sign=-1.0)
    assert rep.max_contact_flux > 0


@pytest.mark.parametrize("lam", [1.5, 2.0, 3.0, 3.5, 4.0])
def test_library_frequency(lib_fields, lam):
    assert abs(frequency(lib_fields(lam, 129), [0, 0], 0.3) - lam) <= 2e-2


def test_extract_w32(lib_fields):
    u = lib_fields(1.5, 129)
    fb = extract_free_boundary(u)
    assert len(fb) == 1 and abs(fb.points[0, 0]) <= u.grid.h and fb.points[0, 1] == 0.0
    # relative-boundary invariant: contact with a positive in-plane neighbor
    i = int(np.flatnonzero(np.isclose(u.grid.axis(0), fb.points[0, 0]))[0])
    assert fb.contact[i] and (fb.positive[i - 1] or fb.positive[i + 1])


def test_extract_edge_cases():
    g = GridSpec.uniform(2, 33)
    pos = sample_function(g, lambda x: 1 + 0 * x[..., 0], even=True)
    assert len(extract_free_boundary(pos)) == 0
    zero_plane = sample_function(g, lambda x: np.abs(x[..., 1]), even=True)
    assert len(extract_free_boundary(zero_plane)) == 0


def test_beta_closed_forms():
    assert beta([[0.2, 0.1]], [0, 0], 0.5).beta == 0.0
    d, r = 0.1, 0.3
    rep = beta([[d, 0.0], [-d, 0.0]], [0, 0], r)
    assert rep.beta ** 2 == pytest.approx(2 * d * d / r ** 2, rel=1e-10, abs=1e-10)
    line = np.outer(np.linspace(-0.2, 0.2, 7), [1.0, 2.0, -0.5]) + [0.05, 0, 0]
    assert beta(line, [0, 0, 0], 0.5).beta <= 1e-12
    empty = beta([[0.9, 0.9]], [0, 0], 0.1)
    assert empty.empty and empty.beta == 0.0 and empty.mass == 0.0


def test_beta_vs_bruteforce():
    rng = np.random.default_rng(2024)
    for _ in range(20):
        P = rng.uniform(-0.3, 0.3, (rng.integers(2, 15), 2))
        assert abs(beta(P, [0, 0], 0.5).beta - beta_bruteforce(P, [0, 0], 0.5)) <= 1e-6
    for _ in range(5):
        P = rng.uniform(-0.3, 0.3, (rng.integers(3, 12), 3))
        assert abs(beta(P, [0, 0, 0], 0.6).beta - beta_bruteforce(P, [0, 0, 0], 0.6)) <= 1e-6
    assert beta_bruteforce([[0.1, 0.1]], [0, 0], 0.5) <= 1e-12
    d, r = 0.1, 0.3
    assert beta_bruteforce([[d, 0.0], [-d, 0.0]], [0, 0], r) ** 2 == pytest.approx(2 * d * d / r ** 2, rel=1e-9)
    with pytest.raises(SizeCapError):
        beta_bruteforce(rng.uniform(-0.1, 0.1, (30, 2)), [0, 0], 0.5)


def test_beta_isometry_invariance():
    rng = np.random.default_rng(5)
    for d in (2, 3):
        P = rng.uniform(-0.3, 0.3, (40, d))
        Q, _ = np.linalg.qr(rng.standard_normal((d, d)))
        t = rng.uniform(-1, 1, d)
        b0 = beta(P, np.zeros(d), 0.4).beta
        assert abs(beta(P @ Q.T + t, t, 0.4).beta - b0) <= 1e-12


def test_minkowski_point_and_pairs():
    h = 1 / 64
    one = FreeBoundarySet.from_points([[0.0, 0.0]], h)
    K = np.array([[-0.5, -0.5], [0.5, 0.5]])
    for r in np.linspace(8 * h / 4, 0.2, 6):
        assert abs(minkowski_content(one, K, r)[1] - math.pi) <= 0.02 * math.pi
    two = FreeBoundarySet.from_points([[-0.3, 0.0], [0.3, 0.0]], h)
    assert minkowski_content(two, K, 0.2)[1] == pytest.approx(2 * math.pi, rel=0.02)
    assert minkowski_content(FreeBoundarySet.from_points(np.zeros((0, 2)), h), K, 0.1) == (0.0, 0.0)
    with pytest.raises(DomainError):
        minkowski_content(one, K, h / 4)


def test_minkowski_segment_3d():
    L = 0.6
    x = np.linspace(-L / 2, L / 2, 1201)
    seg = FreeBoundarySet.from_points(np.stack([x, 0 * x, 0 * x], -1), 1 / 32)
    K = np.array([[-0.5] * 3, [0.5] * 3])
    for r in (0.05, 0.01):
        _, ratio = minkowski_content(seg, K, r, h_sample=r / 4)
        # cylinder plus the two hemispherical caps
        assert ratio == pytest.approx(math.pi * L + 4 * math.pi * r / 3, rel=0.02)
    # r << L: the caps fade and the ratio approaches pi L
    assert ratio == pytest.approx(math.pi * L, rel=0.05)


@pytest.mark.parametrize("lam", [1.5, 2.0, 3.0, 3.5, 4.0])
def test_contact_order_library(lib_fields, lam):
    co = contact_order(lib_fields(lam, 129), [0, 0], 0.05, 0.4)
    assert abs(co.slope - lam) <= 0.05
    assert co.kappa_low <= co.slope + 1e-9 <= co.kappa_high + 2e-9
    assert abs(co.theta_H - lam) <= 0.05


def test_contact_order_constant_and_errors(lib_fields):
    u = lib_fields(1.5, 129)
    c = u.with_values(np.full(u.grid.shape, 2.0))
    assert abs(contact_order(c, [0, 0], 0.05, 0.4).slope) <= 1e-10
    with pytest.raises(ValueError):
        contact_order(u, [0, 0], 0.3, 0.4)
    with pytest.raises(DomainError):
        contact_order(u, [0, 0], 0.01, 0.4, ratio=2.0)


def test_frequency_vs_contact(lib_fields):
    radii = geometric_radii(0.1, 0.45)
    for lam, tol in ((1.5, 0.05), (2.0, 0.07)):
        u = lib_fields(lam, 129)
        sw = frequency_sweep(u, [0, 0], radii, identities=False)
        assert frequency_vs_contact(u, [0, 0], sw) <= tol


def test_frequency_vs_contact_solved(solved_w32_identity):
    u, _, _ = solved_w32_identity
    x0 = extract_free_boundary(u).points[0]
    sw = frequency_sweep(u, x0, geometric_radii(0.125, 0.45), identities=False)
    assert frequency_vs_contact(u, x0, sw) <= 0.1


def test_mean_flatness(lib_fields):
    u = lib_fields(1.5, 129)
    fb = extract_free_boundary(u)
    rep = mean_flatness_experiment(u, identity(2), fb, fb.points[0], 0.1, R1=0.75, R2=4.0)
    assert rep.beta2 == 0.0 and rep.ratio == 0.0 and not rep.in_guaranteed_regime
    assert rep.mass_term > 0
    ratios = [mean_flatness_experiment(u, identity(2), fb, fb.points[0], r, R1=0.75).ratio for r in (0.09, 0.1, 0.11)]
    assert all(math.isfinite(v) for v in ratios)
    u2 = lib_fields(2.0, 129)
    fb2 = extract_free_boundary(u2, tol_scale=1.0)
    if len(fb2):
        rep2 = mean_flatness_experiment(u2, identity(2), fb2, fb2.points[0], 0.1, R1=0.75)
        assert math.isfinite(rep2.ratio)
