import math

import numpy as np
import pytest
from scipy.integrate import quad

from signorini_lab.coefficients import identity, make_preset
from signorini_lab.errors import DegenerateError, DomainError
from signorini_lab.fields import GridSpec, sample_function
from signorini_lab.frequency import (DEFAULT_CUTOFF, build_cutoff, delta_gap, doubling_ratios, epsilon_terms,
                                     fit_monotonicity, frequency, frequency_integrals, frequency_sweep,
                                     geometric_radii, l2_vs_H, monotonicity_audit, radial_identity_check,
                                     rescale, theta_parameter, theta_regime)
from signorini_lab.geometry import SpineExtension, library_by_lambda


def ones(dim, n):
    return sample_function(GridSpec.uniform(dim, n), lambda x: np.ones(x.shape[:-1]), even=True)


@pytest.mark.parametrize("blend", ["quintic", "cubic"])
def test_cutoff_profile(blend):
    phi = build_cutoff(blend)
    t = np.linspace(0, 1.2, 2401)
    v = phi.phi(t)
    assert np.all(v[t <= 0.5] == 1.0) and np.all(v[t >= 1.0] == 0.0)
    mid = (t >= 0.625) & (t <= 0.875)
    assert np.allclose(v[mid], 2 * (1 - t[mid]), atol=1e-15)
    assert np.all(np.diff(v) <= 1e-15)
    # continuity of phi and phi' at the blend joints
    for j in (0.5, 0.625, 0.875, 1.0):
        assert abs(phi.phi(j - 1e-9) - phi.phi(j + 1e-9)) < 1e-7
        assert abs(phi.dphi(j - 1e-9) - phi.dphi(j + 1e-9)) < 1e-6
    m1 = quad(lambda s: -phi.dphi(s) * s, 0, 1, points=[0.5, 0.625, 0.875], epsabs=1e-14)[0]
    assert phi.radial_moment(1) == pytest.approx(m1, rel=1e-12)
    assert phi.radial_moment(0) == pytest.approx(1.0, rel=1e-13)
    with pytest.raises(ValueError):
        build_cutoff("septic")


def test_constant_field_2d():
    u = ones(2, 129)
    for r in (0.1, 0.25, 0.45):
        fi = frequency_integrals(u, [0, 0], r)
        assert fi.H == pytest.approx(2 * math.pi * r, rel=1e-4)
        assert fi.D == 0.0 and fi.G == 0.0 and fi.E == 0.0


def test_constant_field_3d():
    u = ones(3, 33)
    c = -4 * math.pi * quad(lambda t: DEFAULT_CUTOFF.dphi(t) * t, 0, 1, points=[0.5, 0.625, 0.875],
                            epsabs=1e-14)[0]
    for r in (0.3, 0.5):
        assert frequency_integrals(u, [0, 0, 0], r).H == pytest.approx(c * r * r, rel=1e-3)


def test_w32_identities(lib_fields):
    u = lib_fields(1.5, 257)
    for r in (0.1, 0.25, 0.45):
        fi = frequency_integrals(u, [0, 0], r)
        assert abs(fi.G - fi.D) <= 1e-3 * fi.D
        assert abs(fi.G - 1.5 * fi.H / r) <= 1e-3 * fi.G
        assert fi.E * fi.H - fi.G ** 2 >= -1e-10 * fi.E * fi.H


@pytest.mark.parametrize("lam", [1.5, 2.0])
def test_homogeneous_frequency(lib_fields, lam):
    u = lib_fields(lam, 129)
    for r in geometric_radii(0.1, 0.45):
        assert abs(frequency(u, [0, 0], r) - lam) <= 0.02


def test_scale_invariance(lib_fields):
    u = lib_fields(1.5, 129)
    base = frequency(u, [0, 0], 0.3)
    # exact scalings (sign, powers of two) reproduce the ratio bit for bit
    for c in (-1.0, 0.5, 8.0, -0.25):
        assert frequency(u.with_values(c * u.values), [0, 0], 0.3) == base
    # other factors only perturb through the rounding of c*u itself
    for c in (-3.0, 1e3, 0.7):
        assert frequency(u.with_values(c * u.values), [0, 0], 0.3) == pytest.approx(base, rel=1e-13)


def test_support_and_degenerate(lib_fields):
    u = lib_fields(1.5, 129)
    with pytest.raises(DomainError):
        frequency(u, [0.7, 0], 0.45)
    with pytest.raises(DomainError):
        frequency(u, [0, 0], 0.02)
    zero = u.with_values(np.zeros(u.grid.shape))
    with pytest.raises(DegenerateError):
        frequency(zero, [0, 0], 0.3)


def test_rescale_homogeneous(lib_fields, w32):
    u = lib_fields(1.5, 129)
    v = rescale(u, [0, 0], 0.5)
    ref = sample_function(v.grid, w32.value, even=True).values.ravel()
    corr = np.dot(v.values.ravel(), ref) / (np.linalg.norm(v.values) * np.linalg.norm(ref))
    assert corr >= 1 - 1e-6
    assert frequency(v, [0, 0], 0.4) == pytest.approx(frequency(u, [0, 0], 0.2), abs=5e-3)
    with pytest.raises(DegenerateError):
        rescale(u.with_values(np.zeros(u.grid.shape)), [0, 0], 0.3)


def test_radial_identities(lib_fields):
    u = lib_fields(1.5, 257)
    for r in (0.15, 0.3, 0.45):
        rr = radial_identity_check(u, [0, 0], r)
        assert rr.H_residual <= 1e-3 and rr.D_residual <= 1e-3
    one = ones(2, 129)
    for r in (0.15, 0.3, 0.45):
        rr = radial_identity_check(one, [0, 0], r)
        # G = 0 exactly, so the identity reduces to H' = H/r, exact up to the quadrature of H
        assert frequency_integrals(one, [0, 0], r).G == 0.0
        assert rr.H_residual <= 1e-4
        assert rr.Hprime_num == pytest.approx(2 * math.pi, rel=1e-4)


def test_epsilon_terms(lib_fields):
    u = lib_fields(1.5, 257)
    et = epsilon_terms(u, identity(2), [0, 0], 0.3)
    fi = frequency_integrals(u, [0, 0], 0.3)
    assert abs(et.eps_D) <= 1e-3 * fi.D and abs(et.eps_Dp) <= 1e-2 * fi.D
    assert et.bound_D == 0.0
    c = epsilon_terms(ones(2, 65), identity(2), [0, 0], 0.3)
    assert c.eps_D == 0.0 and c.eps_Dp == 0.0


def test_epsilon_bound_lipschitz_preset(solved_lipschitz):
    u, mf, x0 = solved_lipschitz
    for r in (0.15, 0.3):
        et = epsilon_terms(u, mf, x0, r)
        assert et.bound_D > 0 and math.isfinite(et.ratio_D)


@pytest.fixture(scope="module")
def solved_lipschitz(w32):
    from signorini_lab.geometry import extract_free_boundary
    from signorini_lab.solver import SolverConfig, assemble, solve_signorini
    g = GridSpec.uniform(2, 129)
    mf = make_preset("scalar_abs", 2, c=0.2)
    u, _ = solve_signorini(assemble(mf, g), sample_function(g, w32.value, even=True), SolverConfig(omega="auto"))
    return u, mf, extract_free_boundary(u).points[0]


def test_sweep_gap_and_audit(lib_fields):
    u = lib_fields(1.5, 257)
    radii = geometric_radii(0.1, 0.45, 2 ** 0.5)
    sw = frequency_sweep(u, [0, 0], radii, identities=False)
    fit = monotonicity_audit(sw, min_radii=4)
    # constant I up to quadrature error, which 1/dr amplifies at the small radii
    assert fit.C_exp <= 1e-3 and sw.fitted["C_star"] == fit.C_exp
    r, rho = radii[-1], radii[0]
    assert delta_gap(sw, rho, r, 0.0) == pytest.approx(sw.I[-1] - sw.I[0])
    with pytest.raises(ValueError):
        delta_gap(sw, r, rho, 0.0)
    with pytest.raises(ValueError):
        monotonicity_audit(frequency_sweep(u, [0, 0], radii[:3], identities=False))


def test_fit_monotonicity_constant_and_decreasing():
    t = np.linspace(0.1, 0.5, 9)
    fit = fit_monotonicity(t, np.full(9, 1.5))
    assert fit.C_exp == 0.0 and fit.C_add == 0.0
    f = 2.0 * np.exp(-0.3 * t)
    fit = fit_monotonicity(t, f)
    assert fit.C_exp == pytest.approx(0.3, rel=1e-12)
    with pytest.raises(ValueError):
        fit_monotonicity(t, -f)


def test_doubling_w32(lib_fields):
    u = lib_fields(1.5, 257)
    sw = frequency_sweep(u, [0, 0], [0.1, 0.2, 0.4], identities=False)
    dt = doubling_ratios(sw)
    assert np.allclose(dt.H_ratio, 16.0, rtol=5e-3)
    assert dt.check_D()
    sw = frequency_sweep(lib_fields(2.0, 257), [0, 0], [0.1, 0.2, 0.4], identities=False)
    assert np.allclose(doubling_ratios(sw).H_ratio, 32.0, rtol=5e-3)


def test_l2_vs_H_bounded(lib_fields):
    u = lib_fields(1.5, 129)
    vals = [l2_vs_H(u, [0, 0], s / 2, s) for s in (0.2, 0.3, 0.45)]
    assert max(vals) / min(vals) < 1.05


def test_spine_extension_3d(w32):
    u = sample_function(GridSpec.uniform(3, 33), SpineExtension(w32).value, even=True)
    assert abs(frequency(u, [0, 0, 0], 0.5) - 1.5) <= 0.05


def test_theta_regime():
    assert theta_parameter(0.0, 1.0) == 1.0
    assert theta_parameter(4.0, 0.5) == pytest.approx(1 / 16)
    assert theta_parameter(0.5, 1.0) == 1.0
    assert theta_regime([0.1, 0.45], 1.0)
    assert not theta_regime([0.02, 0.45], 1.0)
    assert theta_regime([0.02, 0.45], 0.5)
