import math

import numpy as np
import pytest

from signorini_lab.almgren import (almgren_integrals, almgren_sweep, derivative_identities, frequency_domination,
                                   hco_power_audit, ico, ico_audit, lemma_exponent)
from signorini_lab.coefficients import constant, identity, make_preset
from signorini_lab.errors import DomainError, PreconditionError
from signorini_lab.fields import GridSpec, sample_function
from signorini_lab.frequency import geometric_radii
from signorini_lab.solver import SolverConfig, assemble, solve_signorini

RADII = geometric_radii(0.15, 0.45, 2 ** 0.125)


def test_closed_form_w32(lib_fields):
    u = lib_fields(1.5, 129)
    ai = almgren_integrals(u, None, [0, 0], 0.5)
    assert ai.E == pytest.approx(3 * math.pi / 16, rel=1e-2)
    assert ai.H == pytest.approx(math.pi / 16, rel=1e-2)
    assert ai.I == pytest.approx(1.5, rel=2e-2)
    assert ai.boundary_defect <= 1e-2
    # the cell-inclusion rule is kept as an option
    assert almgren_integrals(u, None, [0, 0], 0.5, rule="center").E == pytest.approx(3 * math.pi / 16, rel=1e-2)


def test_constant_field():
    u = sample_function(GridSpec.uniform(2, 129), lambda x: np.ones(x.shape[:-1]), even=True)
    ai = almgren_integrals(u, identity(2), [0, 0], 0.3)
    assert ai.E == 0.0
    assert ai.H == pytest.approx(2 * math.pi * 0.3, rel=1e-12)


@pytest.mark.parametrize("lam", [1.5, 2.0])
def test_ico_homogeneous(lib_fields, lam):
    u = lib_fields(lam, 129)
    for r in (0.15, 0.3, 0.45):
        assert abs(ico(u, None, [0, 0], r) - lam) <= 0.02
    v = u.with_values(-4.0 * u.values)
    assert ico(v, None, [0, 0], 0.3) == ico(u, None, [0, 0], 0.3)


def test_ball_checks(lib_fields):
    u = lib_fields(1.5, 129)
    with pytest.raises(DomainError):
        almgren_integrals(u, None, [0, 0], 0.05)
    with pytest.raises(DomainError):
        almgren_integrals(u, None, [0.8, 0], 0.4)
    with pytest.raises(ValueError):
        almgren_integrals(u, None, [0, 0], 0.3, rule="simpson")


def test_derivative_identities_w32(lib_fields):
    u = lib_fields(1.5, 129)
    for r in (0.2, 0.3, 0.45):
        di = derivative_identities(u, identity(2), [0, 0], r)
        assert abs(di.H_r) <= 1e-2 * di.H0
        assert abs(di.Er_resid) <= 1e-2
    with pytest.raises(PreconditionError):
        derivative_identities(u, constant(np.diag([2.0, 1.0])), [0, 0], 0.3)


def test_ico_audit_and_noise(lib_fields):
    u = lib_fields(1.5, 257)
    sw = almgren_sweep(u, None, [0, 0], RADII, identities=False)
    clean = ico_audit(sw)
    assert clean <= 1e-3 and sw.fitted["C_ico"] == clean
    noise = np.random.default_rng(7).standard_normal(u.grid.shape) * 1e-8
    noisy = u.with_values(u.values + 0.5 * (noise + noise[:, ::-1]))
    assert abs(ico_audit(almgren_sweep(noisy, None, [0, 0], RADII, identities=False)) - clean) <= 1e-2
    with pytest.raises(ValueError):
        ico_audit(almgren_sweep(u, None, [0, 0], RADII[:3], identities=False))


def test_power_audit_direction(lib_fields):
    u = lib_fields(1.5, 257)
    sw = almgren_sweep(u, None, [0, 0], RADII)
    assert hco_power_audit(sw, beta=1 + 2 * 1.5 + 0.05, C=0.0) == 0
    assert hco_power_audit(sw, beta=1.0, C=0.0) > 0
    assert lemma_exponent(sw) >= 1 + 2 * 1.5 - 1e-2


@pytest.fixture(scope="module")
def solved_scalar_abs(w32):
    g = GridSpec.uniform(2, 129)
    mf = make_preset("scalar_abs", 2, c=0.3)
    u, _ = solve_signorini(assemble(mf, g), sample_function(g, w32.value, even=True), SolverConfig(omega="auto"))
    return u, mf


def test_power_audit_solved(solved_scalar_abs):
    u, mf = solved_scalar_abs
    sw = almgren_sweep(u, mf, [0, 0], RADII)
    assert hco_power_audit(sw) == 0
    assert sw.fitted["violations"] == 0


def test_domination(lib_fields, solved_scalar_abs):
    u = lib_fields(1.5, 129)
    tab = frequency_domination(u, None, [0, 0], [0.2, 0.3, 0.45])
    assert np.allclose(tab.I_ratio, 1.0, atol=2e-2) and tab.bounds_ok()
    one = u.with_values(np.ones(u.grid.shape))
    tab = frequency_domination(one, None, [0, 0], [0.2, 0.3])
    assert np.all(tab.skipped) and np.all(np.isnan(tab.I_ratio))
    v, mf = solved_scalar_abs
    tab = frequency_domination(v, mf, [0, 0], RADII)
    assert tab.bounds_ok()
    assert np.ptp(tab.I_ratio) <= 0.1 and np.ptp(tab.D_ratio) <= 0.1
