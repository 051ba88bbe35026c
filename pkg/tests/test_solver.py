import numpy as np
import pytest

from signorini_lab.coefficients import constant, identity, make_preset
from signorini_lab.errors import HypothesisError, SizeCapError
from signorini_lab.fields import GridSpec, sample_function
from signorini_lab.geometry import library_by_lambda
from signorini_lab.solver import (SolverConfig, assemble, oracle_solve, signorini_residuals,
                                  solve_signorini)

PRESETS = [("identity", {}), ("diag_linear", {"a": 0.2}), ("scalar_abs", {"c": 0.3}),
           ("rotation", {"a": 0.2, "kappa": 0.5}), ("sobolev_power", {})]


def test_q1_stencil_identity():
    # smallest admissible grid is 5x5; the interior stencil is the bilinear-element Laplacian
    g = GridSpec.uniform(2, 5)
    K = assemble(identity(2), g).K.toarray()
    row = K[2 * 5 + 2].reshape(5, 5)
    expect = np.zeros((5, 5))
    expect[1:4, 1:4] = -1.0 / 3.0
    expect[2, 2] = 8.0 / 3.0
    assert np.allclose(row, expect, atol=1e-14)


@pytest.mark.parametrize("name,params", PRESETS)
def test_symmetric_stiffness(name, params):
    g = GridSpec.uniform(2, 9)
    K = assemble(make_preset(name, 2, **params), g).K
    assert abs(K - K.T).max() == 0.0


def test_linear_reproduction():
    g = GridSpec.uniform(2, 9)
    sys = assemble(constant(np.diag([2.0, 0.5])), g)
    v = sample_function(g, lambda x: 2 + x[..., 0], even=True)
    r = sys.K @ v.values.ravel()
    assert np.max(np.abs(r[sys.free])) <= 1e-12


def test_h3_rejected():
    with pytest.raises(HypothesisError):
        assemble(make_preset("plane_coupled", 2, b=0.2), GridSpec.uniform(2, 9))


def test_inactive_linear_solution():
    g = GridSpec.uniform(2, 17)
    data = sample_function(g, lambda x: 2 + x[..., 0], even=True)
    u, rep = solve_signorini(assemble(identity(2), g), data, SolverConfig(tol=1e-15))
    assert rep.converged
    assert np.max(np.abs(u.values - data.values)) <= 1e-12
    res = signorini_residuals(u, identity(2))
    assert res.max_pde <= 1e-10 and res.max_complementarity <= 1e-10


def test_w32_convergence_order():
    w = library_by_lambda(1.5)
    errs = []
    for n in (33, 65):
        g = GridSpec.uniform(2, n)
        u, rep = solve_signorini(assemble(identity(2), g), sample_function(g, w.value, even=True),
                                 SolverConfig(omega="auto"))
        assert rep.converged and rep.max_violation == 0.0
        errs.append(np.max(np.abs(u.values - sample_function(g, w.value, even=True).values)))
    assert np.log2(errs[0] / errs[1]) >= 1.0


def test_energy_monotone_and_even(solved_w32_identity):
    u, rep, _ = solved_w32_identity
    assert np.all(np.diff(rep.energy_history) <= 1e-12 * abs(rep.energy_history[0]))
    assert np.max(np.abs(u.values - u.values[:, ::-1])) <= 1e-12


@pytest.mark.parametrize("name,params", PRESETS)
def test_matches_oracle_9x9(name, params, w32):
    g = GridSpec.uniform(2, 9)
    sys = assemble(make_preset(name, 2, **params), g)
    data = sample_function(g, w32.value, even=True)
    u, _ = solve_signorini(sys, data, SolverConfig(tol=1e-14))
    v, orep = oracle_solve(sys, data, return_report=True)
    assert np.max(np.abs(u.values - v.values)) <= 1e-8
    assert orep.kkt_residual <= 1e-10


def test_oracle_inactive_equals_unconstrained():
    g = GridSpec.uniform(2, 9)
    sys = assemble(identity(2), g)
    data = sample_function(g, lambda x: 3 + x[..., 0] ** 2 - x[..., 1] ** 2, even=True)
    v = oracle_solve(sys, data)
    K = sys.K.toarray()
    f = sys.free
    x = data.values.ravel().copy()
    x[f] = np.linalg.solve(K[np.ix_(f, f)], -K[np.ix_(f, ~f)] @ x[~f])
    assert np.max(np.abs(v.values.ravel() - x)) <= 1e-12


def test_oracle_all_contact():
    g = GridSpec.uniform(2, 9)
    sys = assemble(identity(2), g)
    # negative on the box boundary away from the plane corners: every plane node clamps
    data = sample_function(g, lambda x: -(1 - x[..., 0] ** 2) + 0 * x[..., 1], even=True)
    v = oracle_solve(sys, data)
    assert np.all(v.plane_values() == 0.0)
    K = sys.K.toarray()
    fixed = sys.dirichlet | sys.plane
    x = data.values.ravel().copy()
    x[sys.plane] = 0.0
    rest = ~fixed
    x[rest] = np.linalg.solve(K[np.ix_(rest, rest)], -K[np.ix_(rest, fixed)] @ x[fixed])
    assert np.max(np.abs(v.values.ravel() - x)) <= 1e-12


def test_random_small_kkt(rng):
    g = GridSpec.uniform(2, 11)
    sys = assemble(make_preset("rotation", 2, a=0.2, kappa=0.5), g)
    vals = rng.uniform(-1, 1, g.shape)
    vals = 0.5 * (vals + vals[:, ::-1])
    vals[:, g.plane_index] = np.abs(vals[:, g.plane_index])
    data = sample_function(g, lambda x: 0 * x[..., 0]).with_values(vals, even=True)
    _, orep = oracle_solve(sys, data, return_report=True)
    assert orep.kkt_residual <= 1e-10


def test_residuals_report_violation():
    g = GridSpec.uniform(2, 9)
    u = sample_function(g, lambda x: x[..., 0] - 0.1 + 0 * x[..., 1], even=True)
    res = signorini_residuals(u, identity(2))
    assert res.min_plane < 0


def test_oracle_size_cap():
    g = GridSpec.uniform(2, 41)
    with pytest.raises(SizeCapError):
        oracle_solve(assemble(identity(2), g), sample_function(g, lambda x: 1 + 0 * x[..., 0], even=True))
