"""Q1 discretization of the thin obstacle problem, projected SOR and a dense active-set oracle."""

from __future__ import annotations

import itertools
import logging
import math
import time
from dataclasses import dataclass, field
from functools import lru_cache

import numba
import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp

from .coefficients import MatrixField, require_hypotheses
from .errors import PreconditionError, SizeCapError, SolverDivergence
from .fields import GridSpec, ScalarField, interp_many

log = logging.getLogger(__name__)

ORACLE_CAP = 1500


@lru_cache(maxsize=None)
def _element_blocks(spacing: tuple[float, ...]) -> np.ndarray:
    """M[i, j] = int_cell dN_a/dx_i dN_b/dx_j for the 2^d corner shape functions."""
    d = len(spacing)
    out = np.zeros((d, d, 2 ** d, 2 ** d))
    for i in range(d):
        for j in range(d):
            M = np.ones((1, 1))
            for k, h in enumerate(spacing):
                mass = h / 6.0 * np.array([[2.0, 1.0], [1.0, 2.0]])
                stiff = np.array([[1.0, -1.0], [-1.0, 1.0]]) / h
                # int N_a' N_b on [0, h]
                mixed = np.array([[-0.5, -0.5], [0.5, 0.5]])
                if k == i and k == j:
                    f = stiff
                elif k == i:
                    f = mixed
                elif k == j:
                    f = mixed.T
                else:
                    f = mass
                M = np.kron(M, f)
            out[i, j] = M
    return out


@dataclass(eq=False)
class StiffnessSystem:
    grid: GridSpec
    K: sp.csr_matrix
    dirichlet: np.ndarray   # bool mask over flat nodes
    plane: np.ndarray       # bool mask, thin-plane nodes that are not Dirichlet
    coeff: MatrixField

    @property
    def free(self) -> np.ndarray:
        return ~self.dirichlet

    @property
    def interior(self) -> np.ndarray:
        return ~self.dirichlet & ~self.plane

    def load(self, g: ScalarField) -> np.ndarray:
        """Right-hand side from the boundary data: -K[:, D] g_D (zero on Dirichlet rows)."""
        gd = np.where(self.dirichlet, g.values.ravel(), 0.0)
        b = -(self.K @ gd)
        b[self.dirichlet] = 0.0
        return b

    def energy(self, u: np.ndarray) -> float:
        u = np.asarray(u).ravel()
        return 0.5 * float(u @ (self.K @ u))


def _boundary_mask(grid: GridSpec) -> np.ndarray:
    m = np.zeros(grid.shape, dtype=bool)
    for k in range(grid.dim):
        idx = [slice(None)] * grid.dim
        idx[k] = 0
        m[tuple(idx)] = True
        idx[k] = -1
        m[tuple(idx)] = True
    return m


def assemble(mf: MatrixField, grid: GridSpec, check: bool = True) -> StiffnessSystem:
    if mf.dim != grid.dim:
        raise ValueError("coefficient and grid dimensions differ")
    if check:
        require_hypotheses(mf, grid)
    d = grid.dim
    blocks = _element_blocks(grid.spacing)
    A = mf(grid.cell_centers()).reshape(-1, d, d)
    Ke = np.einsum("cij,ijab->cab", A, blocks)

    cell_shape = tuple(c - 1 for c in grid.counts)
    base = np.stack(np.meshgrid(*[np.arange(c) for c in cell_shape], indexing="ij"), -1).reshape(-1, d)
    corners = np.array(list(itertools.product((0, 1), repeat=d)))
    glob = np.ravel_multi_index(tuple((base[:, None, :] + corners[None]).transpose(2, 0, 1)), grid.shape)
    nloc = 2 ** d
    rows = np.repeat(glob, nloc, axis=1).ravel()
    cols = np.tile(glob, (1, nloc)).ravel()
    K = sp.coo_matrix((Ke.ravel(), (rows, cols)), shape=(grid.size, grid.size)).tocsr()
    K.sum_duplicates()
    # exact symmetry regardless of summation order
    K = ((K + K.T) * 0.5).tocsr()
    K.sort_indices()

    dirichlet = _boundary_mask(grid).ravel()
    plane = np.zeros(grid.shape, dtype=bool)
    plane[..., grid.plane_index] = True
    plane = plane.ravel() & ~dirichlet
    return StiffnessSystem(grid, K, dirichlet, plane, mf)


# ------------------------------------------------------------------ PSOR

@numba.njit(cache=True)
def _psor_sweep(indptr, indices, data, diag, u, order, is_plane, omega):
    max_du = 0.0
    d_energy = 0.0
    worst = 0.0
    for k in range(order.size):
        i = order[k]
        s = 0.0
        for p in range(indptr[i], indptr[i + 1]):
            j = indices[p]
            if j != i:
                s += data[p] * u[j]
        old = u[i]
        new = old + omega * (-s / diag[i] - old)
        if is_plane[i] and new < 0.0:
            new = 0.0
        du = new - old
        de = 0.5 * diag[i] * (new * new - old * old) + du * s
        scale = 0.5 * diag[i] * (new * new + old * old) + abs(du * s) + 1e-300
        if de / scale > worst:
            worst = de / scale
        d_energy += de
        u[i] = new
        if abs(du) > max_du:
            max_du = abs(du)
    return max_du, d_energy, worst


@dataclass
class SolverConfig:
    omega: float | str = 1.5
    tol: float = 1e-10
    max_sweeps: int | None = None
    nested: bool = True
    reverse: bool = False
    strict_energy: bool = True

    def resolved_omega(self, grid: GridSpec) -> float:
        if self.omega == "auto":
            # classical SOR optimum for the model Laplacian on this grid
            return 2.0 / (1.0 + math.sin(math.pi * grid.h / 2.0))
        w = float(self.omega)
        if not 0.0 < w < 2.0:
            raise ValueError("relaxation factor must lie in (0, 2)")
        return w

    def cap(self, grid: GridSpec) -> int:
        if self.max_sweeps is not None:
            return int(self.max_sweeps)
        return int(200 * math.sqrt(grid.size) * grid.dim)


@dataclass
class SolveReport:
    iterations: int
    energy: float
    energy_history: list = field(repr=False)
    max_pde_residual: float
    max_complementarity: float
    max_violation: float
    min_plane: float
    max_contact_flux: float
    converged: bool
    wall_time: float
    omega: float
    coarse_levels: int = 0

    def as_items(self):
        return [
            ("iterations", self.iterations),
            ("energy", self.energy),
            ("max_pde_residual", self.max_pde_residual),
            ("max_complementarity", self.max_complementarity),
            ("max_violation", self.max_violation),
            ("min_plane", self.min_plane),
            ("max_contact_flux", self.max_contact_flux),
            ("converged", int(self.converged)),
            ("omega", self.omega),
            ("coarse_levels", self.coarse_levels),
        ]


def _coarsen(grid: GridSpec):
    if any((c - 1) % 2 for c in grid.counts):
        return None
    counts = tuple((c - 1) // 2 + 1 for c in grid.counts)
    if min(counts) < 9 or counts[-1] % 2 == 0:
        return None
    return GridSpec(counts)


def _check_data(sys: StiffnessSystem, g: ScalarField):
    if g.grid != sys.grid:
        raise ValueError("boundary data lives on a different grid")
    v = g.values
    if np.max(np.abs(v - v[..., ::-1])) > 1e-12 * max(1.0, np.max(np.abs(v))):
        raise PreconditionError("boundary data must be even in the last coordinate")
    bplane = g.plane_values()[_boundary_mask(g.grid)[..., g.grid.plane_index]]
    if bplane.size and bplane.min() < -1e-14 * max(1.0, np.max(np.abs(v))):
        raise PreconditionError("boundary data must be nonnegative where the box boundary meets the plane")


def solve_signorini(sys: StiffnessSystem, g: ScalarField, cfg: SolverConfig | None = None,
                    initial: np.ndarray | None = None) -> tuple[ScalarField, SolveReport]:
    """Projected SOR for min 1/2 u.K.u with u = g on the box boundary and u >= 0 on the plane."""
    cfg = cfg or SolverConfig()
    t0 = time.perf_counter()
    _check_data(sys, g)
    grid = sys.grid
    levels = 0
    if initial is None and cfg.nested:
        cg = _coarsen(grid)
        if cg is not None:
            csys = assemble(sys.coeff, cg, check=False)
            cdata = ScalarField(cg, g.values[tuple(slice(None, None, 2) for _ in range(grid.dim))], True)
            ccfg = SolverConfig(cfg.omega, cfg.tol, cfg.max_sweeps, True, cfg.reverse, cfg.strict_energy)
            cu, crep = solve_signorini(csys, cdata, ccfg)
            initial, _ = interp_many(cu, grid.nodes().reshape(-1, grid.dim), gradient=False)
            levels = crep.coarse_levels + 1

    u = np.where(sys.dirichlet, g.values.ravel(), 0.0)
    if initial is not None:
        u = np.where(sys.dirichlet, u, np.asarray(initial, dtype=np.float64).ravel())
    u[sys.plane] = np.maximum(u[sys.plane], 0.0)

    K = sys.K
    diag = K.diagonal().copy()
    order = np.flatnonzero(sys.free).astype(np.int64)
    if cfg.reverse:
        order = order[::-1].copy()
    omega = cfg.resolved_omega(grid)
    scale = max(1.0, float(np.max(np.abs(g.values))))
    e = sys.energy(u)
    history = [e]
    converged = False
    it = 0
    for it in range(1, cfg.cap(grid) + 1):
        du, de, worst = _psor_sweep(K.indptr, K.indices, K.data, diag, u, order, sys.plane, omega)
        e += de
        history.append(e)
        if cfg.strict_energy and worst > 1e-9:
            raise SolverDivergence(f"energy increased during sweep {it} (relative {worst:.3e})",
                                   report={"iteration": it, "energy": e})
        if du <= cfg.tol * max(scale, float(np.max(np.abs(u)))):
            converged = True
            break
    if not converged:
        log.warning("PSOR hit the sweep cap (%d) before reaching tol %.1e", it, cfg.tol)

    vals = u.reshape(grid.shape)
    vals = 0.5 * (vals + vals[..., ::-1])
    out = ScalarField(grid, vals, even=True, name="u")
    res = signorini_residuals(out, sys=sys)
    rep = SolveReport(
        iterations=it,
        energy=sys.energy(out.values),
        energy_history=history,
        max_pde_residual=res.max_pde,
        max_complementarity=res.max_complementarity,
        max_violation=max(0.0, -res.min_plane),
        min_plane=res.min_plane,
        max_contact_flux=res.max_contact_flux,
        converged=converged,
        wall_time=time.perf_counter() - t0,
        omega=omega,
        coarse_levels=levels,
    )
    return out, rep


@dataclass
class ResidualReport:
    max_pde: float
    max_pde_interior: float
    max_pde_plane_positive: float
    min_plane: float
    max_contact_flux: float
    max_complementarity: float
    flux: np.ndarray = field(repr=False)


def plane_flux(sys: StiffnessSystem, u: np.ndarray, g: ScalarField | None = None) -> np.ndarray:
    """Weak conormal flux A grad u . e_d from above at every plane node (NaN off the plane).

    The Q1 residual at a plane node equals minus the jump of the flux times the
    in-plane dual measure; by even symmetry the jump is twice the one-sided flux.
    """
    u = np.asarray(u).ravel()
    r = sys.K @ u
    dual = float(np.prod(sys.grid.spacing[:-1]))
    out = np.full(u.shape, np.nan)
    out[sys.plane] = -r[sys.plane] / (2.0 * dual)
    return out


def signorini_residuals(u: ScalarField, mf: MatrixField | None = None, sys: StiffnessSystem | None = None,
                        tol: float | None = None) -> ResidualReport:
    if sys is None:
        if mf is None:
            raise ValueError("need a coefficient field or an assembled system")
        sys = assemble(mf, u.grid, check=False)
    grid = u.grid
    flat = u.values.ravel()
    r = sys.K @ flat
    vol = grid.cell_volume
    div = np.abs(r) / vol
    scale = max(1.0, float(np.max(np.abs(flat))))
    tol = 1e-9 * scale if tol is None else tol
    interior = sys.interior
    plane_pos = sys.plane & (flat > tol)
    contact = sys.plane & (flat <= tol)
    pde_int = float(div[interior].max()) if interior.any() else 0.0
    pde_pos = float(div[plane_pos].max()) if plane_pos.any() else 0.0
    flux = plane_flux(sys, flat)
    min_plane = float(flat[sys.plane].min()) if sys.plane.any() else 0.0
    cflux = float(flux[contact].max()) if contact.any() else -math.inf
    comp = float(np.max(np.abs(flat[sys.plane] * flux[sys.plane]))) if sys.plane.any() else 0.0
    return ResidualReport(max(pde_int, pde_pos), pde_int, pde_pos, min_plane, cflux, comp,
                          flux.reshape(grid.shape))


# ---------------------------------------------------------------- oracle

@dataclass
class OracleReport:
    kkt_residual: float
    active: np.ndarray
    iterations: int


def _bound_qp(S: np.ndarray, c: np.ndarray, max_iter: int = 1000):
    """Primal active-set method for min 1/2 x.S.x + c.x subject to x >= 0, S SPD."""
    m = len(c)
    x = np.zeros(m)
    W = np.ones(m, dtype=bool)  # working set: bounds held at zero
    for it in range(max_iter):
        F = ~W
        xf = np.zeros(m)
        if F.any():
            xf[F] = sla.solve(S[np.ix_(F, F)], -c[F], assume_a="pos")
        p = xf - x
        if np.max(np.abs(p)) <= 1e-15 * max(1.0, np.max(np.abs(x))):
            lam = S @ x + c
            lam_w = np.where(W, lam, np.inf)
            j = int(np.argmin(lam_w))
            if lam_w[j] >= -1e-14 * max(1.0, np.max(np.abs(c))):
                return x, W, it
            W[j] = False
            continue
        # ratio test against free variables heading below zero
        neg = F & (p < 0)
        alpha, block = 1.0, -1
        if neg.any():
            ratios = np.where(neg, -x / np.where(neg, p, -1.0), np.inf)
            block = int(np.argmin(ratios))
            if ratios[block] < 1.0:
                alpha = ratios[block]
            else:
                block = -1
        x = x + alpha * p
        if block >= 0:
            x[block] = 0.0
            W[block] = True
        x[W] = 0.0
    raise SolverDivergence("active-set oracle did not terminate")


def oracle_solve(sys: StiffnessSystem, g: ScalarField, return_report: bool = False):
    """Exact discrete solution by Schur reduction onto the plane and a dense active-set QP."""
    grid = sys.grid
    if grid.size > ORACLE_CAP:
        raise SizeCapError(f"oracle limited to {ORACLE_CAP} nodes, grid has {grid.size}")
    K = sys.K.toarray()
    free = sys.free
    P = sys.plane
    Q = free & ~P
    u = np.where(sys.dirichlet, g.values.ravel(), 0.0)
    b = -(K[:, sys.dirichlet] @ u[sys.dirichlet])
    KQQ = K[np.ix_(Q, Q)]
    KQP = K[np.ix_(Q, P)]
    cho = sla.cho_factor(KQQ)
    Y = sla.cho_solve(cho, KQP)
    yb = sla.cho_solve(cho, b[Q])
    S = K[np.ix_(P, P)] - KQP.T @ Y
    S = 0.5 * (S + S.T)
    c = -(b[P] - KQP.T @ yb)
    xp, W, its = _bound_qp(S, c)
    # polish: re-solve the full free system with the identified active set pinned at zero
    fixed = sys.dirichlet.copy()
    act = np.zeros_like(P)
    act[np.flatnonzero(P)[W]] = True
    fixed |= act
    rest = ~fixed
    u[act] = 0.0
    rhs = -(K[np.ix_(rest, fixed)] @ u[fixed])
    u[rest] = sla.solve(K[np.ix_(rest, rest)], rhs, assume_a="pos")

    r = K @ u
    scale = max(1.0, float(np.max(np.abs(u))), float(np.max(np.abs(K))))
    kkt = max(
        float(np.max(np.abs(r[Q]))) if Q.any() else 0.0,
        float(np.max(np.abs(np.minimum(u[P], r[P])))) if P.any() else 0.0,
        float(max(0.0, -u[P].min())) if P.any() else 0.0,
    ) / scale
    if kkt > 1e-10:
        raise SolverDivergence(f"oracle KKT residual {kkt:.3e} above 1e-10")
    out = ScalarField(grid, u.reshape(grid.shape), even=True, name="u_oracle")
    if return_report:
        return out, OracleReport(kkt, act.reshape(grid.shape), its)
    return out
