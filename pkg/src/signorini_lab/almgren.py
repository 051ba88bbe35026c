"""Sharp-ball Almgren quantities E0, H0, I0 for variable coefficients and their audits."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .coefficients import MatrixField, identity
from .errors import DegenerateError, DomainError, PreconditionError
from .fields import ScalarField, interp_many, recovered_gradient
from .frequency import DEFAULT_CUTOFF, CutoffProfile, _five_point, fit_monotonicity, frequency_integrals, write_csv
from .geometry import sphere_directions

ALMGREN_COLUMNS = ["r", "Eco", "Eco_b", "Hco", "Ico", "Er_resid", "Hr_resid"]
RULES = ("polar", "center")


def _coeff(mf: MatrixField | None, dim: int) -> MatrixField:
    return identity(dim) if mf is None else mf


def _check_ball(u: ScalarField, x0, r: float):
    if np.any(np.abs(x0) + r > 1.0 + 1e-12):
        raise DomainError(f"ball of radius {r:g} at {x0} leaves the box")
    if r < 8 * u.grid.h:
        raise DomainError(f"radius {r:g} below 8h")


def sphere_points(u: ScalarField, r: float) -> int:
    """Angular resolution M = max(64, ceil(8 r / h))."""
    return max(64, int(math.ceil(8 * r / u.grid.h)))


def _sphere_rule(dim: int, M: int):
    if dim == 2:
        th = 2 * np.pi * (np.arange(M) + 0.5) / M   # half-offset keeps nodes off the plane
        return np.stack([np.cos(th), np.sin(th)], -1), np.full(M, 2 * np.pi / M)
    return sphere_directions(3, M)


def _sphere_terms(u, mf, x0, r, M):
    """Sphere integrals at radius r: H0, int u <A grad u, nu>, int <A grad u, grad u>, 2 int <A nu, grad u>^2 / mu."""
    d = u.grid.dim
    dirs, w = _sphere_rule(d, M)
    pts = x0 + r * dirs
    val, _ = interp_many(u, pts, gradient=False)
    grad = recovered_gradient(u, pts)
    A = mf(pts)
    Ag = np.einsum("kij,kj->ki", A, grad)
    Anu = np.einsum("kij,kj->ki", A, dirs)
    mu = np.einsum("ki,ki->k", Anu, dirs)
    wr = w * r ** (d - 1)
    H0 = float(np.sum(wr * mu * val ** 2))
    Eb = float(np.sum(wr * val * np.einsum("ki,ki->k", Ag, dirs)))
    Es = float(np.sum(wr * np.einsum("ki,ki->k", Ag, grad)))
    Enu = float(np.sum(wr * 2 * np.einsum("ki,ki->k", Anu, grad) ** 2 / mu))
    return H0, Eb, Es, Enu


def _energy_polar(u, mf, x0, r, M, n_rad=None):
    """Volume energy by Gauss-Legendre in the radius and the sphere rule in angle."""
    nr = n_rad or max(16, int(math.ceil(2 * r / u.grid.h)))
    xg, wg = np.polynomial.legendre.leggauss(nr)
    rho = 0.5 * r * (xg + 1.0)
    dirs, w = _sphere_rule(u.grid.dim, M)
    pts = (x0 + rho[:, None, None] * dirs[None]).reshape(-1, u.grid.dim)
    grad = recovered_gradient(u, pts)
    A = mf(pts)
    e = np.einsum("ki,kij,kj->k", grad, A, grad).reshape(nr, -1)
    return float(np.sum((0.5 * r * wg * rho ** (u.grid.dim - 1))[:, None] * w[None] * e))


def _energy_center(u, mf, x0, r):
    """Cells whose centers lie in the closed ball, each weighted by its full volume."""
    cc = u.cell_centers.reshape(-1, u.grid.dim)
    inside = np.linalg.norm(cc - x0, axis=1) <= r
    g = u.cell_gradients.reshape(-1, u.grid.dim)[inside]
    A = mf(cc[inside])
    return float(np.einsum("ki,kij,kj->", g, A, g) * u.grid.cell_volume)


@dataclass
class AlmgrenIntegrals:
    E: float     # volume form
    Eb: float    # boundary form
    H: float
    r: float

    @property
    def I(self) -> float:
        return self.r * self.E / self.H

    @property
    def boundary_defect(self) -> float:
        return abs(self.E - self.Eb) / abs(self.E) if self.E else abs(self.Eb)


def almgren_integrals(u: ScalarField, mf: MatrixField | None, x0, r: float, rule: str = "polar",
                      M: int | None = None) -> AlmgrenIntegrals:
    x0 = np.asarray(x0, dtype=np.float64)
    mf = _coeff(mf, u.grid.dim)
    _check_ball(u, x0, r)
    if rule not in RULES:
        raise ValueError(f"unknown rule {rule!r}; expected one of {RULES}")
    M = M or sphere_points(u, r)
    H0, Eb, _, _ = _sphere_terms(u, mf, x0, r, M)
    E = _energy_polar(u, mf, x0, r, M) if rule == "polar" else _energy_center(u, mf, x0, r)
    return AlmgrenIntegrals(E, Eb, H0, r)


def ico(u: ScalarField, mf: MatrixField | None, x0, r: float, rule: str = "polar") -> float:
    ai = almgren_integrals(u, mf, x0, r, rule)
    scale = float(np.max(np.abs(u.values))) ** 2 * r ** u.grid.n
    if not ai.H > 1e-14 * scale:
        raise DegenerateError("H0 vanishes")
    return ai.I


@dataclass
class DerivativeIdentities:
    r: float
    E0: float
    H0: float
    dE0: float           # finite difference of the volume energy
    dE0_coarea: float    # sphere integral of the energy density
    dH0: float
    E_main: float
    H_main: float

    @property
    def E_r(self) -> float:
        return self.dE0 - self.E_main

    @property
    def H_r(self) -> float:
        return self.dH0 - self.H_main

    @property
    def Er_resid(self) -> float:
        """E_r scaled by E0/r."""
        return self.E_r * self.r / self.E0 if self.E0 else math.nan

    @property
    def Hr_resid(self) -> float:
        return self.H_r / self.H0


def _require_identity(mf: MatrixField, x0):
    if not mf.is_identity_at(x0, 1e-12):
        raise PreconditionError("A(x0) must be the identity")


def derivative_identities(u: ScalarField, mf: MatrixField | None, x0, r: float,
                          delta: float | None = None) -> DerivativeIdentities:
    """Numerical E0', H0' by five-point differences minus the main terms.

    The step is r/64 floored at 2h: below a cell width the sphere integrals of
    the piecewise multilinear interpolant have slope kinks that the difference
    quotient would resolve as noise. The angular resolution is held fixed.
    """
    x0 = np.asarray(x0, dtype=np.float64)
    mf = _coeff(mf, u.grid.dim)
    _require_identity(mf, x0)
    delta = max(r / 64, 2 * u.grid.h) if delta is None else delta
    _check_ball(u, x0, r + 2 * delta)
    M = sphere_points(u, r)
    n = u.grid.n
    H0, Eb, Es, Enu = _sphere_terms(u, mf, x0, r, M)
    E0 = _energy_polar(u, mf, x0, r, M)
    nr = max(16, int(math.ceil(2 * (r + 2 * delta) / u.grid.h)))
    dH = _five_point(lambda s: _sphere_terms(u, mf, x0, s, M)[0], r, delta)
    dE = _five_point(lambda s: _energy_polar(u, mf, x0, s, M, nr), r, delta)
    return DerivativeIdentities(r, E0, H0, dE, Es, dH, Enu, n / r * H0 + 2 * Eb)


@dataclass
class AlmgrenSweep:
    x0: np.ndarray
    radii: np.ndarray
    E: np.ndarray
    Eb: np.ndarray
    H: np.ndarray
    I: np.ndarray
    Er_resid: np.ndarray
    Hr_resid: np.ndarray
    n: int = 1
    fitted: dict = field(default_factory=dict)

    def rows(self):
        for k in range(len(self.radii)):
            yield [self.radii[k], self.E[k], self.Eb[k], self.H[k], self.I[k], self.Er_resid[k], self.Hr_resid[k]]

    def to_csv(self, path):
        write_csv(path, ALMGREN_COLUMNS, self.rows())


def almgren_sweep(u: ScalarField, mf: MatrixField | None, x0, radii, rule: str = "polar",
                  identities: bool = True) -> AlmgrenSweep:
    x0 = np.asarray(x0, dtype=np.float64)
    mf = _coeff(mf, u.grid.dim)
    radii = np.sort(np.asarray(radii, dtype=np.float64))
    cols = {k: [] for k in ("E", "Eb", "H", "I", "Er_resid", "Hr_resid")}
    for r in radii:
        ai = almgren_integrals(u, mf, x0, r, rule)
        if not ai.H > 0:
            raise DegenerateError(f"H0 vanishes at r={r:g}")
        if identities:
            di = derivative_identities(u, mf, x0, r)
            er, hr = di.Er_resid, di.Hr_resid
        else:
            er = hr = math.nan
        for key, v in (("E", ai.E), ("Eb", ai.Eb), ("H", ai.H), ("I", ai.I), ("Er_resid", er), ("Hr_resid", hr)):
            cols[key].append(v)
    return AlmgrenSweep(x0, radii, **{k: np.array(v) for k, v in cols.items()}, n=u.grid.n)


def ico_audit(sweep: AlmgrenSweep, min_radii: int = 8) -> float:
    """Smallest C >= 0 making exp(C r) I0(r) nondecreasing over the sweep."""
    if len(sweep.radii) < min_radii:
        raise ValueError(f"need at least {min_radii} radii")
    if np.any(sweep.I <= 0):
        raise DegenerateError("nonpositive I0 in the sweep")
    C = fit_monotonicity(sweep.radii, sweep.I, alpha=1.0).C_exp
    sweep.fitted["C_ico"] = C
    return C


def fitted_H_constant(sweep: AlmgrenSweep) -> float:
    """Smallest C >= 0 with H_r <= C H0 on the sweep rows."""
    hr = sweep.Hr_resid[np.isfinite(sweep.Hr_resid)]
    return float(max(0.0, hr.max())) if hr.size else 0.0


def lemma_exponent(sweep: AlmgrenSweep, C_ico: float | None = None) -> float:
    """beta = n + 2 sup I0, with sup I0 bounded by exp(C r_max) I0(r_max) from quasi-monotonicity."""
    C = ico_audit(sweep) if C_ico is None else C_ico
    return sweep.n + 2 * math.exp(C * sweep.radii[-1]) * float(sweep.I[-1])


def hco_power_audit(sweep: AlmgrenSweep, beta: float | None = None, C: float | None = None,
                    rtol: float = 1e-6) -> int:
    """Ordered pairs r < t violating H0(t) t^-beta e^{-Ct} <= H0(r) r^-beta e^{-Cr}.

    The exponential carries the sign obtained by integrating
    d/dr ln(H0 / r^beta) <= C between r and t.
    """
    C = fitted_H_constant(sweep) if C is None else C
    beta = lemma_exponent(sweep) if beta is None else beta
    r = sweep.radii
    # compare in logs: the quantity is nonincreasing in the radius
    q = np.log(sweep.H) - beta * np.log(r) - C * r
    viol = 0
    for i in range(len(r)):
        for j in range(i + 1, len(r)):
            if q[j] > q[i] + math.log1p(rtol):
                viol += 1
    sweep.fitted.update(beta=beta, C_H=C, violations=viol)
    return viol


DOMINATION_COLUMNS = ["r", "H_over_H0", "D_over_E0", "I_over_I0", "skipped"]


@dataclass
class DominationTable:
    radii: np.ndarray
    H_ratio: np.ndarray
    D_ratio: np.ndarray
    I_ratio: np.ndarray
    skipped: np.ndarray
    lam: float

    def bounds_ok(self) -> bool:
        ok = ~self.skipped
        return bool(np.all(self.H_ratio[ok] > 0) and np.all(self.D_ratio[ok] <= 1 / self.lam + 1e-9)
                    and np.all(np.isfinite(self.I_ratio[ok])))

    def rows(self):
        for k in range(len(self.radii)):
            yield [self.radii[k], self.H_ratio[k], self.D_ratio[k], self.I_ratio[k], int(self.skipped[k])]


def frequency_domination(u: ScalarField, mf: MatrixField | None, x0, radii,
                         phi: CutoffProfile = DEFAULT_CUTOFF, rule: str = "polar") -> DominationTable:
    """H_u/H0, D_u/E0 and I_u/I0 along a sweep; rows with E0 at round-off level are skipped."""
    x0 = np.asarray(x0, dtype=np.float64)
    mf = _coeff(mf, u.grid.dim)
    _require_identity(mf, x0)
    radii = np.sort(np.asarray(radii, dtype=np.float64))
    out = np.full((3, len(radii)), np.nan)
    skipped = np.zeros(len(radii), dtype=bool)
    scale = float(np.max(np.abs(u.values))) ** 2
    for k, r in enumerate(radii):
        ai = almgren_integrals(u, mf, x0, r, rule)
        fi = frequency_integrals(u, x0, r, phi)
        if ai.H <= 1e-14 * scale * r ** u.grid.n:
            raise DegenerateError(f"H0 vanishes at r={r:g}")
        out[0, k] = fi.H / ai.H
        if ai.E <= 1e-12 * scale * r ** (u.grid.n - 1):
            skipped[k] = True
            continue
        out[1, k] = fi.D / ai.E
        out[2, k] = fi.I / ai.I
    return DominationTable(radii, out[0], out[1], out[2], skipped, mf.lam)
