"""Smoothed frequency function: cutoff, the integrals H, D, G, E, error terms, sweeps and audits."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .coefficients import MatrixField, anisotropy
from .errors import DegenerateError, DomainError
from ._quadrature import cutoff_coeffs, integrals_2d, integrals_3d
from .fields import GridSpec, ScalarField, interp_many

# ------------------------------------------------------------------ cutoff

_LO, _HI = 0.5, 1.0
_A, _B = 0.625, 0.875
_L = 0.125


def _blend(kind: str):
    """Polynomial p on [0, 1] with p(0)=1, p'(0)=0, p(1)=3/4, p'(1)=-1/4 (s-units)."""
    if kind == "quintic":
        c = np.array([1.0, 0.0, 0.0, -1.5, 2.0, -0.75])  # also p''(0) = p''(1) = 0
    elif kind == "cubic":
        c = np.array([1.0, 0.0, -0.5, 0.25])
    else:
        raise ValueError(f"unknown blend {kind!r}")
    P = np.polynomial.Polynomial(c)
    return P, P.deriv(), P.deriv(2)


@dataclass(frozen=True)
class CutoffProfile:
    """phi = 1 on [0, 1/2], 2(1 - t) on [5/8, 7/8], 0 past 1, with polynomial blends in between."""

    blend: str = "quintic"

    def _pieces(self):
        return _blend(self.blend)

    def _eval(self, t, order: int):
        t = np.asarray(t, dtype=np.float64)
        P = self._pieces()[order]
        out = np.zeros_like(t)
        s1 = (t - _LO) / _L
        s2 = (t - _B) / _L
        m1 = (t > _LO) & (t < _A)
        mid = (t >= _A) & (t <= _B)
        m2 = (t > _B) & (t < _HI)
        scale = _L ** -order
        if order == 0:
            out = np.where(t <= _LO, 1.0, 0.0)
            out = np.where(mid, 2.0 * (1.0 - t), out)
            out = np.where(m1, P(s1), out)
            out = np.where(m2, 1.0 - P(1.0 - s2), out)
        elif order == 1:
            out = np.where(mid, -2.0, out)
            out = np.where(m1, P(s1) * scale, out)
            out = np.where(m2, P(1.0 - s2) * scale, out)
        else:
            out = np.where(m1, P(s1) * scale, out)
            out = np.where(m2, -P(1.0 - s2) * scale, out)
        return out

    def phi(self, t):
        return self._eval(t, 0)

    def dphi(self, t):
        return self._eval(t, 1)

    def d2phi(self, t):
        return self._eval(t, 2)

    def psi(self, t):
        """phi'(t) / t, zero on [0, 1/2]."""
        t = np.asarray(t, dtype=np.float64)
        return np.where(t > _LO, self.dphi(t) / np.where(t > 0, t, 1.0), 0.0)

    @property
    def lipschitz_dphi(self) -> float:
        s = np.linspace(0.0, 1.0, 4001)
        return float(np.max(np.abs(self._pieces()[2](s)))) / _L ** 2

    def radial_moment(self, k: int) -> float:
        """-int_0^1 phi'(t) t^k dt, exact for the piecewise polynomial profile."""
        from numpy.polynomial import Polynomial as Poly
        P1 = self._pieces()[1]
        tk = Poly([0.0] * k + [1.0])
        # first blend: t = 1/2 + L s, dt = L ds, phi' = P1(s)/L
        f1 = (P1 * tk(Poly([_LO, _L]))).integ()
        part1 = f1(1.0) - f1(0.0)
        part_mid = 2.0 * (_B ** (k + 1) - _A ** (k + 1)) / (k + 1)
        # second blend: t = 7/8 + L s, phi' = P1(1 - s)/L
        f2 = (P1(Poly([1.0, -1.0])) * tk(Poly([_B, _L]))).integ()
        part2 = f2(1.0) - f2(0.0)
        return float(-(part1 + part2) + part_mid)


def build_cutoff(blend: str = "quintic") -> CutoffProfile:
    _blend(blend)
    return CutoffProfile(blend)


DEFAULT_CUTOFF = CutoffProfile()

# -------------------------------------------------------------- quadrature


def _check_support(grid: GridSpec, center, half_widths):
    c = np.asarray(center, dtype=np.float64)
    hw = np.broadcast_to(np.asarray(half_widths, dtype=np.float64), c.shape)
    if np.any(c - hw < -1.0 - 1e-12) or np.any(c + hw > 1.0 + 1e-12):
        raise DomainError(f"support around {c.tolist()} with half-widths {hw.tolist()} leaves the box")


def ball_cells(u: ScalarField, center, half_widths):
    """Cell centers, values and interpolant gradients for cells inside a bounding box."""
    g = u.grid
    c = np.asarray(center, dtype=np.float64)
    hw = np.broadcast_to(np.asarray(half_widths, dtype=np.float64), c.shape)
    sl = []
    for k in range(g.dim):
        hk = g.spacing[k]
        lo = int(max(0, math.floor((c[k] - hw[k] + 1.0) / hk)))
        hi = int(min(g.counts[k] - 1, math.ceil((c[k] + hw[k] + 1.0) / hk)))
        sl.append(slice(lo, hi))
    sl = tuple(sl)
    d = g.dim
    return (u.cell_centers[sl].reshape(-1, d), u.cell_values[sl].ravel(),
            u.cell_gradients[sl].reshape(-1, d))


@dataclass
class FrequencyIntegrals:
    H: float
    D: float
    G: float
    E: float
    Dprime: float
    r: float

    @property
    def I(self) -> float:
        return self.r * self.D / self.H


def default_subdivision(dim: int) -> int:
    return 8 if dim == 2 else 4


def weighted_integrals(u: ScalarField, center, r: float, phi: CutoffProfile, T=None, M=None,
                       extent=None, subdiv: int | None = None) -> np.ndarray:
    """Raw sums [H, D, rG, r^2 E, r^2 D'] with distance |T(y - center)| and gradient form <M g, g>."""
    g = u.grid
    d = g.dim
    c = np.asarray(center, dtype=np.float64)
    T = np.eye(d) if T is None else np.ascontiguousarray(T, dtype=np.float64)
    M = np.eye(d) if M is None else np.ascontiguousarray(M, dtype=np.float64)
    ext = np.full(d, r) if extent is None else np.asarray(extent, dtype=np.float64)
    _check_support(g, c, ext)
    lo = np.empty(d, dtype=np.int64)
    hi = np.empty(d, dtype=np.int64)
    for k in range(d):
        hk = g.spacing[k]
        lo[k] = max(0, int(math.floor((c[k] - ext[k] + 1.0) / hk)) - 1)
        hi[k] = min(g.counts[k] - 1, int(math.ceil((c[k] + ext[k] + 1.0) / hk)) + 1)
    q = default_subdivision(d) if subdiv is None else int(subdiv)
    P, P1 = cutoff_coeffs(phi.blend)
    tnorm = float(np.linalg.norm(T, 2))
    cg = np.ascontiguousarray(u.cell_gradients)
    p = g.plane_index
    if d == 2:
        return integrals_2d(u.values, cg, p, g.spacing[0], g.spacing[1], lo, hi, c, T, M, float(r), P, P1, q, tnorm)
    return integrals_3d(u.values, cg, p, *g.spacing, lo, hi, c, T, M, float(r), P, P1, q, tnorm)


def frequency_integrals(u: ScalarField, x0, r: float, phi: CutoffProfile = DEFAULT_CUTOFF,
                        min_cells: float = 4.0, subdiv: int | None = None) -> FrequencyIntegrals:
    """Cutoff-weighted H, D, G, E and the analytic dD/dr by cell-center quadrature.

    Cells crossing the transition band of the cutoff are subdivided (see
    ``default_subdivision``); all of H, G, E share the same nonnegative
    weights, so E H >= G^2 holds for the computed values as well.
    """
    g = u.grid
    x0 = np.asarray(x0, dtype=np.float64)
    if r < min_cells * g.h:
        raise DomainError(f"radius {r:.4g} below the resolvable floor {min_cells:g}h")
    raw = weighted_integrals(u, x0, r, phi, subdiv=subdiv)
    return FrequencyIntegrals(float(raw[0]), float(raw[1]), float(raw[2]) / r, float(raw[3]) / r ** 2,
                              float(raw[4]) / r ** 2, r)


def _degenerate(H: float, u: ScalarField, r: float) -> bool:
    scale = float(np.max(np.abs(u.values))) ** 2 * r ** u.grid.n
    return not H > 1e-14 * scale


def frequency(u: ScalarField, x0, r: float, phi: CutoffProfile = DEFAULT_CUTOFF) -> float:
    fi = frequency_integrals(u, x0, r, phi)
    if _degenerate(fi.H, u, r):
        raise DegenerateError(f"H vanishes at x0={list(np.asarray(x0, float))}, r={r:g}")
    return fi.I


def rescale(u: ScalarField, x0, r: float, grid: GridSpec | None = None,
            phi: CutoffProfile = DEFAULT_CUTOFF) -> ScalarField:
    """u_{x0,r}(y) = r^{n/2} u(x0 + r y) / H^{1/2}(x0, r) sampled on a fresh grid over the unit box."""
    grid = grid or u.grid
    x0 = np.asarray(x0, dtype=np.float64)
    fi = frequency_integrals(u, x0, r, phi)
    if _degenerate(fi.H, u, r):
        raise DegenerateError("cannot rescale around a point where H vanishes")
    _check_support(u.grid, x0, r)
    pts = x0 + r * grid.nodes().reshape(-1, grid.dim)
    vals, _ = interp_many(u, pts, gradient=False)
    vals = vals * r ** (grid.n / 2.0) / math.sqrt(fi.H)
    return ScalarField(grid, vals.reshape(grid.shape), u.even, name=f"{u.name}_rescaled")


def _five_point(f, r: float, delta: float) -> float:
    return (f(r - 2 * delta) - 8 * f(r - delta) + 8 * f(r + delta) - f(r + 2 * delta)) / (12 * delta)


@dataclass
class RadialResiduals:
    Hprime_num: float
    Hprime_identity: float
    Dprime_num: float
    Dprime_analytic: float
    H_residual: float
    D_residual: float


def radial_identity_check(u: ScalarField, x0, r: float, phi: CutoffProfile = DEFAULT_CUTOFF,
                          delta: float | None = None) -> RadialResiduals:
    """Numerical radial derivatives of H and D against H' = (n/r)H + 2G and the analytic D'.

    The default step r/64 is floored at 2h so the difference quotient does not
    resolve the cell-scale kinks of the piecewise multilinear interpolant.
    """
    n = u.grid.n
    delta = max(r / 64.0, 2.0 * u.grid.h) if delta is None else delta
    base = frequency_integrals(u, x0, r, phi)
    cache = {}

    def at(s):
        if s not in cache:
            cache[s] = frequency_integrals(u, x0, s, phi, min_cells=0.0)
        return cache[s]

    Hp = _five_point(lambda s: at(s).H, r, delta)
    Dp = _five_point(lambda s: at(s).D, r, delta)
    ident = n / r * base.H + 2.0 * base.G
    h_scale = max(abs(Hp), abs(ident), 1e-300)
    d_scale = max(abs(base.Dprime), base.D / r, 1e-300)
    return RadialResiduals(Hp, ident, Dp, base.Dprime, abs(Hp - ident) / h_scale,
                           abs(Dp - base.Dprime) / d_scale)


@dataclass
class EpsilonTerms:
    eps_D: float
    eps_Dp: float
    bound_D: float
    bound_Dp: float

    @property
    def ratio_D(self) -> float:
        return abs(self.eps_D) / self.bound_D if self.bound_D > 0 else (0.0 if self.eps_D == 0 else math.inf)

    @property
    def ratio_Dp(self) -> float:
        return abs(self.eps_Dp) / self.bound_Dp if self.bound_Dp > 0 else (0.0 if self.eps_Dp == 0 else math.inf)


def epsilon_terms(u: ScalarField, mf: MatrixField | None, x0, r: float,
                  phi: CutoffProfile = DEFAULT_CUTOFF, fi: FrequencyIntegrals | None = None,
                  x_center=None) -> EpsilonTerms:
    """eps_D = G - D and eps_D' = rD' - (n-1)D - 2rE, with the matching error-bound shapes.

    ``bound_D`` is ([A] (|x - x0| + r)^alpha + a(x0)) (D + r^{-1/2} H^{1/2} D^{1/2}),
    ``bound_Dp`` the same prefactor times D, so the returned ratios estimate the constants.
    """
    n = u.grid.n
    x = np.asarray(x0 if x_center is None else x_center, dtype=np.float64)
    fi = fi or frequency_integrals(u, x, r, phi)
    eps_d = fi.G - fi.D
    eps_dp = r * fi.Dprime - (n - 1) * fi.D - 2.0 * r * fi.E
    if mf is None:
        pref = 0.0
    else:
        sep = float(np.linalg.norm(x - np.asarray(x0, dtype=np.float64)))
        pref = mf.holder * (sep + r) ** mf.alpha + anisotropy(mf, x0)
    bD = pref * (fi.D + r ** -0.5 * math.sqrt(max(fi.H, 0.0) * max(fi.D, 0.0)))
    bDp = pref * fi.D
    return EpsilonTerms(eps_d, eps_dp, bD, bDp)


# ------------------------------------------------------------------ sweeps

def geometric_radii(r_min: float, r_max: float, ratio: float = 2 ** 0.25) -> np.ndarray:
    """Geometric radii descending from r_max by ``ratio`` while staying >= r_min, sorted ascending."""
    out = []
    r = r_max
    while r >= r_min * (1 - 1e-12):
        out.append(r)
        r /= ratio
    return np.array(sorted(out))


CSV_COLUMNS = ["r", "H", "D", "G", "E", "I", "epsD", "epsDp", "Hp_resid", "Dp_resid", "H2H", "D2D"]


@dataclass
class FrequencySweep:
    x0: np.ndarray
    radii: np.ndarray
    H: np.ndarray
    D: np.ndarray
    G: np.ndarray
    E: np.ndarray
    I: np.ndarray
    Dprime: np.ndarray
    epsD: np.ndarray
    epsDp: np.ndarray
    Hp_resid: np.ndarray
    Dp_resid: np.ndarray
    alpha: float = 1.0
    fitted: dict = field(default_factory=dict)

    def index_of(self, r: float) -> int:
        k = np.flatnonzero(np.isclose(self.radii, r, rtol=1e-9, atol=0))
        if k.size == 0:
            raise KeyError(f"radius {r!r} not in sweep")
        return int(k[0])

    def doubling_columns(self):
        h2 = np.full(len(self.radii), np.nan)
        d2 = np.full(len(self.radii), np.nan)
        for k, r in enumerate(self.radii):
            try:
                j = self.index_of(2 * r)
            except KeyError:
                continue
            h2[k] = self.H[j] / self.H[k]
            d2[k] = self.D[j] / self.D[k] if self.D[k] > 0 else np.nan
        return h2, d2

    def cauchy_schwarz_margin(self) -> np.ndarray:
        """(E H - G^2) / (E H) per row; the invariant is >= -1e-10."""
        EH = self.E * self.H
        return np.where(EH > 0, (EH - self.G ** 2) / np.where(EH > 0, EH, 1.0), 0.0)

    def rows(self):
        h2, d2 = self.doubling_columns()
        for k in range(len(self.radii)):
            yield [self.radii[k], self.H[k], self.D[k], self.G[k], self.E[k], self.I[k], self.epsD[k],
                   self.epsDp[k], self.Hp_resid[k], self.Dp_resid[k], h2[k], d2[k]]

    def to_csv(self, path):
        write_csv(path, CSV_COLUMNS, self.rows())


def fmt(x) -> str:
    if isinstance(x, (int, np.integer)) and not isinstance(x, bool):
        return str(int(x))
    return "%.17g" % float(x)


def write_csv(path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([fmt(v) for v in row])


def frequency_sweep(u: ScalarField, x0, radii: Sequence[float], mf: MatrixField | None = None,
                    phi: CutoffProfile = DEFAULT_CUTOFF, identities: bool = True) -> FrequencySweep:
    x0 = np.asarray(x0, dtype=np.float64)
    radii = np.sort(np.asarray(radii, dtype=np.float64))
    cols = {k: [] for k in ("H", "D", "G", "E", "I", "Dprime", "epsD", "epsDp", "Hp_resid", "Dp_resid")}
    for r in radii:
        fi = frequency_integrals(u, x0, r, phi)
        if _degenerate(fi.H, u, r):
            raise DegenerateError(f"H vanishes at r={r:g}")
        eps = epsilon_terms(u, mf, x0, r, phi, fi)
        if identities:
            rr = radial_identity_check(u, x0, r, phi)
            hres, dres = rr.H_residual, rr.D_residual
        else:
            hres = dres = np.nan
        for key, val in (("H", fi.H), ("D", fi.D), ("G", fi.G), ("E", fi.E), ("I", fi.I),
                         ("Dprime", fi.Dprime), ("epsD", eps.eps_D), ("epsDp", eps.eps_Dp),
                         ("Hp_resid", hres), ("Dp_resid", dres)):
            cols[key].append(val)
    alpha = 1.0 if mf is None else mf.alpha
    return FrequencySweep(x0, radii, **{k: np.array(v) for k, v in cols.items()}, alpha=alpha)


def delta_gap(sweep: FrequencySweep, rho: float, r: float, C: float, alpha: float | None = None) -> float:
    """I(r) + C r^alpha - (I(rho) + C rho^alpha)."""
    if not rho < r:
        raise ValueError("need rho < r")
    a = sweep.alpha if alpha is None else alpha
    i, j = sweep.index_of(rho), sweep.index_of(r)
    return float(sweep.I[j] + C * r ** a - (sweep.I[i] + C * rho ** a))


def theta_parameter(holder: float, alpha: float) -> float:
    """min(holder^(-1/alpha), 1); 1 for a constant field."""
    if holder <= 0:
        return 1.0
    return min(holder ** (-1.0 / alpha), 1.0)


def theta_regime(radii, theta: float) -> bool:
    """Whether every radius pair of the sweep has r0 in (theta r1 / 16, r1).

    Outside this window the radial-gap estimates carry no guarantee; the
    numbers are still computed, only flagged.
    """
    r = np.asarray(radii, dtype=np.float64)
    return bool(r.min() > theta * r.max() / 16.0)


@dataclass
class MonotonicityFit:
    C_exp: float
    C_add: float
    pair_C: np.ndarray


def fit_monotonicity(radii, values, alpha: float = 1.0) -> MonotonicityFit:
    """Smallest C >= 0 making exp(C t^alpha) f(t) (and f(t) + C t^alpha) nondecreasing on the samples."""
    t = np.asarray(radii, dtype=np.float64)
    f = np.asarray(values, dtype=np.float64)
    order = np.argsort(t)
    t, f = t[order], f[order]
    if np.any(f <= 0):
        raise ValueError("monotonicity audit needs positive values")
    ta = t ** alpha
    dt = np.diff(ta)
    pair = np.maximum(0.0, np.log(f[:-1] / f[1:]) / dt)
    add = np.maximum(0.0, (f[:-1] - f[1:]) / dt)
    return MonotonicityFit(float(pair.max(initial=0.0)), float(add.max(initial=0.0)), pair)


def monotonicity_audit(sweep: FrequencySweep, alpha: float | None = None, min_radii: int = 8) -> MonotonicityFit:
    if len(sweep.radii) < min_radii:
        raise ValueError(f"audit needs at least {min_radii} radii")
    if np.any(sweep.I <= 0):
        raise ValueError("invalid sweep: nonpositive frequency")
    fit = fit_monotonicity(sweep.radii, sweep.I, sweep.alpha if alpha is None else alpha)
    sweep.fitted["C_star"] = fit.C_exp
    sweep.fitted["C_add"] = fit.C_add
    return fit


@dataclass
class DoublingTable:
    r: np.ndarray
    H_ratio: np.ndarray
    D_ratio: np.ndarray

    def check_D(self, tol: float = 1e-12) -> bool:
        return bool(np.all(self.D_ratio >= 1.0 - tol))


def doubling_ratios(sweep: FrequencySweep) -> DoublingTable:
    h2, d2 = sweep.doubling_columns()
    keep = ~np.isnan(h2)
    return DoublingTable(sweep.radii[keep], h2[keep], d2[keep])


def annulus_l2(u: ScalarField, x0, r: float, s: float) -> float:
    """Midpoint quadrature of u^2 over the annulus B_s minus B_r."""
    x0 = np.asarray(x0, dtype=np.float64)
    _check_support(u.grid, x0, s)
    X, val, _ = ball_cells(u, x0, s)
    dist = np.linalg.norm(X - x0, axis=1)
    m = (dist < s) & (dist >= r)
    return float(np.sum(val[m] ** 2) * u.grid.cell_volume)


def l2_vs_H(u: ScalarField, x0, r: float, s: float, phi: CutoffProfile = DEFAULT_CUTOFF) -> float:
    """The ratio int_{B_s \\ B_r} u^2 / (s H(x0, s)), which should stay bounded."""
    H = frequency_integrals(u, x0, s, phi).H
    return annulus_l2(u, x0, r, s) / (s * H)
