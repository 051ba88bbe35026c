"""Free boundary extraction, beta numbers, Minkowski content, contact order and the 2-D homogeneous library."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache

import mpmath
import numpy as np
from scipy.optimize import minimize
from scipy.spatial import cKDTree

from .coefficients import MatrixField
from .errors import DomainError, SizeCapError, UnsupportedDimension
from .fields import GridSpec, ScalarField, interp_many
from .frequency import DEFAULT_CUTOFF, CutoffProfile, frequency_integrals, write_csv

FAMILIES = ("two_m", "two_m_minus_half", "two_m_plus_one")

# ---------------------------------------------------------------- library


@dataclass(frozen=True)
class HomogeneousSolution:
    """lambda-homogeneous global solution in the plane, even in x_2."""

    lam: float
    family: str
    m: int
    spine_dim: int = 0

    def _angular(self, th, deriv: int = 0):
        lam = self.lam
        if self.family == "two_m_plus_one":
            return -lam ** deriv * (np.sin(lam * th) if deriv == 0 else np.cos(lam * th))
        if deriv == 0:
            return np.cos(lam * th)
        return -lam * np.sin(lam * th)

    def value(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        rho = np.hypot(x[..., 0], x[..., 1])
        th = np.arctan2(np.abs(x[..., 1]), x[..., 0])
        out = rho ** self.lam * self._angular(th)
        # the trace on the plane is exact: x_1^lam (or 0) on the right, 0 or rho^lam on the left
        on_left = (x[..., 1] == 0) & (x[..., 0] < 0)
        on_right = (x[..., 1] == 0) & (x[..., 0] >= 0)
        left = rho ** self.lam if self.family == "two_m" else 0.0
        right = 0.0 if self.family == "two_m_plus_one" else rho ** self.lam
        out = np.where(on_left, left, out)
        out = np.where(on_right, right, out)
        return out

    __call__ = value

    def gradient(self, x) -> np.ndarray:
        """Gradient from the upper side on the plane (the even reflection flips d/dx_2 below)."""
        x = np.asarray(x, dtype=np.float64)
        rho = np.hypot(x[..., 0], x[..., 1])
        sgn = np.where(x[..., 1] < 0, -1.0, 1.0)
        th = np.arctan2(np.abs(x[..., 1]), x[..., 0])
        safe = np.where(rho > 0, rho, 1.0)
        fr = self.lam * safe ** (self.lam - 1) * self._angular(th)
        ft = safe ** (self.lam - 1) * self._angular(th, 1)
        c, s = np.cos(th), np.sin(th)
        gx = fr * c - ft * s
        gy = (fr * s + ft * c) * sgn
        g = np.stack([gx, gy], axis=-1)
        return np.where((rho > 0)[..., None], g, 0.0)

    def flux(self, x1) -> np.ndarray:
        """d/dx_2 from above on the plane at abscissae x1."""
        x1 = np.asarray(x1, dtype=np.float64)
        return self.gradient(np.stack([x1, np.zeros_like(x1)], -1))[..., 1]

    def mp_value(self, x, y):
        rho = mpmath.sqrt(x * x + y * y)
        th = mpmath.atan2(abs(y), x)
        lam = mpmath.mpf(self.lam)
        if self.family == "two_m_plus_one":
            return -rho ** lam * mpmath.sin(lam * th)
        return rho ** lam * mpmath.cos(lam * th)


@dataclass(frozen=True)
class SpineExtension:
    """A planar library element made invariant along x_2 in three dimensions (one-dimensional spine)."""

    base: HomogeneousSolution

    @property
    def lam(self) -> float:
        return self.base.lam

    @property
    def spine_dim(self) -> int:
        return 1

    def value(self, x):
        x = np.asarray(x, dtype=np.float64)
        return self.base.value(x[..., [0, 2]])

    __call__ = value

    def gradient(self, x):
        x = np.asarray(x, dtype=np.float64)
        g = self.base.gradient(x[..., [0, 2]])
        return np.stack([g[..., 0], np.zeros_like(g[..., 0]), g[..., 1]], -1)


def homogeneous_library(dim: int, family: str, m: int) -> HomogeneousSolution:
    if dim != 2:
        raise UnsupportedDimension("closed-form homogeneous solutions are provided in dimension 2 only")
    if family not in FAMILIES:
        raise ValueError(f"unknown family {family!r}; expected one of {FAMILIES}")
    if m < 1:
        raise ValueError("m must be >= 1")
    lam = {"two_m": 2 * m, "two_m_minus_half": 2 * m - 0.5, "two_m_plus_one": 2 * m + 1}[family]
    return HomogeneousSolution(float(lam), family, int(m))


def library_by_lambda(lam: float) -> HomogeneousSolution:
    for fam in FAMILIES:
        for m in range(1, 20):
            w = homogeneous_library(2, fam, m)
            if abs(w.lam - lam) < 1e-12:
                return w
    raise ValueError(f"no library element with homogeneity {lam}")


def default_library(max_m: int = 3) -> list[HomogeneousSolution]:
    return [homogeneous_library(2, f, m) for m in range(1, max_m + 1) for f in FAMILIES]


@lru_cache(maxsize=None)
def _radial_power_moment(p: float, blend: str) -> float:
    """-int phi'(t) t^p dt by Gauss-Legendre on each polynomial piece (smooth integrands)."""
    phi = CutoffProfile(blend)
    xg, wg = np.polynomial.legendre.leggauss(40)
    total = 0.0
    for a, b in ((0.5, 0.625), (0.625, 0.875), (0.875, 1.0)):
        t = 0.5 * (b - a) * xg + 0.5 * (a + b)
        total += 0.5 * (b - a) * float(np.sum(wg * -phi.dphi(t) * t ** p))
    return total


def normalized_H(w: HomogeneousSolution, phi: CutoffProfile = DEFAULT_CUTOFF) -> float:
    """H_w(0, 1); the angular integral of the squared profile is pi for every library element."""
    return math.pi * _radial_power_moment(2 * w.lam, phi.blend)


@dataclass
class ExactResidualReport:
    max_laplacian: float
    min_trace: float
    max_contact_flux: float
    max_complementarity: float

    def ok(self, tol: float = 1e-8) -> bool:
        return (self.max_laplacian <= tol and self.min_trace >= -tol and self.max_contact_flux <= tol
                and self.max_complementarity <= tol)


def default_probes(n_off: int = 24, n_plane: int = 16):
    th = np.linspace(0.15, math.pi - 0.15, n_off // 2)
    rad = np.linspace(0.3, 0.9, 2)
    off = [(r * math.cos(t), s * r * math.sin(t)) for r in rad for t in th for s in (1, -1)]
    plane = [x for x in np.linspace(-0.9, 0.9, n_plane) if abs(x) > 1e-9]
    return off, plane


def verify_signorini_exact(w, probes=None, spacing: float = 1e-4, dps: int = 40,
                           sign: float = 1.0) -> ExactResidualReport:
    """Five-point Laplacian in high precision (Richardson-extrapolated) and plane conditions."""
    off, plane = default_probes() if probes is None else probes
    val = w.mp_value if hasattr(w, "mp_value") else (lambda x, y: mpmath.mpf(float(w(np.array([float(x), float(y)])))))
    with mpmath.workdps(dps):
        s = mpmath.mpf(sign)

        def lap(x, y, h):
            return s * (val(x + h, y) + val(x - h, y) + val(x, y + h) + val(x, y - h) - 4 * val(x, y)) / h ** 2

        worst = mpmath.mpf(0)
        hs = mpmath.mpf(spacing)
        for x, y in off:
            x, y = mpmath.mpf(x), mpmath.mpf(y)
            l1 = lap(x, y, hs)
            l2 = lap(x, y, hs / 2)
            worst = max(worst, abs((4 * l2 - l1) / 3))
        min_trace = math.inf
        max_flux = -math.inf
        max_comp = 0.0
        for x in plane:
            xm = mpmath.mpf(x)
            tr = float(s * val(xm, mpmath.mpf(0)))
            # one-sided derivative from above, second order, Richardson-extrapolated
            def d_up(h):
                return s * (-3 * val(xm, mpmath.mpf(0)) + 4 * val(xm, h) - val(xm, 2 * h)) / (2 * h)
            fl = float((4 * d_up(hs / 2) - d_up(hs)) / 3)
            min_trace = min(min_trace, tr)
            if tr <= 1e-12:
                max_flux = max(max_flux, fl)
            max_comp = max(max_comp, abs(tr * fl))
    if max_flux == -math.inf:
        max_flux = 0.0
    return ExactResidualReport(float(worst), min_trace, max_flux, max_comp)


# --------------------------------------------------------- free boundary

@dataclass
class FreeBoundarySet:
    grid: GridSpec | None
    points: np.ndarray                 # free boundary coordinates, shape (k, d)
    contact: np.ndarray | None = None  # plane-shaped masks
    positive: np.ndarray | None = None
    tol: float = 0.0
    source: str = ""
    spacing: float = 0.0

    @classmethod
    def from_points(cls, points, spacing: float, source: str = "points") -> "FreeBoundarySet":
        pts = np.atleast_2d(np.asarray(points, dtype=np.float64))
        return cls(None, pts, spacing=float(spacing), source=source)

    @property
    def dim(self) -> int:
        return self.points.shape[1] if self.points.size else (self.grid.dim if self.grid else 2)

    def __len__(self):
        return len(self.points)


def extract_free_boundary(u: ScalarField, tol_scale: float = 1.0) -> FreeBoundarySet:
    g = u.grid
    plane = u.plane_values()
    if plane.size == 0:
        raise ValueError("empty plane")
    eps = tol_scale * float(np.max(np.abs(u.values))) * g.h ** 1.5
    contact = plane <= eps
    positive = ~contact
    near_pos = np.zeros_like(contact)
    for k in range(plane.ndim):
        lo = [slice(None)] * plane.ndim
        hi = [slice(None)] * plane.ndim
        lo[k] = slice(None, -1)
        hi[k] = slice(1, None)
        near_pos[tuple(lo)] |= positive[tuple(hi)]
        near_pos[tuple(hi)] |= positive[tuple(lo)]
    gamma = contact & near_pos
    nodes = g.nodes()[..., g.plane_index, :]
    pts = nodes[gamma]
    return FreeBoundarySet(g, pts.reshape(-1, g.dim), contact, positive, eps, u.name, g.h)


def refine_free_boundary_2d(u: ScalarField, fb: FreeBoundarySet) -> np.ndarray:
    """Sub-cell free boundary abscissae from the 3/2-power profile of the two nearest positive nodes."""
    if u.grid.dim != 2:
        raise UnsupportedDimension("sub-cell refinement is implemented for one-dimensional planes")
    tr = u.plane_values()
    x = u.grid.axis(0)
    h = u.grid.spacing[0]
    out = []
    for p in fb.points:
        i = int(round((p[0] + 1.0) / h))
        for step in (1, -1):
            j1, j2 = i + step, i + 2 * step
            if 0 <= j2 < len(x) and fb.positive[j1] and fb.positive[j2]:
                a, b = tr[j1] ** (2 / 3), tr[j2] ** (2 / 3)
                if b > a:
                    out.append(x[j1] - step * h * a / (b - a))
                    break
        else:
            out.append(p[0])
    return np.array(out)


# --------------------------------------------------------------- beta

@dataclass
class BetaReport:
    center: np.ndarray
    r: float
    beta: float
    plane_point: np.ndarray
    basis: np.ndarray
    eigenvalues: np.ndarray
    mass: float
    empty: bool = False

    def csv_row(self):
        c = list(self.center) + [0.0] * (3 - len(self.center))
        ev = list(self.eigenvalues) + [math.nan] * (3 - len(self.eigenvalues))
        return c + [self.r, self.beta] + ev + [self.mass]


BETA_COLUMNS = ["px", "py", "pz", "r", "beta", "ev1", "ev2", "ev3", "mass"]


def _ball_select(points, weights, x, r):
    P = np.atleast_2d(np.asarray(points, dtype=np.float64))
    w = np.ones(len(P)) if weights is None else np.asarray(weights, dtype=np.float64)
    x = np.asarray(x, dtype=np.float64)
    inside = np.linalg.norm(P - x, axis=1) <= r * (1 + 1e-12)
    return P[inside], w[inside], x


def beta(points, x, r: float, weights=None) -> BetaReport:
    """Weighted L^2 flatness against the best affine (d - 2)-plane in the closed ball B_r(x)."""
    P, w, x = _ball_select(points, weights, x, r)
    d = len(x)
    if d not in (2, 3):
        raise UnsupportedDimension("ambient dimension must be 2 or 3")
    k = d - 2
    if len(P) == 0:
        return BetaReport(x, r, 0.0, x.copy(), np.zeros((0, d)), np.zeros(d), 0.0, True)
    mass = float(w.sum())
    cen = (w[:, None] * P).sum(0) / mass
    # singular values of the weighted centered cloud square to the second-moment
    # eigenvalues without the eps * ||S|| floor an eigensolver leaves on the small ones
    Y = np.sqrt(w)[:, None] * (P - cen)
    _, sv, Vt = np.linalg.svd(Y, full_matrices=True)
    ev = np.zeros(d)
    ev[:len(sv)] = sv[:d] ** 2          # descending
    b2 = float(ev[d - 2:].sum()) / r ** d
    basis = Vt[:k].copy() if k > 0 else np.zeros((0, d))
    return BetaReport(x, r, math.sqrt(b2), cen, basis, ev, mass)


def beta_bruteforce(points, x, r: float, weights=None, cap: int = 25) -> float:
    """Independent search over plane offsets and orientations; no eigen-decomposition."""
    P, w, x = _ball_select(points, weights, x, r)
    if len(np.atleast_2d(points)) > cap:
        raise SizeCapError(f"brute force limited to {cap} points")
    d = len(x)
    if len(P) == 0:
        return 0.0
    opts = {"xatol": 1e-13, "fatol": 1e-18, "maxiter": 20000, "maxfev": 20000}

    if d == 2:
        # planes are points: coarse lattice over the bounding box, then local refinement
        span = np.ptp(P, axis=0) + 1e-3
        ax = [P.min(0)[k] + span[k] * np.linspace(0, 1, 33) for k in range(2)]
        G = np.stack(np.meshgrid(*ax, indexing="ij"), -1).reshape(-1, 2)
        costs = np.sum(w[None, :] * np.sum((G[:, None, :] - P[None]) ** 2, -1), 1)

        def cost_point(q):
            return float(np.sum(w * np.sum((P - q) ** 2, axis=1)))

        res = minimize(cost_point, G[int(np.argmin(costs))], method="Nelder-Mead", options=opts)
        return math.sqrt(max(res.fun, 0.0) / r ** 2)

    def cost_line(params):
        th, ph, ox, oy, oz = params
        v = np.array([math.sin(th) * math.cos(ph), math.sin(th) * math.sin(ph), math.cos(th)])
        Y = P - np.array([ox, oy, oz])
        proj = Y @ v
        return float(np.sum(w * (np.sum(Y * Y, axis=1) - proj ** 2)))

    # orientation lattice on the half sphere with the offset at the weighted mean,
    # then a joint refinement of direction and offset from the best few directions
    mid = (w[:, None] * P).sum(0) / w.sum()
    th = np.linspace(0.0, math.pi / 2, 17)
    ph = np.linspace(0.0, 2 * math.pi, 32, endpoint=False)
    T, F = np.meshgrid(th, ph, indexing="ij")
    V = np.stack([np.sin(T) * np.cos(F), np.sin(T) * np.sin(F), np.cos(T)], -1).reshape(-1, 3)
    Y = P - mid
    costs = np.sum(w * np.sum(Y * Y, 1)) - ((Y @ V.T) ** 2 * w[:, None]).sum(0)
    best = math.inf
    for j in np.argsort(costs)[:4]:
        v = V[j]
        t0 = math.acos(max(-1.0, min(1.0, v[2])))
        p0 = math.atan2(v[1], v[0])
        res = minimize(cost_line, np.r_[t0, p0, mid], method="Nelder-Mead", options=opts)
        best = min(best, res.fun)
    return math.sqrt(max(best, 0.0) / r ** 3)


# ------------------------------------------------------------ Minkowski

MINKOWSKI_COLUMNS = ["r", "volume", "volume_over_r2"]


def minkowski_content(fb: FreeBoundarySet, K, r: float, h_sample: float | None = None,
                      cap: int = 1025) -> tuple[float, float]:
    """Volume of the r-neighborhood of the free boundary points inside the box K.

    The tube indicator is sampled on a fine lattice with a linear coverage
    ramp of one sample width across the tube boundary.
    """
    K = np.asarray(K, dtype=np.float64)
    lo_k, hi_k = K[0], K[1]
    pts = fb.points
    if len(pts) == 0:
        return 0.0, 0.0
    inK = np.all((pts >= lo_k - 1e-12) & (pts <= hi_k + 1e-12), axis=1)
    pts = pts[inK]
    if len(pts) == 0:
        return 0.0, 0.0
    d = pts.shape[1]
    hs = h_sample if h_sample is not None else (fb.spacing or (fb.grid.h if fb.grid else 0.0)) / 4.0
    if hs <= 0:
        raise ValueError("need a positive sampling width")
    if r < 2 * hs:
        raise DomainError(f"radius {r:g} below twice the sampling width {hs:g}")
    lo = pts.min(0) - r - hs
    hi = pts.max(0) + r + hs
    counts = np.ceil((hi - lo) / hs).astype(int) + 1
    if np.any(counts > cap):
        hs = float(np.max((hi - lo) / (cap - 1)))
        counts = np.ceil((hi - lo) / hs).astype(int) + 1
    axes = [lo[k] + hs * np.arange(counts[k]) for k in range(d)]
    tree = cKDTree(pts)
    vol = 0.0
    # slab over the first axis keeps memory bounded in 3-D
    rest = np.stack(np.meshgrid(*axes[1:], indexing="ij"), -1).reshape(-1, d - 1)
    for x in axes[0]:
        q = np.column_stack([np.full(len(rest), x), rest])
        dist, _ = tree.query(q, distance_upper_bound=r + hs)
        cover = np.clip((r - dist) / hs + 0.5, 0.0, 1.0)
        vol += float(cover.sum())
    vol *= hs ** d
    return vol, vol / r ** 2


# -------------------------------------------------------- contact order

CONTACT_COLUMNS = ["rho", "mean_square", "log_slope_window"]


@dataclass
class ContactOrder:
    kappa_low: float
    kappa_high: float
    slope: float
    residual: float
    theta_H: float
    rhos: np.ndarray
    mean_square: np.ndarray
    window_slopes: np.ndarray

    def rows(self):
        for k in range(len(self.rhos)):
            ws = self.window_slopes[k] if k < len(self.window_slopes) else math.nan
            yield [self.rhos[k], self.mean_square[k], ws]


def _annulus_mean_square(u: ScalarField, x0, rho: float, n_rad: int = 16, n_ang: int | None = None):
    d = u.grid.dim
    xg, wg = np.polynomial.legendre.leggauss(n_rad)
    rad = 0.25 * rho * (xg + 1.0) + 0.5 * rho      # nodes on [rho/2, rho]
    wr = 0.25 * rho * wg * rad ** (d - 1)
    dirs, wdir = sphere_directions(d, n_ang or max(64, int(math.ceil(16 * rho / u.grid.h))))
    pts = x0 + (rad[:, None, None] * dirs[None]).reshape(-1, d)
    vals, _ = interp_many(u, pts, gradient=False)
    wts = (wr[:, None] * wdir[None]).ravel()
    return float(np.sum(wts * vals ** 2) / np.sum(wts))


def sphere_directions(d: int, M: int):
    """Unit directions and area weights: uniform circle (d = 2) or latitude-longitude (d = 3)."""
    if d == 2:
        th = 2 * np.pi * np.arange(M) / M
        return np.stack([np.cos(th), np.sin(th)], -1), np.full(M, 2 * np.pi / M)
    npol = max(8, M // 2)
    pol = np.pi * (np.arange(npol) + 0.5) / npol
    az = 2 * np.pi * np.arange(M) / M
    P, A = np.meshgrid(pol, az, indexing="ij")
    dirs = np.stack([np.sin(P) * np.cos(A), np.sin(P) * np.sin(A), np.cos(P)], -1).reshape(-1, 3)
    w = (np.sin(P) * (np.pi / npol) * (2 * np.pi / M)).ravel()
    w *= 4 * np.pi / w.sum()
    return dirs, w


def contact_order(u: ScalarField, x0, rho_min: float, rho_max: float, ratio: float = math.sqrt(2),
                  min_levels: int = 6, phi: CutoffProfile = DEFAULT_CUTOFF) -> ContactOrder:
    """Growth exponent of the annular L^2 means and of H along a geometric radius chain."""
    if not 1.0 < ratio <= 2.0:
        raise ValueError("ratio must lie in (1, 2]")
    x0 = np.asarray(x0, dtype=np.float64)
    rhos = []
    rho = rho_max
    while rho >= rho_min * (1 - 1e-12):
        rhos.append(rho)
        rho /= ratio
    rhos = np.array(sorted(rhos))
    if len(rhos) < min_levels:
        raise ValueError(f"need at least {min_levels} radius levels, got {len(rhos)}")
    if rhos[0] / 2 < u.grid.h:
        raise DomainError("innermost annulus is under-resolved (inner radius below one cell)")
    if np.any(np.abs(x0) + rhos[-1] > 1.0 + 1e-12):
        raise DomainError("annulus leaves the box")
    ms = np.array([_annulus_mean_square(u, x0, r) for r in rhos])
    if np.any(ms <= 0):
        raise DomainError("vanishing annular mean; the point is interior to the contact set")
    lr = np.log(rhos)
    ly = 0.5 * np.log(ms)
    coef, res, *_ = np.polyfit(lr, ly, 1, full=True)
    slope = float(coef[0])
    resid = float(math.sqrt(res[0] / len(lr))) if len(res) else 0.0
    win = np.array([np.polyfit(lr[k:k + 3], ly[k:k + 3], 1)[0] for k in range(len(lr) - 2)])
    Hs = np.array([frequency_integrals(u, x0, r, phi, min_cells=0.0).H for r in rhos
                   if r <= 1.0 - np.max(np.abs(x0))])
    n = u.grid.n
    theta_H = float((np.polyfit(lr[:len(Hs)], np.log(Hs), 1)[0] - n) / 2) if len(Hs) >= 2 else math.nan
    return ContactOrder(float(win.min()), float(win.max()), slope, resid, theta_H, rhos, ms, win)


def frequency_vs_contact(u: ScalarField, x0, sweep, co: ContactOrder | None = None) -> float:
    """|I at the smallest sweep radius - fitted contact order| at the same point."""
    if co is None:
        lo, hi = float(np.min(sweep.radii)), float(np.max(sweep.radii))
        ratio = min(math.sqrt(2), (hi / lo) ** 0.2 * (1 - 1e-12))
        co = contact_order(u, x0, lo, hi, ratio=ratio)
    k = int(np.argmin(sweep.radii))
    return abs(float(sweep.I[k]) - co.slope)


# ------------------------------------------------ mean flatness experiment

@dataclass
class FlatnessReport:
    beta2: float
    xi_integral: float
    mass_term: float
    rhs_without_C: float
    ratio: float
    in_guaranteed_regime: bool
    n_points: int


def mean_flatness_experiment(u: ScalarField, mf: MatrixField, fb: FreeBoundarySet, p, r: float,
                             R: float = 2.0, R1: float = 0.5, R2: float = 4.0, C: float = 0.0,
                             theta: float = 1.0, weight_by_spacing: bool = True,
                             phi: CutoffProfile = DEFAULT_CUTOFF) -> FlatnessReport:
    """beta^2(p, r) against r^{1-n} (int Xi^{R2 r}_{R1 r} dmu + (R2 r)^{alpha/2} mu(B_{R2 r}(p)))."""
    from .intrinsic import intrinsic_frequency, make_frame
    p = np.asarray(p, dtype=np.float64)
    n = u.grid.n
    w0 = fb.spacing ** (n - 1) if weight_by_spacing else 1.0
    pts = fb.points
    if len(pts) == 0:
        raise ValueError("empty free boundary")
    weights = np.full(len(pts), w0)
    rep = beta(pts, p, r, weights)
    if rep.empty:
        raise ValueError("no free boundary points in B_r(p)")
    big = np.linalg.norm(pts - p, axis=1) <= R2 * r
    alpha = mf.alpha
    s_hi, s_lo = R2 * r, R1 * r
    xi_sum = 0.0
    for x in pts[big]:
        fr = make_frame(mf, x)
        Nh = intrinsic_frequency(u, fr, s_hi, phi=phi)
        Nl = intrinsic_frequency(u, fr, s_lo, phi=phi)
        xi_sum += w0 * (Nh + C * s_hi ** alpha - (Nl + C * s_lo ** alpha))
    mass = w0 * big.sum()
    mass_term = s_hi ** (alpha / 2) * mass
    rhs = (xi_sum + mass_term) / r ** (n - 1)
    regime = R > 64 / theta and R2 > max(2 * R * R, 2 * R + 4) and R1 < (R - 5) / 2
    return FlatnessReport(rep.beta ** 2, xi_sum, mass_term, rhs, rep.beta ** 2 / rhs if rhs > 0 else math.inf,
                          regime, int(big.sum()))
