"""Frequency in the frame that normalizes A(x0) to the identity, and almost-homogeneity diagnostics."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .coefficients import MatrixField, sym_sqrt
from .errors import DegenerateError, UnsupportedDimension
from .fields import ScalarField, interp_many, recovered_gradient
from .frequency import (DEFAULT_CUTOFF, CutoffProfile, FrequencyIntegrals, frequency_integrals,
                        weighted_integrals, write_csv)


@dataclass(frozen=True, eq=False)
class IntrinsicFrame:
    x0: np.ndarray
    A0: np.ndarray
    sqrt: np.ndarray
    inv_sqrt: np.ndarray
    det_sqrt: float
    identity: bool

    @property
    def dim(self) -> int:
        return len(self.x0)

    def forward(self, x):
        """Phi(x) = x0 + A^{1/2}(x0)(x - x0)."""
        x = np.asarray(x, dtype=np.float64)
        return self.x0 + (x - self.x0) @ self.sqrt.T

    def inverse(self, y):
        y = np.asarray(y, dtype=np.float64)
        return self.x0 + (y - self.x0) @ self.inv_sqrt.T

    def conjugated(self, mf: MatrixField, x):
        """A^{-1/2}(x0) A(Phi(x)) A^{-1/2}(x0); the identity at x = x0."""
        A = mf(self.forward(x))
        return self.inv_sqrt @ A @ self.inv_sqrt

    def plane_defect(self, samples) -> float:
        """max |Phi(x', 0)_d| over in-plane samples."""
        pts = np.asarray(samples, dtype=np.float64).copy()
        pts[..., -1] = 0.0
        return float(np.max(np.abs(self.forward(pts)[..., -1])))


def make_frame(mf: MatrixField, x0) -> IntrinsicFrame:
    x0 = np.asarray(x0, dtype=np.float64)
    A0 = np.asarray(mf(x0), dtype=np.float64)
    sq, isq, det = sym_sqrt(A0)
    ident = bool(np.array_equal(A0, np.eye(len(x0))))
    if ident:
        sq, isq, det = np.eye(len(x0)), np.eye(len(x0)), 1.0
    frame = IntrinsicFrame(x0, A0, sq, isq, det, ident)
    C = frame.conjugated(mf, x0)
    if np.max(np.abs(C - np.eye(len(x0)))) > 1e-12 * max(1.0, np.abs(A0).max()):
        raise ValueError("conjugated coefficient at the base point is not the identity")
    return frame


@dataclass
class IntrinsicIntegrals:
    H: float
    D: float
    r: float

    @property
    def N(self) -> float:
        return self.r * self.D / self.H


def intrinsic_integrals(u: ScalarField, frame: IntrinsicFrame, x=None, s: float = 0.25,
                        phi: CutoffProfile = DEFAULT_CUTOFF) -> IntrinsicIntegrals:
    """H and D of u o Phi centered at the intrinsic point x, integrated in original coordinates."""
    x = frame.x0 if x is None else np.asarray(x, dtype=np.float64)
    if frame.identity:
        fi = frequency_integrals(u, x, s, phi)
        return IntrinsicIntegrals(fi.H, fi.D, s)
    center = frame.forward(x)
    extent = s * np.sqrt(np.diag(frame.A0))
    raw = weighted_integrals(u, center, s, phi, T=frame.inv_sqrt, M=frame.A0, extent=extent)
    return IntrinsicIntegrals(float(raw[0]) / frame.det_sqrt, float(raw[1]) / frame.det_sqrt, s)


def intrinsic_frequency(u: ScalarField, frame: IntrinsicFrame, r: float, x=None,
                        phi: CutoffProfile = DEFAULT_CUTOFF) -> float:
    ii = intrinsic_integrals(u, frame, x, r, phi)
    scale = float(np.max(np.abs(u.values))) ** 2 * r ** u.grid.n
    if not ii.H > 1e-14 * scale:
        raise DegenerateError("intrinsic H vanishes")
    return ii.N


INTRINSIC_COLUMNS = ["r", "Hint", "Dint", "N", "J", "Xi_vs_half"]


@dataclass
class IntrinsicSweep:
    x0: np.ndarray
    radii: np.ndarray
    Hint: np.ndarray
    Dint: np.ndarray
    N: np.ndarray
    alpha: float = 1.0
    C: float = 0.0
    J: np.ndarray = field(default=None)
    Xi: np.ndarray = field(default=None, repr=False)

    def __post_init__(self):
        if self.J is None:
            self.J, self.Xi = xi_and_J(self.radii, self.N, self.alpha, self.C)

    def xi_vs_half(self) -> np.ndarray:
        out = np.full(len(self.radii), np.nan)
        for k, r in enumerate(self.radii):
            j = np.flatnonzero(np.isclose(self.radii, r / 2, rtol=1e-9, atol=0))
            if j.size:
                out[k] = self.Xi[k, j[0]]
        return out

    def rows(self):
        xh = self.xi_vs_half()
        for k in range(len(self.radii)):
            yield [self.radii[k], self.Hint[k], self.Dint[k], self.N[k], self.J[k], xh[k]]

    def to_csv(self, path):
        write_csv(path, INTRINSIC_COLUMNS, self.rows())


def intrinsic_sweep(u: ScalarField, frame: IntrinsicFrame, radii, alpha: float = 1.0, C: float = 0.0,
                    phi: CutoffProfile = DEFAULT_CUTOFF) -> IntrinsicSweep:
    radii = np.sort(np.asarray(radii, dtype=np.float64))
    vals = [intrinsic_integrals(u, frame, None, r, phi) for r in radii]
    H = np.array([v.H for v in vals])
    D = np.array([v.D for v in vals])
    if np.any(H <= 0):
        raise DegenerateError("intrinsic H vanishes on part of the sweep")
    return IntrinsicSweep(frame.x0, radii, H, D, radii * D / H, alpha, C)


def xi_and_J(radii, N, alpha: float, C: float):
    """J = exp(C r^alpha) N and Xi[i, j] = N_i + C r_i^alpha - (N_j + C r_j^alpha) for r_j < r_i."""
    r = np.asarray(radii, dtype=np.float64)
    N = np.asarray(N, dtype=np.float64)
    ra = r ** alpha
    J = np.exp(C * ra) * N
    shifted = N + C * ra
    Xi = shifted[:, None] - shifted[None, :]
    Xi = np.where(r[None, :] < r[:, None], Xi, np.nan)
    return J, Xi


@dataclass
class Comparison:
    sep: float
    diff: float
    normalized: float
    I_off_base: float
    N_x1: float


def compare_frequencies(u: ScalarField, mf: MatrixField, x0, x1, r: float,
                        phi: CutoffProfile = DEFAULT_CUTOFF) -> Comparison:
    """|I_{u_A(x0)}(Phi^{-1}(x1), r) - N_u(x1, r)| and its ratio to N_u(x1, r)|x0 - x1|^{alpha/2}."""
    x0 = np.asarray(x0, dtype=np.float64)
    x1 = np.asarray(x1, dtype=np.float64)
    sep = float(np.linalg.norm(x1 - x0))
    if not sep < r / 4:
        raise ValueError("comparison needs |x0 - x1| < r/4")
    f0 = make_frame(mf, x0)
    z1 = f0.inverse(x1)
    off = intrinsic_integrals(u, f0, z1, r, phi)
    I_off = off.N
    N1 = intrinsic_frequency(u, make_frame(mf, x1), r, phi=phi)
    diff = abs(I_off - N1)
    norm = diff / (N1 * sep ** (mf.alpha / 2)) if sep > 0 else 0.0
    return Comparison(sep, diff, norm, I_off, N1)


def fit_decay_exponent(seps, diffs) -> float:
    """Least-squares slope of log diff against log separation.

    Exact zeros (coincident frames) carry no scaling information and are dropped.
    """
    s = np.asarray(seps, dtype=np.float64)
    d = np.asarray(diffs, dtype=np.float64)
    keep = (d > 0) & (s > 0)
    if keep.sum() < 2:
        raise DegenerateError("need two positive differences to fit a decay exponent")
    return float(np.polyfit(np.log(s[keep]), np.log(d[keep]), 1)[0])


def homogeneity_gap(u: ScalarField, frame: IntrinsicFrame, r: float, alpha: float = 1.0, C: float = 0.0,
                    phi: CutoffProfile = DEFAULT_CUTOFF) -> float:
    """J(x0, r/2) - J(x0, r/4)."""
    Ja = math.exp(C * (r / 2) ** alpha) * intrinsic_frequency(u, frame, r / 2, phi=phi)
    Jb = math.exp(C * (r / 4) ** alpha) * intrinsic_frequency(u, frame, r / 4, phi=phi)
    return Ja - Jb


# ------------------------------------------------------------- blow-ups

def _unit_disk_rule(n_rad: int = 32, n_ang: int = 256):
    xg, wg = np.polynomial.legendre.leggauss(n_rad)
    rho = 0.5 * (xg + 1.0)
    wr = 0.5 * wg * rho
    th = 2 * np.pi * np.arange(n_ang) / n_ang
    pts = (rho[:, None, None] * np.stack([np.cos(th), np.sin(th)], -1)[None]).reshape(-1, 2)
    w = (wr[:, None] * np.full(n_ang, 2 * np.pi / n_ang)[None]).ravel()
    return pts, w


def _h1_inner(a_val, a_grad, b_val, b_grad, w):
    return float(np.sum(w * (a_val * b_val + np.einsum("ij,ij->i", a_grad, b_grad))))


@dataclass
class BlowupMatch:
    distance: float
    lam: float
    family: str
    m: int
    scale: float
    reflected: bool
    table: list


def blowup_distance(u: ScalarField, frame: IntrinsicFrame, x0=None, r: float = 0.25, library=None,
                    phi: CutoffProfile = DEFAULT_CUTOFF) -> BlowupMatch:
    """H^1(B_1) distance of the normalized intrinsic rescaling to the closest homogeneous solution."""
    from .geometry import default_library, normalized_H
    if u.grid.dim != 2:
        raise UnsupportedDimension("the homogeneous library is two-dimensional")
    x0 = frame.x0 if x0 is None else np.asarray(x0, dtype=np.float64)
    library = default_library() if library is None else list(library)
    if not library:
        raise UnsupportedDimension("empty library")
    ii = intrinsic_integrals(u, frame, x0, r, phi)
    c = r ** (u.grid.n / 2.0) / math.sqrt(ii.H)
    pts, w = _unit_disk_rule()
    x = frame.forward(x0) + r * pts @ frame.sqrt.T
    v_val, _ = interp_many(u, x, gradient=False)
    v_grad = recovered_gradient(u, x) @ frame.sqrt.T * r
    v_val = c * v_val
    v_grad = c * v_grad
    best = None
    table = []
    for wl in library:
        norm = 1.0 / math.sqrt(normalized_H(wl, phi))
        for refl in (False, True):
            q = pts * np.array([-1.0, 1.0]) if refl else pts
            w_val = norm * wl.value(q)
            w_grad = norm * wl.gradient(q)
            if refl:
                w_grad = w_grad * np.array([-1.0, 1.0])
            ww = _h1_inner(w_val, w_grad, w_val, w_grad, w)
            a = max(0.0, _h1_inner(v_val, v_grad, w_val, w_grad, w) / ww)
            dv = v_val - a * w_val
            dg = v_grad - a * w_grad
            dist = math.sqrt(max(0.0, _h1_inner(dv, dg, dv, dg, w)))
            table.append((wl.lam, refl, a, dist))
            if best is None or dist < best.distance - 1e-12 * max(1.0, best.distance):
                best = BlowupMatch(dist, wl.lam, wl.family, wl.m, a, refl, table)
    return best
