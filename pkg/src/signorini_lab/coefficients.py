"""Coefficient matrix fields x -> A(x) with ellipticity checks and the small linear algebra around them."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import HypothesisError, PreconditionError
from .fields import GridSpec, ScalarField

H3_TOL = 1e-12


def jacobi_eigh(M, tol: float = 1e-15, max_sweeps: int = 50):
    """Cyclic Jacobi eigen-decomposition of one or a batch of small symmetric matrices.

    Returns ``(eigenvalues, eigenvectors)`` with eigenvalues ascending and the
    eigenvectors as columns, matching ``numpy.linalg.eigh``.
    """
    A = np.array(M, dtype=np.float64)
    single = A.ndim == 2
    if single:
        A = A[None]
    m, d, _ = A.shape
    A = 0.5 * (A + np.swapaxes(A, 1, 2))
    V = np.broadcast_to(np.eye(d), (m, d, d)).copy()
    scale = np.maximum(np.abs(A).max(axis=(1, 2)), 1e-300)
    for _ in range(max_sweeps):
        off = np.sqrt(np.sum(np.triu(A, 1) ** 2, axis=(1, 2)))
        if np.all(off <= tol * scale):
            break
        for p in range(d - 1):
            for q in range(p + 1, d):
                apq = A[:, p, q]
                app = A[:, p, p]
                aqq = A[:, q, q]
                active = np.abs(apq) > 1e-300
                safe = np.where(active, apq, 1.0)
                tau = (aqq - app) / (2.0 * safe)
                t = np.sign(tau) / (np.abs(tau) + np.sqrt(1.0 + tau * tau))
                t = np.where(tau == 0.0, 1.0, t)
                t = np.where(active, t, 0.0)
                c = 1.0 / np.sqrt(1.0 + t * t)
                s = t * c
                J = np.broadcast_to(np.eye(d), (m, d, d)).copy()
                J[:, p, p] = c
                J[:, q, q] = c
                J[:, p, q] = s
                J[:, q, p] = -s
                A = np.swapaxes(J, 1, 2) @ A @ J
                A[:, p, q] = 0.0
                A[:, q, p] = 0.0
                V = V @ J
    w = np.diagonal(A, axis1=1, axis2=2).copy()
    order = np.argsort(w, axis=1)
    w = np.take_along_axis(w, order, axis=1)
    V = np.take_along_axis(V, order[:, None, :], axis=2)
    if single:
        return w[0], V[0]
    return w, V


def sym_sqrt(M):
    """Square root, inverse square root and det of the square root of an SPD matrix."""
    M = np.asarray(M, dtype=np.float64)
    if not np.allclose(M, M.T, rtol=0, atol=1e-13 * max(1.0, np.abs(M).max())):
        raise ValueError("matrix is not symmetric")
    w, V = jacobi_eigh(M)
    if w.min() <= 0:
        raise ValueError(f"matrix is not positive definite (min eigenvalue {w.min():.3e})")
    r = np.sqrt(w)
    sq = (V * r) @ V.T
    isq = (V / r) @ V.T
    return 0.5 * (sq + sq.T), 0.5 * (isq + isq.T), float(np.prod(r))


@dataclass(frozen=True, eq=False)
class MatrixField:
    """A(x) on the box. ``evaluator`` maps points (..., d) to matrices (..., d, d)."""

    dim: int
    evaluator: Callable[[np.ndarray], np.ndarray]
    lam: float
    Lam: float
    p: float = math.inf
    holder: float = 0.0
    name: str = "custom"
    params: dict = field(default_factory=dict)

    @property
    def alpha(self) -> float:
        if math.isinf(self.p):
            return 1.0
        return 1.0 - self.dim / self.p

    def __call__(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        return np.asarray(self.evaluator(x), dtype=np.float64)

    def is_identity_at(self, x0, tol: float = 0.0) -> bool:
        return bool(np.max(np.abs(self(x0) - np.eye(self.dim))) <= tol)


# ---------------------------------------------------------------- presets

def _eye_like(x, d):
    return np.broadcast_to(np.eye(d), x.shape[:-1] + (d, d)).copy()


def identity(dim: int) -> MatrixField:
    return MatrixField(dim, lambda x: _eye_like(x, dim), 1.0, 1.0, math.inf, 0.0, "identity")


def constant(M) -> MatrixField:
    M = np.array(M, dtype=np.float64)
    d = M.shape[0]
    w = np.linalg.eigvalsh(M)
    return MatrixField(d, lambda x: np.broadcast_to(M, x.shape[:-1] + (d, d)).copy(),
                       float(w.min()), float(w.max()), math.inf, 0.0, "constant",
                       {"matrix": M.tolist()})


def diag_linear(dim: int, a: float = 0.2) -> MatrixField:
    """diag(1 + a x_1, 1, ..., 1)."""
    if abs(a) >= 1:
        raise ValueError("|a| must be < 1 for ellipticity on the box")

    def ev(x):
        A = _eye_like(x, dim)
        A[..., 0, 0] = 1.0 + a * x[..., 0]
        return A

    return MatrixField(dim, ev, 1.0 - abs(a), 1.0 + abs(a), math.inf, abs(a), "diag_linear", {"a": a})


def scalar_abs(dim: int, c: float = 0.1) -> MatrixField:
    """(1 + c |x_1|) Id."""

    def ev(x):
        return (1.0 + c * np.abs(x[..., 0]))[..., None, None] * _eye_like(x, dim)

    lo, hi = sorted((1.0, 1.0 + c))
    return MatrixField(dim, ev, lo, hi, math.inf, abs(c), "scalar_abs", {"c": c})


def rotation(dim: int, a: float = 0.2, kappa: float = 0.5) -> MatrixField:
    """R(kappa x_d) diag(1 + a x_1, 1, ...) R(kappa x_d)^T, rotating the (x_1, x_d) plane.

    The angle vanishes on the thin plane, which keeps the mixed entries
    a_{i,d} zero there, and is odd in x_d, so A(x', -t) = S A(x', t) S with
    S the reflection of the last coordinate.
    """
    if abs(a) >= 1:
        raise ValueError("|a| must be < 1")

    def ev(x):
        A = _eye_like(x, dim)
        A[..., 0, 0] = 1.0 + a * x[..., 0]
        th = kappa * x[..., -1]
        c, s = np.cos(th), np.sin(th)
        R = _eye_like(x, dim)
        R[..., 0, 0] = c
        R[..., 0, -1] = -s
        R[..., -1, 0] = s
        R[..., -1, -1] = c
        return R @ A @ np.swapaxes(R, -1, -2)

    # Lipschitz bound: |d/dx1| = a, |d/dx_d| <= 2 kappa a (angle derivative times eigenvalue gap)
    lip = math.hypot(abs(a), 2.0 * abs(kappa) * abs(a))
    return MatrixField(dim, ev, 1.0 - abs(a), 1.0 + abs(a), math.inf, lip, "rotation",
                       {"a": a, "kappa": kappa})


def sobolev_power(dim: int, c: float = 0.2, gamma: float = 0.5) -> MatrixField:
    """(1 + c |x|^gamma) Id: W^{1,p} for p < dim / (1 - gamma), not Lipschitz at 0."""
    if not 0 < gamma < 1:
        raise ValueError("gamma must lie in (0, 1)")
    p = 0.5 * (dim + dim / (1.0 - gamma))

    def ev(x):
        r = np.linalg.norm(x, axis=-1)
        return (1.0 + c * r ** gamma)[..., None, None] * _eye_like(x, dim)

    top = 1.0 + abs(c) * dim ** (gamma / 2)
    lo, hi = (1.0, top) if c >= 0 else (1.0 - abs(c) * dim ** (gamma / 2), 1.0)
    # on the box |x|^g is (g)-Holder with constant 1, hence alpha-Holder with diam^(g - alpha)
    alpha = 1.0 - dim / p
    holder = abs(c) * (2.0 * math.sqrt(dim)) ** (gamma - alpha)
    return MatrixField(dim, ev, lo, hi, p, holder, "sobolev_power", {"c": c, "gamma": gamma})


def conjugate_w32(c: float = 0.2) -> MatrixField:
    """Scalar field 1 + c rho^{3/2} sin(3|theta|/2) in two dimensions.

    It is constant along the gradient lines of w_{3/2} (a function of the
    harmonic conjugate), so w_{3/2} is an exact solution of the variable
    coefficient problem with A(0) = Id.
    """

    def ev(x):
        r = np.hypot(x[..., 0], x[..., 1])
        th = np.arctan2(np.abs(x[..., 1]), x[..., 0])
        a = 1.0 + c * r ** 1.5 * np.sin(1.5 * th)
        return a[..., None, None] * _eye_like(x, 2)

    m = abs(c) * 2 ** 0.75
    return MatrixField(2, ev, 1.0 - m, 1.0 + m, math.inf, 1.5 * abs(c) * 2 ** 0.25 * 2.0,
                       "conjugate_w32", {"c": c})


def plane_coupled(dim: int, b: float = 0.2) -> MatrixField:
    """Constant a_{1,d} = b: deliberately violates the plane condition H3."""
    M = np.eye(dim)
    M[0, -1] = M[-1, 0] = b
    mf = constant(M)
    return MatrixField(dim, mf.evaluator, mf.lam, mf.Lam, math.inf, 0.0, "plane_coupled", {"b": b})


PRESETS: dict[str, Callable[..., MatrixField]] = {
    "identity": identity,
    "diag_linear": diag_linear,
    "scalar_abs": scalar_abs,
    "rotation": rotation,
    "sobolev_power": sobolev_power,
    "conjugate_w32": lambda dim=2, **kw: conjugate_w32(**kw),
    "plane_coupled": plane_coupled,
}


def make_preset(name: str, dim: int, **params) -> MatrixField:
    if name not in PRESETS:
        raise KeyError(f"unknown coefficient preset {name!r}")
    if name == "conjugate_w32" and dim != 2:
        raise ValueError("conjugate_w32 is two-dimensional")
    return PRESETS[name](dim, **params)


# ---------------------------------------------------------------- checks

@dataclass
class HypothesisReport:
    symmetry_defect: float
    min_eig: float
    max_eig: float
    plane_offdiag: float
    holder_quotient: float
    reflection_defect: float
    alpha: float
    pass_h1: bool
    pass_h2: bool
    pass_h3: bool
    pass_reflection: bool

    @property
    def ok(self) -> bool:
        return self.pass_h1 and self.pass_h2 and self.pass_h3 and self.pass_reflection

    def failures(self) -> list[str]:
        out = []
        for key, flag in (("H1", self.pass_h1), ("H2", self.pass_h2), ("H3", self.pass_h3),
                          ("reflection", self.pass_reflection)):
            if not flag:
                out.append(key)
        return out


def _spectral_norm(D):
    return np.max(np.abs(jacobi_eigh(D)[0]), axis=-1)


def validate_hypotheses(mf: MatrixField, grid: GridSpec, tol: float = 1e-12) -> HypothesisReport:
    nodes = grid.nodes()
    A = mf(nodes)
    d = grid.dim
    sym = float(np.max(np.abs(A - np.swapaxes(A, -1, -2))))
    flat = A.reshape(-1, d, d)
    w, _ = jacobi_eigh(0.5 * (flat + np.swapaxes(flat, 1, 2)))
    emin, emax = float(w.min()), float(w.max())

    plane = A[..., grid.plane_index, :, :]
    offd = float(np.max(np.abs(plane[..., :-1, -1]))) if d > 1 else 0.0

    S = np.eye(d)
    S[-1, -1] = -1.0
    # nodes are mirror-symmetric in the last axis, so reversing it evaluates A(x', -t)
    mirrored = A[..., ::-1, :, :]
    refl = float(np.max(np.abs(mirrored - S @ A @ S)))

    alpha = mf.alpha
    quotient = 0.0
    for k in range(d):
        step = 1
        while step < grid.counts[k]:
            lo = [slice(None)] * d
            hi = [slice(None)] * d
            lo[k] = slice(None, -step)
            hi[k] = slice(step, None)
            diff = (A[tuple(hi)] - A[tuple(lo)]).reshape(-1, d, d)
            dist = step * grid.spacing[k]
            quotient = max(quotient, float(_spectral_norm(diff).max()) / dist ** alpha)
            step *= 2

    pass_h1 = (math.isinf(mf.p) or mf.p > d) and math.isfinite(quotient)
    pass_h2 = sym <= tol and emin >= mf.lam - 1e-12 and emax <= mf.Lam + 1e-12 and emin > 0
    pass_h3 = offd <= H3_TOL
    return HypothesisReport(sym, emin, emax, offd, quotient, refl, alpha, pass_h1, pass_h2,
                            pass_h3, refl <= 1e-12)


def require_hypotheses(mf: MatrixField, grid: GridSpec) -> HypothesisReport:
    rep = validate_hypotheses(mf, grid)
    if not rep.ok:
        raise HypothesisError(f"coefficient field {mf.name!r} fails {', '.join(rep.failures())}"
                              f" (plane off-diagonal {rep.plane_offdiag:.3g},"
                              f" eigenvalues [{rep.min_eig:.3g}, {rep.max_eig:.3g}])")
    return rep


def anisotropy(mf: MatrixField, x0) -> float:
    """Spectral norm of A(x0) - Id."""
    D = mf(np.asarray(x0, dtype=np.float64)) - np.eye(mf.dim)
    return float(np.max(np.abs(jacobi_eigh(D)[0])))


def mu_at(mf: MatrixField, x, x0=None) -> np.ndarray | float:
    """<A(x) nu, nu> with nu the unit vector from x0 (default origin); 1 at x0 itself."""
    x = np.asarray(x, dtype=np.float64)
    base = np.zeros(mf.dim) if x0 is None else np.asarray(x0, dtype=np.float64)
    v = x - base
    r = np.linalg.norm(v, axis=-1)
    safe = np.where(r > 0, r, 1.0)
    nu = v / safe[..., None]
    A = mf(x)
    mu = np.einsum("...i,...ij,...j->...", nu, A, nu)
    mu = np.where(r > 0, mu, 1.0)
    return float(mu) if np.ndim(mu) == 0 else mu


def _ball_samples(dim: int, r: float, n_radial: int = 24, n_dir: int = 256) -> np.ndarray:
    if dim == 2:
        th = 2 * np.pi * (np.arange(n_dir) + 0.5) / n_dir
        dirs = np.stack([np.cos(th), np.sin(th)], axis=-1)
    else:
        k = np.arange(n_dir) + 0.5
        z = 1 - 2 * k / n_dir
        phi = np.pi * (1 + 5 ** 0.5) * k
        s = np.sqrt(1 - z * z)
        dirs = np.stack([s * np.cos(phi), s * np.sin(phi), z], axis=-1)
    rad = r * np.arange(1, n_radial + 1) / n_radial
    return (rad[:, None, None] * dirs[None]).reshape(-1, dim)


@dataclass
class TraceGap:
    radii: np.ndarray
    gaps: np.ndarray
    coefficient: float

    def gap(self, r: float) -> float:
        return float(np.interp(r, self.radii, self.gaps))


def trace_mu_gap(mf: MatrixField, radii=(0.4, 0.2, 0.1, 0.05), x0=None) -> TraceGap:
    """max over x in B_r(x0) of |Tr A(x) - (n+1) mu(x)| for each radius, with the fitted gap/r."""
    base = np.zeros(mf.dim) if x0 is None else np.asarray(x0, dtype=np.float64)
    if not mf.is_identity_at(base, tol=1e-12):
        raise PreconditionError("trace/mu comparison requires A(x0) = Id")
    radii = np.sort(np.atleast_1d(np.asarray(radii, dtype=np.float64)))
    gaps = []
    for r in radii:
        pts = base + _ball_samples(mf.dim, r)
        A = mf(pts)
        tr = np.trace(A, axis1=-2, axis2=-1)
        mu = mu_at(mf, pts, base)
        gaps.append(float(np.max(np.abs(tr - mf.dim * mu))))
    gaps = np.array(gaps)
    return TraceGap(radii, gaps, float(np.max(gaps / radii)))


# ------------------------------------------------- nonlinear linearization

_GL_X, _GL_W = np.polynomial.legendre.leggauss(24)
_GL_X = 0.5 * (_GL_X + 1.0)
_GL_W = 0.5 * _GL_W


@dataclass(frozen=True)
class DensityProfile:
    """Radial energy density f(p) = h(|p|) described through h''."""

    h2: Callable[[np.ndarray], np.ndarray]

    def omega(self, t):
        return np.asarray(self.h2(t), dtype=np.float64) - 1.0

    def omega_mean(self, t):
        """(1/t) int_0^t omega(s) ds, by Gauss-Legendre on the unit interval."""
        t = np.asarray(t, dtype=np.float64)
        s = t[..., None] * _GL_X
        return np.sum(self.omega(s) * _GL_W, axis=-1)


def linearize_density(profile: DensityProfile, grad_norm: ScalarField) -> ScalarField:
    """theta = 1 + mean of omega over [0, |grad u|] as a nodal field."""
    g = grad_norm.values
    if np.any(g < 0):
        raise ValueError("gradient norm must be nonnegative")
    return grad_norm.with_values(1.0 + profile.omega_mean(g), name="theta")


def gradient_norm_field(u: ScalarField) -> ScalarField:
    grads = np.gradient(u.values, *u.grid.spacing)
    return u.with_values(np.sqrt(sum(gk * gk for gk in grads)), name="grad_norm")
