"""Uniform box grids on [-1, 1]^d, even-symmetric scalar fields and the SGNF1 file format.

Nodes are stored row-major with the last axis fastest (plain C order), and the
last axis is the thin-plane normal: the plane {x_d = 0} is the middle node row.
"""

from __future__ import annotations

import itertools
import logging
import warnings
from dataclasses import dataclass, field as dc_field
from functools import cached_property
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .errors import DomainError, FieldFormatError, NonFiniteError

log = logging.getLogger(__name__)

MAGIC = "SGNF1"
HALF_WIDTH = 1.0


@dataclass(frozen=True)
class GridSpec:
    counts: tuple[int, ...]

    def __post_init__(self):
        counts = tuple(int(c) for c in self.counts)
        object.__setattr__(self, "counts", counts)
        if len(counts) not in (2, 3):
            raise ValueError(f"ambient dimension must be 2 or 3, got {len(counts)}")
        if min(counts) < 5:
            raise ValueError(f"every axis needs at least 5 nodes, got {counts}")
        if counts[-1] % 2 == 0:
            raise ValueError("last-axis count must be odd so the thin plane carries nodes")

    @classmethod
    def uniform(cls, dim: int, n: int) -> "GridSpec":
        return cls((n,) * dim)

    @property
    def dim(self) -> int:
        return len(self.counts)

    @property
    def n(self) -> int:
        """Dimension of the thin plane."""
        return self.dim - 1

    @property
    def spacing(self) -> tuple[float, ...]:
        return tuple(2.0 / (c - 1) for c in self.counts)

    @property
    def h(self) -> float:
        return max(self.spacing)

    @property
    def shape(self) -> tuple[int, ...]:
        return self.counts

    @property
    def size(self) -> int:
        return int(np.prod(self.counts))

    @property
    def plane_index(self) -> int:
        return (self.counts[-1] - 1) // 2

    def axis(self, k: int) -> np.ndarray:
        # exact integer ratios: the axis is exactly antisymmetric and hits +-1
        c = self.counts[k]
        return (2.0 * np.arange(c) - (c - 1)) / (c - 1)

    def nodes(self) -> np.ndarray:
        """Node coordinates, shape counts + (dim,)."""
        mesh = np.meshgrid(*[self.axis(k) for k in range(self.dim)], indexing="ij")
        return np.stack(mesh, axis=-1)

    def cell_centers(self) -> np.ndarray:
        cen = []
        for k in range(self.dim):
            a = self.axis(k)
            cen.append(0.5 * (a[:-1] + a[1:]))
        mesh = np.meshgrid(*cen, indexing="ij")
        return np.stack(mesh, axis=-1)

    @property
    def cell_volume(self) -> float:
        return float(np.prod(self.spacing))

    def refined(self, factor: int = 2) -> "GridSpec":
        return GridSpec(tuple((c - 1) * factor + 1 for c in self.counts))


def _avg_pairs(a: np.ndarray, axes: Sequence[int]) -> np.ndarray:
    for ax in axes:
        lo = [slice(None)] * a.ndim
        hi = [slice(None)] * a.ndim
        lo[ax] = slice(None, -1)
        hi[ax] = slice(1, None)
        a = 0.5 * (a[tuple(lo)] + a[tuple(hi)])
    return a


@dataclass(frozen=True, eq=False)
class ScalarField:
    grid: GridSpec
    values: np.ndarray
    even: bool = False
    name: str = dc_field(default="", compare=False)

    def __post_init__(self):
        v = np.array(self.values, dtype=np.float64, order="C", copy=True)
        if v.shape != self.grid.shape:
            v = v.reshape(self.grid.shape) if v.size == self.grid.size else None
            if v is None:
                raise ValueError(f"values do not match grid shape {self.grid.shape}")
        bad = ~np.isfinite(v)
        if bad.any():
            idx = tuple(int(i) for i in np.argwhere(bad)[0])
            raise NonFiniteError(f"non-finite field value at node {idx}")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @property
    def dim(self) -> int:
        return self.grid.dim

    def with_values(self, values, even: bool | None = None, name: str | None = None) -> "ScalarField":
        return ScalarField(self.grid, values, self.even if even is None else even,
                           self.name if name is None else name)

    def scaled(self, c: float) -> "ScalarField":
        return self.with_values(c * self.values)

    def plane_values(self) -> np.ndarray:
        return self.values[..., self.grid.plane_index]

    @cached_property
    def cell_values(self) -> np.ndarray:
        return _avg_pairs(self.values, range(self.dim))

    @cached_property
    def cell_gradients(self) -> np.ndarray:
        """Exact gradient of the multilinear interpolant at every cell center."""
        grads = []
        for k, hk in enumerate(self.grid.spacing):
            d = np.diff(self.values, axis=k) / hk
            grads.append(_avg_pairs(d, [j for j in range(self.dim) if j != k]))
        return np.stack(grads, axis=-1)

    @cached_property
    def cell_centers(self) -> np.ndarray:
        return self.grid.cell_centers()


def sample_function(grid: GridSpec, f: Callable[[np.ndarray], np.ndarray], even: bool = False,
                    name: str = "") -> ScalarField:
    """Sample a vectorized evaluator ``f(points[..., dim]) -> values[...]`` at every node.

    For even ``f`` only the half x_d >= 0 is evaluated and mirrored, so the
    stored values are exactly symmetric.
    """
    nodes = grid.nodes()
    if even:
        p = grid.plane_index
        half = nodes[..., p:, :]
        upper = np.broadcast_to(np.asarray(f(half), dtype=np.float64), half.shape[:-1])
        vals = np.concatenate([upper[..., :0:-1], upper], axis=-1)
    else:
        vals = np.asarray(f(nodes), dtype=np.float64)
    vals = np.broadcast_to(vals, grid.shape)
    bad = ~np.isfinite(vals)
    if bad.any():
        idx = tuple(int(i) for i in np.argwhere(bad)[0])
        raise NonFiniteError(f"evaluator returned a non-finite value at node {idx}")
    return ScalarField(grid, vals, even, name)


def symmetrize(field: ScalarField) -> ScalarField:
    v = field.values
    return field.with_values(0.5 * (v + v[..., ::-1]), even=True)


def check_even_symmetry(field: ScalarField) -> float:
    v = field.values
    return float(np.max(np.abs(v - v[..., ::-1])))


def _locate(grid: GridSpec, pts: np.ndarray, margin_cells: float):
    idx, frac = [], []
    for k, (c, hk) in enumerate(zip(grid.counts, grid.spacing)):
        x = pts[:, k]
        lo = -HALF_WIDTH + margin_cells * hk
        tol = 1e-12
        if np.any(x < lo - tol) or np.any(x > -lo + tol):
            raise DomainError(f"point outside the admissible box along axis {k}")
        t = np.clip((x + HALF_WIDTH) / hk, 0.0, c - 1.0)
        tr = np.round(t)
        t = np.where(np.abs(t - tr) < 1e-9, tr, t)
        i = np.minimum(np.floor(t).astype(np.intp), c - 2)
        idx.append(i)
        frac.append(t - i)
    return idx, frac


def interp_many(field: ScalarField, points, gradient: bool = True):
    """Multilinear value (and interpolant gradient) at an array of points.

    On a cell face the gradient component normal to the face is the mean of
    the two one-sided slopes, i.e. the limit of central differences.
    """
    pts = np.atleast_2d(np.asarray(points, dtype=np.float64))
    g = field.grid
    d = g.dim
    if pts.shape[-1] != d:
        raise ValueError(f"points must have {d} coordinates")
    idx, frac = _locate(g, pts, 1.0 if gradient else 0.0)
    u = field.values
    val = np.zeros(len(pts))
    grad = np.zeros((len(pts), d)) if gradient else None
    corners = list(itertools.product((0, 1), repeat=d))
    w1 = [(1.0 - f, f) for f in frac]
    for c in corners:
        uc = u[tuple(i + ck for i, ck in zip(idx, c))]
        wt = np.ones(len(pts))
        for k in range(d):
            wt = wt * w1[k][c[k]]
        val += wt * uc
    if not gradient:
        return val, None
    for k in range(d):
        hk = g.spacing[k]
        others = [j for j in range(d) if j != k]
        slope = np.zeros(len(pts))
        slope_left = np.zeros(len(pts))
        on_face = (frac[k] == 0.0) & (idx[k] > 0)
        for c in itertools.product((0, 1), repeat=d - 1):
            wt = np.ones(len(pts))
            ii = list(idx)
            for j, cj in zip(others, c):
                wt = wt * w1[j][cj]
                ii[j] = idx[j] + cj
            ii_hi, ii_lo, ii_ll = list(ii), list(ii), list(ii)
            ii_hi[k] = idx[k] + 1
            ii_lo[k] = idx[k]
            ii_ll[k] = np.maximum(idx[k] - 1, 0)
            uhi, ulo, ull = u[tuple(ii_hi)], u[tuple(ii_lo)], u[tuple(ii_ll)]
            slope += wt * (uhi - ulo) / hk
            slope_left += wt * (ulo - ull) / hk
        grad[:, k] = np.where(on_face, 0.5 * (slope + slope_left), slope)
    return val, grad


def interp_value_grad(field: ScalarField, point) -> tuple[float, np.ndarray]:
    val, grad = interp_many(field, np.asarray(point, dtype=np.float64)[None, :])
    return float(val[0]), grad[0]


def write_field(field: ScalarField, path) -> None:
    g = field.grid
    sp = g.spacing
    sp_txt = "%.17g" % sp[0] if len(set(sp)) == 1 else " ".join("%.17g" % s for s in sp)
    header = "\n".join([
        MAGIC,
        f"dim {g.dim}",
        "shape " + " ".join(str(c) for c in g.counts),
        f"spacing {sp_txt}",
        f"even {int(bool(field.even))}",
        "data f64le",
    ]) + "\n"
    payload = np.ascontiguousarray(field.values, dtype="<f8").tobytes()
    with open(path, "wb") as fh:
        fh.write(header.encode("ascii"))
        fh.write(payload)


@dataclass
class ReadReport:
    warnings: list[str]


def read_field(path, with_report: bool = False):
    raw = Path(path).read_bytes()
    lines, pos = [], 0
    for _ in range(6):
        nl = raw.find(b"\n", pos)
        if nl < 0:
            raise FieldFormatError("truncated header")
        lines.append(raw[pos:nl].decode("ascii", errors="replace"))
        pos = nl + 1
    if lines[0] != MAGIC:
        raise FieldFormatError(f"bad magic/version {lines[0]!r}")
    try:
        key, dim = lines[1].split()
        dim = int(dim)
        shape_tok = lines[2].split()
        counts = tuple(int(c) for c in shape_tok[1:])
        sp_tok = lines[3].split()
        even_tok = lines[4].split()
    except ValueError as exc:
        raise FieldFormatError(f"malformed header: {exc}") from None
    if key != "dim" or shape_tok[0] != "shape" or sp_tok[0] != "spacing" or even_tok[0] != "even":
        raise FieldFormatError("header keys out of order")
    if lines[5] != "data f64le":
        raise FieldFormatError(f"unsupported payload {lines[5]!r}")
    if len(counts) != dim:
        raise FieldFormatError("shape does not match dim")
    grid = GridSpec(counts)
    spacing = [float(s) for s in sp_tok[1:]]
    if len(spacing) == 1:
        spacing = spacing * dim
    if len(spacing) != dim or not np.allclose(spacing, grid.spacing, rtol=1e-14, atol=0):
        raise FieldFormatError("spacing inconsistent with shape on [-1,1]^d")
    even = even_tok[1] == "1"
    body = raw[pos:]
    expected = 8 * grid.size
    if len(body) != expected:
        raise FieldFormatError(f"payload length mismatch: {len(body)} bytes, expected {expected}")
    vals = np.frombuffer(body, dtype="<f8").reshape(counts).astype(np.float64)
    field = ScalarField(grid, vals, even)
    notes = []
    if even and check_even_symmetry(field) != 0.0:
        notes.append("even flag set but payload is not symmetric")
        warnings.warn(notes[-1], stacklevel=2)
    if with_report:
        return field, ReadReport(notes)
    return field


def recovered_gradient(field: ScalarField, points) -> np.ndarray:
    """Gradient at arbitrary points by multilinear interpolation of the cell-center gradients.

    Cell-center gradients of the interpolant are second-order accurate for
    smooth data, unlike the piecewise gradient itself. Along the plane normal
    the interpolation never mixes cells from opposite sides of the thin
    plane, since even fields may have a gradient jump there.
    """
    pts = np.atleast_2d(np.asarray(points, dtype=np.float64))
    g = field.grid
    d = g.dim
    cg = field.cell_gradients
    idx, frac = [], []
    for k in range(d):
        hk = g.spacing[k]
        nc = g.counts[k] - 1
        x = pts[:, k]
        if np.any(np.abs(x) > 1.0 + 1e-12):
            raise DomainError(f"point outside the box along axis {k}")
        t = (x + 1.0) / hk - 0.5
        i = np.clip(np.floor(t).astype(np.intp), 0, nc - 2)
        if k == d - 1:
            p = g.plane_index  # first cell row above the plane
            i = np.where(x >= 0.0, np.maximum(i, p), np.minimum(i, p - 2))
        idx.append(i)
        frac.append(t - i)
    out = np.zeros((len(pts), d))
    for c in itertools.product((0, 1), repeat=d):
        wt = np.ones(len(pts))
        for k in range(d):
            wt = wt * (frac[k] if c[k] else 1.0 - frac[k])
        out += wt[:, None] * cg[tuple(i + ck for i, ck in zip(idx, c))]
    return out
