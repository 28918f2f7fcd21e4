"""Half-ball grids, masked scalar/vector fields, and cut-cell quadrature.

The computational domain is the upper half-ball

    B+ = {|x| < 1, x_d > 0},   flat part  B' = {|x| < 1, x_d = 0},

discretized by a uniform node lattice on [-1, 1]^{d-1} x [0, 1] with
spacing h = 1/n.  Cells cut by the unit sphere carry a fractional
quadrature weight: in 2-D the exact area of (cell `intersect` disk) via
closed-form circular-segment integrals, in 3-D a 4^d-point subcell
sampling.  Fields are node-centered; integrals average the in-mask cell
corners, so quadrature is second-order away from the curved boundary and
the weights sum exactly to |B+| in 2-D.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

# Node mask flags.
OUTSIDE = 0
INSIDE = 1
FLAT = 2    # x_d = 0, |x| < 1
SPHERE = 3  # |x| = 1 (up to round-off), x_d >= 0

_FLAG_NAMES = {OUTSIDE: "outside", INSIDE: "inside", FLAT: "flat", SPHERE: "sphere"}

# Subcell sample offsets per axis for smeared (cutoff / indicator) factors.
_N_SUB = 4
_SUB_OFFSETS = (np.arange(_N_SUB) + 0.5) / _N_SUB


def _segment_antiderivative(s: np.ndarray | float) -> np.ndarray | float:
    """Antiderivative of sqrt(1 - s^2) on [-1, 1]."""
    s = np.clip(s, -1.0, 1.0)
    return 0.5 * (s * np.sqrt(np.maximum(0.0, 1.0 - s * s)) + np.arcsin(s))


def _corner_area(x: float, y: float) -> float:
    """Area of {(s, t) : s <= x, t <= y} intersected with the unit disk."""
    if x <= -1.0 or y <= -1.0:
        return 0.0
    x = min(x, 1.0)
    y = min(y, 1.0)
    G = _segment_antiderivative
    if y >= 1.0:
        # Full vertical extent: 2 * integral of sqrt(1 - s^2) from -1 to x.
        return 2.0 * (G(x) - G(-1.0))
    s_star = math.sqrt(max(0.0, 1.0 - y * y))
    if y > 0.0:
        t1 = min(max(x, -1.0), -s_star)
        c1 = 2.0 * (G(t1) - G(-1.0))
        t2 = min(max(x, -s_star), s_star)
        c2 = y * (t2 + s_star) + (G(t2) - G(-s_star))
        t3 = min(max(x, s_star), 1.0)
        c3 = 2.0 * (G(t3) - G(s_star))
        return c1 + c2 + c3
    t2 = min(max(x, -s_star), s_star)
    return y * (t2 + s_star) + (G(t2) - G(-s_star))


def _corner_area_vec(x: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Vectorized `_corner_area`: area of the south-west quadrant at (x, y)
    intersected with the unit disk, per element."""
    x = np.minimum(np.asarray(x, dtype=float), 1.0)
    y = np.minimum(np.asarray(y, dtype=float), 1.0)
    G = _segment_antiderivative
    s_star = np.sqrt(np.maximum(0.0, 1.0 - y * y))
    t1 = np.clip(x, -1.0, -s_star)
    t2 = np.clip(x, -s_star, s_star)
    t3 = np.clip(x, s_star, 1.0)
    mid = y * (t2 + s_star) + (G(t2) - G(-s_star))
    upper = 2.0 * (G(t1) - G(-1.0)) + mid + 2.0 * (G(t3) - G(s_star))
    out = np.where(y > 0.0, upper, mid)
    return np.where((x <= -1.0) | (y <= -1.0), 0.0, out)


def disk_box_area_vec(
    ax: np.ndarray, bx: np.ndarray, ay: np.ndarray, by: np.ndarray
) -> np.ndarray:
    """Vectorized `disk_box_area` over arrays of box corners."""
    area = (
        _corner_area_vec(bx, by)
        - _corner_area_vec(ax, by)
        - _corner_area_vec(bx, ay)
        + _corner_area_vec(ax, ay)
    )
    return np.maximum(0.0, area)


def disk_box_area(ax: float, bx: float, ay: float, by: float) -> float:
    """Exact area of [ax, bx] x [ay, by] intersected with the unit disk."""
    return max(
        0.0,
        _corner_area(bx, by)
        - _corner_area(ax, by)
        - _corner_area(bx, ay)
        + _corner_area(ax, ay),
    )


class HalfBallGrid:
    """Uniform node lattice covering the upper half-ball with cut cells.

    Attributes
    ----------
    d : spatial dimension (2 or 3).
    n : nodes per unit length; cell size h = 1/n.
    coords : tuple of d arrays, the broadcast node coordinates
        (tangential axes span [-1, 1], the vertical axis spans [0, 1]).
    flags : int8 array of node mask flags (OUTSIDE/INSIDE/FLAT/SPHERE).
    cell_weights : fraction of each cell's volume inside B+, in [0, 1].
    """

    def __init__(self, d: int = 2, n: int = 256):
        if d not in (2, 3):
            raise ValueError(f"dimension must be 2 or 3, got {d}")
        if n < 8:
            raise ValueError(f"need at least 8 nodes per unit, got {n}")
        self.d = d
        self.n = n
        self.h = 1.0 / n
        axes = [np.linspace(-1.0, 1.0, 2 * n + 1) for _ in range(d - 1)]
        axes.append(np.linspace(0.0, 1.0, n + 1))
        self.axes = tuple(axes)
        self.shape = tuple(len(a) for a in axes)
        mesh = np.meshgrid(*axes, indexing="ij")
        self.coords = tuple(mesh)
        self.radius = np.sqrt(sum(c * c for c in mesh))
        self.flags = self._node_flags()
        self.cell_weights = self._cell_weights()
        self.in_mask = self._in_mask()
        self._subcell_radius_cache: np.ndarray | None = None
        self._flat_subcell_cache: np.ndarray | None = None

    # -- construction helpers ------------------------------------------------

    def _node_flags(self) -> np.ndarray:
        r = self.radius
        xd = self.coords[-1]
        tol = 1e-12
        flags = np.full(self.shape, OUTSIDE, dtype=np.int8)
        flags[r < 1.0 - tol] = INSIDE
        flags[(np.abs(r - 1.0) <= tol)] = SPHERE
        flags[(xd == 0.0) & (r < 1.0 - tol)] = FLAT
        return flags

    def _cell_weights(self) -> np.ndarray:
        h = self.h
        cell_shape = tuple(s - 1 for s in self.shape)
        # Classify cells by corner radii: fully inside, fully outside, or cut.
        lo = [a[:-1] for a in self.axes]
        lo_mesh = np.meshgrid(*lo, indexing="ij")
        # Nearest point of each cell to the origin (componentwise clamp of 0).
        near_sq = np.zeros(cell_shape)
        far_sq = np.zeros(cell_shape)
        for c_lo in lo_mesh:
            c_hi = c_lo + h
            near = np.clip(0.0, c_lo, c_hi)
            near_sq += near * near
            far_sq += np.maximum(np.abs(c_lo), np.abs(c_hi)) ** 2
        weights = np.zeros(cell_shape)
        weights[far_sq <= 1.0] = 1.0
        cut = (near_sq < 1.0) & (far_sq > 1.0)
        idx = np.argwhere(cut)
        if self.d == 2:
            for i, j in idx:
                ax_, ay_ = self.axes[0][i], self.axes[1][j]
                weights[i, j] = disk_box_area(ax_, ax_ + h, ay_, ay_ + h) / (h * h)
        else:
            # 4^3 midpoint subcell samples per cut cell.
            off = _SUB_OFFSETS * h
            ox, oy, oz = np.meshgrid(off, off, off, indexing="ij")
            for i, j, k in idx:
                sx = self.axes[0][i] + ox
                sy = self.axes[1][j] + oy
                sz = self.axes[2][k] + oz
                weights[i, j, k] = np.mean(sx * sx + sy * sy + sz * sz <= 1.0)
        return np.clip(weights, 0.0, 1.0)

    def _in_mask(self) -> np.ndarray:
        """Nodes carrying field values: flagged nodes plus corners of any
        positive-weight cell (needed so cut cells average real values)."""
        mask = self.flags != OUTSIDE
        pos = self.cell_weights > 0.0
        corner = np.zeros(self.shape, dtype=bool)
        for shifts in np.ndindex(*(2,) * self.d):
            sl = tuple(
                slice(s, s + self.shape[i] - 1) for i, s in enumerate(shifts)
            )
            corner[sl] |= pos
        return mask | corner

    # -- cached geometry -----------------------------------------------------

    @property
    def subcell_radii(self) -> np.ndarray:
        """|x| at 4^d midpoint subcell samples per cell, shape cells x 4^d.

        Used to average discontinuous radial factors (cutoff profiles, ball
        indicators) within cells, which removes the O(h^2/width^2) kink error
        of plain corner averaging.
        """
        if self._subcell_radius_cache is None:
            h = self.h
            lo = [a[:-1] for a in self.axes]
            lo_mesh = np.meshgrid(*lo, indexing="ij")
            offs = np.meshgrid(*(_SUB_OFFSETS * h,) * self.d, indexing="ij")
            offs = [o.ravel() for o in offs]
            r_sq = np.zeros(lo_mesh[0].shape + (len(offs[0]),))
            for c_lo, o in zip(lo_mesh, offs):
                pts = c_lo[..., None] + o
                r_sq += pts * pts
            self._subcell_radius_cache = np.sqrt(r_sq)
        return self._subcell_radius_cache

    @property
    def flat_subcell_radii(self) -> np.ndarray:
        """Tangential |x'| at subcell samples of flat-boundary cells."""
        if self._flat_subcell_cache is None:
            h = self.h
            lo = [a[:-1] for a in self.axes[:-1]]
            lo_mesh = np.meshgrid(*lo, indexing="ij")
            offs = np.meshgrid(*(_SUB_OFFSETS * h,) * (self.d - 1), indexing="ij")
            offs = [o.ravel() for o in offs]
            r_sq = np.zeros(lo_mesh[0].shape + (len(offs[0]),))
            for c_lo, o in zip(lo_mesh, offs):
                pts = c_lo[..., None] + o
                r_sq += pts * pts
            self._flat_subcell_cache = np.sqrt(r_sq)
        return self._flat_subcell_cache

    # -- basic queries ---------------------------------------------------------

    @property
    def flat_node_mask(self) -> np.ndarray:
        return self.flags == FLAT

    @property
    def origin_index(self) -> tuple[int, ...]:
        return tuple([self.n] * (self.d - 1) + [0])

    def mask_statistics(self) -> dict[str, int]:
        stats = {}
        for flag, name in _FLAG_NAMES.items():
            stats[name] = int(np.sum(self.flags == flag))
        return stats

    def __eq__(self, other: object) -> bool:
        return (
            isinstance(other, HalfBallGrid)
            and other.d == self.d
            and other.n == self.n
        )

    def __hash__(self) -> int:
        return hash((self.d, self.n))

    def __repr__(self) -> str:
        return f"HalfBallGrid(d={self.d}, n={self.n})"


def _check_same_grid(*fields: "ScalarField | VectorField") -> None:
    grids = {id(f.grid) for f in fields}
    if len(grids) > 1 and len({(f.grid.d, f.grid.n) for f in fields}) > 1:
        raise ValueError("incompatible grids")


@dataclass
class ScalarField:
    """One real value per node; values at out-of-mask nodes are ignored."""

    grid: HalfBallGrid
    values: np.ndarray

    def __post_init__(self) -> None:
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != self.grid.shape:
            raise ValueError(
                f"values shape {self.values.shape} != grid shape {self.grid.shape}"
            )
        bad = ~np.isfinite(self.values) & self.grid.in_mask
        if np.any(bad):
            raise ValueError(f"non-finite values at {int(bad.sum())} in-mask nodes")

    @classmethod
    def from_function(
        cls, grid: HalfBallGrid, fn: Callable[..., np.ndarray | float]
    ) -> "ScalarField":
        vals = np.broadcast_to(np.asarray(fn(*grid.coords), dtype=float), grid.shape)
        return cls(grid, np.array(vals))

    @classmethod
    def zeros(cls, grid: HalfBallGrid) -> "ScalarField":
        return cls(grid, np.zeros(grid.shape))

    @classmethod
    def constant(cls, grid: HalfBallGrid, c: float) -> "ScalarField":
        return cls(grid, np.full(grid.shape, float(c)))

    def copy(self) -> "ScalarField":
        return ScalarField(self.grid, self.values.copy())


@dataclass
class VectorField:
    """d real values per node, stored as components[i] arrays."""

    grid: HalfBallGrid
    components: tuple[np.ndarray, ...]

    def __post_init__(self) -> None:
        if len(self.components) != self.grid.d:
            raise ValueError("component count must equal grid dimension")
        self.components = tuple(np.asarray(c, dtype=float) for c in self.components)
        for c in self.components:
            if c.shape != self.grid.shape:
                raise ValueError("component shape mismatch")

    def magnitude(self) -> ScalarField:
        mag = np.sqrt(sum(c * c for c in self.components))
        return ScalarField(self.grid, mag)

    def __getitem__(self, i: int) -> np.ndarray:
        return self.components[i]


def _corner_average(grid: HalfBallGrid, values: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Cell average over in-mask corners; returns (sum, count) per cell."""
    mask = grid.in_mask
    cell_shape = tuple(s - 1 for s in grid.shape)
    total = np.zeros(cell_shape)
    count = np.zeros(cell_shape)
    safe = np.where(mask, values, 0.0)
    for shifts in np.ndindex(*(2,) * grid.d):
        sl = tuple(slice(s, s + cell_shape[i]) for i, s in enumerate(shifts))
        total += safe[sl]
        count += mask[sl]
    return total, count


def cell_average(grid: HalfBallGrid, values: np.ndarray) -> np.ndarray:
    """Average of a node array over each cell's in-mask corners."""
    total, count = _corner_average(grid, values)
    out = np.zeros_like(total)
    np.divide(total, count, out=out, where=count > 0)
    return out


def integrate(
    field: ScalarField,
    weight: ScalarField | None = None,
    cell_factor: np.ndarray | None = None,
) -> float:
    """Integral over B+ by cut-cell quadrature.

    `weight` multiplies the integrand nodewise.  `cell_factor` (one value
    per cell, e.g. a subcell-averaged cutoff) multiplies the cell
    contributions; it is how discontinuous radial factors enter without
    losing quadrature order.
    """
    grid = field.grid
    if weight is not None:
        _check_same_grid(field, weight)
        vals = field.values * weight.values
    else:
        vals = field.values
    avg = cell_average(grid, vals)
    contrib = avg * grid.cell_weights
    if cell_factor is not None:
        contrib = contrib * cell_factor
    return float(np.sum(contrib) * grid.h**grid.d)


def gradient(field: ScalarField) -> VectorField:
    """Finite-difference gradient: central where possible, one-sided
    second-order at the mask boundary.  Exact for affine and (centrally)
    quadratic fields."""
    grid = field.grid
    v = field.values
    mask = grid.in_mask
    h = grid.h
    comps = []
    for axis in range(grid.d):
        def shift(arr: np.ndarray, k: int) -> np.ndarray:
            out = np.zeros_like(arr)
            src = [slice(None)] * grid.d
            dst = [slice(None)] * grid.d
            if k > 0:
                src[axis] = slice(k, None)
                dst[axis] = slice(None, -k)
            elif k < 0:
                src[axis] = slice(None, k)
                dst[axis] = slice(-k, None)
            out[tuple(dst)] = arr[tuple(src)]
            return out

        vp1, vm1 = shift(v, 1), shift(v, -1)
        vp2, vm2 = shift(v, 2), shift(v, -2)
        mp1, mm1 = shift(mask.astype(bool), 1), shift(mask.astype(bool), -1)
        mp2, mm2 = shift(mask.astype(bool), 2), shift(mask.astype(bool), -2)

        central = (vp1 - vm1) / (2 * h)
        fwd2 = (-3 * v + 4 * vp1 - vp2) / (2 * h)
        bwd2 = (3 * v - 4 * vm1 + vm2) / (2 * h)
        fwd1 = (vp1 - v) / h
        bwd1 = (v - vm1) / h

        g = np.zeros_like(v)
        use_c = mp1 & mm1
        use_f2 = ~use_c & mp1 & mp2
        use_b2 = ~use_c & ~use_f2 & mm1 & mm2
        use_f1 = ~use_c & ~use_f2 & ~use_b2 & mp1
        use_b1 = ~use_c & ~use_f2 & ~use_b2 & ~use_f1 & mm1
        g[use_c] = central[use_c]
        g[use_f2] = fwd2[use_f2]
        g[use_b2] = bwd2[use_b2]
        g[use_f1] = fwd1[use_f1]
        g[use_b1] = bwd1[use_b1]
        g[~mask] = 0.0
        comps.append(g)
    return VectorField(grid, tuple(comps))


def boundary_integrate_flat(
    field: ScalarField,
    r: float,
    cutoff=None,
) -> float:
    """(d-1)-dimensional quadrature of the field over the flat boundary,
    weighted by cutoff(|x'|/r) when a cutoff profile is given.

    Pass ``cutoff=None`` for the plain integral over B' (sharp at |x'|=1).
    """
    if r <= 0:
        raise ValueError(f"radius must be positive, got {r}")
    grid = field.grid
    h = grid.h
    # Flat-boundary slice: vertical index 0.
    sl = (slice(None),) * (grid.d - 1) + (0,)
    vals = field.values[sl]
    mask = grid.in_mask[sl]
    sub_r = grid.flat_subcell_radii  # tangential cells x 4^{d-1}
    if cutoff is not None:
        factor = np.mean(cutoff.value(sub_r / r), axis=-1)
    else:
        factor = np.mean((sub_r <= min(r, 1.0)).astype(float), axis=-1)
    # In-mask corner average per tangential cell.
    cell_shape = tuple(s - 1 for s in vals.shape)
    total = np.zeros(cell_shape)
    count = np.zeros(cell_shape)
    safe = np.where(mask, vals, 0.0)
    for shifts in np.ndindex(*(2,) * (grid.d - 1)):
        ssl = tuple(slice(s, s + cell_shape[i]) for i, s in enumerate(shifts))
        total += safe[ssl]
        count += mask[ssl]
    avg = np.zeros_like(total)
    np.divide(total, count, out=avg, where=count > 0)
    return float(np.sum(avg * factor) * h ** (grid.d - 1))


def ball_cell_fractions(
    grid: HalfBallGrid, center: Sequence[float], radius: float
) -> np.ndarray:
    """Fraction of each cell inside the ball B_radius(center), exact in 2-D.

    Combined with `grid.cell_weights` (via elementwise min) this clips the
    ball to B+; the min is exact whenever at most one of the two surfaces
    cuts a given cell.
    """
    if radius <= 0:
        raise ValueError("radius must be positive")
    center = np.asarray(center, dtype=float)
    h = grid.h
    cell_shape = tuple(s - 1 for s in grid.shape)
    lo = [a[:-1] for a in grid.axes]
    lo_mesh = np.meshgrid(*lo, indexing="ij")
    near_sq = np.zeros(cell_shape)
    far_sq = np.zeros(cell_shape)
    for c_lo, c0 in zip(lo_mesh, center):
        c_hi = c_lo + h
        near = np.clip(c0, c_lo, c_hi) - c0
        near_sq += near * near
        far_sq += np.maximum(np.abs(c_lo - c0), np.abs(c_hi - c0)) ** 2
    r_sq = radius * radius
    frac = np.zeros(cell_shape)
    frac[far_sq <= r_sq] = 1.0
    cut = (near_sq < r_sq) & (far_sq > r_sq)
    idx = np.argwhere(cut)
    if grid.d == 2:
        for i, j in idx:
            ax_ = (grid.axes[0][i] - center[0]) / radius
            ay_ = (grid.axes[1][j] - center[1]) / radius
            hh = h / radius
            frac[i, j] = disk_box_area(ax_, ax_ + hh, ay_, ay_ + hh) / (hh * hh)
    else:
        off = _SUB_OFFSETS * h
        ox, oy, oz = np.meshgrid(off, off, off, indexing="ij")
        for i, j, k in idx:
            sx = grid.axes[0][i] + ox - center[0]
            sy = grid.axes[1][j] + oy - center[1]
            sz = grid.axes[2][k] + oz - center[2]
            frac[i, j, k] = np.mean(sx * sx + sy * sy + sz * sz <= r_sq)
    return frac


def ball_integrate(
    field: ScalarField, center: Sequence[float], radius: float
) -> float:
    """Integral of the field over B_radius(center) intersected with B+."""
    return BallQuadrature(field).integrate(center, radius)


class BallQuadrature:
    """Ball-integral evaluator with cached cell averages.

    Computes the same cut-cell quadrature as `ball_integrate` but caches the
    per-cell averages of the field and restricts all work to the cells meeting
    the ball's bounding box, so repeated evaluations over many small balls
    (e.g. a cube decomposition) stay cheap.
    """

    def __init__(self, field: ScalarField):
        self.grid = field.grid
        self._avg = cell_average(self.grid, field.values)
        self._cw = self.grid.cell_weights

    def integrate(self, center: Sequence[float], radius: float) -> float:
        if radius <= 0:
            raise ValueError("radius must be positive")
        g = self.grid
        h = g.h
        center = np.asarray(center, dtype=float)
        box = []
        for axis in range(g.d):
            a0 = g.axes[axis][0]
            n_cells = g.shape[axis] - 1
            i0 = max(0, int(np.floor((center[axis] - radius - a0) / h)))
            i1 = min(n_cells, int(np.ceil((center[axis] + radius - a0) / h)))
            if i1 <= i0:
                return 0.0
            box.append((i0, i1))
        sl = tuple(slice(i0, i1) for i0, i1 in box)
        sub_shape = tuple(i1 - i0 for i0, i1 in box)
        near_sq = np.zeros(sub_shape)
        far_sq = np.zeros(sub_shape)
        lo_axes = [
            g.axes[axis][box[axis][0] : box[axis][1]] for axis in range(g.d)
        ]
        lo_mesh = np.meshgrid(*lo_axes, indexing="ij")
        for c_lo, c0 in zip(lo_mesh, center):
            c_hi = c_lo + h
            near = np.clip(c0, c_lo, c_hi) - c0
            near_sq += near * near
            far_sq += np.maximum(np.abs(c_lo - c0), np.abs(c_hi - c0)) ** 2
        r_sq = radius * radius
        frac = np.zeros(sub_shape)
        frac[far_sq <= r_sq] = 1.0
        cut = (near_sq < r_sq) & (far_sq > r_sq)
        idx = np.argwhere(cut)
        if idx.size:
            if g.d == 2:
                hh = h / radius
                ax_ = (lo_axes[0][idx[:, 0]] - center[0]) / radius
                ay_ = (lo_axes[1][idx[:, 1]] - center[1]) / radius
                frac[cut] = (
                    disk_box_area_vec(ax_, ax_ + hh, ay_, ay_ + hh) / (hh * hh)
                )
            else:
                off = _SUB_OFFSETS * h
                ox, oy, oz = np.meshgrid(off, off, off, indexing="ij")
                sx = (lo_axes[0][idx[:, 0]] - center[0])[:, None, None, None] + ox
                sy = (lo_axes[1][idx[:, 1]] - center[1])[:, None, None, None] + oy
                sz = (lo_axes[2][idx[:, 2]] - center[2])[:, None, None, None] + oz
                inside = sx * sx + sy * sy + sz * sz <= r_sq
                frac[cut] = inside.mean(axis=(1, 2, 3))
        weighted = np.minimum(frac, self._cw[sl])
        return float(np.sum(self._avg[sl] * weighted) * h**g.d)


def sphere_integral(field: ScalarField, r: float, n_samples: int | None = None) -> float:
    """Integral of the field over the sphere {|x| = r, x_d > 0} by polar
    sampling with cubic interpolation (2-D) or latitude-longitude rule (3-D)."""
    from scipy.interpolate import RegularGridInterpolator

    grid = field.grid
    if r <= 0 or r > 1:
        raise ValueError("radius must lie in (0, 1]")
    interp = RegularGridInterpolator(
        grid.axes, field.values, method="cubic", bounds_error=False, fill_value=None
    )
    if grid.d == 2:
        m = n_samples or max(64, int(8 * r / grid.h))
        theta = np.linspace(0.0, np.pi, m + 1)
        pts = np.column_stack([r * np.cos(theta), r * np.sin(theta)])
        pts[:, 1] = np.clip(pts[:, 1], 0.0, 1.0)
        vals = interp(pts)
        return float(np.trapezoid(vals, theta) * r)
    m = n_samples or max(32, int(4 * r / grid.h))
    theta = np.linspace(0.0, np.pi / 2, m + 1)  # polar from equator to pole
    phi = np.linspace(0.0, 2 * np.pi, 2 * m + 1)
    T, P = np.meshgrid(theta, phi, indexing="ij")
    x = r * np.cos(T) * np.cos(P)
    y = r * np.cos(T) * np.sin(P)
    z = r * np.sin(T)
    pts = np.column_stack([x.ravel(), y.ravel(), np.clip(z.ravel(), 0.0, 1.0)])
    vals = interp(pts).reshape(T.shape)
    integrand = vals * np.cos(T)  # surface element r^2 cos(theta) dtheta dphi
    inner = np.trapz(integrand, phi, axis=1)
    return float(np.trapz(inner, theta) * r * r)


# -- serialization -------------------------------------------------------------


def write_field_csv(field: ScalarField, path: str | Path) -> None:
    """Write in-mask node values as CSV `x1,...,xd,value` plus a JSON sidecar."""
    path = Path(path)
    grid = field.grid
    header = [f"x{i + 1}" for i in range(grid.d)] + ["value"]
    idx = np.argwhere(grid.in_mask)
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for multi in idx:
            coords = [grid.axes[i][multi[i]] for i in range(grid.d)]
            writer.writerow(
                [f"{c:.17g}" for c in coords] + [f"{field.values[tuple(multi)]:.17g}"]
            )
    sidecar = {
        "d": grid.d,
        "n": grid.n,
        "mask_statistics": grid.mask_statistics(),
    }
    path.with_suffix(path.suffix + ".json").write_text(json.dumps(sidecar, indent=2))


def read_field_csv(path: str | Path, grid: HalfBallGrid | None = None) -> ScalarField:
    """Read a field CSV written by `write_field_csv`."""
    path = Path(path)
    sidecar_path = path.with_suffix(path.suffix + ".json")
    if grid is None:
        if not sidecar_path.exists():
            raise ValueError(f"missing sidecar {sidecar_path}; pass a grid explicitly")
        meta = json.loads(sidecar_path.read_text())
        grid = HalfBallGrid(d=int(meta["d"]), n=int(meta["n"]))
    values = np.zeros(grid.shape)
    with path.open() as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if len(header) != grid.d + 1:
            raise ValueError(f"CSV column count {len(header)} != d+1")
        for row in reader:
            coords = [float(c) for c in row[:-1]]
            multi = tuple(
                int(round((c - grid.axes[i][0]) * grid.n)) for i, c in enumerate(coords)
            )
            values[multi] = float(row[-1])
    return ScalarField(grid, values)
