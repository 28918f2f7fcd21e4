"""Hodograph-type change of variables for the one-phase minimizer.

Compose the minimizer with the obstacle-flattening flow, invert the vertical
component column by column, and produce the linearization field ``w`` whose
flat-boundary behaviour encodes contact and branch points:

* ``v(x) = u(Phi(delta x))`` sampled bicubically on the unit half-ball grid
  (``Phi = id`` and ``delta = 1`` for a flat obstacle);
* per tangential column, ``wt(x', x_d)`` is the monotone inverse of
  ``x_d -> v(x', x_d)``, found by bisection to absolute tolerance 1e-10;
* ``w = wt - x_d``; the defining identity ``v(x', wt(x', x_d)) = x_d`` holds
  on the footprint up to interpolation error.

The transform is only usable where the vertical slope of ``v`` stays above
1/2; violating nodes abort with an explicit list.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.interpolate import CubicSpline, RegularGridInterpolator

from .grid import HalfBallGrid, ScalarField, gradient, integrate
from .obstacle import CoefficientSet, FlowMap, HarmonicExtension


class HodographInvertibilityError(RuntimeError):
    """Raised when the vertical slope of v drops to 1/2 or below."""

    def __init__(self, margin: float, nodes: list[tuple[int, ...]]):
        self.margin = margin
        self.nodes = nodes
        preview = ", ".join(map(str, nodes[:8]))
        more = "" if len(nodes) <= 8 else f" (+{len(nodes) - 8} more)"
        super().__init__(
            f"hodograph not invertible here: min vertical slope {margin:.4f} "
            f"<= 1/2 at nodes [{preview}]{more}"
        )


@dataclass
class HodographResult:
    """Composed field, its linearization, and the transform's footprint."""

    v: ScalarField                 # u composed with the flow, on the grid
    w: ScalarField                 # linearization: wt = x_d + w
    sample_mask: np.ndarray        # nodes where v is defined
    footprint: np.ndarray          # nodes reached by the inversion
    margin: float                  # min vertical slope of v on sample pairs
    interpolation_tolerance: float
    patch_scale: float = 1.0
    flat_transform: bool = True
    column_spans: dict = field(default_factory=dict)  # column -> top level idx

    @property
    def grid(self) -> HalfBallGrid:
        return self.v.grid

    def flat_footprint_columns(self) -> list[tuple[int, ...]]:
        """Tangential indices whose flat-boundary node is in the footprint."""
        g = self.grid
        out = []
        for idx in np.ndindex(g.shape[:-1]):
            if self.footprint[idx + (0,)]:
                out.append(idx)
        return out


def _compose_with_flow(
    u: ScalarField,
    flow: FlowMap,
    extension: HarmonicExtension | None,
    patch_scale: float | None,
) -> tuple[np.ndarray, np.ndarray, float]:
    """Sample v(x) = u(Phi(delta x)) on u's grid; return values, mask, delta."""
    g = u.grid
    if g.d != 2:
        raise ValueError("flow-based composition is 2-D only")
    delta = patch_scale if patch_scale is not None else flow.extent
    if delta <= 0:
        raise ValueError("patch scale must be positive")
    if delta > flow.extent + 1e-12:
        raise ValueError("flow does not cover the requested patch")

    x1p = delta * g.coords[0]
    tp = delta * g.coords[1]
    inside_flow = (
        (x1p >= flow.x1_grid[0] - 1e-12)
        & (x1p <= flow.x1_grid[-1] + 1e-12)
        & (tp >= flow.t_grid[0] - 1e-12)
        & (tp <= flow.t_grid[-1] + 1e-12)
    )
    pts = np.column_stack([x1p.ravel(), tp.ravel()])

    def interp(arr2d: np.ndarray) -> np.ndarray:
        f = RegularGridInterpolator(
            (flow.x1_grid, flow.t_grid), arr2d, method="cubic",
            bounds_error=False, fill_value=None,
        )
        return f(pts).reshape(g.shape)

    phi1 = interp(flow.phi_samples[..., 0])
    phi2 = interp(flow.phi_samples[..., 1])
    inside_ball = (phi1 * phi1 + phi2 * phi2 <= 1.0 + 1e-12) & (phi2 >= -1e-12)
    mask = g.in_mask & inside_flow & inside_ball

    u_interp = RegularGridInterpolator(
        g.axes, u.values, method="cubic", bounds_error=False, fill_value=None,
    )
    vals = np.zeros(g.shape)
    pts_u = np.column_stack([phi1[mask], np.maximum(phi2[mask], 0.0)])
    # divide by the patch scale so the model solution (u equal to the
    # extension itself) composes to exactly x_d, giving unit vertical slope
    vals[mask] = u_interp(pts_u) / delta
    # t = 0 maps onto the obstacle graph, where the admissibility constraint
    # forces u to vanish identically; pin the trace to remove the O(h)
    # interpolation error of sampling across the kink there
    vals[..., 0] = np.where(mask[..., 0], 0.0, vals[..., 0])
    return vals, mask, delta


def _vertical_margin(
    values: np.ndarray, mask: np.ndarray, h: float, skip_levels: int = 0
) -> tuple[float, list[tuple[int, ...]]]:
    """Min forward-difference vertical slope over node pairs inside the mask.

    ``skip_levels`` exempts the lowest levels from the slope bound (the kink
    and smoothing layer of a one-phase minimizer at the fixed boundary, where
    the discrete slope is not representative of the transform's regularity).
    """
    dv = np.diff(values, axis=-1) / h
    pair = mask[..., :-1] & mask[..., 1:]
    if skip_levels > 0:
        pair = pair.copy()
        pair[..., : min(skip_levels, pair.shape[-1])] = False
    if not np.any(pair):
        raise ValueError("empty footprint: no vertical node pairs")
    margin = float(np.min(dv[pair]))
    bad = np.argwhere(pair & (dv <= 0.5))
    return margin, [tuple(int(i) for i in row) for row in bad]


def m_hodograph(
    u: ScalarField,
    flow: FlowMap | None = None,
    extension: HarmonicExtension | None = None,
    patch_scale: float | None = None,
    bisection_tol: float = 1e-10,
    boundary_layer: float = 0.0,
) -> HodographResult:
    """Transform the minimizer to flattened coordinates and linearize.

    ``flow=None`` (or a flat obstacle) short-circuits to the identity
    transform ``v = u``.  Otherwise ``v`` is the bicubic composition with the
    flow on the patch of scale ``patch_scale`` (default: the flow's extent),
    matching the convention of the coefficient assembly.

    ``boundary_layer`` (a length in grid coordinates) exempts the levels
    below it from the slope-above-1/2 margin requirement; use it to skip the
    kink/smoothing layer of a discrete one-phase minimizer at the fixed
    boundary.  The columnwise monotone inversion is still performed there.
    """
    g = u.grid
    flat = flow is None or (
        extension is not None and extension.obstacle.is_flat
    ) or (flow is not None and flow.extension.obstacle.is_flat)
    if flat:
        vals = np.where(g.in_mask, u.values, 0.0)
        mask = g.in_mask.copy()
        delta = 1.0
    else:
        vals, mask, delta = _compose_with_flow(u, flow, extension, patch_scale)

    skip = int(np.ceil(max(boundary_layer, 0.0) / g.h - 1e-12))
    margin, bad_nodes = _vertical_margin(vals, mask, g.h, skip_levels=skip)
    if margin <= 0.5:
        raise HodographInvertibilityError(margin, bad_nodes)

    xd = g.axes[-1]
    h = g.h
    wt = np.zeros(g.shape)
    footprint = np.zeros(g.shape, dtype=bool)
    spans: dict = {}
    for idx in np.ndindex(g.shape[:-1]):
        col_mask = mask[idx]
        if not col_mask[0]:
            continue
        # contiguous run of in-mask levels starting at the flat boundary
        top = int(np.argmax(~col_mask)) - 1 if not col_mask.all() else len(xd) - 1
        if top < 1:
            continue
        spans[idx] = top
        col = vals[idx][: top + 1]
        spline = CubicSpline(xd[: top + 1], col)
        lo_val, hi_val = col[0], col[top]
        for k in range(top + 1):
            target = xd[k]
            if target < lo_val - 1e-14 or target > hi_val + 1e-14:
                continue
            a, b = xd[0], xd[top]
            fa = col[0] - target
            # bisection on the monotone column spline
            while b - a > bisection_tol:
                m = 0.5 * (a + b)
                fm = float(spline(m)) - target
                if (fa <= 0.0) == (fm <= 0.0):
                    a, fa = m, fm
                else:
                    b = m
            wt[idx + (k,)] = 0.5 * (a + b)
            footprint[idx + (k,)] = True

    w = np.where(footprint, wt - g.coords[-1], 0.0)
    return HodographResult(
        v=ScalarField(g, vals),
        w=ScalarField(g, w),
        sample_mask=mask,
        footprint=footprint,
        margin=margin,
        interpolation_tolerance=max(h * h, bisection_tol * 10.0),
        patch_scale=delta,
        flat_transform=bool(flat),
        column_spans=spans,
    )


def round_trip_residual(result: HodographResult) -> float:
    """Max defect of the defining identity v(x', x_d + w) = x_d.

    Evaluates v by a full-lattice bicubic interpolant, independent of the
    per-column splines used during inversion, so the number reflects genuine
    interpolation discrepancy rather than the bisection tolerance.
    """
    g = result.grid
    interp = RegularGridInterpolator(
        g.axes, result.v.values, method="cubic",
        bounds_error=False, fill_value=None,
    )
    residual = 0.0
    wt = result.w.values + g.coords[-1]
    # keep evaluation points well inside the sampled region; nearer the mask
    # edge the lattice spline mixes in out-of-mask zeros and the defect no
    # longer measures interpolation error
    r_keep = 1.0 - 4.0 * g.h
    for idx in np.ndindex(g.shape[:-1]):
        ks = np.nonzero(result.footprint[idx])[0]
        if ks.size == 0:
            continue
        flat_coord = [np.full(ks.size, g.axes[a][idx[a]]) for a in range(g.d - 1)]
        pts = np.column_stack(flat_coord + [wt[idx][ks]])
        rad = np.sqrt(np.sum(pts * pts, axis=1))
        keep = rad <= r_keep
        if not np.any(keep):
            continue
        vals = interp(pts[keep])
        residual = max(
            residual, float(np.max(np.abs(vals - g.axes[-1][ks][keep])))
        )
    return residual


def column_monotonicity_margin(result: HodographResult) -> float:
    """Min forward difference of x_d + w along columns inside the footprint.

    Positive value certifies strict columnwise monotonicity of the inverse.
    """
    g = result.grid
    wt = result.w.values + g.coords[-1]
    dv = np.diff(wt, axis=-1)
    pair = result.footprint[..., :-1] & result.footprint[..., 1:]
    if not np.any(pair):
        return float("inf")
    return float(np.min(dv[pair]))


def branch_characterization(
    result: HodographResult, tau: float
) -> dict[str, list[tuple[int, ...]]]:
    """Flat-boundary node lists from the linearization.

    ``contact``: flat nodes with |w| <= tau.  ``branch``: flat nodes with
    additionally |grad w| <= tau (tangential central differences plus the
    one-sided vertical difference).  These are the discrete counterparts of
    the contact set and the branch set of the original minimizer, mapped
    through the flattening flow.
    """
    if tau <= 0:
        raise ValueError("tau must be positive")
    g = result.grid
    h = g.h
    w = result.w.values
    contact: list[tuple[int, ...]] = []
    branch: list[tuple[int, ...]] = []
    for idx in result.flat_footprint_columns():
        node = idx + (0,)
        if abs(w[node]) > tau:
            continue
        contact.append(idx)
        grad_sq = 0.0
        if result.footprint[idx + (1,)]:
            gv = (w[idx + (1,)] - w[node]) / h
            grad_sq += gv * gv
        for ax in range(g.d - 1):
            lo = tuple(idx[a] - (1 if a == ax else 0) for a in range(g.d - 1))
            hi = tuple(idx[a] + (1 if a == ax else 0) for a in range(g.d - 1))
            if min(lo) < 0 or any(hi[a] >= g.shape[a] for a in range(g.d - 1)):
                continue
            if not (result.footprint[lo + (0,)] and result.footprint[hi + (0,)]):
                continue
            gt = (w[hi + (0,)] - w[lo + (0,)]) / (2.0 * h)
            grad_sq += gt * gt
        if np.sqrt(grad_sq) <= tau:
            branch.append(idx)
    return {"contact": contact, "branch": branch}


def energy_correspondence(
    u: ScalarField,
    result: HodographResult,
    coefficients: CoefficientSet | None = None,
) -> dict[str, float]:
    """Compare the one-phase energy of u with the transformed-side energy.

    The one-phase energy of the transformed picture equals the quadratic
    energy of the linearization plus a constant (twice the measure of the
    footprint region), up to discretization error; returns both sides and the
    gap.  Intended for the flat / near-flat regression checks.
    """
    from .bernoulli import BernoulliProblem  # noqa: F401  (documented pairing)

    g = result.grid
    grad_w = gradient(result.w)
    dens = np.zeros(g.shape)
    if coefficients is None or coefficients.is_identity:
        for comp in grad_w.components:
            dens += comp * comp
    else:
        mg = coefficients.apply_M(np.stack(grad_w.components))
        for a in range(g.d):
            dens += grad_w.components[a] * mg[a]
    dens[~result.footprint] = 0.0
    w_energy = integrate(ScalarField(g, dens))

    indicator = np.where(result.footprint, 1.0, 0.0)
    constant = 2.0 * integrate(ScalarField(g, indicator))

    grad_u = gradient(u)
    u_dens = np.zeros(g.shape)
    for comp in grad_u.components:
        u_dens += comp * comp
    positive = u.values > 0
    u_dens += np.where(positive, 1.0, 0.0)
    u_dens[~g.in_mask] = 0.0
    u_energy = integrate(ScalarField(g, u_dens))

    return {
        "one_phase_energy": float(u_energy),
        "linearized_energy": float(w_energy),
        "constant": float(constant),
        "gap": float(abs(u_energy - (w_energy + constant))),
    }
