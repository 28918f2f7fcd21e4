"""Quasilinear thin-obstacle (unilateral boundary constraint) minimization.

Minimizes the discrete energy

    F(w) = sum_cells |cell| [ M grad w . grad w + (dQ/dx_d) w dw/dx_d ]
    E(w) = sum_cells |cell| [ sum_k g_k(x, w, grad w) w^{3-k} P_k(grad w) ]

subject to w >= 0 on the flat boundary, a Dirichlet trace on the spherical
boundary, and (when the cubic correction is switched on) the Lipschitz cap
|grad w| <= 1/2.

Cells carry corner-averaged coefficients and a bilinear-element gradient,
so the quadratic part is an exact sparse quadratic form: the linear
baseline is solved by a primal active-set method (exact complementarity),
the nonlinear problem by projected Barzilai-Borwein descent with a
monotone line search, warm-started from the linear solution.
"""

from __future__ import annotations

import itertools
from collections import deque
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .grid import HalfBallGrid, ScalarField, gradient
from .obstacle import CoefficientSet

__all__ = [
    "NonlinearityModel",
    "PolynomialInGradient",
    "ThinObstacleProblem",
    "ThinObstacleSolution",
    "SolverParams",
    "minimize_thin_obstacle",
    "vi_residual",
    "validate_assumptions",
    "discrete_energy",
    "discrete_gradient",
]


@dataclass(frozen=True)
class PolynomialInGradient:
    """k-homogeneous polynomial in p given as {exponent tuple: coefficient}."""

    degree: int
    table: dict

    def __post_init__(self):
        for exps in self.table:
            if sum(exps) != self.degree:
                raise ValueError(
                    f"term {exps} is not {self.degree}-homogeneous"
                )

    def value(self, p: Sequence[np.ndarray]) -> np.ndarray:
        out = 0.0
        for exps, c in self.table.items():
            term = c * np.ones_like(np.asarray(p[0], dtype=float))
            for pi, e in zip(p, exps):
                if e:
                    term = term * pi**e
            out = out + term
        return out

    def grad(self, p: Sequence[np.ndarray]) -> list[np.ndarray]:
        grads = []
        for axis in range(len(p)):
            g = np.zeros_like(np.asarray(p[0], dtype=float))
            for exps, c in self.table.items():
                e_ax = exps[axis]
                if e_ax == 0:
                    continue
                term = c * e_ax * np.ones_like(g)
                for i, (pi, e) in enumerate(zip(p, exps)):
                    ee = e - 1 if i == axis else e
                    if ee:
                        term = term * pi**ee
                g = g + term
            grads.append(g)
        return grads


@dataclass(frozen=True)
class _GenericTerm:
    """One summand g_k(x, y, p) * y^{3-k} * P_k(p) with constant-coefficient P_k.

    ``g`` maps (x_cells, y, p) -> (value, dvalue_dy, dvalue_dp list).
    """

    k: int
    poly: PolynomialInGradient
    g: Callable


class NonlinearityModel:
    """Cubic-and-lower correction terms of the hodograph energy.

    ``off()`` gives the linear baseline (E = 0).  ``default_cubic()``
    realizes the leading correction e(x, w, p) = -(M(x) p . p) p_d, the
    first term produced by expanding the vertical change of variables.
    Custom models supply ``_GenericTerm`` entries with constant-coefficient
    homogeneous polynomials.
    """

    def __init__(self, enabled: bool, kind: str, terms: tuple = ()):  # noqa: D401
        self.enabled = enabled
        self.kind = kind
        self.terms = terms

    @classmethod
    def off(cls) -> "NonlinearityModel":
        return cls(enabled=False, kind="off")

    @classmethod
    def default_cubic(cls) -> "NonlinearityModel":
        return cls(enabled=True, kind="default_cubic")

    @classmethod
    def from_terms(cls, terms: Sequence[_GenericTerm]) -> "NonlinearityModel":
        return cls(enabled=True, kind="generic", terms=tuple(terms))

    def polynomials(self) -> list[PolynomialInGradient]:
        if self.kind == "default_cubic":
            # Constant-M representative of (M p . p) p_d for homogeneity checks.
            return [
                PolynomialInGradient(3, {(2, 1): 1.0, (0, 3): 1.0})
            ]
        return [t.poly for t in self.terms]

    # -- cellwise density ------------------------------------------------------

    def density(self, Mc, wc, grads):
        """Returns (density, d/dw, [d/dp_i]) per cell; zeros when disabled."""
        zero = np.zeros_like(wc)
        if not self.enabled:
            return zero, zero, [zero.copy() for _ in grads]
        if self.kind == "default_cubic":
            d = len(grads)
            Mg = [sum(Mc[i][j] * grads[j] for j in range(d)) for i in range(d)]
            mgg = sum(Mg[i] * grads[i] for i in range(d))
            pd = grads[-1]
            val = -mgg * pd
            d_dp = [-2.0 * Mg[i] * pd for i in range(d)]
            d_dp[-1] = d_dp[-1] - mgg
            return val, zero, d_dp
        val = zero.copy()
        d_dw = zero.copy()
        d_dp = [zero.copy() for _ in grads]
        for term in self.terms:
            pw = wc ** (3 - term.k) if term.k < 3 else np.ones_like(wc)
            pv = term.poly.value(grads)
            pg = term.poly.grad(grads)
            gv, g_dy, g_dp = term.g(None, wc, grads)
            val += gv * pw * pv
            if term.k < 3:
                d_dw += gv * (3 - term.k) * wc ** (2 - term.k) * pv
            d_dw += g_dy * pw * pv
            for i in range(len(grads)):
                d_dp[i] += gv * pw * pg[i]
                if g_dp is not None:
                    d_dp[i] += g_dp[i] * pw * pv
        return val, d_dw, d_dp


@dataclass
class ThinObstacleProblem:
    """Thin-obstacle problem data on a half-ball grid."""

    coefficients: CoefficientSet
    nonlinearity: NonlinearityModel
    datum: Callable | ScalarField
    lipschitz_cap: float = 0.5

    def __post_init__(self):
        self.grid = self.coefficients.grid
        if isinstance(self.datum, ScalarField):
            self.datum_values = self.datum.values
        else:
            self.datum_values = np.asarray(
                self.datum(*self.grid.coords), dtype=float
            )
        if self.nonlinearity.enabled:
            lip = self._trace_lipschitz_estimate()
            if lip > self.lipschitz_cap + 1e-9:
                raise ValueError(
                    f"boundary datum Lipschitz estimate {lip:.3f} exceeds the "
                    f"cap {self.lipschitz_cap}; rescale the datum"
                )

    def _trace_lipschitz_estimate(self) -> float:
        g = self.grid
        ring = g.in_mask & (g.radius >= 1.0 - g.h)
        if not np.any(ring):
            return 0.0
        grad_est = 0.0
        v = self.datum_values
        for axis in range(g.d):
            dv = np.diff(v, axis=axis) / g.h
            rm = ring.take(range(0, g.shape[axis] - 1), axis=axis) & ring.take(
                range(1, g.shape[axis]), axis=axis
            )
            if np.any(rm):
                grad_est = max(grad_est, float(np.max(np.abs(dv[rm]))))
        return grad_est

    # node partitions ---------------------------------------------------------

    @property
    def dirichlet_mask(self) -> np.ndarray:
        """Spherical ring nodes plus every corner node of a cell cut by the
        sphere.  Pinning the whole cut-cell band keeps the interior stencil
        translation invariant, which removes the first-order pollution the
        partial boundary cells would otherwise inject."""
        g = self.grid
        mask = g.in_mask & (g.radius >= 1.0 - 1e-12)
        cw = g.cell_weights
        cut = (cw > 1e-14) & (cw < 1.0 - 1e-14)
        band = np.zeros(g.shape, dtype=bool)
        for corner in itertools.product((0, 1), repeat=g.d):
            sl = tuple(slice(c, c + s) for c, s in zip(corner, cut.shape))
            band[sl] |= cut
        return (mask | band) & g.in_mask

    @property
    def constrained_mask(self) -> np.ndarray:
        return self.grid.flat_node_mask

    @property
    def free_mask(self) -> np.ndarray:
        return self.grid.in_mask & ~self.dirichlet_mask


@dataclass
class SolverParams:
    tol: float = 1e-8          # projected-gradient sup-norm tolerance (scaled)
    max_iter: int = 2000
    method: str = "auto"       # auto | active_set | projected_bb
    active_set_max_sweeps: int = 60
    verbose: bool = False


@dataclass
class ThinObstacleSolution:
    w: ScalarField
    active_nodes: np.ndarray            # boolean mask of contact nodes
    energy_quadratic: float
    energy_correction: float
    kkt_residual: float
    converged: bool
    iterations: int
    problem: ThinObstacleProblem
    solver_tolerance: float

    @property
    def energy(self) -> float:
        return self.energy_quadratic + self.energy_correction

    def active_set_nodes(self, threshold: float | None = None) -> np.ndarray:
        """Flat nodes with w below the detachment threshold 10 h^{3/2}."""
        g = self.w.grid
        thr = threshold if threshold is not None else 10.0 * g.h**1.5
        return np.argwhere(self.problem.constrained_mask & (self.w.values <= thr))


# -- cell machinery --------------------------------------------------------------


class _CellContext:
    """Per-problem cached cell data: corner slices, gradient stencils,
    corner-averaged coefficients, and cell volumes."""

    def __init__(self, problem: ThinObstacleProblem):
        g = problem.grid
        self.grid = g
        d = g.d
        h = g.h
        self.cell_shape = tuple(s - 1 for s in g.shape)
        self.vol = g.cell_weights * h**d
        self.corner_shifts = list(np.ndindex(*(2,) * d))
        # gradient stencil: coefficient of each corner in each gradient comp.
        self.grad_coeff = np.zeros((d, len(self.corner_shifts)))
        navg = 2 ** (d - 1)
        for ci, shifts in enumerate(self.corner_shifts):
            for axis in range(d):
                sign = 1.0 if shifts[axis] == 1 else -1.0
                self.grad_coeff[axis, ci] = sign / (navg * h)
        self.avg_coeff = 1.0 / 2**d

        coeffs = problem.coefficients
        self.Mc = [
            [self._avg(coeffs.M[i, j]) for j in range(d)] for i in range(d)
        ]
        dQ = gradient(ScalarField(g, coeffs.Q))[d - 1]
        self.dQc = self._avg(dQ)
        self.has_q = bool(np.any(self.dQc))
        # uncut cells; cut cells near the sphere carry O(1) discrete-gradient
        # artifacts, so the Lipschitz cap is checked on full cells only
        self.full_cells = self.vol >= h**d * (1.0 - 1e-12)

    def _avg(self, nodal: np.ndarray) -> np.ndarray:
        out = np.zeros(self.cell_shape)
        for shifts in self.corner_shifts:
            sl = tuple(slice(s, s + self.cell_shape[i]) for i, s in enumerate(shifts))
            out += nodal[sl]
        return out / 2**self.grid.d

    def corner_slice(self, shifts) -> tuple:
        return tuple(slice(s, s + self.cell_shape[i]) for i, s in enumerate(shifts))

    def cell_gradients(self, values: np.ndarray) -> list[np.ndarray]:
        grads = [np.zeros(self.cell_shape) for _ in range(self.grid.d)]
        for ci, shifts in enumerate(self.corner_shifts):
            sl = self.corner_slice(shifts)
            v = values[sl]
            for axis in range(self.grid.d):
                c = self.grad_coeff[axis, ci]
                if c:
                    grads[axis] += c * v
        return grads

    def cell_average(self, values: np.ndarray) -> np.ndarray:
        out = np.zeros(self.cell_shape)
        for shifts in self.corner_shifts:
            out += values[self.corner_slice(shifts)]
        return out * self.avg_coeff


def _quadratic_density(ctx: _CellContext, grads, wc):
    d = ctx.grid.d
    Mg = [sum(ctx.Mc[i][j] * grads[j] for j in range(d)) for i in range(d)]
    dens = sum(Mg[i] * grads[i] for i in range(d))
    if ctx.has_q:
        dens = dens + ctx.dQc * wc * grads[-1]
    return dens, Mg


def discrete_energy(
    problem: ThinObstacleProblem,
    values: np.ndarray,
    ctx: _CellContext | None = None,
    split: bool = False,
):
    """Discrete F + E of a nodal value array (quadratic, correction) parts."""
    ctx = ctx or _CellContext(problem)
    grads = ctx.cell_gradients(values)
    wc = ctx.cell_average(values)
    quad, _ = _quadratic_density(ctx, grads, wc)
    e_quad = float(np.sum(quad * ctx.vol))
    corr, _, _ = problem.nonlinearity.density(ctx.Mc, wc, grads)
    e_corr = float(np.sum(corr * ctx.vol))
    if split:
        return e_quad, e_corr
    return e_quad + e_corr


def discrete_gradient(
    problem: ThinObstacleProblem,
    values: np.ndarray,
    ctx: _CellContext | None = None,
) -> np.ndarray:
    """Nodal gradient of the discrete energy F + E."""
    ctx = ctx or _CellContext(problem)
    d = problem.grid.d
    grads = ctx.cell_gradients(values)
    wc = ctx.cell_average(values)
    _, Mg = _quadratic_density(ctx, grads, wc)
    # quadratic partials
    df_dp = [2.0 * Mg[i] for i in range(d)]
    df_dw = np.zeros(ctx.cell_shape)
    if ctx.has_q:
        df_dp[-1] = df_dp[-1] + ctx.dQc * wc
        df_dw = df_dw + ctx.dQc * grads[-1]
    _, de_dw, de_dp = problem.nonlinearity.density(ctx.Mc, wc, grads)
    df_dw = df_dw + de_dw
    df_dp = [df_dp[i] + de_dp[i] for i in range(d)]

    out = np.zeros(problem.grid.shape)
    for ci, shifts in enumerate(ctx.corner_shifts):
        sl = ctx.corner_slice(shifts)
        contrib = df_dw * ctx.avg_coeff
        for axis in range(d):
            c = ctx.grad_coeff[axis, ci]
            if c:
                contrib = contrib + df_dp[axis] * c
        out[sl] += contrib * ctx.vol
    return out


def _assemble_quadratic_matrix(ctx: _CellContext) -> sp.csr_matrix:
    """Sparse symmetric matrix K with F_quadratic(w) = w^T K w."""
    g = ctx.grid
    d = g.d
    n_nodes = int(np.prod(g.shape))
    strides = np.array(
        [int(np.prod(g.shape[i + 1 :])) for i in range(d)], dtype=np.int64
    )
    cell_index = np.indices(ctx.cell_shape).reshape(d, -1)
    corner_flat = []
    for shifts in ctx.corner_shifts:
        idx = ((cell_index + np.array(shifts)[:, None]) * strides[:, None]).sum(axis=0)
        corner_flat.append(idx)
    vol = ctx.vol.ravel()
    Mc_flat = [[ctx.Mc[i][j].ravel() for j in range(d)] for i in range(d)]
    dq_flat = ctx.dQc.ravel()

    rows, cols, vals = [], [], []
    nc = len(ctx.corner_shifts)
    for a in range(nc):
        for b in range(nc):
            coeff = np.zeros(len(vol))
            for i in range(d):
                for j in range(d):
                    cij = ctx.grad_coeff[i, a] * ctx.grad_coeff[j, b]
                    if cij:
                        coeff += Mc_flat[i][j] * cij
            if ctx.has_q:
                # symmetrized (avg_a * grad_d_b + grad_d_a * avg_b)/2 * dQ
                coeff += (
                    0.5
                    * dq_flat
                    * (
                        ctx.avg_coeff * ctx.grad_coeff[d - 1, b]
                        + ctx.grad_coeff[d - 1, a] * ctx.avg_coeff
                    )
                )
            v = coeff * vol
            keep = v != 0.0
            rows.append(corner_flat[a][keep])
            cols.append(corner_flat[b][keep])
            vals.append(v[keep])
    K = sp.coo_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
        shape=(n_nodes, n_nodes),
    ).tocsr()
    return K


def _active_set_solve(
    problem: ThinObstacleProblem,
    ctx: _CellContext,
    params: SolverParams,
) -> tuple[np.ndarray, np.ndarray, int, float, bool]:
    """Primal active-set solve of the quadratic problem.  Returns
    (values, active mask, sweeps, kkt residual, converged)."""
    g = problem.grid
    K = _assemble_quadratic_matrix(ctx)
    n_nodes = K.shape[0]
    dirichlet = problem.dirichlet_mask.ravel()
    constrained = problem.constrained_mask.ravel()
    inside = problem.free_mask.ravel()

    values = np.zeros(n_nodes)
    values[dirichlet] = problem.datum_values.ravel()[dirichlet]
    # Nodes not in any cell: pin to zero.
    involved = inside | dirichlet
    active = np.zeros(n_nodes, dtype=bool)

    converged = False
    sweeps = 0
    for sweeps in range(1, params.active_set_max_sweeps + 1):
        fixed = dirichlet | active | ~involved
        free = involved & ~fixed
        idx_free = np.flatnonzero(free)
        if len(idx_free) == 0:
            break
        K_ff = K[idx_free][:, idx_free]
        fixed_vals = np.zeros(n_nodes)
        fixed_vals[dirichlet] = problem.datum_values.ravel()[dirichlet]
        rhs = -(K @ fixed_vals)[idx_free]
        sol = spla.spsolve((K_ff + K_ff.T) * 0.5, rhs)
        values = fixed_vals.copy()
        values[idx_free] = sol
        grad = 2.0 * (K @ values)
        scale = max(1.0, float(np.max(np.abs(values))))
        # primal violations: constrained free nodes gone negative
        neg = constrained & free & (values < -1e-12 * scale)
        # dual violations: active nodes whose multiplier has the wrong sign
        rel = active & (grad < -1e-10 * max(1.0, np.max(np.abs(grad))))
        if not neg.any() and not rel.any():
            converged = True
            break
        active = (active | neg) & ~rel
    values = values.reshape(g.shape)
    values[problem.constrained_mask] = np.maximum(
        values[problem.constrained_mask], 0.0
    )
    grad_full = discrete_gradient(problem, values, ctx)
    kkt = _projected_gradient(problem, values, grad_full)
    return values, active.reshape(g.shape), sweeps, float(np.max(np.abs(kkt))), converged


def _projected_gradient(
    problem: ThinObstacleProblem, values: np.ndarray, grad: np.ndarray
) -> np.ndarray:
    """Gradient with Dirichlet components removed and the one-sided
    constraint applied at contact nodes."""
    pg = grad.copy()
    pg[~problem.free_mask] = 0.0
    contact = problem.constrained_mask & (values <= 0.0)
    pg[contact & (pg > 0.0)] = 0.0
    return pg


def _max_cell_gradient(ctx: _CellContext, values: np.ndarray) -> float:
    grads = ctx.cell_gradients(values)
    mag = np.sqrt(sum(gr * gr for gr in grads))
    return float(np.max(mag[ctx.full_cells]))


def _projected_bb(
    problem: ThinObstacleProblem,
    ctx: _CellContext,
    values0: np.ndarray,
    params: SolverParams,
) -> tuple[np.ndarray, int, float, bool]:
    """Projected Barzilai-Borwein descent with monotone line search and the
    Lipschitz cap (enforced only when the correction energy is on)."""
    g = problem.grid
    cap = problem.lipschitz_cap if problem.nonlinearity.enabled else np.inf
    values = values0.copy()

    def project(v: np.ndarray) -> np.ndarray:
        v = v.copy()
        cm = problem.constrained_mask
        v[cm] = np.maximum(v[cm], 0.0)
        return v

    values = project(values)
    energy = discrete_energy(problem, values, ctx)
    grad = discrete_gradient(problem, values, ctx)
    scale = max(1.0, float(np.max(np.abs(problem.datum_values[problem.dirichlet_mask]))))
    step = 0.1 * g.h**g.d  # conservative first step against the stiff quadratic part
    # nonmonotone acceptance window: pure monotone line search cripples the
    # BB step near the solution, where its occasional energy increases are
    # exactly what give the method its fast convergence
    recent = deque([energy], maxlen=10)
    prev_values = None
    prev_grad = None
    it = 0
    converged = False
    for it in range(1, params.max_iter + 1):
        pg = _projected_gradient(problem, values, grad)
        res = float(np.max(np.abs(pg))) / (g.h**g.d)
        if res <= params.tol * scale:
            converged = True
            break
        if prev_values is not None:
            s = (values - prev_values).ravel()
            y = (grad - prev_grad).ravel()
            sy = float(s @ y)
            if it % 2 == 0:
                step = float(s @ s) / sy if sy > 0 else step
            else:
                yy = float(y @ y)
                step = sy / yy if (sy > 0 and yy > 0) else step
            step = float(np.clip(step, 1e-6 * g.h**g.d, 1e3))
        accepted = False
        trial_step = step
        bound = max(recent)
        for _ in range(40):
            trial = project(values - trial_step * pg)
            trial[~problem.free_mask] = values[~problem.free_mask]
            e_trial = discrete_energy(problem, trial, ctx)
            if e_trial <= bound + 1e-14 * abs(bound) and (
                not np.isfinite(cap) or _max_cell_gradient(ctx, trial) <= cap
            ):
                accepted = True
                break
            trial_step *= 0.5
        if not accepted:
            break
        prev_values, prev_grad = values, grad
        values, energy = trial, e_trial
        recent.append(energy)
        grad = discrete_gradient(problem, values, ctx)
    return values, it, res, converged


def minimize_thin_obstacle(
    problem: ThinObstacleProblem, params: SolverParams | None = None
) -> ThinObstacleSolution:
    """Solve the constrained minimization.  The linear baseline uses the
    exact active-set method; with the correction energy on, projected BB
    descent refines the linear warm start."""
    params = params or SolverParams()
    ctx = _CellContext(problem)
    g = problem.grid

    method = params.method
    if method == "auto":
        method = "active_set" if not problem.nonlinearity.enabled else "projected_bb"

    if method == "active_set":
        if problem.nonlinearity.enabled:
            raise ValueError("active-set path requires the linear baseline")
        values, active, iters, kkt, ok = _active_set_solve(problem, ctx, params)
        if not ok:
            raise RuntimeError(
                f"active-set iteration did not settle after {iters} sweeps "
                f"(residual {kkt:.3e})"
            )
    else:
        lin_problem = ThinObstacleProblem(
            coefficients=problem.coefficients,
            nonlinearity=NonlinearityModel.off(),
            datum=ScalarField(g, problem.datum_values),
            lipschitz_cap=problem.lipschitz_cap,
        )
        warm, _, _, _, _ = _active_set_solve(lin_problem, _CellContext(lin_problem), params)
        values, iters, kkt, ok = _projected_bb(problem, ctx, warm, params)
        if not ok and kkt > 100 * params.tol:
            raise RuntimeError(
                f"projected descent stalled at residual {kkt:.3e} "
                f"after {iters} iterations"
            )
        active = problem.constrained_mask & (values <= 0.0)

    e_quad, e_corr = discrete_energy(problem, values, ctx, split=True)
    return ThinObstacleSolution(
        w=ScalarField(g, values),
        active_nodes=active,
        energy_quadratic=e_quad,
        energy_correction=e_corr,
        kkt_residual=kkt,
        converged=True,
        iterations=iters,
        problem=problem,
        solver_tolerance=params.tol,
    )


def vi_residual(
    solution: ThinObstacleSolution,
    problem: ThinObstacleProblem | None = None,
) -> float:
    """Minimum first variation over a basis of admissible directions.

    Directions are the coordinate perturbations: both signs at free nodes
    (and at contact nodes where w > 0), the upward sign only at contact
    nodes with w = 0.  A minimizer returns a value >= -tol; a negative
    value certifies a descent direction.
    """
    problem = problem or solution.problem
    g = problem.grid
    grad = discrete_gradient(problem, solution.w.values)
    vol_scale = g.h**g.d
    free = problem.free_mask
    contact = problem.constrained_mask & (solution.w.values <= 0.0)
    two_sided = free & ~contact
    worst = 0.0
    if np.any(two_sided):
        worst = min(worst, float(-np.max(np.abs(grad[two_sided]))) / vol_scale)
    if np.any(contact):
        worst = min(worst, float(np.min(grad[contact])) / vol_scale)
    return worst


def validate_assumptions(
    w: ScalarField, delta: float = 0.1, radii: Sequence[float] = tuple(np.arange(1, 10) / 10)
) -> dict:
    """Report the branching-point normalization (w and grad w vanish at the
    origin), surrogate C^1 norms, and per-radius non-degeneracy of the
    height and energy integrals."""
    from .grid import ball_integrate

    g = w.grid
    gw = gradient(w)
    origin = g.origin_index
    w0 = float(w.values[origin])
    gw0 = [float(gw[i][origin]) for i in range(g.d)]
    sup_w = float(np.max(np.abs(w.values[g.in_mask])))
    sup_gw = float(np.max(gw.magnitude().values[g.in_mask]))
    h_half = np.sqrt(g.h)
    report = {
        "w_origin": w0,
        "grad_w_origin": gw0,
        "c1_surrogate_norm": sup_w + sup_gw,
        "branching_normalization": bool(
            abs(w0) <= 5 * g.h and max(abs(v) for v in gw0) <= 5 * h_half
        ),
        "c1_within_delta": bool(sup_w + sup_gw <= delta),
        "radii": list(map(float, radii)),
    }
    w2 = ScalarField(g, np.where(g.in_mask, w.values**2, 0.0))
    gw2 = ScalarField(g, np.where(g.in_mask, gw.magnitude().values ** 2, 0.0))
    height = [ball_integrate(w2, (0.0,) * g.d, r) for r in radii]
    energy = [ball_integrate(gw2, (0.0,) * g.d, r) for r in radii]
    report["height_integrals"] = height
    report["energy_integrals"] = energy
    floor = 1e-14
    report["nondegenerate"] = bool(
        all(v > floor for v in height) and all(v > floor for v in energy)
    )
    return report
