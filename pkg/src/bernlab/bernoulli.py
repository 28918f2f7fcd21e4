"""One-phase cavity energy: minimization and free-boundary extraction.

The functional is the Dirichlet energy plus the measure of the positivity
set, minimized over nonnegative fields that vanish outside the admissible
region above the obstacle graph and take a prescribed nonnegative datum on
the spherical boundary.  The measure term is smoothed to the ramp
beta_eps(u) = min(1, max(0, u/eps)) with eps at least two cells wide, which
makes the functional C^1 and keeps the slab-profile minimizer of the sharp
problem as eps -> 0.

The minimizer's free boundary is extracted per tangential column as the
height where the field turns positive (linear interpolation of the lowest
positive node); the contact columns are those where that height meets the
obstacle graph within two cells, and the singular columns the subset where
the one-sided gradient magnitude is within tolerance of 1.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .grid import HalfBallGrid, ScalarField
from .obstacle import AnalyticObstacle

__all__ = [
    "BernoulliProblem",
    "BernoulliSolution",
    "DescentParams",
    "minimize_J1",
    "extract_sets",
    "discrete_J1",
    "slab_oracle",
]


@dataclass
class BernoulliProblem:
    """Data of the one-phase minimization on a half-ball grid.

    `datum` gives the boundary values on the spherical ring, either as a
    callable of the coordinates or as a ScalarField; it must be nonnegative
    and vanish on ring nodes within `epsilon` of the obstacle graph.
    `epsilon` is the smoothing width of the volume term (>= 2h).
    """

    obstacle: AnalyticObstacle
    datum: Callable | ScalarField
    grid: HalfBallGrid
    epsilon: float | None = None

    def __post_init__(self) -> None:
        g = self.grid
        if self.epsilon is None:
            self.epsilon = 2.0 * g.h
        if self.epsilon < 2.0 * g.h - 1e-12:
            raise ValueError(
                f"smoothing width {self.epsilon:.3g} under-resolves the grid "
                f"(needs >= 2h = {2 * g.h:.3g})"
            )
        if isinstance(self.datum, ScalarField):
            vals = self.datum.values
        else:
            vals = np.asarray(self.datum(*g.coords), dtype=float)
        self.datum_values = np.where(g.in_mask, vals, 0.0)
        ring = self.dirichlet_mask
        if np.any(self.datum_values[ring] < -1e-12):
            raise ValueError("boundary datum must be nonnegative")
        phi = self.obstacle_height
        below = ring & (g.coords[-1] <= phi + 1e-12)
        if np.any(np.abs(self.datum_values[below]) > 1e-10):
            raise ValueError(
                "boundary datum must vanish on the ring at and below the "
                "obstacle graph"
            )
        band = ring & (g.coords[-1] <= phi + self.epsilon + 1e-12) & ~below
        if np.any(np.abs(self.datum_values[band]) > 2.0 * self.epsilon):
            raise ValueError(
                "boundary datum must be O(eps)-small on the ring within the "
                "smoothing band above the obstacle graph"
            )

    @property
    def obstacle_height(self) -> np.ndarray:
        """phi(x') broadcast to the node grid (graph over the first
        tangential coordinate; the polynomial backend is 2-D)."""
        return np.asarray(self.obstacle.value(self.grid.coords[0]), dtype=float)

    @property
    def dirichlet_mask(self) -> np.ndarray:
        """Nodes where the boundary datum is pinned: the spherical ring
        together with every corner node of a cell cut by the sphere.  Pinning
        the whole cut-cell band keeps the interior stencil translation
        invariant, so affine fields are reproduced exactly away from the
        boundary layer."""
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
    def admissible_mask(self) -> np.ndarray:
        """Nodes strictly above the obstacle graph (the region where the
        field may be positive)."""
        g = self.grid
        return g.in_mask & (g.coords[-1] > self.obstacle_height + 1e-12)

    @property
    def forced_zero_mask(self) -> np.ndarray:
        return self.grid.in_mask & ~self.admissible_mask

    @property
    def free_mask(self) -> np.ndarray:
        return self.admissible_mask & ~self.dirichlet_mask


@dataclass
class DescentParams:
    tol: float = 1e-6        # Clarke-stationarity sup-norm tolerance (scaled)
    max_iter: int = 60       # outer majorize-minimize rounds
    qp_sweeps: int = 80      # active-set sweeps per round
    verbose: bool = False


@dataclass
class BernoulliSolution:
    """Converged minimizer with its extracted boundary structure.

    `free_boundary` maps tangential node index (tuple) to the interpolated
    height where the field turns positive; columns with no positive node
    are absent.  `contact_columns` / `singular_columns` are sorted lists of
    tangential index tuples.
    """

    u: ScalarField
    free_boundary: dict
    contact_columns: list
    singular_columns: list
    energy: float
    converged: bool
    iterations: int
    residual: float
    problem: BernoulliProblem


class _Cells:
    """Cell-bilinear stencil data shared by energy, gradient, and matrix."""

    def __init__(self, grid: HalfBallGrid):
        d = grid.d
        h = grid.h
        self.grid = grid
        self.cell_shape = tuple(s - 1 for s in grid.shape)
        self.vol = grid.cell_weights * h**d
        self.corners = list(itertools.product((0, 1), repeat=d))
        self.slices = [
            tuple(slice(s, s + self.cell_shape[i]) for i, s in enumerate(c))
            for c in self.corners
        ]
        # cell-average gradient: corner differences along each axis,
        # averaged over the 2^{d-1} opposing corner pairs
        self.grad_coeff = np.array(
            [
                [(1.0 if c[ax] == 1 else -1.0) / (2 ** (d - 1) * h) for c in self.corners]
                for ax in range(d)
            ]
        )
        self.avg_coeff = 1.0 / 2**d

    def gradients(self, values: np.ndarray) -> list:
        out = []
        for ax in range(self.grid.d):
            acc = np.zeros(self.cell_shape)
            for ci, sl in enumerate(self.slices):
                acc += self.grad_coeff[ax, ci] * values[sl]
            out.append(acc)
        return out

    def average(self, values: np.ndarray) -> np.ndarray:
        acc = np.zeros(self.cell_shape)
        for sl in self.slices:
            acc += values[sl]
        return acc * self.avg_coeff

    def scatter(self, cellwise: np.ndarray, coeffs: Sequence[float]) -> np.ndarray:
        """Accumulate cellwise * coeff back to the corners of each cell."""
        out = np.zeros(self.grid.shape)
        for ci, sl in enumerate(self.slices):
            out[sl] += coeffs[ci] * cellwise
        return out


def _beta(u: np.ndarray, eps: float) -> np.ndarray:
    return np.clip(u / eps, 0.0, 1.0)


def _beta_prime(u: np.ndarray, eps: float) -> np.ndarray:
    return np.where((u > 0.0) & (u < eps), 1.0 / eps, 0.0)


def discrete_J1(problem: BernoulliProblem, values: np.ndarray) -> float:
    """Smoothed energy: sum over cells of |cell| (|grad u|^2 + avg beta(u))."""
    cells = _Cells(problem.grid)
    grads = cells.gradients(values)
    dens = sum(gr * gr for gr in grads) + cells.average(
        _beta(values, problem.epsilon)
    )
    return float(np.sum(cells.vol * dens))


def _dirichlet_gradient(cells: _Cells, values: np.ndarray) -> np.ndarray:
    """Gradient of the Dirichlet part, sum |cell| |grad u|^2, per node."""
    grads = cells.gradients(values)
    out = np.zeros(cells.grid.shape)
    for ax in range(cells.grid.d):
        out += cells.scatter(2.0 * cells.vol * grads[ax], cells.grad_coeff[ax])
    return out


def _node_volume_weights(cells: _Cells) -> np.ndarray:
    """d(volume term)/d(beta at node): avg_coeff * total adjacent cell volume."""
    out = np.zeros(cells.grid.shape)
    for sl in cells.slices:
        out[sl] += cells.vol
    return out * cells.avg_coeff


def _clarke_residual(
    problem: BernoulliProblem,
    cells: _Cells,
    values: np.ndarray,
    gD: np.ndarray | None = None,
    w_node: np.ndarray | None = None,
) -> float:
    """Sup-norm distance from Clarke stationarity, scaled by h^d.

    The ramp's derivative jumps at u = 0 and u = eps, so stationarity means
    0 lies between the two one-sided energy slopes at every free node (with
    only the upward slope at nodes pinned by u >= 0).
    """
    eps = problem.epsilon
    if gD is None:
        gD = _dirichlet_gradient(cells, values)
    if w_node is None:
        w_node = _node_volume_weights(cells)
    u = values
    bp_left = np.where((u > 0.0) & (u <= eps), 1.0 / eps, 0.0)
    bp_right = np.where((u >= 0.0) & (u < eps), 1.0 / eps, 0.0)
    s1 = gD + w_node * bp_left
    s2 = gD + w_node * bp_right
    lo = np.minimum(s1, s2)
    hi = np.maximum(s1, s2)
    viol = np.where(lo > 0.0, lo, np.where(hi < 0.0, -hi, 0.0))
    at_zero = u <= 0.0
    viol = np.where(at_zero, np.maximum(0.0, -s2), viol)
    viol[~problem.free_mask] = 0.0
    return float(np.max(viol)) / problem.grid.h**problem.grid.d


def _dirichlet_matrix(cells: _Cells) -> sp.csr_matrix:
    """Sparse K with u^T K u = sum |cell| |grad u|^2 over the node lattice."""
    g = cells.grid
    n_nodes = int(np.prod(g.shape))
    lin = np.arange(n_nodes).reshape(g.shape)
    rows, cols, vals = [], [], []
    for a, sla in enumerate(cells.slices):
        ia = lin[sla].ravel()
        for b, slb in enumerate(cells.slices):
            coeff = float(np.dot(cells.grad_coeff[:, a], cells.grad_coeff[:, b]))
            if coeff == 0.0:
                continue
            rows.append(ia)
            cols.append(lin[slb].ravel())
            vals.append(coeff * cells.vol.ravel())
    K = sp.coo_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
        shape=(n_nodes, n_nodes),
    )
    return K.tocsr()


def _qp_minimize(
    problem: BernoulliProblem,
    K: sp.csr_matrix,
    c: np.ndarray,
    start: np.ndarray,
    sweeps: int,
) -> np.ndarray:
    """Exact solve of min v^T K v + c . v under v >= 0 on free nodes, with
    the datum and forced zeros pinned, by primal-dual active-set sweeps."""
    g = problem.grid
    n_nodes = int(np.prod(g.shape))
    diag = K.diagonal()
    extra_zero = getattr(problem, "_extra_zero_mask", None)
    pinned = (
        problem.dirichlet_mask | problem.forced_zero_mask | ~g.in_mask
        | (extra_zero if extra_zero is not None else False)
    ).ravel() | (diag <= 1e-14)
    pin_vals = np.where(problem.dirichlet_mask, problem.datum_values, 0.0).ravel()
    pin_vals[~problem.dirichlet_mask.ravel()] = 0.0
    free = ~pinned
    cv = c.ravel()
    tol = 1e-12
    active = free & (start.ravel() <= 0.0)
    vals = pin_vals.copy()
    for _ in range(sweeps):
        solve_mask = free & ~active
        fixed_mask = ~solve_mask
        vals = np.where(fixed_mask, pin_vals, 0.0)
        if solve_mask.any():
            Kff = K[solve_mask][:, solve_mask]
            rhs = -K[solve_mask][:, fixed_mask] @ vals[fixed_mask] - 0.5 * cv[solve_mask]
            Kff = 0.5 * (Kff + Kff.T)
            vals[solve_mask] = spla.spsolve(Kff.tocsc(), rhs)
        grad = 2.0 * (K @ vals) + cv
        primal = solve_mask & (vals < -tol)
        dual = active & (grad < -tol)
        if not primal.any() and not dual.any():
            break
        active |= primal
        active &= ~dual
    vals = np.maximum(np.where(free, vals, pin_vals), 0.0)
    vals[pinned] = pin_vals[pinned]
    return vals.reshape(g.shape)


def minimize_J1(
    problem: BernoulliProblem, params: DescentParams | None = None
) -> BernoulliSolution:
    """Majorize-minimize descent on the smoothed one-phase energy.

    The energy is a convex Dirichlet quadratic plus the concave ramp of the
    volume term, so linearizing the ramp at the current iterate gives a
    convex upper bound whose exact minimizer (an active-set QP under
    u >= 0) never increases the true energy.  Iterates until the one-sided
    (Clarke) stationarity residual falls below tolerance; raises otherwise.
    """
    params = params or DescentParams()
    g = problem.grid
    cells = _Cells(g)
    eps = problem.epsilon

    K = _dirichlet_matrix(cells)
    w_node = _node_volume_weights(cells)

    # start from the clipped solution of the pure Dirichlet problem
    u = _qp_minimize(
        problem, K, np.zeros(g.shape), np.ones(g.shape), params.qp_sweeps
    )
    energy = discrete_J1(problem, u)
    res = _clarke_residual(problem, cells, u, w_node=w_node)
    it = 0
    for it in range(1, params.max_iter + 1):
        if res <= params.tol:
            break
        slope = np.where(u < eps, 1.0 / eps, 0.0)
        c = w_node * slope
        u_new = _qp_minimize(problem, K, c, u, params.qp_sweeps)
        e_new = discrete_J1(problem, u_new)
        res = _clarke_residual(problem, cells, u_new, w_node=w_node)
        moved = float(np.max(np.abs(u_new - u)))
        u, energy = u_new, e_new
        if params.verbose:
            print(f"round {it}: energy {energy:.8f} residual {res:.3e}")
        if moved < 1e-14:
            break

    converged = res <= params.tol
    if not converged:
        raise RuntimeError(
            f"one-phase minimization did not converge in {it} rounds; "
            f"last scaled residual {res:.3e} (tolerance {params.tol:.3e})"
        )

    sol = BernoulliSolution(
        u=ScalarField(g, u),
        free_boundary={},
        contact_columns=[],
        singular_columns=[],
        energy=energy,
        converged=converged,
        iterations=it,
        residual=res,
        problem=problem,
    )
    sol.free_boundary = _free_boundary_heights(sol)
    sol.contact_columns, sol.singular_columns = extract_sets(sol)
    return sol


def sharp_energy(
    problem: BernoulliProblem, values: np.ndarray, pos_tol: float = 1e-10
) -> float:
    """Dirichlet energy plus the exact (unsmoothed) positivity measure."""
    cells = _Cells(problem.grid)
    K = _dirichlet_matrix(cells)
    v = values.ravel()
    quad = float(v @ (K @ v))
    indicator = (values > pos_tol).astype(float)
    return quad + float(np.sum(cells.average(indicator) * cells.vol))


def sharpen(
    solution: BernoulliSolution, pos_tol: float = 1e-10, sweeps: int = 80
) -> BernoulliSolution:
    """Re-minimize the pure Dirichlet energy on the converged positivity set.

    The smoothed solve locates the free boundary, but its ramp layer biases
    values near the onset by a fraction of epsilon.  Freezing the zero set
    and minimizing the quadratic part alone makes the field discretely
    harmonic on the positivity region, removing that bias; a half-plane
    datum is then reproduced exactly on the interior cells.
    """
    problem = solution.problem
    g = problem.grid
    cells = _Cells(g)
    K = _dirichlet_matrix(cells)
    zero = g.in_mask & ~problem.dirichlet_mask & (solution.u.values <= pos_tol)
    problem._extra_zero_mask = zero
    try:
        u = _qp_minimize(
            problem, K, np.zeros(g.shape), solution.u.values, sweeps
        )
    finally:
        del problem._extra_zero_mask
    sharp = BernoulliSolution(
        u=ScalarField(g, u),
        free_boundary={},
        contact_columns=[],
        singular_columns=[],
        energy=sharp_energy(problem, u, pos_tol),
        converged=solution.converged,
        iterations=solution.iterations,
        residual=solution.residual,
        problem=problem,
    )
    sharp.free_boundary = _free_boundary_heights(sharp)
    sharp.contact_columns, sharp.singular_columns = extract_sets(sharp)
    return sharp


def _free_boundary_heights(solution: BernoulliSolution) -> dict:
    """Height of the positivity onset per tangential column, by linear
    interpolation below the lowest positive node."""
    g = solution.problem.grid
    u = solution.u.values
    phi = solution.problem.obstacle_height
    pos_tol = 1e-10
    heights: dict = {}
    tang_shape = g.shape[: g.d - 1]
    xd = g.axes[-1]
    for idx in np.ndindex(*tang_shape):
        col_u = u[idx]
        col_in = g.in_mask[idx]
        pos = np.flatnonzero((col_u > pos_tol) & col_in)
        if pos.size == 0:
            continue
        k = int(pos[0])
        if k == 0:
            f = float(xd[0])
        else:
            below = max(col_u[k - 1], 0.0)
            f = float(xd[k] - g.h * col_u[k] / max(col_u[k] - below, 1e-300))
        phi_col = float(np.asarray(phi[idx]).ravel()[0]) if np.ndim(phi) else float(phi)
        heights[idx] = max(f, phi_col)
    return heights


def extract_sets(
    solution: BernoulliSolution, tau: float = 0.05
) -> tuple:
    """Contact and singular column lists.

    A column is in contact when its free-boundary height meets the obstacle
    graph within 2h.  It is singular when additionally the one-sided
    gradient magnitude just above the free boundary is within tau of 1.
    """
    g = solution.problem.grid
    u = solution.u.values
    phi = solution.problem.obstacle_height
    heights = solution.free_boundary or _free_boundary_heights(solution)
    h = g.h
    contact, singular = [], []
    for idx, f in heights.items():
        phi_col = float(np.asarray(phi[idx]).ravel()[0]) if np.ndim(phi) else float(phi)
        if abs(f - phi_col) > 2.0 * h:
            continue
        contact.append(idx)
        col_u = u[idx]
        # gradient sampled just above the smoothing band, where the profile
        # has settled onto its outer slope; forward difference from the
        # positivity side
        eps = solution.problem.epsilon
        k = int(np.searchsorted(g.axes[-1], f + eps + 2.0 * h))
        k = min(max(k, 1), g.shape[-1] - 2)
        gv = (col_u[k + 1] - col_u[k]) / h
        gt_sq = 0.0
        for ax in range(g.d - 1):
            lo = tuple(
                (idx[a] - (1 if a == ax else 0)) for a in range(g.d - 1)
            )
            hi = tuple(
                (idx[a] + (1 if a == ax else 0)) for a in range(g.d - 1)
            )
            if min(lo) < 0 or any(hi[a] >= g.shape[a] for a in range(g.d - 1)):
                continue
            gt = (u[hi][k] - u[lo][k]) / (2.0 * h)
            gt_sq += gt * gt
        gmag = float(np.sqrt(gv * gv + gt_sq))
        if abs(gmag - 1.0) <= tau:
            singular.append(idx)
    return sorted(contact), sorted(singular)


def slab_oracle(scale: float) -> tuple:
    """Sharp one-phase minimizer over 1-D slab profiles on [0, 1].

    Among profiles vanishing on [0, a] and linear up to the value `scale`
    at height 1, the energy scale^2/(1-a) + (1-a) is minimized at
    a* = max(0, 1 - scale).  Returns (a*, minimal energy).
    """
    if scale < 0:
        raise ValueError("boundary scale must be nonnegative")
    if scale == 0.0:
        return 1.0, 0.0
    a_star = max(0.0, 1.0 - scale)
    energy = scale**2 / (1.0 - a_star) + (1.0 - a_star)
    return a_star, energy
