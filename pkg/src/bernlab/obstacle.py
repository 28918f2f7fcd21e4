"""Obstacle extension, gradient-flow coordinates, and coefficient fields.

Given a polynomial obstacle graph ``x_d = phi(x')`` tangent to the flat
hyperplane at the origin, this module builds

* a harmonic polynomial ``m`` with Cauchy data ``m = 0`` and
  ``nu . grad m = -1`` on the graph, by a degree-by-degree power-series
  match (2-D backend);
* the gradient-flow coordinates ``Phi(x', t)`` solving
  ``d/dt Phi = grad m / |grad m|^2`` from the graph, whose level sets
  flatten ``m`` (``m(Phi(x', t)) = t``), integrated by classical RK4
  together with the variational equation for the tangential Jacobian;
* the coefficient fields M, S, Q, mu, F used by the hodograph energy and
  the frequency analytics, evaluated on a half-ball grid after rescaling
  the flow patch to the unit half-ball.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from numpy.polynomial import polynomial as P

from .grid import HalfBallGrid, ScalarField

__all__ = [
    "AnalyticObstacle",
    "HarmonicExtension",
    "FlowMap",
    "CoefficientSet",
    "FlowValidityError",
    "ck_extend",
    "flow_map",
    "check_flow_invariants",
    "assemble_coefficients",
]


class FlowValidityError(RuntimeError):
    pass


@dataclass(frozen=True)
class AnalyticObstacle:
    """Polynomial obstacle graph phi with phi(0) = 0 and phi'(0) = 0.

    ``coeffs[k]`` is the coefficient of x1^k (2-D backend).
    """

    coeffs: tuple[float, ...]
    d: int = 2

    def __post_init__(self):
        c = np.asarray(self.coeffs, dtype=float)
        object.__setattr__(self, "coeffs", tuple(c))
        if len(c) > 0 and c[0] != 0.0:
            raise ValueError("obstacle must vanish at the origin: phi(0) = 0")
        if len(c) > 1 and c[1] != 0.0:
            raise ValueError("obstacle graph must be tangent at the origin: phi'(0) = 0")

    @classmethod
    def flat(cls, d: int = 2) -> "AnalyticObstacle":
        return cls(coeffs=(0.0,), d=d)

    @property
    def is_flat(self) -> bool:
        return all(c == 0.0 for c in self.coeffs)

    def value(self, x1: np.ndarray | float) -> np.ndarray | float:
        return P.polyval(x1, np.asarray(self.coeffs)) if self.coeffs else 0.0 * x1

    def slope(self, x1: np.ndarray | float) -> np.ndarray | float:
        der = P.polyder(np.asarray(self.coeffs)) if len(self.coeffs) > 1 else np.array([0.0])
        return P.polyval(x1, der)


def _truncate(c: np.ndarray, deg: int) -> np.ndarray:
    c = np.atleast_1d(np.asarray(c, dtype=float))
    if len(c) > deg + 1:
        c = c[: deg + 1]
    return c


def _sqrt_series(c: np.ndarray, deg: int) -> np.ndarray:
    """Power series of sqrt(q(x)) for q with q(0) = 1, to the given degree."""
    c = _truncate(c, deg)
    if abs(c[0] - 1.0) > 1e-14:
        raise ValueError("series must have constant term 1")
    t = np.zeros(deg + 1)
    t[0] = 1.0
    for k in range(1, deg + 1):
        # coefficient of x^k in t*t equals c[k]
        conv = sum(t[i] * t[k - i] for i in range(1, k))
        ck = c[k] if k < len(c) else 0.0
        t[k] = (ck - conv) / (2.0 * t[0])
    return t


@dataclass
class HarmonicExtension:
    """Truncated Taylor table a[j, k] of a harmonic polynomial
    m(x1, x2) = sum a[j, k] x1^j x2^k with total degree <= order."""

    coeffs: np.ndarray  # shape (order+1, order+1), a[j, k]
    order: int
    obstacle: AnalyticObstacle

    # -- polynomial evaluation -------------------------------------------------

    def value(self, x1, x2):
        return P.polyval2d(x1, x2, self.coeffs)

    def grad(self, x1, x2):
        cj = P.polyder(self.coeffs, axis=0)
        ck = P.polyder(self.coeffs, axis=1)
        return P.polyval2d(x1, x2, cj), P.polyval2d(x1, x2, ck)

    def hessian(self, x1, x2):
        c11 = P.polyder(P.polyder(self.coeffs, axis=0), axis=0)
        c12 = P.polyder(P.polyder(self.coeffs, axis=0), axis=1)
        c22 = P.polyder(P.polyder(self.coeffs, axis=1), axis=1)
        h11 = P.polyval2d(x1, x2, c11)
        h12 = P.polyval2d(x1, x2, c12)
        h22 = P.polyval2d(x1, x2, c22)
        return h11, h12, h22

    def laplacian_coeffs(self) -> np.ndarray:
        c11 = P.polyder(P.polyder(self.coeffs, axis=0), axis=0)
        c22 = P.polyder(P.polyder(self.coeffs, axis=1), axis=1)
        m = max(c11.shape[0], c22.shape[0])
        k = max(c11.shape[1], c22.shape[1])
        out = np.zeros((m, k))
        out[: c11.shape[0], : c11.shape[1]] += c11
        out[: c22.shape[0], : c22.shape[1]] += c22
        return out

    # -- diagnostics -------------------------------------------------------------

    def boundary_residuals(self, x1: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Residuals of the two Cauchy conditions along the obstacle graph:
        (m on graph, nu . grad m + 1)."""
        phi = self.obstacle.value(x1)
        dphi = self.obstacle.slope(x1)
        m_on = self.value(x1, phi)
        g1, g2 = self.grad(x1, phi)
        norm = np.sqrt(1.0 + dphi * dphi)
        normal_deriv = (dphi * g1 - g2) / norm
        return np.asarray(m_on), np.asarray(normal_deriv + 1.0)

    def validity_radius(self, tol: float = 1e-9, grad_floor: float = 0.5) -> float:
        """Largest sampled radius rho such that on B'_rho x [0, rho] both
        boundary residuals stay below tol and |grad m| >= grad_floor."""
        radii = np.linspace(0.02, 1.0, 50)
        best = 0.0
        for rho in radii:
            x1 = np.linspace(-rho, rho, 41)
            r0, r1 = self.boundary_residuals(x1)
            if np.max(np.abs(r0)) > tol or np.max(np.abs(r1)) > tol:
                break
            xx, yy = np.meshgrid(x1, np.linspace(0.0, rho, 21), indexing="ij")
            g1, g2 = self.grad(xx, yy)
            if np.min(np.hypot(g1, g2)) < grad_floor:
                break
            best = rho
        return best

    def to_json_table(self) -> dict[str, float]:
        table = {}
        for j in range(self.coeffs.shape[0]):
            for k in range(self.coeffs.shape[1]):
                if self.coeffs[j, k] != 0.0:
                    table[f"{j},{k}"] = float(self.coeffs[j, k])
        return table


def _harmonic_basis_table(seed_j: int, seed_k: int, order: int) -> np.ndarray:
    """Harmonic polynomial with unit coefficient at x1^j x2^k (k in {0, 1}),
    completed by the harmonicity recursion
    a[j, k+2] = -((j+2)(j+1) / ((k+2)(k+1))) a[j+2, k]."""
    a = np.zeros((order + 1, order + 1))
    a[seed_j, seed_k] = 1.0
    for k in range(0, order - 1):
        for j in range(0, order - 1 - k):
            if a[j + 2, k] != 0.0:
                a[j, k + 2] += -((j + 2) * (j + 1)) / ((k + 2) * (k + 1)) * a[j + 2, k]
    return a


def ck_extend(obstacle: AnalyticObstacle, order: int = 8) -> HarmonicExtension:
    """Harmonic extension of the obstacle by power-series Cauchy matching.

    The extension is the unique harmonic polynomial of total degree <= order
    whose restriction to the graph vanishes to the matched order and whose
    inward normal derivative equals -1 to the matched order.
    """
    if obstacle.d != 2:
        raise ValueError("power-series backend is 2-D only")
    p = int(order)
    if p < 1:
        raise ValueError("order must be >= 1")

    if obstacle.is_flat:
        a = np.zeros((p + 1, p + 1))
        a[0, 1] = 1.0
        return HarmonicExtension(coeffs=a, order=p, obstacle=obstacle)

    phi = _truncate(np.asarray(obstacle.coeffs), p)
    dphi = P.polyder(phi) if len(phi) > 1 else np.array([0.0])
    one_plus_dphi2 = _one(p - 1)
    dphi2 = _truncate(P.polymul(dphi, dphi), p - 1)
    one_plus_dphi2[: len(dphi2)] += dphi2
    sqrt_term = _sqrt_series(one_plus_dphi2, p - 1)

    # Unknowns: seeds a[j,0] (j = 0..p) and a[j,1] (j = 0..p-1).
    seeds = [(j, 0) for j in range(p + 1)] + [(j, 1) for j in range(p)]
    n_unknown = len(seeds)

    # Powers of phi up to needed order, truncated at degree p.
    phi_pows = [np.array([1.0])]
    for _ in range(p):
        phi_pows.append(_truncate(P.polymul(phi_pows[-1], phi), p))

    def graph_series(table: np.ndarray, deg: int) -> np.ndarray:
        """1-D series in x1 of a 2-var polynomial restricted to x2 = phi(x1)."""
        out = np.zeros(deg + 1)
        for k in range(table.shape[1]):
            col = table[:, k]
            if not np.any(col):
                continue
            term = _truncate(P.polymul(col, phi_pows[min(k, p)]), deg)
            out[: len(term)] += term
        return out

    n_eq = (p + 1) + p  # value condition to degree p, normal condition to p-1
    A_mat = np.zeros((n_eq, n_unknown))
    rhs = np.zeros(n_eq)
    rhs[p + 1 : p + 1 + p] = -_truncate(sqrt_term, p - 1)[: p]

    basis_tables = []
    for col, (j, k) in enumerate(seeds):
        table = _harmonic_basis_table(j, k, p)
        basis_tables.append(table)
        # Condition 1: m(x1, phi(x1)) = 0 through degree p.
        A_mat[: p + 1, col] = graph_series(table, p)
        # Condition 2: phi' d1m - d2m restricted to graph, through degree p-1.
        d1 = P.polyder(table, axis=0)
        d2 = P.polyder(table, axis=1)
        s1 = graph_series(d1, p - 1)
        s2 = graph_series(d2, p - 1)
        mixed = _truncate(P.polymul(dphi, s1), p - 1)
        cond2 = np.zeros(p)
        cond2[: len(mixed)] += mixed[: p]
        cond2[: len(s2)] -= s2[: p]
        A_mat[p + 1 :, col] = cond2[: p]

    sol, *_ = np.linalg.lstsq(A_mat, rhs, rcond=None)
    residual = np.max(np.abs(A_mat @ sol - rhs))
    if residual > 1e-9:
        raise RuntimeError(
            f"Cauchy matching system did not close (residual {residual:.2e}); "
            "the obstacle expansion is ill-conditioned at this order"
        )
    coeffs = np.zeros((p + 1, p + 1))
    for c, table in zip(sol, basis_tables):
        coeffs += c * table
    coeffs[np.abs(coeffs) < 1e-15] = 0.0
    ext = HarmonicExtension(coeffs=coeffs, order=p, obstacle=obstacle)
    if np.max(np.abs(ext.laplacian_coeffs())) > 1e-10:
        raise RuntimeError("extension is not harmonic")  # pragma: no cover
    return ext


# -- gradient-flow coordinates -----------------------------------------------


@dataclass
class FlowMap:
    """Sampled gradient-flow coordinates.

    ``phi_samples[i, j]`` = Phi(x1_grid[i], t_grid[j]) in R^2;
    ``tangent[i, j]`` = d Phi / d x1 (variational equation);
    ``velocity[i, j]`` = d Phi / dt = grad m / |grad m|^2 at Phi.
    The Jacobian D Phi has columns (tangent, velocity).
    """

    x1_grid: np.ndarray
    t_grid: np.ndarray
    phi_samples: np.ndarray  # (nx, nt, 2)
    tangent: np.ndarray      # (nx, nt, 2)
    velocity: np.ndarray     # (nx, nt, 2)
    dt: float
    extension: HarmonicExtension

    @property
    def jacobian_det(self) -> np.ndarray:
        tx, ty = self.tangent[..., 0], self.tangent[..., 1]
        vx, vy = self.velocity[..., 0], self.velocity[..., 1]
        return tx * vy - ty * vx

    @property
    def extent(self) -> float:
        return float(min(np.max(np.abs(self.x1_grid)), self.t_grid[-1]))


def _flow_rhs(ext: HarmonicExtension, pts: np.ndarray, tangents: np.ndarray):
    """Velocity V = grad m/|grad m|^2 and the variational derivative DV.P."""
    x1, x2 = pts[:, 0], pts[:, 1]
    g1, g2 = ext.grad(x1, x2)
    gnorm2 = g1 * g1 + g2 * g2
    if np.min(gnorm2) < 0.25:
        raise FlowValidityError("flow left validity region: |grad m| < 1/2")
    v = np.column_stack([g1, g2]) / gnorm2[:, None]
    h11, h12, h22 = ext.hessian(x1, x2)
    # DV = D^2m/|g|^2 - 2 g (D^2m g)^T / |g|^4
    p1, p2 = tangents[:, 0], tangents[:, 1]
    hp1 = h11 * p1 + h12 * p2
    hp2 = h12 * p1 + h22 * p2
    ghp = g1 * hp1 + g2 * hp2
    dv1 = hp1 / gnorm2 - 2.0 * g1 * ghp / gnorm2**2
    dv2 = hp2 / gnorm2 - 2.0 * g2 * ghp / gnorm2**2
    return v, np.column_stack([dv1, dv2])


def flow_map(
    ext: HarmonicExtension,
    x1_grid: Sequence[float],
    dt: float = 1e-3,
    t_max: float | None = None,
    n_record: int | None = None,
) -> FlowMap:
    """Integrate the gradient flow of m from the obstacle graph with RK4,
    carrying the tangential Jacobian column by the variational equation."""
    if dt > 1e-2:
        raise ValueError("dt must be <= 1e-2")
    x1_grid = np.asarray(x1_grid, dtype=float)
    if t_max is None:
        t_max = float(np.max(np.abs(x1_grid)))
    n_record = n_record or max(2, int(round(t_max / max(dt, 1e-6) / 8)) + 1)
    t_grid = np.linspace(0.0, t_max, n_record)

    phi0 = np.asarray(ext.obstacle.value(x1_grid))
    dphi0 = np.asarray(ext.obstacle.slope(x1_grid))
    pts = np.column_stack([x1_grid, np.broadcast_to(phi0, x1_grid.shape)])
    tan = np.column_stack([np.ones_like(x1_grid), np.broadcast_to(dphi0, x1_grid.shape)])

    nx = len(x1_grid)
    phi_s = np.zeros((nx, n_record, 2))
    tan_s = np.zeros((nx, n_record, 2))
    vel_s = np.zeros((nx, n_record, 2))

    def rk4_step(pts, tan, h):
        v1, d1 = _flow_rhs(ext, pts, tan)
        v2, d2 = _flow_rhs(ext, pts + 0.5 * h * v1, tan + 0.5 * h * d1)
        v3, d3 = _flow_rhs(ext, pts + 0.5 * h * v2, tan + 0.5 * h * d2)
        v4, d4 = _flow_rhs(ext, pts + h * v3, tan + h * d3)
        return (
            pts + (h / 6.0) * (v1 + 2 * v2 + 2 * v3 + v4),
            tan + (h / 6.0) * (d1 + 2 * d2 + 2 * d3 + d4),
        )

    t = 0.0
    for j, t_rec in enumerate(t_grid):
        # integrate exactly up to the next record time
        while t < t_rec - 1e-15:
            step = min(dt, t_rec - t)
            pts, tan = rk4_step(pts, tan, step)
            t += step
        v, _ = _flow_rhs(ext, pts, tan)
        phi_s[:, j] = pts
        tan_s[:, j] = tan
        vel_s[:, j] = v

    flow = FlowMap(
        x1_grid=x1_grid, t_grid=t_grid, phi_samples=phi_s,
        tangent=tan_s, velocity=vel_s, dt=dt, extension=ext,
    )
    if np.min(flow.jacobian_det) <= 0:
        raise FlowValidityError("Jacobian determinant lost positivity")
    return flow


def check_flow_invariants(flow: FlowMap, ext: HarmonicExtension | None = None) -> dict[str, float]:
    """Max-norm residuals of the four flow identities over all samples:

    level         |m(Phi(x', t)) - t|
    metric0       |dPhi_i . dPhi_j - (delta_ij + phi_i phi_j)| at t = 0
    orthogonality |dPhi_x1 . dPhi_t|
    conservation  ||grad m|^2(Phi) det DPhi - (value at t = 0)|
    """
    ext = ext or flow.extension
    x1, x2 = flow.phi_samples[..., 0], flow.phi_samples[..., 1]
    m_vals = ext.value(x1, x2)
    level = np.max(np.abs(m_vals - flow.t_grid[None, :]))

    t0_tan = flow.tangent[:, 0, :]
    dphi0 = np.asarray(ext.obstacle.slope(flow.x1_grid))
    metric_expected = 1.0 + dphi0 * dphi0
    metric0 = np.max(np.abs(np.sum(t0_tan * t0_tan, axis=1) - metric_expected))

    ortho = np.max(np.abs(np.sum(flow.tangent * flow.velocity, axis=-1)))

    g1, g2 = ext.grad(x1, x2)
    gnorm2 = g1 * g1 + g2 * g2
    conserved = gnorm2 * flow.jacobian_det
    conservation = np.max(np.abs(conserved - conserved[:, :1]))

    return {
        "level": float(level),
        "metric0": float(metric0),
        "orthogonality": float(ortho),
        "conservation": float(conservation),
    }


# -- coefficient fields --------------------------------------------------------


@dataclass
class CoefficientSet:
    """Coefficient fields on a half-ball grid.

    ``M[i][j]`` are nodal arrays of the symmetric elliptic matrix (block
    diagonal: tangential inverse-metric block scaled by det DPhi, vertical
    entry det DPhi |grad m|^2); ``S`` the tangential inverse metric; ``Q``
    the compressibility defect; ``mu = (x/|x|) . M x/|x|``; ``F = M x / mu``.
    """

    grid: HalfBallGrid
    M: np.ndarray       # (d, d) + grid.shape
    S: np.ndarray       # (d-1, d-1) + grid.shape
    Q: np.ndarray
    mu: np.ndarray
    F: np.ndarray       # (d,) + grid.shape
    patch_scale: float = 1.0
    is_identity: bool = False

    def __post_init__(self):
        self._validate()

    def _validate(self) -> None:
        g = self.grid
        mask = g.in_mask
        d = g.d
        for i in range(d):
            for j in range(d):
                if np.max(np.abs(self.M[i, j] - self.M[j, i])) > 0:
                    raise ValueError("M must be symmetric")
        flat = g.flat_node_mask
        if np.any(np.abs(self.Q[flat]) > 1e-8):
            raise ValueError("Q must vanish on the flat boundary")
        if np.any(self.mu[mask] <= 0):
            raise ValueError("mu must be positive on the mask")

    @classmethod
    def identity(cls, grid: HalfBallGrid) -> "CoefficientSet":
        d = grid.d
        shape = grid.shape
        M = np.zeros((d, d) + shape)
        for i in range(d):
            M[i, i] = 1.0
        S = np.zeros((d - 1, d - 1) + shape)
        for i in range(d - 1):
            S[i, i] = 1.0
        mu = np.ones(shape)
        F = np.stack([np.asarray(c, dtype=float).copy() for c in grid.coords])
        return cls(
            grid=grid, M=M, S=S, Q=np.zeros(shape), mu=mu, F=F,
            patch_scale=1.0, is_identity=True,
        )

    def apply_M(self, vec: np.ndarray) -> np.ndarray:
        """Apply M nodewise to a stacked vector array of shape (d,) + grid.shape."""
        return np.einsum("ij...,j...->i...", self.M, vec)

    def eigenvalue_range(self) -> tuple[float, float]:
        g = self.grid
        mask = g.in_mask
        if g.d == 2:
            a, b, c = self.M[0, 0][mask], self.M[0, 1][mask], self.M[1, 1][mask]
            tr = a + c
            disc = np.sqrt(np.maximum(0.0, (a - c) ** 2 + 4 * b * b))
            return float(np.min((tr - disc) / 2)), float(np.max((tr + disc) / 2))
        mats = np.stack([self.M[i, j][mask] for i in range(3) for j in range(3)], axis=-1)
        eigs = np.linalg.eigvalsh(mats.reshape(-1, 3, 3))
        return float(eigs.min()), float(eigs.max())


def assemble_coefficients(
    flow: FlowMap | None,
    ext: HarmonicExtension | None,
    grid: HalfBallGrid,
    patch_scale: float | None = None,
) -> CoefficientSet:
    """Evaluate the coefficient fields on the unit half-ball grid.

    The flow is valid on a patch B'_delta x [0, delta]; the grid coordinates
    x are mapped to patch coordinates delta * x, so M(x) on the grid means
    the coefficient at physical point Phi(delta x', delta x_d).  A flat
    obstacle (or ``flow=None``) yields the identity set exactly.
    """
    if flow is None or (ext is not None and ext.obstacle.is_flat):
        return CoefficientSet.identity(grid)
    if grid.d != 2:
        raise ValueError("flow-based coefficients are 2-D only")
    ext = ext or flow.extension
    delta = patch_scale if patch_scale is not None else flow.extent
    if delta <= 0:
        raise ValueError("patch scale must be positive")
    if delta > flow.extent + 1e-12:
        raise ValueError("flow does not cover the requested patch")

    from scipy.interpolate import RegularGridInterpolator

    x1p = delta * grid.coords[0]
    tp = delta * grid.coords[1]
    pts = np.column_stack([x1p.ravel(), tp.ravel()])

    def interp(arr2d: np.ndarray) -> np.ndarray:
        f = RegularGridInterpolator(
            (flow.x1_grid, flow.t_grid), arr2d, method="cubic",
            bounds_error=False, fill_value=None,
        )
        return f(pts).reshape(grid.shape)

    phi1 = interp(flow.phi_samples[..., 0])
    phi2 = interp(flow.phi_samples[..., 1])
    tan1 = interp(flow.tangent[..., 0])
    tan2 = interp(flow.tangent[..., 1])

    g1, g2 = ext.grad(phi1, phi2)
    gnorm2 = g1 * g1 + g2 * g2
    bad = gnorm2 < 1e-12
    if np.any(bad & grid.in_mask):
        raise ValueError("singular metric: |grad m| vanished inside the patch")
    vel1, vel2 = g1 / gnorm2, g2 / gnorm2
    det = tan1 * vel2 - tan2 * vel1
    A = tan1 * tan1 + tan2 * tan2  # tangential metric (1x1 block in 2-D)
    if np.any((A <= 0) & grid.in_mask):
        i = tuple(np.argwhere((A <= 0) & grid.in_mask)[0])
        raise ValueError(f"singular metric A at node {i}")
    S = 1.0 / A

    shape = grid.shape
    M = np.zeros((2, 2) + shape)
    M[0, 0] = det * S
    M[1, 1] = det * gnorm2
    Q = (1.0 - gnorm2) * det
    # Exact vanishing on the flat boundary (|grad m| = 1 on the graph holds
    # only to the truncation order; pin the defect there).
    flat = grid.flat_node_mask
    Q[flat] = 0.0

    r = grid.radius
    x_unit = [np.where(r > 0, c / np.where(r > 0, r, 1.0), 0.0) for c in grid.coords]
    mu = (
        M[0, 0] * x_unit[0] * x_unit[0]
        + 2 * M[0, 1] * x_unit[0] * x_unit[1]
        + M[1, 1] * x_unit[1] * x_unit[1]
    )
    # At the origin the radial direction is undefined; use the vertical entry.
    origin = r == 0
    mu[origin] = M[1, 1][origin]
    Mx = np.stack([
        M[0, 0] * grid.coords[0] + M[0, 1] * grid.coords[1],
        M[1, 0] * grid.coords[0] + M[1, 1] * grid.coords[1],
    ])
    F = Mx / mu

    sset = CoefficientSet(
        grid=grid,
        M=M,
        S=S.reshape((1, 1) + shape),
        Q=Q,
        mu=mu,
        F=F,
        patch_scale=delta,
        is_identity=False,
    )
    return sset


def _one(deg: int) -> np.ndarray:
    out = np.zeros(deg + 1)
    out[0] = 1.0
    return out
