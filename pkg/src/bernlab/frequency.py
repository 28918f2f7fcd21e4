"""Boundary frequency analytics for the linearized hodograph field.

All quantities are weighted integrals against a Lipschitz radial cutoff:
the height H, the interior/boundary energies D_i and D_b, the frequency
N = rD/H, the auxiliary integrals G, A, B, the explicit error integrals of
the derivative identities, and the diagnostics used by the almost-
monotonicity statement for e^{g(r)} N(r).

Quadrature design: every radial factor (the cutoff, its slope, powers of
|x|) is averaged over 4^d midpoint subsamples per cell, while the smooth
factors (w, grad w, coefficients) are corner-averaged per cell.  A, H and
B therefore share one positive quadrature measure over (cell, subsample)
pairs, and the Cauchy-Schwarz relation A*H >= B^2 holds exactly at the
discrete level.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.integrate import cumulative_trapezoid

from .grid import (
    HalfBallGrid,
    ScalarField,
    boundary_integrate_flat,
    cell_average,
    gradient,
)
from .obstacle import CoefficientSet
from .signorini import ThinObstacleSolution, discrete_gradient

__all__ = [
    "CutoffProfile",
    "FrequencyReport",
    "FrequencyConstants",
    "frequency_report",
    "height_derivative_identity",
    "outer_variation_identity",
    "inner_variation_identity",
    "inequality_diagnostics",
    "monotonicity_scan",
    "error_term_report",
]

_TINY = 1e-12


@dataclass(frozen=True)
class CutoffProfile:
    """Radial cutoff: 1 on [0, upsilon], linear down to 0 at 1, 0 beyond.

    The plateau parameter must satisfy 1/2 < upsilon < 1; the limit
    upsilon -> 1 recovers the sharp ball indicator.
    """

    upsilon: float = 0.9

    def __post_init__(self):
        if not 0.5 < self.upsilon < 1.0:
            raise ValueError(
                f"cutoff plateau parameter must lie in (1/2, 1), got {self.upsilon}"
            )

    def value(self, s):
        s = np.asarray(s, dtype=float)
        out = np.clip((1.0 - s) / (1.0 - self.upsilon), 0.0, 1.0)
        return out

    def slope(self, s):
        s = np.asarray(s, dtype=float)
        ramp = (s > self.upsilon) & (s <= 1.0)
        return np.where(ramp, -1.0 / (1.0 - self.upsilon), 0.0)


class _SlopeTimesRadius:
    """Adapter: evaluates phi'(s) * |x| for flat-boundary quadrature."""

    def __init__(self, cutoff: CutoffProfile, r: float):
        self.cutoff = cutoff
        self.r = r

    def value(self, s):
        return self.cutoff.slope(s) * (np.asarray(s) * self.r)


class _AbsSlopeTimesRadius:
    def __init__(self, cutoff: CutoffProfile, r: float):
        self.cutoff = cutoff
        self.r = r

    def value(self, s):
        return -self.cutoff.slope(s) * (np.asarray(s) * self.r)


@dataclass
class FrequencyReport:
    r: float
    H: float
    D_i: float
    D_b: float
    D: float
    N: float
    G: float
    A: float
    B: float
    e_H: float
    E_M: float
    E_F: float
    E_Q: float
    D_prime: float
    cauchy_schwarz_gap: float
    degenerate: bool

    def as_dict(self) -> dict:
        return {
            "r": self.r, "H": self.H, "D_i": self.D_i, "D_b": self.D_b,
            "D": self.D, "N": self.N, "G": self.G, "A": self.A, "B": self.B,
            "e_H": self.e_H, "E_M": self.E_M, "E_F": self.E_F,
            "E_Q": self.E_Q, "D_prime": self.D_prime,
            "cauchy_schwarz_gap": self.cauchy_schwarz_gap,
            "degenerate": self.degenerate,
        }


@dataclass(frozen=True)
class FrequencyConstants:
    C: float = 1.0
    kappa: float = 0.5

    def __post_init__(self):
        if not (np.isfinite(self.C) and self.C >= 0):
            raise ValueError(f"constant C must be finite and >= 0, got {self.C}")
        if not 0 < self.kappa < 1:
            raise ValueError(f"exponent kappa must lie in (0, 1), got {self.kappa}")


class _FieldData:
    """Cached cellwise data of a (field, coefficients) pair."""

    def __init__(self, w: ScalarField, coeffs: CoefficientSet):
        g = w.grid
        self.grid = g
        self.coeffs = coeffs
        d = g.d
        h = g.h
        cell_shape = tuple(s - 1 for s in g.shape)
        self.vol = g.cell_weights * h**d
        self.sub_r = g.subcell_radii

        # cell gradients (corner differences) and averages
        navg = 2 ** (d - 1)
        grads = [np.zeros(cell_shape) for _ in range(d)]
        wc = np.zeros(cell_shape)
        safe = np.where(g.in_mask, w.values, 0.0)
        for shifts in np.ndindex(*(2,) * d):
            sl = tuple(slice(s, s + cell_shape[i]) for i, s in enumerate(shifts))
            v = safe[sl]
            wc += v
            for axis in range(d):
                sign = 1.0 if shifts[axis] == 1 else -1.0
                grads[axis] += sign * v / (navg * h)
        self.wc = wc / 2**d
        self.grads = grads

        # corner-averaged coefficients
        self.Mc = [
            [cell_average(g, coeffs.M[i, j]) for j in range(d)] for i in range(d)
        ]
        self.Mg = [
            sum(self.Mc[i][j] * grads[j] for j in range(d)) for i in range(d)
        ]
        self.mgg = sum(self.Mg[i] * grads[i] for i in range(d))
        self.Fc = [cell_average(g, coeffs.F[i]) for i in range(d)]
        self.is_identity = coeffs.is_identity

        # Subcell bilinear samples of the smooth factors (cells x 4^d).
        # H, A, B and G read the radial weights at the same subcell points
        # as these values, so the Cauchy-Schwarz relation A*H >= B^2 is a
        # discrete identity, and the reports are smooth functions of r.
        from .grid import _SUB_OFFSETS

        fracs = _SUB_OFFSETS
        frac_mesh = [o.ravel() for o in np.meshgrid(*(fracs,) * d, indexing="ij")]
        n_sub = len(frac_mesh[0])
        sub_w = np.zeros(cell_shape + (n_sub,))
        sub_mu = np.zeros(cell_shape + (n_sub,))
        mu_safe = np.where(g.in_mask, coeffs.mu, 0.0)
        for shifts in np.ndindex(*(2,) * d):
            sl = tuple(slice(s, s + cell_shape[i]) for i, s in enumerate(shifts))
            weight = np.ones(n_sub)
            for axis in range(d):
                f = frac_mesh[axis]
                weight = weight * (f if shifts[axis] == 1 else 1.0 - f)
            sub_w += safe[sl][..., None] * weight
            sub_mu += mu_safe[sl][..., None] * weight
        self.sub_w = sub_w
        self.sub_mu = np.where(sub_mu > _TINY, sub_mu, 1.0)
        lo = [a[:-1] for a in g.axes]
        lo_mesh = np.meshgrid(*lo, indexing="ij")
        self.sub_coords = [
            lo_mesh[axis][..., None] + frac_mesh[axis] * h for axis in range(d)
        ]
        # (M grad w . x) at subcell points, cellwise gradient
        self.sub_mgx = sum(
            self.Mg[i][..., None] * self.sub_coords[i] for i in range(d)
        )
        self.n_sub = n_sub

        # nodal derivative fields used by the error integrals (lazy)
        self._dQ = None
        self._d2Q = None
        self._dM = None
        self._dF = None
        self._w = w
        self._grad_w = None

    # -- nodal derivative caches ------------------------------------------------

    @property
    def dQ(self) -> np.ndarray:
        if self._dQ is None:
            self._dQ = gradient(ScalarField(self.grid, self.coeffs.Q))[
                self.grid.d - 1
            ]
        return self._dQ

    @property
    def d2Q(self) -> np.ndarray:
        if self._d2Q is None:
            self._d2Q = gradient(ScalarField(self.grid, self.dQ))[self.grid.d - 1]
        return self._d2Q

    @property
    def dM(self) -> list:
        """dM[k][i][j] = nodal partial_k M_ij."""
        if self._dM is None:
            d = self.grid.d
            if self.is_identity:
                z = np.zeros(self.grid.shape)
                self._dM = [[[z] * d for _ in range(d)] for _ in range(d)]
            else:
                grads = [
                    [gradient(ScalarField(self.grid, self.coeffs.M[i, j])) for j in range(d)]
                    for i in range(d)
                ]
                self._dM = [
                    [[grads[i][j][k] for j in range(d)] for i in range(d)]
                    for k in range(d)
                ]
        return self._dM

    @property
    def dF(self) -> list:
        """dF[i][k] = nodal partial_k F_i."""
        if self._dF is None:
            d = self.grid.d
            if self.is_identity:
                eye = [
                    [np.full(self.grid.shape, 1.0 if i == k else 0.0) for k in range(d)]
                    for i in range(d)
                ]
                self._dF = eye
            else:
                self._dF = [
                    [gradient(ScalarField(self.grid, self.coeffs.F[i]))[k] for k in range(d)]
                    for i in range(d)
                ]
        return self._dF

    @property
    def grad_w(self):
        if self._grad_w is None:
            self._grad_w = gradient(self._w)
        return self._grad_w

    # -- radial factor means ----------------------------------------------------

    def radial_means(self, cutoff: CutoffProfile, r: float):
        s = self.sub_r / r
        phi = cutoff.value(s)
        mslope = -cutoff.slope(s)
        return {
            "plateau": phi.mean(axis=-1),
            "ramp": mslope.mean(axis=-1),
            "ramp_over_r": (mslope / self.sub_r).mean(axis=-1),
            "ramp_times_r": (mslope * self.sub_r).mean(axis=-1),
        }


def frequency_report(
    w: ScalarField,
    coeffs: CoefficientSet,
    r: float,
    cutoff: CutoffProfile | None = None,
    data: _FieldData | None = None,
) -> FrequencyReport:
    """All frequency quantities at one radius by cut-cell quadrature."""
    if not 0 < r <= 1:
        raise ValueError(f"radius must lie in (0, 1], got {r}")
    cutoff = cutoff or CutoffProfile()
    fd = data or _FieldData(w, coeffs)
    g = fd.grid
    d = g.d
    m = fd.radial_means(cutoff, r)
    vol = fd.vol

    # shared subcell measure for H, A, B: vol * (-phi'(|x|/r)/|x|)
    s = fd.sub_r / r
    ramp_over_r = -cutoff.slope(s) / fd.sub_r
    plateau = cutoff.value(s)
    wmeas = vol[..., None] * ramp_over_r / fd.n_sub
    H = float(np.sum(wmeas * fd.sub_mu * fd.sub_w**2))
    B = float(np.sum(wmeas * fd.sub_w * fd.sub_mgx))
    A = float(np.sum(wmeas * fd.sub_mgx**2 / fd.sub_mu))
    G = float(np.sum(vol[..., None] * plateau * fd.sub_w**2) / fd.n_sub)
    D_i = float(np.sum(vol * fd.mgg * m["plateau"]))

    w2dq = ScalarField(g, np.where(g.in_mask, fd.dQ * w.values**2, 0.0))
    D_b = -0.5 * boundary_integrate_flat(w2dq, r, cutoff)
    D = D_i + D_b

    # explicit height-derivative error integral
    if fd.is_identity:
        e_H = 0.0
    else:
        mu_nodal = coeffs.mu
        radius = np.maximum(g.radius, _TINY)
        xhat_nodal = [g.coords[i] / radius for i in range(d)]
        div_terms = np.zeros(g.shape)
        dM = fd.dM
        for j in range(d):
            col_div = sum(dM[i][i][j] for i in range(d))
            div_terms += col_div * xhat_nodal[j] * radius  # M_ij,i x_j
        tr_dev = sum(coeffs.M[i, i] for i in range(d)) - d
        T = div_terms + tr_dev - d * (mu_nodal - 1.0)
        Tc = cell_average(g, np.where(g.in_mask, T, 0.0))
        e_H = float(np.sum(wmeas * fd.sub_w**2 * Tc[..., None])) / r

    # explicit inner-variation error pieces
    if fd.is_identity:
        E_M = E_F = E_Q = 0.0
    else:
        dM = fd.dM
        E_M_cells = np.zeros_like(vol)
        for k in range(d):
            dMk = [[cell_average(g, dM[k][i][j]) for j in range(d)] for i in range(d)]
            contr = sum(
                dMk[i][j] * fd.grads[i] * fd.grads[j]
                for i in range(d)
                for j in range(d)
            )
            E_M_cells += contr * fd.Fc[k]
        E_M = float(np.sum(vol * m["plateau"] * E_M_cells))

        dF = fd.dF
        dFc = [[cell_average(g, dF[i][k]) for k in range(d)] for i in range(d)]
        divF_minus = sum(dFc[i][i] for i in range(d)) - d
        dfg = sum(
            fd.Mg[i] * (dFc[i][k] - (1.0 if i == k else 0.0)) * fd.grads[k]
            for i in range(d)
            for k in range(d)
        )
        E_F = float(np.sum(vol * m["plateau"] * (fd.mgg * divF_minus - 2.0 * dfg)))

        d2q_c = cell_average(g, np.where(g.in_mask, fd.d2Q, 0.0))
        fgrad = sum(fd.Fc[i] * fd.grads[i] for i in range(d))
        E_Q = float(np.sum(vol * m["plateau"] * d2q_c * fd.wc * fgrad))

    # exact-in-form derivative of D
    D_prime = float(np.sum(vol * fd.mgg * m["ramp_times_r"])) / r**2
    if not fd.is_identity:
        flat_term = boundary_integrate_flat(w2dq, r, _SlopeTimesRadius(cutoff, r))
        D_prime += flat_term / (2.0 * r**2)

    degenerate = H <= _TINY
    N = float("nan") if degenerate else r * D / H
    return FrequencyReport(
        r=r, H=H, D_i=D_i, D_b=D_b, D=D, N=N, G=G, A=A, B=B,
        e_H=e_H, E_M=E_M, E_F=E_F, E_Q=E_Q, D_prime=D_prime,
        cauchy_schwarz_gap=A * H - B * B, degenerate=degenerate,
    )


def _report_scale(rep: FrequencyReport) -> float:
    return max(rep.D, rep.H / rep.r, _TINY)


class _SphereProfiles:
    """Smooth-in-radius upper-half-sphere integrals of nodal fields.

    A cubic grid interpolant is sampled along polar circles (2-D) or
    lat-long spheres (3-D); the ramp-weighted report quantities become 1-D
    integrals of these profiles, differentiable in r.  Used by the
    derivative identities, where point-sampled cutoff quadrature is too
    rough to difference.
    """

    def __init__(self, grid: HalfBallGrid, nodal_fields: dict):
        from scipy.interpolate import RegularGridInterpolator

        self.grid = grid
        self.interp = {
            k: RegularGridInterpolator(
                grid.axes, v, method="cubic", bounds_error=False, fill_value=None
            )
            for k, v in nodal_fields.items()
        }

    def sphere(self, key: str, rho: float) -> float:
        g = self.grid
        if g.d == 2:
            n = max(64, int(8 * rho / g.h))
            theta = np.linspace(0.0, np.pi, n + 1)
            pts = np.stack([rho * np.cos(theta), rho * np.sin(theta)], axis=-1)
            vals = self.interp[key](pts)
            return float(np.trapezoid(vals, theta) * rho)
        n = max(24, int(4 * rho / g.h))
        theta = np.linspace(0.0, np.pi / 2, n + 1)  # polar from the plane
        phi_ang = np.linspace(0.0, 2 * np.pi, 2 * n + 1)
        T, P = np.meshgrid(theta, phi_ang, indexing="ij")
        pts = np.stack(
            [
                rho * np.cos(T) * np.cos(P),
                rho * np.cos(T) * np.sin(P),
                rho * np.sin(T),
            ],
            axis=-1,
        )
        vals = self.interp[key](pts.reshape(-1, 3)).reshape(T.shape)
        jac = rho**2 * np.cos(T)
        inner = np.trapezoid(vals * jac, phi_ang, axis=1)
        return float(np.trapezoid(inner, theta))

    def ramp_integral(self, key: str, r: float, upsilon: float, over_rho: bool) -> float:
        """(1/(1-upsilon)) * int_{upsilon r}^{r} profile(rho) [/rho] drho."""
        nodes, weights = np.polynomial.legendre.leggauss(24)
        a, b = upsilon * r, r
        rho = 0.5 * (b - a) * nodes + 0.5 * (a + b)
        vals = np.array([self.sphere(key, float(p)) for p in rho])
        if over_rho:
            vals = vals / rho
        return float(np.sum(weights * vals) * 0.5 * (b - a) / (1.0 - upsilon))


def _identity_profiles(
    w: ScalarField, coeffs: CoefficientSet, fd: _FieldData
) -> _SphereProfiles:
    g = w.grid
    d = g.d
    gw = fd.grad_w
    mg = [
        sum(coeffs.M[i, j] * gw[j] for j in range(d)) for i in range(d)
    ]
    radius = np.maximum(g.radius, g.h / 4)
    xhat = [g.coords[i] / radius for i in range(d)]
    mu = coeffs.mu
    safe_w = np.where(g.in_mask, w.values, 0.0)
    fields = {
        "height": mu * safe_w**2,
        "radial_flux": safe_w * sum(mg[i] * xhat[i] for i in range(d)),
    }
    if not coeffs.is_identity:
        dM = fd.dM
        div_terms = np.zeros(g.shape)
        for j in range(d):
            col_div = sum(dM[i][i][j] for i in range(d))
            div_terms += col_div * xhat[j] * radius
        tr_dev = sum(coeffs.M[i, i] for i in range(d)) - d
        T = div_terms + tr_dev - d * (mu - 1.0)
        fields["height_error"] = safe_w**2 * T
    return _SphereProfiles(g, fields)


def height_derivative_identity(
    w: ScalarField,
    coeffs: CoefficientSet,
    r: float,
    cutoff: CutoffProfile | None = None,
    data: _FieldData | None = None,
    method: str = "profile",
) -> float:
    """Residual of H'(r) = (d-1)/r H + 2/r B + e_H, scale-normalized.

    ``method="profile"`` (default) evaluates every term through smooth
    radial sphere-integral profiles, so H' is exact for the quadrature in
    use; ``method="difference"`` uses the cut-cell reports and a centered
    difference with step max(h, r/64), which carries the sampling noise of
    the ramp annulus.
    """
    cutoff = cutoff or CutoffProfile()
    fd = data or _FieldData(w, coeffs)
    g = fd.grid
    d = g.d
    if method == "difference":
        dr = max(g.h, r / 64.0)
        rep = frequency_report(w, coeffs, r, cutoff, fd)
        rep_p = frequency_report(w, coeffs, r + dr, cutoff, fd)
        rep_m = frequency_report(w, coeffs, r - dr, cutoff, fd)
        H_prime = (rep_p.H - rep_m.H) / (2 * dr)
        resid = H_prime - (d - 1) / r * rep.H - 2.0 / r * rep.B - rep.e_H
        return abs(resid) / max(rep.H / r, _TINY)
    if method != "profile":
        raise ValueError(f"unknown method {method!r}")
    ups = cutoff.upsilon
    prof = _identity_profiles(w, coeffs, fd)
    H = prof.ramp_integral("height", r, ups, over_rho=True)
    B = prof.ramp_integral("radial_flux", r, ups, over_rho=False)
    sig_r = prof.sphere("height", r) / r
    sig_ur = prof.sphere("height", ups * r) / (ups * r)
    H_prime = (sig_r - ups * sig_ur) / (1.0 - ups)
    e_H = 0.0
    if not coeffs.is_identity:
        e_H = prof.ramp_integral("height_error", r, ups, over_rho=True) / r
    resid = H_prime - (d - 1) / r * H - 2.0 / r * B - e_H
    return abs(resid) / max(H / r, _TINY)


def _nodal_cutoff(grid: HalfBallGrid, cutoff: CutoffProfile, r: float) -> np.ndarray:
    return cutoff.value(grid.radius / r)


def outer_variation_identity(
    solution: ThinObstacleSolution,
    coeffs: CoefficientSet,
    r: float,
    cutoff: CutoffProfile | None = None,
) -> dict:
    """Outer-variation check at a converged minimizer.

    Returns the discrete first variation in the direction (cutoff * w),
    normalized by D, plus (linear baseline only) the assembled residual of
    D = B/r + (1/2) int phi d2Q w^2.
    """
    cutoff = cutoff or CutoffProfile()
    if isinstance(solution, ScalarField):
        problem, w, converged = None, solution, True
    else:
        problem, w, converged = solution.problem, solution.w, solution.converged
    g = w.grid
    fd = _FieldData(w, coeffs)
    rep = frequency_report(w, coeffs, r, cutoff, fd)

    out = {"report": rep, "converged": converged}
    if problem is not None:
        eta = _nodal_cutoff(g, cutoff, r) * w.values
        eta[~problem.free_mask] = 0.0
        grad = discrete_gradient(problem, w.values)
        out["gateaux_residual"] = float(np.sum(grad * eta)) / max(rep.D, _TINY)
    if problem is None or not problem.nonlinearity.enabled:
        d2q_c = cell_average(g, np.where(g.in_mask, fd.d2Q, 0.0))
        m = fd.radial_means(cutoff, r)
        half_q = 0.5 * float(np.sum(fd.vol * m["plateau"] * d2q_c * fd.wc**2))
        resid = rep.D - rep.B / r - half_q
        out["assembled_residual"] = abs(resid) / max(rep.D, _TINY)
    return out


def _pushforward(
    w: ScalarField, coeffs: CoefficientSet, cutoff: CutoffProfile, r: float, eps: float
) -> np.ndarray:
    """Values of w composed with the inverse of x -> x + eps*psi_r(x)F(x)."""
    from scipy.interpolate import RegularGridInterpolator

    g = w.grid
    interp = RegularGridInterpolator(
        g.axes, w.values, method="cubic", bounds_error=False, fill_value=None
    )
    f_interp = [
        RegularGridInterpolator(
            g.axes, coeffs.F[i], method="linear", bounds_error=False, fill_value=None
        )
        for i in range(g.d)
    ]
    pts = np.stack([c.ravel() for c in g.coords], axis=-1)
    y = pts.copy()
    for _ in range(4):  # fixed-point inversion of the near-identity map
        radius = np.sqrt(np.sum(y * y, axis=-1))
        psi = cutoff.value(radius / r)
        fvals = np.stack([fi(y) for fi in f_interp], axis=-1)
        y = pts - eps * psi[:, None] * fvals
    # keep the vertical coordinate in the closed half-space
    y[:, -1] = np.maximum(y[:, -1], 0.0)
    return interp(y).reshape(g.shape)


def inner_variation_identity(
    solution: ThinObstacleSolution,
    coeffs: CoefficientSet,
    r: float,
    cutoff: CutoffProfile | None = None,
    eps: float | None = None,
) -> dict:
    """Inner-variation check at a converged minimizer.

    Reports (a) the discrete first variation along the domain deformation
    x -> x + eps*psi_r(x)F(x), realized both as the Gateaux derivative in
    the nodal direction -psi_r (F . grad w) and as a central difference of
    the energy of the pushforward field; (b) for the linear baseline, the
    assembled residual of (d-2)D - rD' + 2A/r + e_I = 0.
    """
    cutoff = cutoff or CutoffProfile()
    if isinstance(solution, ScalarField):
        problem, w, converged = None, solution, True
    else:
        problem, w, converged = solution.problem, solution.w, solution.converged
    g = w.grid
    d = g.d
    fd = _FieldData(w, coeffs)
    rep = frequency_report(w, coeffs, r, cutoff, fd)
    scale = max(rep.D, _TINY)

    out = {"report": rep, "converged": converged}
    if problem is not None:
        gw = fd.grad_w
        fdotgw = sum(coeffs.F[i] * gw[i] for i in range(d))
        eta = -_nodal_cutoff(g, cutoff, r) * fdotgw
        eta[~problem.free_mask] = 0.0
        grad = discrete_gradient(problem, w.values)
        out["gateaux_residual"] = float(np.sum(grad * eta)) / scale

        from .signorini import discrete_energy

        eps = eps if eps is not None else 1e-3 * r
        e_plus = discrete_energy(problem, _pushforward(w, coeffs, cutoff, r, eps))
        e_minus = discrete_energy(problem, _pushforward(w, coeffs, cutoff, r, -eps))
        out["pushforward_derivative"] = (e_plus - e_minus) / (2 * eps) / scale

    if problem is None or not problem.nonlinearity.enabled:
        # flat-boundary part of e_I
        dq = fd.dQ
        dqF = [np.where(g.in_mask, dq * coeffs.F[i], 0.0) for i in range(d - 1)]
        div_t = sum(
            gradient(ScalarField(g, dqF[i]))[i] for i in range(d - 1)
        )
        integrand = ScalarField(
            g, np.where(g.in_mask, ((d - 2) * dq - div_t) * w.values**2, 0.0)
        )
        e_I_flat = 0.5 * boundary_integrate_flat(integrand, r, cutoff)
        e_I = e_I_flat + rep.E_M + rep.E_F + rep.E_Q
        resid = (d - 2) * rep.D - r * rep.D_prime + 2.0 / r * rep.A + e_I
        out["assembled_residual"] = abs(resid) / _report_scale(rep)
        out["e_I"] = e_I
    return out


def height_cumulative(
    fd: _FieldData, cutoff: CutoffProfile, r: float
) -> float:
    """int_0^r H(s) ds in closed form.

    Integrating the ramp weight over the scan radius gives the kernel
    K_r(t) = max(0, min(r, t/upsilon) - t)/(1-upsilon), so the cumulative
    height is a single quadrature pass.
    """
    ups = cutoff.upsilon
    t = fd.sub_r
    K = np.maximum(0.0, np.minimum(r, t / ups) - t) / (1.0 - ups)
    return float(
        np.sum(fd.vol[..., None] * K / t * fd.sub_mu * fd.sub_w**2) / fd.n_sub
    )


def inequality_diagnostics(
    w: ScalarField,
    coeffs: CoefficientSet,
    radii: Sequence[float],
    cutoff: CutoffProfile | None = None,
) -> dict:
    """Two-sided quadrature of the supporting inequalities.

    Per radius: the height-integral inequality G(r) <= C_mu * int_0^r H
    (C_mu = 1/min mu); the weighted trace inequality with its explicit
    pre-Cauchy-Schwarz constants 2^{d-1}*8/r and 2^{d-1}*4; the frequency
    lower bound r D_i >= c H (empirical c); and the boundary energy
    controls G <= c r^2 D_i and |D_b| <= c r D_i (empirical constants).
    """
    cutoff = cutoff or CutoffProfile()
    fd = _FieldData(w, coeffs)
    g = w.grid
    d = g.d
    radii = sorted(radii)

    mu_min = float(np.min(coeffs.mu[g.in_mask & (g.radius > 0)]))
    C_mu = 1.0 / mu_min

    gw_mag = fd.grad_w.magnitude().values
    abs_w = np.abs(w.values)
    rows = []
    for r in radii:
        rep = frequency_report(w, coeffs, r, cutoff, fd)
        intH = height_cumulative(fd, cutoff, r)
        m = fd.radial_means(cutoff, r)
        mixed = float(
            np.sum(
                fd.vol
                * m["plateau"]
                * cell_average(g, np.where(g.in_mask, abs_w * gw_mag, 0.0))
            )
        )
        w2_flat = ScalarField(g, np.where(g.in_mask, w.values**2, 0.0))
        trace_lhs = boundary_integrate_flat(w2_flat, r, cutoff)
        trace_rhs = 2 ** (d - 1) * (8.0 / r * rep.G + 4.0 * mixed)
        rows.append(
            {
                "r": r,
                "G": rep.G,
                "int_H": intH,
                "height_integral_ok": rep.G <= C_mu * intH * (1 + 1e-9) + _TINY,
                "height_integral_constant": rep.G / max(intH, _TINY),
                "trace_lhs": trace_lhs,
                "trace_rhs": trace_rhs,
                "trace_ok": trace_lhs <= trace_rhs * (1 + 1e-9) + _TINY,
                "frequency_lower_c": r * rep.D_i / max(rep.H, _TINY),
                "boundary_G_c": rep.G / max(r**2 * rep.D_i, _TINY),
                "boundary_Db_c": abs(rep.D_b) / max(r * rep.D_i, _TINY),
            }
        )
    return {"C_mu": C_mu, "rows": rows}


def monotonicity_scan(
    w: ScalarField,
    coeffs: CoefficientSet,
    radii: Sequence[float],
    cutoff: CutoffProfile | None = None,
    constants: FrequencyConstants | None = None,
    slack: float = 1e-3,
) -> dict:
    """Scan of r -> e^{g(r)} N(r) over a radius grid.

    Computes N and the correction exponent g for the given constants,
    finds the minimal C (at the given kappa) making the product
    nondecreasing within the slack, and extrapolates N(0+).
    """
    cutoff = cutoff or CutoffProfile()
    constants = constants or FrequencyConstants()
    fd = _FieldData(w, coeffs)
    radii = np.asarray(sorted(radii), dtype=float)
    reps = [frequency_report(w, coeffs, float(r), cutoff, fd) for r in radii]
    degenerate = [rep.degenerate for rep in reps]
    usable = ~np.asarray(degenerate)
    truncated = not np.all(usable)
    if not np.any(usable):
        raise ValueError(
            "frequency degenerate at every requested radius: the field has "
            "no height there"
        )
    rr = radii[usable]
    H = np.array([rep.H for rep in reps])[usable]
    D = np.array([rep.D for rep in reps])[usable]
    D_i = np.array([rep.D_i for rep in reps])[usable]
    N = np.array([rep.N for rep in reps])[usable]

    # cumulative integrals from r = 0 (H -> 0 there)
    int_H = np.array([height_cumulative(fd, cutoff, float(r)) for r in rr])
    rr0 = np.concatenate([[0.0], rr])
    HD0 = np.concatenate([[0.0], H / np.maximum(D, _TINY)])
    int_HD = cumulative_trapezoid(HD0, rr0)

    kappa = constants.kappa

    def g_of(C: float) -> np.ndarray:
        return (
            C / kappa * (rr**kappa + np.maximum(D, 0.0) ** kappa)
            - C * int_H / np.maximum(D_i, _TINY)
            + C * int_HD
        )

    def monotone(C: float) -> bool:
        vals = np.exp(g_of(C)) * N
        tol = slack * max(1.0, float(np.max(np.abs(vals))))
        return bool(np.all(np.diff(vals) >= -tol))

    if monotone(0.0):
        minimal_C = 0.0
    else:
        hi = 1.0
        while not monotone(hi) and hi < 1e6:
            hi *= 2.0
        minimal_C = float("inf")
        if monotone(hi):
            lo = 0.0
            for _ in range(60):
                mid = 0.5 * (lo + hi)
                if monotone(mid):
                    hi = mid
                else:
                    lo = mid
            minimal_C = hi

    # N(0+) by a least-squares line through the smaller half of the radii;
    # fitting over a wider window keeps quadrature noise in neighbouring
    # N values from being amplified by the extrapolation
    if len(rr) >= 2:
        m = max(2, len(rr) // 2)
        coeffs_fit = np.polyfit(rr[:m], N[:m], 1)
        n0 = float(np.polyval(coeffs_fit, 0.0))
    else:
        n0 = float(N[0]) if len(rr) else float("nan")

    g_vals = g_of(constants.C)
    return {
        "radii": rr.tolist(),
        "N": N.tolist(),
        "g": g_vals.tolist(),
        "g_at_rmin": float(g_vals[0]) if len(rr) else float("nan"),
        "minimal_C": minimal_C,
        "kappa": kappa,
        "N_origin_estimate": n0,
        "truncated": truncated,
        "reports": reps,
    }


def error_term_report(
    w: ScalarField,
    coeffs: CoefficientSet,
    radii: Sequence[float],
    cutoff: CutoffProfile | None = None,
    decomposition=None,
    kappa_grid: Sequence[float] | None = None,
) -> dict:
    """Diagnostic ratios of the error-bound envelopes to their stated
    right-hand sides, with a best-fit (C, kappa) per bound over the radii.

    The five envelopes integrate |w| |grad w|^2-type bundles against the
    cutoff (outer) or its slope (boundary-ramp variants); each is compared
    against powers of D_i, D_i', H per the corresponding estimate.
    """
    cutoff = cutoff or CutoffProfile()
    fd = _FieldData(w, coeffs)
    g = w.grid
    kappa_grid = list(kappa_grid or np.linspace(0.05, 0.5, 10))

    gw_mag = fd.grad_w.magnitude().values
    abs_w = np.abs(w.values)

    def cellavg(nodal):
        return cell_average(g, np.where(g.in_mask, nodal, 0.0))

    mix_12 = cellavg(abs_w * gw_mag**2)        # |w||grad w|^2
    cube = cellavg(gw_mag**3)                  # |grad w|^3
    sq = cellavg(gw_mag**2)                    # |grad w|^2
    mix_11 = cellavg(abs_w * gw_mag)           # |w||grad w|
    mix_21 = cellavg(abs_w**2 * gw_mag)        # |w|^2|grad w|

    rows = []
    for r in radii:
        rep = frequency_report(w, coeffs, r, cutoff, fd)
        m = fd.radial_means(cutoff, r)
        dr = max(g.h, r / 64.0)
        Dip = (
            frequency_report(w, coeffs, r + dr, cutoff, fd).D_i
            - frequency_report(w, coeffs, r - dr, cutoff, fd).D_i
        ) / (2 * dr)
        Dip = max(Dip, _TINY)

        def bulk(cells):
            return float(np.sum(fd.vol * m["plateau"] * cells))

        def ramp(cells):
            return float(np.sum(fd.vol * m["ramp"] * cells))

        def ramp_r(cells):
            return float(np.sum(fd.vol * m["ramp_times_r"] * cells))

        env = {
            "outer_1": bulk(mix_12 + cube),
            "outer_2": ramp(mix_21 + mix_12) / r,
            "inner_1": r * bulk(sq + mix_11),
            "inner_2": bulk(cube + mix_12 + mix_21),
            "inner_3": ramp_r(cube + mix_12 + mix_21) / r,
        }
        rows.append({"r": r, "report": rep, "D_i_prime": Dip, "envelopes": env})

    def fit(name, rhs_fn):
        best = None
        for kap in kappa_grid:
            ratios = [
                row["envelopes"][name] / max(rhs_fn(row, kap), _TINY)
                for row in rows
            ]
            C = max(ratios)
            spread = max(ratios) / max(min(ratios), _TINY)
            if best is None or spread < best[2]:
                best = (kap, C, spread)
        return {"kappa": best[0], "C": best[1], "spread": best[2]}

    fits = {
        "outer_1": fit("outer_1", lambda row, k: row["report"].D_i ** (1 + k)),
        "outer_2": fit(
            "outer_2",
            lambda row, k: np.sqrt(
                max(row["report"].H * row["report"].D_i ** (2 * k) * row["D_i_prime"], 0.0)
            ),
        ),
        "inner_1": fit("inner_1", lambda row, k: row["r"] * row["report"].D_i),
        "inner_2": fit("inner_2", lambda row, k: row["report"].D_i ** (1 + k)),
        "inner_3": fit(
            "inner_3",
            lambda row, k: row["r"]
            * (row["report"].D_i ** k * row["D_i_prime"] + row["report"].D ** (1 + k)),
        ),
    }
    out = {"rows": rows, "fits": fits}
    if decomposition is not None:
        sup_info = []
        for cube_obj in getattr(decomposition, "cubes", []):
            sup_info.append(
                {
                    "generation": cube_obj.generation,
                    "classification": cube_obj.classification,
                }
            )
        out["decomposition_cubes"] = sup_info
    return out
