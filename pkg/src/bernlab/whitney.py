"""Stopping-time cube decomposition on the 3-adic lattice.

Cubes of generation j have side 3^{1-j} and centers on the lattice
3^{1-j} Z^d.  Each cube is stored by its integer center index so that
ancestor/descendant relations, covering and disjointness are exact integer
arithmetic rather than floating-point geometry.  A cube is classified
"excess" when the gradient mass of its associated ball B_L = B_{3l}(a),
clipped to the upper half-ball, reaches C0 * l^{d+2*alpha}; failing that it
is classified "height" when the L2 mass reaches C0 * l^{d+2+2*alpha};
otherwise it subdivides into its 3^d sons.  The nodes of the cubes that
survive to the finest generation form the residual node set.

Also provides the property checks of the decomposition lemma
(cover/disjointness, vanishing on the residual set, minimum generation,
center-distance bound, father-ball comparisons) and the doubling-ratio
predicates used by the three-annuli growth lemmas.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from .grid import BallQuadrature, ScalarField, gradient

__all__ = [
    "WhitneyParams",
    "WhitneyCube",
    "WhitneyDecomposition",
    "whitney_decompose",
    "check_whitney_properties",
    "doubling_predicates",
    "predict_stopping_generation",
    "observed_stopping_generation",
]


@dataclass(frozen=True)
class WhitneyParams:
    """Thresholds and depth of the stopping-time decomposition.

    C0     threshold constant shared by both stopping integrals.
    alpha  decay exponent in (0, 1/2).
    j_max  finest generation; cubes there must still resolve the grid.
    N0     optional minimum classified generation (property check only).
    c0     optional center-distance ratio bound (property check only).
    """

    C0: float = 1.0
    alpha: float = 0.25
    j_max: int = 4
    N0: int | None = None
    c0: float | None = None

    def __post_init__(self) -> None:
        if not self.C0 > 0:
            raise ValueError(f"threshold constant C0 must be positive, got {self.C0}")
        if not 0.0 < self.alpha < 0.5:
            raise ValueError(f"exponent alpha must lie in (0, 1/2), got {self.alpha}")
        if self.j_max < 1:
            raise ValueError("generation cap must be at least 1")

    def excess_threshold(self, half_side: float, d: int) -> float:
        return self.C0 * half_side ** (d + 2 * self.alpha)

    def height_threshold(self, half_side: float, d: int) -> float:
        return self.C0 * half_side ** (d + 2 + 2 * self.alpha)


@dataclass(frozen=True)
class WhitneyCube:
    """A cube of the 3-adic lattice with its stopping-integral record.

    The center is 3^{1-generation} * index; the side is 3^{1-generation}.
    `excess_integral` is the gradient mass and `height_integral` the L2
    mass of the clipped ball B_{3l}(center) used to classify the cube.
    """

    generation: int
    index: tuple
    classification: str  # excess | height | subdivided | residual
    excess_integral: float
    height_integral: float

    @property
    def side(self) -> float:
        return 3.0 ** (1 - self.generation)

    @property
    def half_side(self) -> float:
        return self.side / 2.0

    @property
    def center(self) -> tuple:
        s = 3.0 ** (1 - self.generation)
        return tuple(s * k for k in self.index)

    @property
    def ball_radius(self) -> float:
        return 3.0 * self.half_side

    def father_index(self) -> tuple:
        """Integer center index of the father cube (sons are 3k + m,
        m in {-1,0,1}^d, so the map is exact)."""
        if self.generation <= 1:
            raise ValueError("generation-1 cubes have no father")
        return tuple(int(np.rint(k / 3.0)) for k in self.index)

    def son_indices(self):
        d = len(self.index)
        for m in itertools.product((-1, 0, 1), repeat=d):
            yield tuple(3 * k + mi for k, mi in zip(self.index, m))

    def descendant_index_box(self, j_fine: int):
        """Closed integer box of generation-j_fine descendant indices."""
        if j_fine < self.generation:
            raise ValueError("target generation is coarser than the cube")
        scale = 3 ** (j_fine - self.generation)
        half = (scale - 1) // 2
        return tuple((k * scale - half, k * scale + half) for k in self.index)

    def contains_point(self, x, tol: float = 0.0) -> bool:
        return all(
            abs(float(xi) - ci) <= self.half_side + tol
            for xi, ci in zip(x, self.center)
        )


@dataclass
class WhitneyDecomposition:
    """Result of the stopping-time sweep.

    `cubes` holds the classified (excess/height) cubes; `residual_cubes`
    the finest-generation survivors whose union realizes the residual set
    on the grid; `subdivided_cubes` the interior nodes of the tree, kept
    for reporting.  `gamma_nodes` is the boolean grid mask of nodes lying
    in some residual cube.
    """

    params: WhitneyParams
    cubes: list
    residual_cubes: list
    subdivided_cubes: list
    gamma_nodes: np.ndarray
    grid: object

    @property
    def excess_cubes(self) -> list:
        return [c for c in self.cubes if c.classification == "excess"]

    @property
    def height_cubes(self) -> list:
        return [c for c in self.cubes if c.classification == "height"]

    def all_cubes(self) -> list:
        return sorted(
            self.cubes + self.subdivided_cubes + self.residual_cubes,
            key=lambda c: (c.generation, c.index),
        )

    def finest_generation(self) -> int:
        gens = [c.generation for c in self.cubes + self.residual_cubes]
        return max(gens) if gens else 1

    def classified_cell_set(self) -> frozenset:
        """Region covered by classified cubes, as the exact set of
        finest-generation descendant indices (for inclusion comparisons
        across parameter choices)."""
        cells: set = set()
        for cube in self.cubes:
            box = cube.descendant_index_box(self.params.j_max)
            cells.update(
                itertools.product(*(range(lo, hi + 1) for lo, hi in box))
            )
        return frozenset(cells)


def _root_indices(d: int):
    """Generation-1 integer centers whose cubes cover [-1,1]^{d-1} x [0,1]."""
    ranges = [(-1, 0, 1)] * (d - 1) + [(0, 1)]
    return sorted(itertools.product(*ranges))


def _stopping_quadratures(w: ScalarField):
    """Cached ball integrators for the L2 mass and the gradient mass."""
    g = w.grid
    gw = gradient(w)
    w2 = ScalarField(g, np.where(g.in_mask, w.values**2, 0.0))
    gw2 = ScalarField(g, np.where(g.in_mask, gw.magnitude().values ** 2, 0.0))
    return BallQuadrature(w2), BallQuadrature(gw2)


def whitney_decompose(w: ScalarField, params: WhitneyParams) -> WhitneyDecomposition:
    """Breadth-first stopping-time classification over generations 1..j_max.

    Within each generation every surviving cube is tested independently
    (excess first, then height); only unclassified cubes spawn sons, so no
    classified cube ever has a classified ancestor.
    """
    g = w.grid
    d = g.d
    finest_side = 3.0 ** (1 - params.j_max)
    if finest_side < 4 * g.h - 1e-12:
        raise ValueError(
            f"generation cap {params.j_max} under-resolves the grid: "
            f"finest cube side {finest_side:.4g} < 4h = {4 * g.h:.4g}"
        )
    q_w2, q_gw2 = _stopping_quadratures(w)

    classified: list[WhitneyCube] = []
    subdivided: list[WhitneyCube] = []
    residual: list[WhitneyCube] = []
    survivors = _root_indices(d)

    for generation in range(1, params.j_max + 1):
        scale = 3.0 ** (1 - generation)
        half = scale / 2.0
        thr_excess = params.excess_threshold(half, d)
        thr_height = params.height_threshold(half, d)
        last = generation == params.j_max
        next_survivors: list[tuple] = []
        for k in survivors:
            center = tuple(scale * ki for ki in k)
            e_int = q_gw2.integrate(center, 3 * half)
            h_int = q_w2.integrate(center, 3 * half)
            if e_int >= thr_excess:
                classified.append(WhitneyCube(generation, k, "excess", e_int, h_int))
            elif h_int >= thr_height:
                classified.append(WhitneyCube(generation, k, "height", e_int, h_int))
            elif last:
                residual.append(WhitneyCube(generation, k, "residual", e_int, h_int))
            else:
                cube = WhitneyCube(generation, k, "subdivided", e_int, h_int)
                subdivided.append(cube)
                next_survivors.extend(cube.son_indices())
        if last or not next_survivors:
            break
        survivors = sorted(next_survivors)

    gamma = np.zeros(g.shape, dtype=bool)
    for cube in residual:
        box = np.ones(g.shape, dtype=bool)
        for axis in range(d):
            c = cube.center[axis]
            coord = g.coords[axis]
            box &= (coord >= c - cube.half_side - 1e-12) & (
                coord <= c + cube.half_side + 1e-12
            )
        gamma |= box
    gamma &= g.in_mask

    return WhitneyDecomposition(
        params=params,
        cubes=classified,
        residual_cubes=residual,
        subdivided_cubes=subdivided,
        gamma_nodes=gamma,
        grid=g,
    )


def _cover_and_disjoint(dec: WhitneyDecomposition) -> dict:
    """Exact integer check: the finest-generation descendant boxes of the
    classified and residual cubes tile the root boxes with no overlap."""
    d = dec.grid.d
    j_fine = dec.params.j_max
    leaves = dec.cubes + dec.residual_cubes
    seen: set = set()
    overlap = 0
    for cube in leaves:
        box = cube.descendant_index_box(j_fine)
        for idx in itertools.product(*(range(lo, hi + 1) for lo, hi in box)):
            if idx in seen:
                overlap += 1
            else:
                seen.add(idx)
    expected: set = set()
    for root in _root_indices(d):
        box = WhitneyCube(1, root, "residual", 0.0, 0.0).descendant_index_box(j_fine)
        expected.update(
            itertools.product(*(range(lo, hi + 1) for lo, hi in box))
        )
    missing = len(expected - seen)
    extra = len(seen - expected)
    return {
        "disjoint": overlap == 0,
        "cover": missing == 0 and extra == 0,
        "overlap_count": overlap,
        "missing_count": missing,
        "extra_count": extra,
        "leaf_cell_count": len(seen),
        "expected_cell_count": len(expected),
    }


def check_whitney_properties(
    dec: WhitneyDecomposition, w: ScalarField, tau: float | None = None
) -> dict:
    """Property report for a decomposition of the field it was built from.

    (a) exact cover/disjointness of the leaf cubes over the slab;
    (b) max of |w| and |grad w| over residual-set nodes, compared to tau
        (and sqrt(tau) for the gradient) when tau is given;
    (c) no classified cube at generation <= N0, when N0 is set;
    (d) half-side <= c0 * |center| for every classified cube, when c0 is
        set (a cube centered at the origin counts as a violation);
    (e) for excess cubes with a father: empirical constants in
        height(father) <= C * l^2 * excess(cube) and
        excess(father) <= C * excess(cube);
    (f) for height cubes with a father: empirical constants in
        height(father) <= C * height(cube) and
        excess(father) <= (C / l^2) * height(cube).
    """
    if w.grid != dec.grid:
        raise ValueError("field and decomposition live on different grids")
    tol = 1e-12
    report: dict = {"cover_disjoint": _cover_and_disjoint(dec)}

    gw = gradient(w)
    mask = dec.gamma_nodes
    if mask.any():
        max_w = float(np.max(np.abs(w.values[mask])))
        max_gw = float(np.max(gw.magnitude().values[mask]))
    else:
        max_w = 0.0
        max_gw = 0.0
    vanishing = {
        "gamma_node_count": int(mask.sum()),
        "max_abs_w": max_w,
        "max_abs_grad_w": max_gw,
    }
    if tau is not None:
        vanishing["w_within_tau"] = max_w <= tau + tol
        vanishing["grad_within_sqrt_tau"] = max_gw <= np.sqrt(tau) + tol
    report["vanishing_on_gamma"] = vanishing

    if dec.params.N0 is not None:
        early = [c for c in dec.cubes if c.generation <= dec.params.N0]
        report["min_generation"] = {
            "N0": dec.params.N0,
            "ok": not early,
            "violations": [(c.generation, c.index) for c in early],
        }

    if dec.params.c0 is not None:
        violations = []
        worst = 0.0
        for c in dec.cubes:
            dist = float(np.hypot.reduce(np.asarray(c.center)))
            ratio = np.inf if dist == 0.0 else c.half_side / dist
            worst = max(worst, ratio)
            if ratio > dec.params.c0 + tol:
                violations.append((c.generation, c.index, ratio))
        report["center_distance"] = {
            "c0": dec.params.c0,
            "ok": not violations,
            "worst_ratio": worst,
            "violations": violations,
        }

    q_w2, q_gw2 = _stopping_quadratures(w)
    by_key = {(c.generation, c.index): c for c in dec.all_cubes()}

    def father_masses(cube: WhitneyCube):
        fk = cube.father_index()
        father = by_key[(cube.generation - 1, fk)]
        e = q_gw2.integrate(father.center, father.ball_radius)
        h = q_w2.integrate(father.center, father.ball_radius)
        return e, h

    excess_rows = []
    for c in dec.excess_cubes:
        if c.generation == 1:
            continue
        fe, fh = father_masses(c)
        denom = c.excess_integral
        if denom <= tol:
            continue
        excess_rows.append(
            {
                "generation": c.generation,
                "index": c.index,
                "height_constant": fh / (c.half_side**2 * denom),
                "excess_constant": fe / denom,
            }
        )
    height_rows = []
    for c in dec.height_cubes:
        if c.generation == 1:
            continue
        fe, fh = father_masses(c)
        denom = c.height_integral
        if denom <= tol:
            continue
        height_rows.append(
            {
                "generation": c.generation,
                "index": c.index,
                "height_constant": fh / denom,
                "excess_constant": fe * c.half_side**2 / denom,
            }
        )
    report["excess_father_comparison"] = {
        "rows": excess_rows,
        "max_height_constant": max(
            (r["height_constant"] for r in excess_rows), default=0.0
        ),
        "max_excess_constant": max(
            (r["excess_constant"] for r in excess_rows), default=0.0
        ),
    }
    report["height_father_comparison"] = {
        "rows": height_rows,
        "max_height_constant": max(
            (r["height_constant"] for r in height_rows), default=0.0
        ),
        "max_excess_constant": max(
            (r["excess_constant"] for r in height_rows), default=0.0
        ),
    }
    return report


def doubling_predicates(w: ScalarField, x, r: float, C: float) -> dict:
    """Ratio checks feeding the two three-annuli growth lemmas.

    With E_rho the gradient mass and H_rho the L2 mass of B_rho(x) clipped
    to the half-ball, the first lemma's hypotheses read
    E_{3r} <= C * E_r and H_{3r} <= C * r^2 * E_r, and the second lemma's
    read r^2 * E_{3r} <= C * H_r and H_{3r} <= C * H_r.  Zero denominators
    are flagged degenerate instead of dividing.
    """
    if r <= 0:
        raise ValueError("radius must be positive")
    q_w2, q_gw2 = _stopping_quadratures(w)
    e_r = q_gw2.integrate(x, r)
    e_3r = q_gw2.integrate(x, 3 * r)
    h_r = q_w2.integrate(x, r)
    h_3r = q_w2.integrate(x, 3 * r)
    tiny = 1e-300

    def ratio(num: float, den: float):
        if den <= tiny:
            return None
        return num / den

    ratios = {
        "grad_doubling": ratio(e_3r, e_r),
        "height_over_grad": ratio(h_3r, r**2 * e_r),
        "grad_over_height": ratio(r**2 * e_3r, h_r),
        "height_doubling": ratio(h_3r, h_r),
    }
    flags = {name: (val is not None and val <= C) for name, val in ratios.items()}
    degenerate = {name: val is None for name, val in ratios.items()}
    return {
        "masses": {"grad_r": e_r, "grad_3r": e_3r, "height_r": h_r, "height_3r": h_3r},
        "ratios": ratios,
        "within_C": flags,
        "degenerate": degenerate,
        "lemma_I": flags["grad_doubling"] and flags["height_over_grad"],
        "lemma_II": flags["grad_over_height"] and flags["height_doubling"],
    }


def predict_stopping_generation(
    w: ScalarField, params: WhitneyParams, homogeneity: float
) -> int:
    """Scaling-law prediction of the stopping generation at the origin for a
    field of homogeneity degree q = `homogeneity`.

    For the origin-centered cube of half-side l, the gradient mass of the
    associated ball scales like l^{d+2q-2} and the L2 mass like l^{d+2q};
    both are calibrated against the measured generation-1 integrals (which
    absorb the domain clipping and the angular profile) and extrapolated
    down the generations.  The stopping-time rule classifies the first
    generation at which either extrapolated mass reaches its threshold, so
    the predicted stopping generation is one past that; if neither test
    ever fires within the cap, the origin survives and j_max + 1 is
    returned.
    """
    g = w.grid
    d = g.d
    q_w2, q_gw2 = _stopping_quadratures(w)
    origin = (0.0,) * d
    p_excess = d + 2 * homogeneity - 2
    p_height = d + 2 * homogeneity
    # The generation-1 ball (radius 3/2) is clipped by the domain, so it is
    # measured directly; deeper generations follow the homogeneous scaling
    # law calibrated at the unclipped radius 1/2.
    e1 = q_gw2.integrate(origin, 1.5)
    h1 = q_w2.integrate(origin, 1.5)
    r_cal = 0.5
    e_cal = q_gw2.integrate(origin, r_cal)
    h_cal = q_w2.integrate(origin, r_cal)
    for j in range(1, params.j_max + 1):
        half = 3.0 ** (1 - j) / 2.0
        if j == 1:
            e_pred, h_pred = e1, h1
        else:
            ball = 3.0 * half
            e_pred = e_cal * (ball / r_cal) ** p_excess
            h_pred = h_cal * (ball / r_cal) ** p_height
        if e_pred >= params.excess_threshold(half, d):
            return j + 1
        if h_pred >= params.height_threshold(half, d):
            return j + 1
    return params.j_max + 1


def observed_stopping_generation(dec: WhitneyDecomposition, x=None) -> int:
    """One past the generation of the classified cube containing the point
    (default: origin); j_max + 1 when the point survives to the end."""
    if x is None:
        x = (0.0,) * dec.grid.d
    for c in dec.cubes:
        if c.contains_point(x, tol=1e-12):
            return c.generation + 1
    return dec.params.j_max + 1
