"""Acceptance suite: one test per headline requirement, with the agreed
tolerances pinned.  Each test prints a summary line with the measured
numbers (visible with -s or in failure output)."""

import json
import time
from math import comb

import numpy as np
import pytest
from numpy.polynomial import polynomial as P

from bernlab.blowup import classify_blowup, oracle, rescale
from bernlab.cli import main as cli_main
from bernlab.frequency import (
    CutoffProfile,
    frequency_report,
    height_derivative_identity,
    inequality_diagnostics,
    inner_variation_identity,
    monotonicity_scan,
    outer_variation_identity,
)
from bernlab.grid import HalfBallGrid, ScalarField, read_field_csv
from bernlab.obstacle import (
    AnalyticObstacle,
    CoefficientSet,
    check_flow_invariants,
    ck_extend,
    flow_map,
)
from bernlab.signorini import (
    NonlinearityModel,
    SolverParams,
    ThinObstacleProblem,
    minimize_thin_obstacle,
)
from bernlab.whitney import (
    WhitneyParams,
    check_whitney_properties,
    doubling_predicates,
    observed_stopping_generation,
    predict_stopping_generation,
    whitney_decompose,
)
from conftest import random_polynomial_field

ORACLES = [
    ("sin-half", 1.5),
    ("cos-even", 2.0),
    ("sin-odd", 3.0),
    ("sin-half", 3.5),
]


@pytest.fixture(scope="module")
def grid256():
    return HalfBallGrid(d=2, n=256)


def test_criterion_1_homogeneous_frequency_suite(grid256):
    """Frequency of each homogeneous reference profile recovers its degree
    within 2% on every scan radius, varies by at most 1% across radii, and
    each profile's scan completes within 10 seconds."""
    ident = CoefficientSet.identity(grid256)
    cutoff = CutoffProfile(upsilon=0.9)
    radii = [0.25, 0.35, 0.45, 0.55, 0.65, 0.75]
    lines = []
    for kind, k in ORACLES:
        t0 = time.perf_counter()
        f = oracle(kind, k).field(grid256)
        Ns = [frequency_report(f, ident, r, cutoff).N for r in radii]
        dt = time.perf_counter() - t0
        rel_var = (max(Ns) - min(Ns)) / k
        lines.append(
            f"{kind}-{k}: N in [{min(Ns):.4f}, {max(Ns):.4f}], "
            f"relvar {rel_var:.2%}, {dt:.1f}s"
        )
        for r, N in zip(radii, Ns):
            assert 0.98 * k <= N <= 1.02 * k, (kind, k, r, N)
        assert rel_var <= 0.01, (kind, k, rel_var)
        assert dt <= 10.0, (kind, k, dt)
    print("criterion 1: PASS | " + " | ".join(lines))


def _odd_perturbation(grid, rng, amplitude=0.05):
    """Random odd-in-x1 polynomial vanishing at the origin, sup-normalized."""
    x1, xd = grid.coords
    c = rng.normal(size=3)
    vals = c[0] * x1 + c[1] * x1**3 + c[2] * x1 * xd**2
    sup = np.max(np.abs(vals[grid.in_mask]))
    return amplitude * np.where(grid.in_mask, vals, 0.0) / max(sup, 1e-300)


def test_criterion_2_almost_monotonicity(grid128, identity128):
    """For minimizers of each reference datum and of five odd perturbations
    of it, the corrected frequency is nondecreasing over 30 radii within
    slack 1e-2, and the minimal correction constant stays at most 1."""
    rng = np.random.default_rng(2024)
    radii = np.linspace(0.25, 0.75, 30)
    worst_C = 0.0
    for kind, k in ORACLES:
        base = oracle(kind, k).field(grid128).values
        data = [base] + [base + _odd_perturbation(grid128, rng) for _ in range(5)]
        for vals in data:
            prob = ThinObstacleProblem(
                identity128, NonlinearityModel.off(),
                ScalarField(grid128, np.where(grid128.in_mask, vals, 0.0)),
            )
            sol = minimize_thin_obstacle(prob)
            scan = monotonicity_scan(
                sol.w, identity128, radii, CutoffProfile(0.9), slack=1e-2
            )
            assert scan["minimal_C"] <= 1.0, (kind, k, scan["minimal_C"])
            worst_C = max(worst_C, scan["minimal_C"])
    print(f"criterion 2: PASS | minimal correction constant <= {worst_C:.3f}")


def test_criterion_3_variational_identities(grid128, identity128):
    """Height-derivative, outer- and inner-variation identities hold within
    5e-2 at r = 1/2 for the vertical profile and for converged minimizers,
    including the cubic correction energy."""
    tol_assembled = 5e-2
    v = ScalarField(
        grid128, np.where(grid128.in_mask, grid128.coords[-1], 0.0)
    )
    datum = oracle("sin-half", 1.5).field(grid128)
    sol = minimize_thin_obstacle(
        ThinObstacleProblem(identity128, NonlinearityModel.off(), datum)
    )
    lines = []
    for name, subject in [("vertical", v), ("minimizer", sol)]:
        w = subject if isinstance(subject, ScalarField) else subject.w
        hd = height_derivative_identity(w, identity128, 0.5)
        outer = outer_variation_identity(subject, identity128, 0.5)
        inner = inner_variation_identity(subject, identity128, 0.5)
        assert hd <= tol_assembled, (name, hd)
        assert outer["assembled_residual"] <= tol_assembled
        assert inner["assembled_residual"] <= tol_assembled
        lines.append(
            f"{name}: height {hd:.2e}, outer {outer['assembled_residual']:.2e}, "
            f"inner {inner['assembled_residual']:.2e}"
        )
        if not isinstance(subject, ScalarField):
            assert abs(outer["gateaux_residual"]) <= 1e-8
            assert abs(inner["gateaux_residual"]) <= 1e-8

    # cubic correction energy: first variations vanish at the minimizer
    tol = 1e-6
    cubic_datum = ScalarField(grid128, 0.2 * datum.values)
    cubic_prob = ThinObstacleProblem(
        identity128, NonlinearityModel.default_cubic(), cubic_datum
    )
    cubic_sol = minimize_thin_obstacle(
        cubic_prob, SolverParams(tol=tol, max_iter=6000)
    )
    go = outer_variation_identity(cubic_sol, identity128, 0.5)["gateaux_residual"]
    gi = inner_variation_identity(cubic_sol, identity128, 0.5)["gateaux_residual"]
    assert abs(go) <= 10 * tol and abs(gi) <= 10 * tol, (go, gi)
    lines.append(f"cubic: outer {go:.2e}, inner {gi:.2e}")
    print("criterion 3: PASS | " + " | ".join(lines))


def test_criterion_4_flow_invariants():
    """The flattening flow of the parabolic boundary preserves its level,
    orthogonality and conserved quantities to the stated thresholds."""
    ext = ck_extend(AnalyticObstacle([0.0, 0.0, 0.1]), order=8)
    flow = flow_map(ext, np.linspace(-0.5, 0.5, 65), dt=1e-3)
    inv = check_flow_invariants(flow, ext)
    assert inv["level"] <= 1e-8
    assert inv["metric0"] <= 1e-8
    assert inv["orthogonality"] <= 1e-6
    assert inv["conservation"] <= 1e-6
    print(
        "criterion 4: PASS | "
        + ", ".join(f"{k} {val:.2e}" for k, val in sorted(inv.items()))
    )


def _lstsq_extension_table(phi_coeffs, order):
    """Independent oracle: harmonic polynomial of the given order whose two
    boundary conditions Taylor-match along the graph, found by least squares
    over a harmonic basis (real/imaginary parts of (x1 + i x2)^k)."""
    phi = np.asarray(phi_coeffs, dtype=float)
    basis = []
    for k in range(order + 1):
        re = np.zeros((order + 1, order + 1))
        im = np.zeros((order + 1, order + 1))
        for j in range(k + 1):
            c = comb(k, j)
            if j % 4 == 0:
                re[k - j, j] += c
            elif j % 4 == 1:
                im[k - j, j] += c
            elif j % 4 == 2:
                re[k - j, j] -= c
            else:
                im[k - j, j] -= c
        basis.append(re)
        if k >= 1:
            basis.append(im)

    width = 4 * order + 8

    def along_graph(tab):
        out = np.zeros(width)
        for j in range(tab.shape[0]):
            for k in range(tab.shape[1]):
                if tab[j, k] == 0:
                    continue
                p = np.array([tab[j, k]])
                for _ in range(k):
                    p = P.polymul(p, phi)
                p = np.concatenate([np.zeros(j), p])
                n = min(width, len(p))
                out[:n] += p[:n]
        return out

    dphi = P.polyder(phi)
    u = np.asarray(P.polymul(dphi, dphi))
    sqrt_series = np.zeros(width)
    sqrt_series[0] = 1.0
    sqrt_series[: len(u)] += 0.5 * u
    u2 = np.asarray(P.polymul(u, u))
    sqrt_series[: len(u2)] -= 0.125 * u2

    n_val, n_norm = order + 2, order  # matched Taylor orders per condition
    cols_val, cols_norm = [], []
    for tab in basis:
        cols_val.append(along_graph(tab)[:n_val])
        dx, dy = P.polyder(tab, axis=0), P.polyder(tab, axis=1)
        expr = np.zeros(width)
        pm = np.asarray(P.polymul(dphi, along_graph(dx)[: width - 2]))
        expr[: min(width, len(pm))] += pm[:width]
        expr -= along_graph(dy)
        cols_norm.append(expr[:n_norm])
    A = np.concatenate([np.array(cols_val).T, np.array(cols_norm).T])
    b = np.concatenate([np.zeros(n_val), -sqrt_series[:n_norm]])
    sol, _, _, _ = np.linalg.lstsq(A, b, rcond=None)
    return sum(c * t for c, t in zip(sol, basis))


def test_criterion_5_cauchy_extension():
    """The flat boundary extends to exactly the vertical coordinate; the
    parabolic boundary's order-4 extension matches an independently fitted
    harmonic polynomial to 1e-6 relative accuracy."""
    flat = ck_extend(AnalyticObstacle.flat(), order=8)
    expected = np.zeros_like(flat.coeffs)
    expected[0, 1] = 1.0
    assert np.array_equal(flat.coeffs, expected)

    ext = ck_extend(AnalyticObstacle([0.0, 0.0, 0.1]), order=4)
    fit = _lstsq_extension_table([0.0, 0.0, 0.1], order=4)
    scale = np.max(np.abs(ext.coeffs))
    rel = np.max(np.abs(fit - ext.coeffs)) / scale
    assert rel <= 1e-6, rel
    print(f"criterion 5: PASS | flat exact, parabola rel diff {rel:.2e}")


def test_criterion_6_whitney_decomposition(grid64):
    """Stopping-time cubes exactly tile the slab for 20 random fields; the
    residual region of the 3/2 profile carries small field and gradient;
    stopping generations match the scaling prediction within one; the
    vertical profile's gradient mass triples per dimension exactly."""
    params = WhitneyParams(j_max=3)
    rng = np.random.default_rng(6)
    for i in range(20):
        f = random_polynomial_field(grid64, rng)
        rep = check_whitney_properties(whitney_decompose(f, params), f)
        assert rep["cover_disjoint"]["cover"], i
        assert rep["cover_disjoint"]["disjoint"], i

    h = grid64.h
    f32 = oracle("sin-half", 1.5).field(grid64)
    rep = check_whitney_properties(whitney_decompose(f32, params), f32)
    van = rep["vanishing_on_gamma"]
    assert van["max_abs_w"] <= 5 * h, van
    assert van["max_abs_grad_w"] <= 5 * np.sqrt(h), van

    preds = []
    for kind, k in ORACLES:
        f = oracle(kind, k).field(grid64)
        pred = predict_stopping_generation(f, params, homogeneity=k)
        obs = observed_stopping_generation(whitney_decompose(f, params))
        assert abs(pred - obs) <= 1, (kind, k, pred, obs)
        preds.append(f"{kind}-{k}: {obs} (pred {pred})")

    vert = ScalarField(
        grid64, np.where(grid64.in_mask, grid64.coords[-1], 0.0)
    )
    ratio = doubling_predicates(vert, (0.0, 0.0), 0.15, C=10.0)["ratios"][
        "grad_doubling"
    ]
    assert ratio == pytest.approx(3.0**grid64.d, rel=0.01), ratio
    print(
        f"criterion 6: PASS | 20 fields tiled, residual-set bounds ok, "
        f"stops {'; '.join(preds)}, doubling {ratio:.3f}"
    )


def test_criterion_7_supporting_inequalities(grid64, identity64):
    """Weighted trace and cumulative-height inequalities hold with their
    explicit constants for 50 random fields at three radii."""
    rng = np.random.default_rng(77)
    radii = [0.3, 0.5, 0.7]
    worst_trace, worst_height = 0.0, 0.0
    for i in range(50):
        f = random_polynomial_field(grid64, rng)
        diag = inequality_diagnostics(f, identity64, radii)
        assert diag["C_mu"] == 1.0
        for row in diag["rows"]:
            assert row["trace_ok"], (i, row)
            assert row["height_integral_ok"], (i, row)
            if row["trace_rhs"] > 0:
                worst_trace = max(worst_trace, row["trace_lhs"] / row["trace_rhs"])
            worst_height = max(worst_height, row["height_integral_constant"])
    print(
        f"criterion 7: PASS | worst trace ratio {worst_trace:.3f}, "
        f"worst height constant {worst_height:.3f}"
    )


def test_criterion_8_flat_pipeline(tmp_path):
    """End-to-end flat run at h = 1/128: the minimizer recovers the
    half-plane profile to 2h, the linearization stays below 4h, every flat
    footprint column is a branch point, all within 60 seconds."""
    n = 128
    out = tmp_path / "out"
    t0 = time.perf_counter()
    code = cli_main(["pipeline", "--n", str(n), "--output_dir", str(out)])
    dt = time.perf_counter() - t0
    assert code == 0
    assert dt <= 60.0, dt

    report = json.loads((out / "pipeline.json").read_text())
    status = {s["name"]: s["status"] for s in report["stages"]}
    for stage in ("solve", "coefficients", "hodograph", "signorini", "whitney"):
        assert status[stage] == "ok", (stage, status)

    u = read_field_csv(out / "u.csv")
    g = u.grid
    truth = np.maximum(g.coords[-1], 0.0)
    sup_u = float(np.max(np.abs(u.values[g.in_mask] - truth[g.in_mask])))
    assert sup_u <= 2.0 / n, sup_u

    w = read_field_csv(out / "w_thin.csv")
    sup_w = float(np.max(np.abs(w.values[w.grid.in_mask])))
    assert sup_w <= 4.0 / n, sup_w

    headline = report["headline"]
    flat_columns = int(np.count_nonzero(g.flat_node_mask))
    assert headline["branch_flat_nodes"] == flat_columns, headline
    print(
        f"criterion 8: PASS | sup|u - truth| {sup_u:.2e}, sup|w| {sup_w:.2e}, "
        f"branch {headline['branch_flat_nodes']}/{flat_columns}, {dt:.1f}s"
    )


def test_criterion_9_blowup_classification(grid128):
    """Each homogeneous profile's zoom sequence classifies as itself with
    relative misfit at most 1e-6, and the matched degree agrees with the
    frequency at the origin within 2%."""
    lines = []
    for kind, k in ORACLES:
        seq = rescale(oracle(kind, k).field(grid128), [0.5, 0.25])
        out = classify_blowup(seq)
        assert out["best_oracle"].kind == kind and out["best_oracle"].degree == k
        assert out["relative_misfit"] <= 1e-6, (kind, k, out["relative_misfit"])
        assert out["degree_consistent"], (kind, k, out["frequency_at_origin"])
        lines.append(
            f"{kind}-{k}: misfit {out['relative_misfit']:.1e}, "
            f"N(0+) {out['frequency_at_origin']:.3f}"
        )
    print("criterion 9: PASS | " + " | ".join(lines))
