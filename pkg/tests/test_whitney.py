"""Triadic stopping-time decomposition and doubling diagnostics."""

import numpy as np
import pytest

from bernlab.blowup import oracle
from bernlab.grid import ScalarField
from bernlab.whitney import (
    WhitneyParams,
    check_whitney_properties,
    doubling_predicates,
    observed_stopping_generation,
    predict_stopping_generation,
    whitney_decompose,
)
from conftest import random_polynomial_field


def test_params_validation():
    with pytest.raises(ValueError):
        WhitneyParams(C0=0.0)
    with pytest.raises(ValueError):
        WhitneyParams(alpha=0.5)
    with pytest.raises(ValueError):
        WhitneyParams(j_max=0)


def test_resolution_guard(grid32):
    with pytest.raises(ValueError, match="under-resolves"):
        whitney_decompose(ScalarField.zeros(grid32), WhitneyParams(j_max=6))


def test_cover_and_disjoint_random(grid64):
    rng = np.random.default_rng(20)
    for _ in range(5):
        f = random_polynomial_field(grid64, rng)
        dec = whitney_decompose(f, WhitneyParams(j_max=3))
        rep = check_whitney_properties(dec, f)
        assert rep["cover_disjoint"]["cover"]
        assert rep["cover_disjoint"]["disjoint"]


def test_zero_field_never_classifies(grid64):
    dec = whitney_decompose(ScalarField.zeros(grid64), WhitneyParams(j_max=3))
    assert dec.cubes == []
    assert len(dec.residual_cubes) > 0
    # the residual set then carries the whole slab
    assert np.array_equal(dec.gamma_nodes, grid64.in_mask)


def test_residual_set_vanishing(grid64):
    """Residual cubes of the 3/2-homogeneous profile trap the region where
    the field and its gradient are small."""
    f = oracle("sin-half", 1.5).field(grid64)
    dec = whitney_decompose(f, WhitneyParams(j_max=3))
    tau = 5 * grid64.h
    rep = check_whitney_properties(dec, f, tau=tau)
    assert rep["vanishing_on_gamma"]["w_within_tau"]
    assert rep["vanishing_on_gamma"]["grad_within_sqrt_tau"]


def test_doubling_vertical_field(vertical_field64):
    """w = x_d is 1-homogeneous: gradient mass of B_{3r} is 3^d times that
    of B_r, and the height mass picks up two extra powers of three."""
    g = vertical_field64.grid
    d = g.d
    rep = doubling_predicates(vertical_field64, (0.0,) * d, 0.15, C=30.0)
    assert rep["ratios"]["grad_doubling"] == pytest.approx(3.0**d, rel=0.01)
    assert rep["ratios"]["height_doubling"] == pytest.approx(3.0 ** (d + 2), rel=0.02)
    assert rep["lemma_I"]
    with pytest.raises(ValueError):
        doubling_predicates(vertical_field64, (0.0,) * d, 0.0, C=1.0)


def test_doubling_homogeneous_scaling(grid64):
    """An l-homogeneous field doubles the gradient mass by 3^{d+2l-2}."""
    for k in (1.5, 2.0):
        f = oracle("sin-half" if k == 1.5 else "cos-even", k).field(grid64)
        rep = doubling_predicates(f, (0.0, 0.0), 0.15, C=100.0)
        assert rep["ratios"]["grad_doubling"] == pytest.approx(
            3.0 ** (2 + 2 * k - 2), rel=0.02
        )


def test_doubling_degenerate_flag(grid64):
    z = ScalarField.zeros(grid64)
    rep = doubling_predicates(z, (0.0, 0.0), 0.2, C=10.0)
    assert all(rep["degenerate"].values())
    assert not rep["lemma_I"] and not rep["lemma_II"]


def test_stopping_generation_prediction(grid64):
    """Observed stopping generation at the origin matches the scaling-law
    prediction within one generation for every homogeneous profile."""
    cases = [("sin-half", 1.5), ("cos-even", 2.0), ("sin-odd", 3.0)]
    params = WhitneyParams(j_max=3)
    for kind, k in cases:
        f = oracle(kind, k).field(grid64)
        pred = predict_stopping_generation(f, params, homogeneity=k)
        obs = observed_stopping_generation(whitney_decompose(f, params))
        assert abs(pred - obs) <= 1, (kind, k, pred, obs)


def test_region_monotone_in_threshold(grid64):
    """Raising C0 makes classification harder, so the classified region
    shrinks (as a set of finest-generation cells)."""
    rng = np.random.default_rng(4)
    f = random_polynomial_field(grid64, rng)
    lo = whitney_decompose(f, WhitneyParams(C0=0.5, j_max=3))
    hi = whitney_decompose(f, WhitneyParams(C0=2.0, j_max=3))
    assert hi.classified_cell_set() <= lo.classified_cell_set()


def test_no_classified_ancestors(grid64):
    f = oracle("cos-even", 2.0).field(grid64)
    dec = whitney_decompose(f, WhitneyParams(j_max=3))
    classified = {(c.generation, c.index) for c in dec.cubes}
    for c in dec.cubes + dec.residual_cubes:
        cube = c
        while cube.generation > 1:
            parent = (cube.generation - 1, cube.father_index)
            assert parent not in classified
            cube = type(c)(cube.generation - 1, cube.father_index,
                           "subdivided", 0.0, 0.0)
