"""Analytic obstacle, harmonic Cauchy extension, flow map, coefficients."""

import numpy as np
import pytest

from bernlab.obstacle import (
    AnalyticObstacle,
    CoefficientSet,
    assemble_coefficients,
    check_flow_invariants,
    ck_extend,
    flow_map,
)


@pytest.fixture(scope="module")
def parabola_ext():
    return ck_extend(AnalyticObstacle([0.0, 0.0, 0.1]), order=8)


@pytest.fixture(scope="module")
def parabola_flow(parabola_ext):
    x1 = np.linspace(-0.5, 0.5, 41)
    return flow_map(parabola_ext, x1, dt=1e-3)


def test_flat_obstacle_extension_is_vertical_coordinate():
    ext = ck_extend(AnalyticObstacle.flat(), order=8)
    expected = np.zeros_like(ext.coeffs)
    expected[0, 1] = 1.0
    assert np.array_equal(ext.coeffs, expected)


def test_obstacle_value_slope():
    ob = AnalyticObstacle([0.0, 0.0, 0.1])
    assert ob.value(0.2) == pytest.approx(0.004)
    assert ob.slope(0.2) == pytest.approx(0.04)
    assert not ob.is_flat
    assert AnalyticObstacle.flat().is_flat


def test_extension_is_harmonic(parabola_ext):
    lap = parabola_ext.laplacian_coeffs()
    assert np.max(np.abs(lap)) < 1e-12


def test_extension_cauchy_data_on_graph(parabola_ext):
    """m vanishes on the graph and its inward normal derivative is one."""
    x1 = np.linspace(-0.3, 0.3, 61)
    r_val, r_norm = parabola_ext.boundary_residuals(x1)
    assert np.max(np.abs(r_val)) < 1e-8
    assert np.max(np.abs(r_norm)) < 1e-8


def test_extension_validity_radius(parabola_ext):
    assert parabola_ext.validity_radius(tol=1e-6) > 0.2


def test_flow_dt_guard(parabola_ext):
    with pytest.raises(ValueError):
        flow_map(parabola_ext, np.linspace(-0.3, 0.3, 11), dt=0.5)


def test_flow_invariants(parabola_flow, parabola_ext):
    inv = check_flow_invariants(parabola_flow, parabola_ext)
    assert inv["level"] <= 1e-8
    assert inv["metric0"] <= 1e-8
    assert inv["orthogonality"] <= 1e-6
    assert inv["conservation"] <= 1e-6


def test_identity_coefficients(grid32, identity32):
    cs = identity32
    assert cs.is_identity
    assert cs.eigenvalue_range() == (1.0, 1.0)
    vec = np.stack(grid32.coords)
    assert np.array_equal(cs.apply_M(vec), vec)
    assert np.max(np.abs(cs.Q)) == 0.0
    # F reproduces the position field when M is the identity
    for i in range(grid32.d):
        assert np.array_equal(cs.F[i], grid32.coords[i])


def test_coefficient_validation(grid32, identity32):
    base = identity32
    M = base.M.copy()
    M[0, 1] += 0.5  # breaks symmetry
    with pytest.raises(ValueError):
        CoefficientSet(grid32, M, base.S, base.Q, base.mu, base.F)
    Q = base.Q.copy()
    Q[grid32.flat_node_mask] = 1.0
    with pytest.raises(ValueError):
        CoefficientSet(grid32, base.M, base.S, Q, base.mu, base.F)
    mu = base.mu.copy()
    mu[grid32.origin_index] = -1.0
    with pytest.raises(ValueError):
        CoefficientSet(grid32, base.M, base.S, base.Q, mu, base.F)


def test_assemble_flat_gives_identity(grid32):
    ext = ck_extend(AnalyticObstacle.flat(), order=4)
    cs = assemble_coefficients(None, ext, grid32)
    assert cs.is_identity


def test_assemble_curved_coefficients(grid32, parabola_flow, parabola_ext):
    cs = assemble_coefficients(parabola_flow, parabola_ext, grid32)
    assert not cs.is_identity
    lo, hi = cs.eigenvalue_range()
    assert 0.5 < lo <= hi < 2.0
    m = grid32.in_mask
    assert np.all(cs.mu[m] > 0)
    assert np.max(np.abs(cs.Q[grid32.flat_node_mask])) < 1e-8
    # mild curvature: coefficients stay near the identity on the patch
    assert abs(hi - 1.0) < 0.5 and abs(lo - 1.0) < 0.5


def test_assemble_patch_scale_guard(grid32, parabola_flow, parabola_ext):
    with pytest.raises(ValueError):
        assemble_coefficients(
            parabola_flow, parabola_ext, grid32,
            patch_scale=parabola_flow.extent * 10,
        )


def test_flow_jacobian_positive(parabola_flow):
    assert np.all(parabola_flow.jacobian_det > 0)
