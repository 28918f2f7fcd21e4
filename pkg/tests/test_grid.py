"""Half-ball grid, cut-cell quadrature, fields, and CSV round trips."""

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from bernlab.grid import (
    BallQuadrature,
    HalfBallGrid,
    ScalarField,
    ball_integrate,
    boundary_integrate_flat,
    disk_box_area,
    gradient,
    integrate,
    read_field_csv,
    sphere_integral,
    write_field_csv,
)
from conftest import masked_field, random_polynomial_field


def test_grid_validation():
    with pytest.raises(ValueError):
        HalfBallGrid(d=4)
    with pytest.raises(ValueError):
        HalfBallGrid(d=2, n=4)


def test_grid_geometry(grid64):
    g = grid64
    assert g.shape == (129, 65)
    assert g.h == 1.0 / 64
    assert g.axes[0][0] == -1.0 and g.axes[0][-1] == 1.0
    assert g.axes[1][0] == 0.0 and g.axes[1][-1] == 1.0
    # cell weights are volume fractions
    assert np.all(g.cell_weights >= 0) and np.all(g.cell_weights <= 1)


def test_domain_volume_exact_2d(grid64):
    """Cut-cell weights integrate the half-disk area exactly in 2-D."""
    vol = integrate(ScalarField.constant(grid64, 1.0))
    assert abs(vol - np.pi / 2) < 1e-12


def test_domain_volume_3d():
    g = HalfBallGrid(d=3, n=16)
    vol = integrate(ScalarField.constant(g, 1.0))
    # 3-D cut cells are subcell-sampled: O(h^2)-accurate volume
    assert abs(vol - 2 * np.pi / 3) < 5e-3


def test_scalar_field_validation(grid32):
    with pytest.raises(ValueError):
        ScalarField(grid32, np.zeros((3, 3)))
    bad = np.zeros(grid32.shape)
    bad[grid32.origin_index] = np.nan
    with pytest.raises(ValueError):
        ScalarField(grid32, bad)


def test_gradient_exact_for_affine(grid64):
    f = masked_field(grid64, lambda x1, xd: 0.3 * x1 - 0.7 * xd + 2.0)
    gr = gradient(f)
    m = grid64.in_mask
    assert np.max(np.abs(gr[0][m] - 0.3)) < 1e-12
    assert np.max(np.abs(gr[1][m] + 0.7)) < 1e-12


def test_disk_box_area_limits():
    # box fully inside the unit disk
    assert disk_box_area(-0.1, 0.1, -0.1, 0.1) == pytest.approx(0.04, abs=1e-14)
    # box fully outside
    assert disk_box_area(2.0, 3.0, 2.0, 3.0) == 0.0
    # whole plane box captures the disk area
    assert disk_box_area(-2, 2, -2, 2) == pytest.approx(np.pi, rel=1e-12)


def test_ball_integrate_constant(grid64):
    one = ScalarField.constant(grid64, 1.0)
    for r in (0.3, 0.5, 0.75):
        val = ball_integrate(one, (0.0, 0.0), r)
        assert val == pytest.approx(np.pi * r * r / 2, rel=2e-3)


def test_ball_quadrature_matches_function(grid64):
    """Cached per-ball quadrature agrees with the one-shot entry point."""
    rng = np.random.default_rng(3)
    f = random_polynomial_field(grid64, rng)
    quad = BallQuadrature(f)
    for center, r in [((0.0, 0.0), 0.5), ((0.2, 0.1), 0.3), ((-0.4, 0.0), 0.45)]:
        assert quad.integrate(center, r) == pytest.approx(
            ball_integrate(f, center, r), abs=1e-14
        )


def test_ball_quadrature_nested_monotone(grid64):
    f = ScalarField.constant(grid64, 1.0)
    quad = BallQuadrature(f)
    vals = [quad.integrate((0.0, 0.0), r) for r in (0.2, 0.4, 0.6, 0.8)]
    assert all(b > a for a, b in zip(vals, vals[1:]))


@settings(max_examples=20, deadline=None)
@given(
    r=st.floats(min_value=0.15, max_value=0.8),
    cx=st.floats(min_value=-0.3, max_value=0.3),
)
def test_ball_quadrature_constant_area_property(r, cx):
    g = HalfBallGrid(d=2, n=32)
    quad = BallQuadrature(ScalarField.constant(g, 1.0))
    val = quad.integrate((cx, 0.0), r)
    exact = np.pi * r * r / 2  # ball centered on the flat boundary
    if abs(cx) + r <= 1.0:
        assert val == pytest.approx(exact, rel=0.05)


def test_sphere_integral_constant(grid64):
    one = ScalarField.constant(grid64, 1.0)
    for r in (0.3, 0.6):
        assert sphere_integral(one, r) == pytest.approx(np.pi * r, rel=1e-3)


def test_boundary_integrate_flat(grid64):
    f = masked_field(grid64, lambda x1, xd: np.ones_like(x1))
    # plain integral over the flat segment of radius r: length 2r
    assert boundary_integrate_flat(f, 0.5) == pytest.approx(1.0, rel=5e-2)
    with pytest.raises(ValueError):
        boundary_integrate_flat(f, 0.0)


def test_field_csv_round_trip(tmp_path, grid32):
    rng = np.random.default_rng(11)
    f = random_polynomial_field(grid32, rng)
    path = tmp_path / "field.csv"
    write_field_csv(f, path)
    assert path.with_suffix(".csv.json").exists()
    back = read_field_csv(path)
    assert back.grid == grid32
    m = grid32.in_mask
    assert np.array_equal(back.values[m], f.values[m])


def test_field_csv_header_guard(tmp_path, grid32):
    path = tmp_path / "bad.csv"
    path.write_text("x1,value\n0.0,1.0\n")
    with pytest.raises(ValueError):
        read_field_csv(path, grid32)
