"""Frequency function: reports, identities, monotone scan, inequalities."""

import numpy as np
import pytest

from bernlab.blowup import default_catalog
from bernlab.frequency import (
    CutoffProfile,
    FrequencyConstants,
    error_term_report,
    frequency_report,
    height_derivative_identity,
    inequality_diagnostics,
    inner_variation_identity,
    monotonicity_scan,
    outer_variation_identity,
)
from bernlab.grid import ScalarField
from conftest import random_polynomial_field


def test_cutoff_validation():
    with pytest.raises(ValueError):
        CutoffProfile(upsilon=0.5)
    with pytest.raises(ValueError):
        CutoffProfile(upsilon=1.0)
    c = CutoffProfile(upsilon=0.9)
    assert c.value(0.5) == 1.0
    assert c.value(1.1) == 0.0
    assert c.value(0.95) == pytest.approx(0.5)
    assert c.slope(0.95) == pytest.approx(-10.0)


def test_constants_validation():
    with pytest.raises(ValueError):
        FrequencyConstants(kappa=1.5)
    with pytest.raises(ValueError):
        FrequencyConstants(kappa=0.0)
    FrequencyConstants(C=2.0, kappa=0.5)


def test_radius_guard(vertical_field64, identity64):
    with pytest.raises(ValueError):
        frequency_report(vertical_field64, identity64, 0.0)
    with pytest.raises(ValueError):
        frequency_report(vertical_field64, identity64, 1.5)


def test_vertical_field_report(vertical_field64, identity64):
    rep = frequency_report(vertical_field64, identity64, 0.5)
    assert rep.N == pytest.approx(1.0, abs=2e-3)
    assert rep.B == pytest.approx(rep.H, rel=1e-10)
    assert rep.D_b == 0.0
    assert not rep.degenerate
    assert rep.H > 0 and rep.D > 0 and rep.G > 0


def test_homogeneous_catalog_frequencies(grid64, identity64):
    """Frequency at r = 1/2 recovers the homogeneity degree of every
    catalog profile within a percent."""
    for orc in default_catalog():
        rep = frequency_report(orc.field(grid64), identity64, 0.5)
        assert rep.N == pytest.approx(orc.degree, rel=0.01), orc.kind


def test_height_derivative_identity(vertical_field64, identity64, thin_solution64):
    assert height_derivative_identity(vertical_field64, identity64, 0.5) < 1e-4
    assert height_derivative_identity(thin_solution64.w, identity64, 0.5) < 1e-2


def test_outer_variation(thin_solution64, identity64):
    out = outer_variation_identity(thin_solution64, identity64, 0.5)
    assert abs(out["gateaux_residual"]) < 1e-8
    assert out["assembled_residual"] < 5e-2


def test_inner_variation(thin_solution64, identity64):
    out = inner_variation_identity(thin_solution64, identity64, 0.5)
    assert abs(out["gateaux_residual"]) < 1e-8
    assert out["assembled_residual"] < 5e-2
    # the two realizations of the same first variation agree
    assert out["pushforward_derivative"] == pytest.approx(
        out["gateaux_residual"], abs=1e-2
    )


def test_monotonicity_scan(thin_solution64, identity64):
    scan = monotonicity_scan(
        thin_solution64.w, identity64, np.linspace(0.25, 0.75, 30),
        slack=1e-2,
    )
    assert min(scan["N"]) > 1.45 and max(scan["N"]) < 1.55
    assert scan["minimal_C"] <= 1.0
    assert scan["N_origin_estimate"] == pytest.approx(1.5, abs=0.05)
    assert not scan["truncated"]
    assert len(scan["reports"]) == 30


def test_scan_degenerate_everywhere(grid32, identity32):
    with pytest.raises(ValueError, match="degenerate"):
        monotonicity_scan(ScalarField.zeros(grid32), identity32, [0.3, 0.5])


def test_inequality_diagnostics(grid64, identity64, thin_solution64):
    rng = np.random.default_rng(7)
    fields = [thin_solution64.w, random_polynomial_field(grid64, rng)]
    for f in fields:
        diag = inequality_diagnostics(f, identity64, [0.3, 0.5, 0.7])
        assert diag["C_mu"] == 1.0
        for row in diag["rows"]:
            assert row["trace_ok"]
            assert row["height_integral_ok"]
            assert row["height_integral_constant"] <= 1.0 + 1e-12


def test_error_term_report_structure(vertical_field64, identity64):
    rep = error_term_report(vertical_field64, identity64, [0.4, 0.6])
    assert set(rep) == {"rows", "fits"}
    assert len(rep["rows"]) == 2
    for fit in rep["fits"].values():
        assert np.isfinite(fit["C"])
