"""Thin-obstacle (unilateral trace constraint) minimization."""

import numpy as np
import pytest

from bernlab.blowup import oracle
from bernlab.grid import ScalarField
from bernlab.signorini import (
    NonlinearityModel,
    SolverParams,
    ThinObstacleProblem,
    minimize_thin_obstacle,
    validate_assumptions,
    vi_residual,
)


def test_zero_datum_gives_zero(grid32, identity32):
    prob = ThinObstacleProblem(
        identity32, NonlinearityModel.off(), ScalarField.zeros(grid32)
    )
    sol = minimize_thin_obstacle(prob)
    assert np.max(np.abs(sol.w.values)) == 0.0
    assert sol.energy == 0.0


def test_oracle_datum_reproduces_oracle(thin_solution64, grid64):
    """The 3/2-homogeneous profile solves the continuum problem, so the
    discrete minimizer with its trace as datum must reproduce it."""
    truth = oracle("sin-half", 1.5).field(grid64).values
    m = grid64.in_mask
    err = np.max(np.abs(thin_solution64.w.values[m] - truth[m]))
    assert err < 5e-4
    assert thin_solution64.converged
    assert thin_solution64.kkt_residual <= thin_solution64.solver_tolerance


def test_kkt_structure(thin_solution64):
    sol = thin_solution64
    prob = sol.problem
    w = sol.w.values
    # trace constraint holds
    assert np.min(w[prob.constrained_mask]) >= -1e-12
    # no admissible descent direction remains
    assert vi_residual(sol) >= -1e-8
    # contact nodes sit on the flat boundary only
    assert np.all(prob.constrained_mask[sol.active_nodes])


def test_active_set_has_contact(thin_solution64, grid64):
    nodes = thin_solution64.active_set_nodes()
    assert len(nodes) > 0
    flat = grid64.flat_node_mask
    for idx in map(tuple, nodes):
        assert flat[idx]


def test_validate_assumptions(thin_solution64):
    rep = validate_assumptions(thin_solution64.w)
    assert rep["branching_normalization"]
    assert rep["nondegenerate"]
    assert abs(rep["w_origin"]) < 1e-8
    assert all(a <= b + 1e-14 for a, b in zip(rep["height_integrals"],
                                              rep["height_integrals"][1:]))


def test_lipschitz_cap_enforced(grid32, identity32):
    steep = oracle("sin-half", 1.5).field(grid32)
    with pytest.raises(ValueError, match="Lipschitz"):
        ThinObstacleProblem(identity32, NonlinearityModel.default_cubic(), steep)
    # the cap only applies when the correction energy is on
    ThinObstacleProblem(identity32, NonlinearityModel.off(), steep)


def test_cubic_correction_path(grid32, identity32):
    datum = ScalarField(grid32, 0.1 * oracle("sin-half", 1.5).field(grid32).values)
    prob = ThinObstacleProblem(identity32, NonlinearityModel.default_cubic(), datum)
    sol = minimize_thin_obstacle(prob, SolverParams(tol=1e-6, max_iter=4000))
    assert sol.converged
    assert sol.kkt_residual <= 1e-6
    assert sol.energy_correction != 0.0
    assert np.min(sol.w.values[prob.constrained_mask]) >= -1e-12


def test_active_set_rejects_nonlinearity(grid32, identity32):
    datum = ScalarField(grid32, 0.1 * oracle("sin-half", 1.5).field(grid32).values)
    prob = ThinObstacleProblem(identity32, NonlinearityModel.default_cubic(), datum)
    with pytest.raises(ValueError, match="linear"):
        minimize_thin_obstacle(prob, SolverParams(method="active_set"))


def test_determinism(grid32, identity32):
    datum = oracle("cos-even", 2.0).field(grid32)
    a = minimize_thin_obstacle(
        ThinObstacleProblem(identity32, NonlinearityModel.off(), datum)
    ).w.values
    b = minimize_thin_obstacle(
        ThinObstacleProblem(identity32, NonlinearityModel.off(), datum)
    ).w.values
    assert np.array_equal(a, b)


def test_energy_split_consistency(thin_solution64):
    sol = thin_solution64
    assert sol.energy == sol.energy_quadratic + sol.energy_correction
    assert sol.energy_correction == 0.0  # linear baseline
    assert sol.energy_quadratic > 0.0
