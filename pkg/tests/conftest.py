"""Shared fixtures: small grids, identity coefficients, reference fields."""

from __future__ import annotations

import numpy as np
import pytest

from bernlab.grid import HalfBallGrid, ScalarField
from bernlab.obstacle import CoefficientSet


@pytest.fixture(scope="session")
def grid32() -> HalfBallGrid:
    return HalfBallGrid(d=2, n=32)


@pytest.fixture(scope="session")
def grid64() -> HalfBallGrid:
    return HalfBallGrid(d=2, n=64)


@pytest.fixture(scope="session")
def grid128() -> HalfBallGrid:
    return HalfBallGrid(d=2, n=128)


@pytest.fixture(scope="session")
def identity32(grid32) -> CoefficientSet:
    return CoefficientSet.identity(grid32)


@pytest.fixture(scope="session")
def identity64(grid64) -> CoefficientSet:
    return CoefficientSet.identity(grid64)


@pytest.fixture(scope="session")
def identity128(grid128) -> CoefficientSet:
    return CoefficientSet.identity(grid128)


def masked_field(grid: HalfBallGrid, fn) -> ScalarField:
    vals = np.asarray(fn(*grid.coords), dtype=float)
    return ScalarField(grid, np.where(grid.in_mask, vals, 0.0))


def random_polynomial_field(
    grid: HalfBallGrid, rng: np.random.Generator, degree: int = 3
) -> ScalarField:
    """Seeded random polynomial in the coordinates, masked to the domain."""
    vals = np.zeros(grid.shape)
    for _ in range(4):
        powers = rng.integers(0, degree + 1, size=grid.d)
        coef = rng.normal()
        term = np.full(grid.shape, coef)
        for ax, p in enumerate(powers):
            term = term * grid.coords[ax] ** int(p)
        vals += term
    return ScalarField(grid, np.where(grid.in_mask, vals, 0.0))


@pytest.fixture(scope="session")
def vertical_field64(grid64) -> ScalarField:
    return masked_field(grid64, lambda x1, xd: xd)


@pytest.fixture(scope="session")
def thin_solution64(grid64, identity64):
    """Converged thin-obstacle minimizer of the 3/2-homogeneous datum."""
    from bernlab.blowup import oracle
    from bernlab.signorini import (
        NonlinearityModel,
        SolverParams,
        ThinObstacleProblem,
        minimize_thin_obstacle,
    )

    datum = oracle("sin-half", 1.5).field(grid64)
    problem = ThinObstacleProblem(identity64, NonlinearityModel.off(), datum)
    return minimize_thin_obstacle(problem, SolverParams())
