import numpy as np
import pytest

from admdp.distributions import LogNormal, ShiftedUniform, Uniform
from admdp.solver import (
    AdProfile,
    AdSpec,
    StateGrid,
    TransitionKernel,
    solve_value_iteration,
)

SOLVER_SEED = 11


@pytest.fixture(scope="session")
def grid():
    return StateGrid.default()


@pytest.fixture(scope="session")
def paper_kernel(grid):
    return TransitionKernel.step_kernel(grid)


@pytest.fixture(scope="session")
def uniform_profile():
    return AdProfile(tuple(AdSpec(Uniform(0, 1), None) for _ in range(3)))


@pytest.fixture(scope="session")
def correlated_profile():
    return AdProfile(
        (
            AdSpec(Uniform(0, 1), 1),
            AdSpec(Uniform(0, 1), 1),
            AdSpec(ShiftedUniform(1, 2), -1),
        )
    )


@pytest.fixture(scope="session")
def lognormal_profile():
    return AdProfile(tuple(AdSpec(LogNormal(0, 0.5), None) for _ in range(3)))


@pytest.fixture(scope="session")
def uniform_solution(uniform_profile, paper_kernel, grid):
    return solve_value_iteration(
        uniform_profile, paper_kernel, grid, gamma=0.95, seed=SOLVER_SEED, n_samples=20_000
    )


@pytest.fixture(scope="session")
def correlated_solution(correlated_profile, paper_kernel, grid):
    return solve_value_iteration(
        correlated_profile, paper_kernel, grid, gamma=0.95, seed=SOLVER_SEED, n_samples=20_000
    )


@pytest.fixture(scope="session")
def lognormal_solution(lognormal_profile, paper_kernel, grid):
    return solve_value_iteration(
        lognormal_profile, paper_kernel, grid, gamma=0.95, seed=SOLVER_SEED, n_samples=20_000
    )
