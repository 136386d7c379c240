"""Self-check suite behind the `verify` subcommand.

Each check compares an implementation path against independent ground
truth on instances small enough for exhaustive computation, and reports
the worst observed ratio or error.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import oracle
from .distributions import Uniform
from .solver import AdProfile, AdSpec, StateGrid, TransitionKernel, solve_value_iteration


@dataclass
class CheckResult:
    name: str
    instances: int
    passed: bool
    worst: float
    note: str = ""


def check_reserved_spa_half(seed: int = 0, instances: int = 100) -> CheckResult:
    """Eager-reserve second price keeps at least half the revenue of the
    optimal auction honoring the same reserves, exactly, on every sampled
    discrete instance."""
    rng = np.random.default_rng(seed)
    worst = math.inf
    for _ in range(instances):
        dists, reserves = oracle.random_reserved_instance(rng)
        opt, _ = oracle.optimal_reserved_auction(dists, reserves)
        spa = oracle.exact_spa_revenue(dists, reserves)
        if opt <= 1e-15:
            continue
        worst = min(worst, float(spa / opt))
        if spa < 0.5 * opt - 1e-12:
            return CheckResult("reserved_spa_half", instances, False, float(spa / opt))
    return CheckResult("reserved_spa_half", instances, True, worst)


def check_alternating_example(epsilon: float = 0.1, gamma: float = 0.95) -> CheckResult:
    """Three-state instance where the optimal policy alternates between the
    good and bad ad; its top-state value has a closed geometric form and
    every state-independent rule collapses."""
    inst = oracle.section7_instance(epsilon, gamma)
    sol = oracle.exact_optimal_policy(inst)
    expect = (1.0 + gamma * epsilon / 2.0) / (1.0 - gamma * gamma)
    err = abs(sol.V[2] - expect)
    ok = err <= 1e-9
    # alternation: bad shown at the top state, good at the middle state
    ok = ok and sol.policy[2][0] == 1 and sol.policy[1][0] == 0
    # value iteration's table must match critical-payment evaluation
    vp = oracle.evaluate_policy_by_payments(inst, sol.policy)
    err2 = float(np.max(np.abs(vp - sol.V)))
    ok = ok and err2 <= 1e-8
    static = oracle.enumerate_static_policies(inst)
    always_good = static[(0,)][2]
    always_bad = static[(1,)][2]
    ok = ok and always_good <= epsilon / (1.0 - gamma) + 1e-9
    ok = ok and always_bad <= 1.0 + gamma * 0.5 + 1e-9
    # a greedy one-round rule shows the bad ad at the middle state; optimal does not
    greedy = oracle.exact_optimal_policy(
        oracle.DiscreteInstance(inst.states, inst.transitions, inst.ads, 0.0)
    )
    ok = ok and greedy.policy[1][0] == 1 and sol.policy[1][0] == 0
    return CheckResult("alternating_example", 1, ok, max(err, err2))


def check_second_price_example() -> CheckResult:
    """Two bidders on {1, 2} each with even odds and unit reserves clear 1.25
    by direct enumeration of the four profiles."""
    from .distributions import FiniteDiscrete

    d = FiniteDiscrete((1.0, 2.0), (0.5, 0.5))
    rev = oracle.exact_spa_revenue([d, d], [1.0, 1.0])
    err = abs(float(rev) - 1.25)
    return CheckResult("second_price_example", 1, err <= 1e-12, err)


def check_solver_against_discretization(seed: int = 2) -> CheckResult:
    """Sampled continuous solver vs exact 8-point discretization of the
    same two-uniform-bidder instance; per-round values (no discounting,
    where the discretization bias is not amplified) must sit within a
    coarse 0.05 band at every state."""
    grid = StateGrid.default()
    kernel = TransitionKernel.step_kernel(grid)
    profile = AdProfile((AdSpec(Uniform(0, 1), 1), AdSpec(Uniform(0, 1), -1)))
    sol = solve_value_iteration(profile, kernel, grid, gamma=0.0, seed=seed, n_samples=100_000)

    from .distributions import FiniteDiscrete

    pts = tuple((j + 0.5) / 8 for j in range(8))
    disc = FiniteDiscrete(pts, (0.125,) * 8)
    inst = oracle.DiscreteInstance(
        tuple(grid),
        kernel.probs,
        (AdSpec(disc, 1), AdSpec(disc, -1)),
        0.0,
    )
    osol = oracle.exact_optimal_policy(inst)
    worst = float(np.max(np.abs(sol.V - osol.V)))
    return CheckResult("solver_vs_discretization", 1, worst <= 0.05, worst)


def run_verify_suite(seed: int = 0, instance=None) -> list[CheckResult]:
    """The full suite; `instance` optionally replaces the built-in
    three-state example with one loaded from config."""
    checks = [
        check_reserved_spa_half(seed=seed),
        check_second_price_example(),
        check_solver_against_discretization(),
    ]
    if instance is not None:
        sol = oracle.exact_optimal_policy(instance)
        vp = oracle.evaluate_policy_by_payments(instance, sol.policy)
        err = float(np.max(np.abs(vp - sol.V)))
        checks.append(CheckResult("config_instance_consistency", 1, err <= 1e-8, err))
    checks.append(check_alternating_example())
    return checks
