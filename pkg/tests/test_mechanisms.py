import numpy as np
import pytest

from admdp.distributions import DiscreteUnsupported, PointMass, Uniform
from admdp.mechanisms import (
    AuctionInput,
    AuctionOutcome,
    MechanismSpec,
    ZeroStateUndefined,
    run_ctr_scaled,
    run_mechanism,
    run_myerson,
    run_optimal_mdp,
    run_spa_adjusted,
    run_spa_reserve,
    run_static_multiplier,
)
from admdp.solver import AdProfile, AdSpec, MdpSolution, StateGrid, StateOffGrid

from helpers import check_truthful


@pytest.fixture(scope="module")
def two_uniform():
    return AdProfile((AdSpec(Uniform(0, 1), 1), AdSpec(Uniform(0, 1), -1)))


def manual_solution(grid, profile, delta_good=0.0, delta_bad=0.0, gamma=0.9):
    n = len(grid)
    return MdpSolution(
        grid=grid, gamma=gamma, V=np.zeros(n),
        delta_good=np.full(n, delta_good), delta_bad=np.full(n, delta_bad),
        vdiff_good=np.full(n, delta_good / gamma), vdiff_bad=np.full(n, delta_bad / gamma),
        p_good=np.zeros(n), p_bad=np.zeros(n),
        win_prob=np.zeros((n, profile.n)), vrev=np.zeros((n, profile.n)),
        residual=0.0, iterations=1, seed=0, n_samples=1, profile=profile,
    )


class TestStaticMultiplier:
    def test_myerson_case(self, two_uniform):
        out = run_static_multiplier(AuctionInput(0.5, (0.8, 0.6), (1, -1), two_uniform), 0.0)
        assert out.winner == 0
        assert out.payment == pytest.approx(0.6)
        assert out.expected_revenue == pytest.approx(0.5 * 0.6, abs=1e-12)

    def test_below_reserve_no_winner(self, two_uniform):
        out = run_static_multiplier(AuctionInput(0.5, (0.4, 0.3), (1, -1), two_uniform), 0.0)
        assert out.winner is None and out.payment == 0.0

    def test_quality_decides(self, two_uniform):
        out = run_static_multiplier(AuctionInput(0.5, (0.3, 0.9), (1, -1), two_uniform), 0.5)
        assert out.winner == 1
        assert out.scores[0] == pytest.approx(0.1)
        assert out.scores[1] == pytest.approx(0.3)
        assert out.payment == pytest.approx(0.8)

    def test_quality_flip_keeps_win(self, two_uniform):
        # Flipping the winner's quality up never turns the win into a loss.
        rng = np.random.default_rng(5)
        for _ in range(200):
            bids = tuple(rng.random(2))
            eta = float(rng.random())
            out = run_static_multiplier(AuctionInput(0.5, bids, (-1, -1), two_uniform), eta)
            if out.winner is None:
                continue
            quals = [-1, -1]
            quals[out.winner] = 1
            out2 = run_static_multiplier(AuctionInput(0.5, bids, tuple(quals), two_uniform), eta)
            assert out2.winner == out.winner

    def test_rejects_discrete(self):
        prof = AdProfile((AdSpec(PointMass(1.0), 1),))
        with pytest.raises(DiscreteUnsupported):
            run_static_multiplier(AuctionInput(0.5, (1.0,), (1,), prof), 0.0)


class TestCtrScaled:
    def test_state_one_is_myerson(self, two_uniform):
        rng = np.random.default_rng(6)
        for _ in range(50):
            bids = tuple(rng.random(2))
            a = run_ctr_scaled(AuctionInput(1.0, bids, (1, -1), two_uniform), 0.7)
            b = run_static_multiplier(AuctionInput(1.0, bids, (1, -1), two_uniform), 0.0)
            assert (a.winner, a.payment) == (b.winner, b.payment)

    def test_state_zero_full_multiplier(self, two_uniform):
        rng = np.random.default_rng(7)
        for _ in range(50):
            bids = tuple(rng.random(2))
            a = run_ctr_scaled(AuctionInput(0.0, bids, (1, -1), two_uniform), 0.7)
            b = run_static_multiplier(AuctionInput(0.0, bids, (1, -1), two_uniform), 0.7)
            assert (a.winner, a.payment) == (b.winner, b.payment)

    def test_affine_reduction(self, two_uniform):
        rng = np.random.default_rng(8)
        for _ in range(50):
            bids = tuple(rng.random(2))
            a = run_ctr_scaled(AuctionInput(0.5, bids, (1, -1), two_uniform), 1.0)
            b = run_static_multiplier(AuctionInput(0.5, bids, (1, -1), two_uniform), 0.5)
            assert (a.winner, a.payment) == (b.winner, b.payment)


class TestOptimalMdp:
    def test_zero_corrections_reduce_to_myerson(self, grid, two_uniform):
        sol = manual_solution(grid, two_uniform)
        rng = np.random.default_rng(9)
        for _ in range(100):
            bids = tuple(rng.random(2))
            state = float(grid[rng.integers(1, 11)])
            a = run_optimal_mdp(AuctionInput(state, bids, (1, -1), two_uniform), sol)
            b = run_myerson(AuctionInput(state, bids, (1, -1), two_uniform))
            assert a.winner == b.winner
            if a.winner is not None:
                assert a.payment == pytest.approx(b.payment, abs=1e-12)

    def test_single_bidder_threshold(self, grid):
        prof = AdProfile((AdSpec(Uniform(0, 1), 1),))
        sol = manual_solution(grid, prof, delta_good=0.1)
        # allocation iff 0.5*(2v-1) + 0.1 > 0, i.e. v > 0.4; critical bid 0.4
        out = run_optimal_mdp(AuctionInput(0.5, (0.41,), (1,), prof), sol)
        assert out.winner == 0 and out.payment == pytest.approx(0.4)
        out = run_optimal_mdp(AuctionInput(0.5, (0.39,), (1,), prof), sol)
        assert out.winner is None

    def test_state_zero_bid_independent(self, grid):
        prof = AdProfile((AdSpec(Uniform(0, 1), 1),))
        sol = manual_solution(grid, prof, delta_good=0.1)
        out = run_optimal_mdp(AuctionInput(0.0, (0.01,), (1,), prof), sol)
        assert out.winner == 0
        assert out.payment == 0.0  # support lower bound

    def test_off_grid_state(self, grid, two_uniform):
        sol = manual_solution(grid, two_uniform)
        with pytest.raises(StateOffGrid):
            run_optimal_mdp(AuctionInput(0.55, (0.5, 0.5), (1, -1), two_uniform), sol)


class TestSpaVariants:
    def test_plain_reserve(self, two_uniform):
        out = run_spa_reserve(AuctionInput(0.5, (0.9, 0.7), (1, 1), two_uniform), 0.5)
        assert out.winner == 0 and out.payment == pytest.approx(0.7)

    def test_none_eligible(self, two_uniform):
        out = run_spa_reserve(AuctionInput(0.5, (0.4, 0.3), (1, 1), two_uniform), 0.5)
        assert out.winner is None

    def test_adjustment_discount(self, grid, two_uniform):
        # single eligible bidder: pays reserve minus its own adjustment
        sol = manual_solution(grid, two_uniform, delta_good=0.2 * 0.5 * 0.9)
        # adj for good bidder = (eta/state) * vdiff_good = (1/0.5)*0.1 = 0.2
        out = run_spa_adjusted(AuctionInput(0.5, (0.4, 0.05), (1, -1), two_uniform), sol, 1.0, 0.5)
        assert out.winner == 0
        assert out.payment == pytest.approx(0.5 - 0.2)

    def test_zero_state_undefined(self, grid, two_uniform):
        sol = manual_solution(grid, two_uniform, delta_good=0.1)
        with pytest.raises(ZeroStateUndefined):
            run_spa_adjusted(AuctionInput(0.0, (0.5, 0.5), (1, -1), two_uniform), sol, 1.0, 0.5)

    def test_eta_zero_equals_plain(self, grid, two_uniform):
        sol = manual_solution(grid, two_uniform, delta_good=0.3)
        rng = np.random.default_rng(10)
        for _ in range(50):
            bids = tuple(rng.random(2))
            a = run_spa_adjusted(AuctionInput(0.5, bids, (1, -1), two_uniform), sol, 0.0, 0.5)
            b = run_spa_reserve(AuctionInput(0.5, bids, (1, -1), two_uniform), 0.5)
            assert (a.winner, a.payment) == (b.winner, b.payment)


class TestOutcomeInvariants:
    def test_individual_rationality_and_accounting(self, grid, two_uniform, correlated_solution, correlated_profile):
        rng = np.random.default_rng(11)
        sol = manual_solution(grid, two_uniform, delta_good=0.05, delta_bad=-0.3)
        runs = [
            lambda a: run_static_multiplier(a, 0.4),
            lambda a: run_ctr_scaled(a, 0.8),
            lambda a: run_optimal_mdp(a, sol),
            lambda a: run_spa_adjusted(a, sol, 1.0, 0.4),
            run_myerson,
            lambda a: run_spa_reserve(a, 0.4),
        ]
        for _ in range(200):
            bids = tuple(rng.random(2))
            state = float(grid[rng.integers(1, 11)])
            quals = tuple(1 if rng.random() < 0.5 else -1 for _ in range(2))
            for run in runs:
                out = run(AuctionInput(state, bids, quals, two_uniform))
                if out.winner is not None:
                    assert 0.0 <= out.payment <= bids[out.winner] + 1e-12
                assert out.expected_revenue == pytest.approx(state * out.payment, abs=1e-12)

    def test_outcome_validation(self):
        with pytest.raises(ValueError):
            AuctionOutcome(None, 0.5, 0.0, ())


class TestMechanismSpec:
    def test_unknown_kind(self):
        with pytest.raises(ValueError):
            MechanismSpec("dutch")

    def test_solution_required(self, two_uniform):
        spec = MechanismSpec("optimal_mdp", gamma=0.95)
        with pytest.raises(ValueError):
            run_mechanism(spec, AuctionInput(0.5, (0.5, 0.5), (1, -1), two_uniform))

    def test_negative_eta_rejected(self):
        with pytest.raises(ValueError):
            MechanismSpec("static_multiplier", eta=-0.1)

    def test_labels(self):
        assert MechanismSpec("static_multiplier", eta=0.5).label() == "eta=0.5"
        assert MechanismSpec("spa_adjusted", eta=1.0, reserve=0.5, gamma=0.9).label() == "eta=1,r=0.5"
        assert MechanismSpec("myerson").label() == "-"


class TestTruthfulnessSweeps:
    def test_quick_sweeps(self, grid, two_uniform):
        # a smaller version of the acceptance sweep for fast feedback
        sol = manual_solution(grid, two_uniform, delta_good=0.07, delta_bad=-0.25)
        runs = {
            "static": lambda a: run_static_multiplier(a, 0.4),
            "ctr_scaled": lambda a: run_ctr_scaled(a, 0.8),
            "optimal_mdp": lambda a: run_optimal_mdp(a, sol),
            "spa_adjusted": lambda a: run_spa_adjusted(a, sol, 1.0, 0.4),
            "spa_reserve": lambda a: run_spa_reserve(a, 0.4),
        }
        rng = np.random.default_rng(12)
        for _ in range(25):
            bids = tuple(rng.random(2))
            state = float(grid[rng.integers(1, 11)])
            quals = tuple(1 if rng.random() < 0.5 else -1 for _ in range(2))
            ain = AuctionInput(state, bids, quals, two_uniform)
            for name, run in runs.items():
                for bidder in range(2):
                    err = check_truthful(run, ain, bidder, n_points=60)
                    assert err is None, f"{name}: {err}"
