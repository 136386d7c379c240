"""Two-stage second-price auction with personalized reserves.

Stage one runs an eager-reserve second price among one quality class,
with reserves built from the long-horizon correction terms and a freshly
sampled competition level from the other class; one reserve is then
re-tuned so the stage allocates with exactly the probability the optimal
mechanism gives that class. If stage one clears nobody, a reserve-free
second price runs on the other class with the matching probability.

The quality-partition wrapper picks as stage-one class whichever side
contributes more virtual revenue under the optimal mechanism.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .distributions import ABOVE_SUPPORT
from .mechanisms import AuctionInput, AuctionOutcome
from .solver import AdProfile, AllocationStats, MdpSolution, allocation_stats


@dataclass(frozen=True)
class PartitionPlan:
    """Optimal-mechanism contributions of a bidder partition at one state."""

    s1: tuple[int, ...]
    s2: tuple[int, ...]
    r1: float
    r2: float
    p1: float
    p2: float


@dataclass
class ReserveTable:
    """Diagnostics for one stage-one reserve construction."""

    reserves: dict[int, float]
    i_star: int | None
    rho1: float
    p1_prime: float
    phi_tilde: float
    rho_clamped: bool


def spa_with_eager_reserves(
    bids: dict[int, float] | list[float],
    reserves: dict[int, float] | list[float],
) -> tuple[int | None, float]:
    """Filter bidders below their personalized reserve, sell to the highest
    surviving bid at max(own reserve, second-highest surviving bid)."""
    if not isinstance(bids, dict):
        bids = dict(enumerate(bids))
        reserves = dict(enumerate(reserves))
    eligible = [i for i in sorted(bids) if bids[i] >= reserves[i]]
    if not eligible:
        return None, 0.0
    w = eligible[0]
    for i in eligible[1:]:
        if bids[i] > bids[w]:
            w = i
    others = [bids[i] for i in eligible if i != w]
    pay = max(float(reserves[w]), max(others)) if others else float(reserves[w])
    return w, pay


def partition_plan(
    sol: MdpSolution,
    profile: AdProfile,
    s: float,
    s1: tuple[int, ...],
    s2: tuple[int, ...],
    qualities: tuple[int, ...] | None = None,
) -> PartitionPlan:
    st = allocation_stats(sol, profile, s, qualities)
    return PartitionPlan(
        s1=tuple(s1),
        s2=tuple(s2),
        r1=float(sum(st.vrev[list(s1)])) if s1 else 0.0,
        r2=float(sum(st.vrev[list(s2)])) if s2 else 0.0,
        p1=float(sum(st.win_prob[list(s1)])) if s1 else 0.0,
        p2=float(sum(st.win_prob[list(s2)])) if s2 else 0.0,
    )


def choose_partition(
    sol: MdpSolution,
    profile: AdProfile,
    s: float,
    qualities: tuple[int, ...] | None = None,
) -> tuple[tuple[int, ...], tuple[int, ...]]:
    """Good ads go first if they contribute at least as much virtual
    revenue under the optimal mechanism, otherwise the bad ads do."""
    if qualities is None:
        qualities = profile.fixed_qualities()
    st = allocation_stats(sol, profile, s, qualities)
    good = tuple(i for i, q in enumerate(qualities) if q == 1)
    bad = tuple(i for i, q in enumerate(qualities) if q == -1)
    r_good = float(sum(st.vrev[list(good)])) if good else 0.0
    r_bad = float(sum(st.vrev[list(bad)])) if bad else 0.0
    return (good, bad) if r_good >= r_bad else (bad, good)


def _reserve_from_threshold(dist, numerator: float, state: float) -> float:
    """phi^{-1}(numerator / state); at state 0 a positive numerator can
    never be met and a nonpositive one always is."""
    if state == 0.0:
        return ABOVE_SUPPORT if numerator > 0.0 else dist.support()[0]
    return dist.inverse_virtual_value(numerator / state)


def two_stage_spa(
    ain: AuctionInput,
    sol: MdpSolution,
    s1: tuple[int, ...],
    s2: tuple[int, ...],
    rng: np.random.Generator,
) -> AuctionOutcome:
    """Run the two-stage auction for one round at the realized bids."""
    profile = ain.profile
    profile.require_continuous()
    k = sol.grid.index_of(ain.state)
    s = sol.grid[k]
    qualities = ain.qualities
    plan = partition_plan(sol, profile, s, s1, s2, qualities)
    st = allocation_stats(sol, profile, s, qualities)
    deltas = [sol.delta_for(q, k) for q in qualities]

    # Fresh draws from the stage-two class set the competition level.
    phi_tilde = -math.inf
    for i in sorted(s2):
        v = profile.ads[i].dist.quantile(float(rng.random()))
        phi_tilde = max(phi_tilde, s * profile.ads[i].dist.virtual_value(v) + deltas[i])

    reserves: dict[int, float] = {}
    i_star: int | None = None
    rho1 = 0.0
    p1_prime = 0.0
    clamped = False
    winner: int | None = None
    payment = 0.0

    if len(s1) == 1:
        i = s1[0]
        numerator = max(-deltas[i], phi_tilde - deltas[i])
        reserves[i] = _reserve_from_threshold(profile.ads[i].dist, numerator, s)
        if ain.bids[i] >= reserves[i]:
            winner, payment = i, float(reserves[i])
    elif len(s1) >= 2:
        for i in s1:
            numerator = max(-deltas[i], phi_tilde - deltas[i], 0.0)
            reserves[i] = _reserve_from_threshold(profile.ads[i].dist, numerator, s)
        members = sorted(s1)
        i_star = members[int(np.argmin([st.vrev_pos[i] for i in members]))]
        miss = 1.0
        for i in members:
            if i != i_star:
                miss *= profile.ads[i].dist.cdf(reserves[i])
        p1_prime = 1.0 - miss
        if p1_prime >= 1.0:
            # Someone other than i* always clears; i*'s reserve is moot.
            raw = 0.0
            clamped = True
        else:
            raw = 1.0 - (1.0 - plan.p1) / (1.0 - p1_prime)
        rho1 = min(1.0, max(0.0, raw))
        clamped = clamped or raw < -1e-12 or raw > 1.0 + 1e-12
        top = profile.ads[i_star].dist.quantile(1.0 - rho1)
        reserves[i_star] = ABOVE_SUPPORT if top == math.inf else top
        winner, payment = spa_with_eager_reserves(
            {i: ain.bids[i] for i in s1}, reserves
        )

    stage = 1 if winner is not None else 0
    if winner is None and s2 and plan.p2 > 0.0:
        enter = plan.p2 / (1.0 - plan.p1) if plan.p1 < 1.0 else 0.0
        if rng.random() < min(enter, 1.0):
            members = sorted(s2)
            w = members[int(np.argmax([ain.bids[i] for i in members]))]
            others = [ain.bids[i] for i in members if i != w]
            winner, payment = w, (max(others) if others else 0.0)
            stage = 2

    table = ReserveTable(reserves, i_star, rho1, p1_prime, phi_tilde, clamped)
    scores = tuple(
        float(reserves.get(i, phi_tilde if i in s2 else math.nan)) for i in range(profile.n)
    )
    detail = {
        "stage": stage,
        "phi_tilde": phi_tilde,
        "i_star": i_star,
        "rho1": rho1,
        "p1_prime": p1_prime,
        "rho_clamped": clamped,
        "table": table,
        "p1": plan.p1,
        "p2": plan.p2,
    }
    return AuctionOutcome(winner, payment, s * payment, scores, detail)


def run_simple_mechanism(
    ain: AuctionInput, sol: MdpSolution, rng: np.random.Generator
) -> AuctionOutcome:
    """Quality-partition wrapper: pick the stronger class, then run the
    two-stage auction."""
    s1, s2 = choose_partition(sol, ain.profile, ain.state, ain.qualities)
    return two_stage_spa(ain, sol, s1, s2, rng)
