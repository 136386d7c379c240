"""Brute-force ground truth on small discrete instances.

Value laws here are finite (point masses or short supports), so optimal
policies, reserved-auction revenues, and second-price revenues can all be
computed by exhaustive expectation. These serve as independent checks on
the sampled solver and the reserve constructions: the discrete
virtual-value formula v - (1-F(v)) * gap / p(v) makes the per-profile
winner choice exact whenever the curve is monotone, and critical-payment
evaluation of the extracted policy must reproduce the same values.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from .distributions import ABOVE_SUPPORT, AboveSupport, FiniteDiscrete, PointMass, ValueDistribution
from .solver import AdSpec, Outcome
from .two_stage import spa_with_eager_reserves

MAX_STATES = 16
MAX_BIDDERS = 4
MAX_SUPPORT = 8


class TooLarge(ValueError):
    """Instance exceeds the exhaustive-enumeration size bounds."""


class IrregularInstance(ValueError):
    """Discrete virtual values are not monotone; resample the instance."""


@dataclass(frozen=True)
class DiscreteInstance:
    states: tuple[float, ...]
    transitions: np.ndarray  # (S, 3, S) rows per (state, outcome)
    ads: tuple[AdSpec, ...]
    gamma: float

    def __post_init__(self):
        t = np.asarray(self.transitions, dtype=float)
        n_s = len(self.states)
        if n_s > MAX_STATES:
            raise TooLarge(f"{n_s} states exceeds the bound of {MAX_STATES}")
        if len(self.ads) > MAX_BIDDERS:
            raise TooLarge(f"{len(self.ads)} bidders exceeds the bound of {MAX_BIDDERS}")
        for ad in self.ads:
            if len(support_points(ad.dist)) > MAX_SUPPORT:
                raise TooLarge(f"support exceeds the bound of {MAX_SUPPORT}")
            if ad.quality is None:
                raise ValueError("oracle instances need fixed qualities")
        if t.shape != (n_s, 3, n_s):
            raise ValueError(f"transition shape {t.shape} does not match {n_s} states")
        if np.any(t < 0) or np.any(np.abs(t.sum(axis=2) - 1.0) > 1e-12):
            raise ValueError("transition rows must be distributions")
        if not 0.0 <= self.gamma < 1.0:
            raise ValueError("gamma must be in [0, 1)")
        object.__setattr__(self, "transitions", t)


def support_points(dist: ValueDistribution) -> tuple[float, ...]:
    if isinstance(dist, PointMass):
        return (dist.v,)
    if isinstance(dist, FiniteDiscrete):
        return dist.values
    raise TypeError(f"oracle needs an atomic law, got {dist!r}")


def support_probs(dist: ValueDistribution) -> tuple[float, ...]:
    if isinstance(dist, PointMass):
        return (1.0,)
    return dist.probs


def discrete_virtual_values(dist: ValueDistribution) -> tuple[np.ndarray, np.ndarray]:
    """phi(v_j) = v_j - (1 - F(v_j)) * (v_{j+1} - v_j) / p(v_j), with the
    top point mapping to itself. Raises unless monotone nondecreasing."""
    vals = np.asarray(support_points(dist), dtype=float)
    probs = np.asarray(support_probs(dist), dtype=float)
    cum = np.cumsum(probs)
    phi = vals.copy()
    for j in range(len(vals) - 1):
        phi[j] = vals[j] - (1.0 - cum[j]) * (vals[j + 1] - vals[j]) / probs[j]
    if np.any(np.diff(phi) < -1e-12):
        raise IrregularInstance(f"non-monotone discrete virtual values for {dist!r}")
    return vals, phi


def monopoly_point(dist: ValueDistribution) -> float:
    """Smallest support value with nonnegative discrete virtual value."""
    vals, phi = discrete_virtual_values(dist)
    for v, p in zip(vals, phi):
        if p >= 0.0:
            return float(v)
    return float(vals[-1])


def profile_space(ads) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """All value profiles with probabilities and per-entry virtual values."""
    supports = [support_points(ad.dist) for ad in ads]
    probs = [support_probs(ad.dist) for ad in ads]
    phis = [dict(zip(*discrete_virtual_values(ad.dist))) for ad in ads]
    rows, ps, phi_rows = [], [], []
    for combo in itertools.product(*(range(len(s)) for s in supports)):
        rows.append([supports[i][j] for i, j in enumerate(combo)])
        p = 1.0
        for i, j in enumerate(combo):
            p *= probs[i][j]
        ps.append(p)
        phi_rows.append([phis[i][supports[i][j]] for i, j in enumerate(combo)])
    return np.asarray(rows), np.asarray(ps), np.asarray(phi_rows)


@dataclass
class OracleSolution:
    instance: DiscreteInstance
    V: np.ndarray            # (S,)
    policy: np.ndarray       # (S, P) winner index or -1
    profiles: np.ndarray     # (P, n) values
    probs: np.ndarray        # (P,)
    residual: float
    iterations: int


def exact_optimal_policy(inst: DiscreteInstance, tol: float = 1e-13, max_iters: int = 200_000) -> OracleSolution:
    """Value iteration where each state's action is the full
    profile-to-winner map; the inner maximization is exact because profiles
    decouple given the continuation values."""
    profiles, probs, phis = profile_space(inst.ads)
    n_s = len(inst.states)
    n_p, n = profiles.shape
    states = np.asarray(inst.states)
    quality_idx = np.array(
        [Outcome.GOOD if ad.quality == 1 else Outcome.BAD for ad in inst.ads], dtype=int
    )
    v = np.zeros(n_s)
    residual = np.inf
    for it in range(1, max_iters + 1):
        ev = inst.transitions @ v  # (S, 3)
        new_v = np.empty(n_s)
        for k in range(n_s):
            none_val = inst.gamma * ev[k, Outcome.NONE]
            # (P, n) candidate values of showing each bidder
            cand = states[k] * phis + inst.gamma * ev[k, quality_idx][None, :]
            best = np.maximum(cand.max(axis=1), none_val)
            new_v[k] = float(probs @ best)
        residual = float(np.max(np.abs(new_v - v)))
        v = new_v
        if residual <= tol:
            break
    else:
        raise RuntimeError(f"oracle value iteration stalled at residual {residual:g}")

    ev = inst.transitions @ v
    policy = np.full((n_s, n_p), -1, dtype=int)
    for k in range(n_s):
        none_val = inst.gamma * ev[k, Outcome.NONE]
        cand = states[k] * phis + inst.gamma * ev[k, quality_idx][None, :]
        arg = cand.argmax(axis=1)
        best = cand[np.arange(n_p), arg]
        policy[k] = np.where(best > none_val, arg, -1)
    return OracleSolution(inst, v, policy, profiles, probs, residual, it)


def _critical_payment(inst, policy_row, profiles, p_index, winner) -> float:
    """Smallest own support value at which the winner still wins, holding
    the rest of the profile fixed."""
    supports = support_points(inst.ads[winner].dist)
    for v in supports:  # ascending
        trial = profiles[p_index].copy()
        trial[winner] = v
        j = _profile_index(profiles, trial)
        if policy_row[j] == winner:
            return float(v)
    return float(profiles[p_index][winner])


def _profile_index(profiles: np.ndarray, row: np.ndarray) -> int:
    hits = np.where((profiles == row).all(axis=1))[0]
    return int(hits[0])


def evaluate_policy_by_payments(inst: DiscreteInstance, policy: np.ndarray) -> np.ndarray:
    """Exact discounted value of a (state, profile) -> winner map using
    critical payments, independent of virtual values: solves the linear
    fixed point (I - gamma * T_pi) V = r_pi."""
    profiles, probs, _ = profile_space(inst.ads)
    n_s = len(inst.states)
    states = np.asarray(inst.states)
    quality_idx = np.array(
        [Outcome.GOOD if ad.quality == 1 else Outcome.BAD for ad in inst.ads], dtype=int
    )
    t_pi = np.zeros((n_s, n_s))
    r_pi = np.zeros(n_s)
    for k in range(n_s):
        for j, p in enumerate(probs):
            w = int(policy[k, j])
            if w < 0:
                t_pi[k] += p * inst.transitions[k, Outcome.NONE]
                continue
            pay = _critical_payment(inst, policy[k], profiles, j, w)
            r_pi[k] += p * states[k] * pay
            t_pi[k] += p * inst.transitions[k, quality_idx[w]]
    return np.linalg.solve(np.eye(n_s) - inst.gamma * t_pi, r_pi)


def enumerate_static_policies(inst: DiscreteInstance) -> dict[tuple[int, ...], np.ndarray]:
    """Values of every state-independent profile-to-winner map, by critical
    payments. Bounded to keep enumeration exact and fast."""
    profiles, probs, _ = profile_space(inst.ads)
    n_p, n = profiles.shape
    if (n + 1) ** n_p > 4096:
        raise TooLarge("too many static maps to enumerate")
    out = {}
    n_s = len(inst.states)
    for combo in itertools.product(range(-1, n), repeat=n_p):
        policy = np.tile(np.asarray(combo, dtype=int), (n_s, 1))
        out[combo] = evaluate_policy_by_payments(inst, policy)
    return out


def optimal_reserved_auction(
    dists: list[ValueDistribution], reserves: list[float]
) -> tuple[float, dict[tuple[float, ...], int]]:
    """Exact revenue of the optimal auction that sells to bidder i only at
    values >= r_i: exhaustive expectation of the winning virtual value."""
    for d, r in zip(dists, reserves):
        if not isinstance(r, AboveSupport) and r < monopoly_point(d) - 1e-12:
            raise ValueError(f"reserve {r} below the monopoly point of {d!r}")
    ads = tuple(AdSpec(d, 1) for d in dists)
    profiles, probs, phis = profile_space(ads)
    revenue = 0.0
    rule: dict[tuple[float, ...], int] = {}
    for row, p, phi_row in zip(profiles, probs, phis):
        best, arg = 0.0, -1
        for i, (v, phi) in enumerate(zip(row, phi_row)):
            if v >= reserves[i] and phi > best:
                best, arg = phi, i
        revenue += p * best
        if arg >= 0:
            rule[tuple(row)] = arg
    return revenue, rule


def exact_spa_revenue(dists: list[ValueDistribution], reserves: list[float]) -> float:
    """Exhaustive expectation of the eager-reserve second price auction."""
    ads = tuple(AdSpec(d, 1) for d in dists)
    profiles, probs, _ = profile_space(ads)
    revenue = 0.0
    for row, p in zip(profiles, probs):
        _, pay = spa_with_eager_reserves(list(row), list(reserves))
        revenue += p * pay
    return revenue


def random_regular_discrete(rng: np.random.Generator, max_support: int = 5) -> FiniteDiscrete:
    """A finite value law with monotone discrete virtual values."""
    while True:
        k = int(rng.integers(1, max_support + 1))
        vals = np.sort(rng.choice(np.round(np.arange(0.1, 3.01, 0.1), 10), size=k, replace=False))
        probs = rng.dirichlet(np.ones(k))
        probs = probs / probs.sum()
        dist = FiniteDiscrete(tuple(float(v) for v in vals), tuple(float(p) for p in probs))
        try:
            discrete_virtual_values(dist)
        except IrregularInstance:
            continue
        return dist


def random_reserved_instance(
    rng: np.random.Generator, max_n: int = 3, max_support: int = 5
) -> tuple[list[FiniteDiscrete], list[float]]:
    """Bidders plus reserves at or above each discrete monopoly point."""
    n = int(rng.integers(1, max_n + 1))
    dists = [random_regular_discrete(rng, max_support) for _ in range(n)]
    reserves: list[float] = []
    for d in dists:
        if rng.random() < 0.15:
            reserves.append(ABOVE_SUPPORT)
            continue
        vals = [v for v in d.values if v >= monopoly_point(d)]
        reserves.append(float(vals[int(rng.integers(0, len(vals)))]))
    return dists, reserves


def section7_instance(epsilon: float = 0.1, gamma: float = 0.95) -> DiscreteInstance:
    """Three CTR states {0, 1/2, 1}; a good point-mass-epsilon ad and a bad
    point-mass-1 ad; 0 absorbs, good ads push up, bad ads push down, and
    showing nothing stays put."""
    states = (0.0, 0.5, 1.0)
    t = np.zeros((3, 3, 3))
    t[0, :, 0] = 1.0                      # absorbing bottom
    t[1, Outcome.GOOD, 2] = 1.0           # 1/2 -> 1
    t[1, Outcome.BAD, 0] = 1.0            # 1/2 -> 0
    t[1, Outcome.NONE, 1] = 1.0
    t[2, Outcome.GOOD, 2] = 1.0           # 1 -> 1
    t[2, Outcome.BAD, 1] = 1.0            # 1 -> 1/2
    t[2, Outcome.NONE, 2] = 1.0
    ads = (AdSpec(PointMass(epsilon), 1), AdSpec(PointMass(1.0), -1))
    return DiscreteInstance(states, t, ads, gamma)
