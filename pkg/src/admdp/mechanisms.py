"""Per-round auction rules.

Each rule is a pure function from (state, realized values, qualities,
tuning) to a winner and a truthful critical payment. Score auctions rank
by virtual value plus a quality multiplier and charge Myerson payments;
the second-price variants rank raw or adjusted bids against a reserve and
charge the minimum bid needed to win.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .distributions import ABOVE_SUPPORT, AboveSupport, ValueDistribution
from .solver import AdProfile, MdpSolution, StateOffGrid

MECHANISM_KINDS = (
    "static_multiplier",
    "ctr_scaled",
    "optimal_mdp",
    "spa_adjusted",
    "myerson",
    "spa_reserve",
    "simple_two_stage",
)

SOLUTION_KINDS = ("optimal_mdp", "spa_adjusted", "simple_two_stage")


class ZeroStateUndefined(ValueError):
    """The bid adjustment divides by the state, which is zero."""


@dataclass(frozen=True)
class AuctionInput:
    state: float
    bids: tuple[float, ...]
    qualities: tuple[int, ...]
    profile: AdProfile

    def __post_init__(self):
        n = self.profile.n
        if len(self.bids) != n or len(self.qualities) != n:
            raise ValueError("bids and qualities must match the profile size")
        for i, (b, ad) in enumerate(zip(self.bids, self.profile.ads)):
            lo, hi = ad.dist.support()
            if not lo <= b <= hi:
                raise ValueError(f"bid {b} of bidder {i} outside support [{lo}, {hi}]")


@dataclass(frozen=True)
class AuctionOutcome:
    winner: int | None
    payment: float
    expected_revenue: float
    scores: tuple[float, ...]
    detail: dict | None = field(default=None, compare=False)

    def __post_init__(self):
        if self.winner is None and self.payment != 0.0:
            raise ValueError("payment must be 0 when nobody wins")


def _no_sale(state: float, scores: tuple[float, ...], detail=None) -> AuctionOutcome:
    return AuctionOutcome(None, 0.0, 0.0, scores, detail)


def _argmax_lowest(values) -> int:
    best, arg = None, 0
    for i, x in enumerate(values):
        if best is None or x > best:
            best, arg = x, i
    return arg


def run_static_multiplier(ain: AuctionInput, eta: float) -> AuctionOutcome:
    """Score phi_i(b_i) + eta*q_i; allocate only at a strictly positive top
    score (eta = 0 is exactly the static revenue-optimal auction)."""
    ain.profile.require_continuous()
    scores = tuple(
        ad.dist.virtual_value(b) + eta * q
        for ad, b, q in zip(ain.profile.ads, ain.bids, ain.qualities)
    )
    w = _argmax_lowest(scores)
    if scores[w] <= 0.0:
        return _no_sale(ain.state, scores)
    threshold = max([0.0] + [s for i, s in enumerate(scores) if i != w])
    dist = ain.profile.ads[w].dist
    pay = dist.inverse_virtual_value(threshold - eta * ain.qualities[w])
    pay = min(float(pay), ain.bids[w])
    return AuctionOutcome(w, pay, ain.state * pay, scores)


def run_myerson(ain: AuctionInput) -> AuctionOutcome:
    return run_static_multiplier(ain, 0.0)


def run_ctr_scaled(ain: AuctionInput, eta: float) -> AuctionOutcome:
    """Quality multiplier scaled by how far the user is from full
    attention: eta*(1 - state)*q_i."""
    return run_static_multiplier(ain, eta * (1.0 - ain.state))


def run_optimal_mdp(ain: AuctionInput, sol: MdpSolution) -> AuctionOutcome:
    """Rank by state*phi_i(b_i) + delta(quality, state) and charge the
    critical bid. At state 0 allocation is bid-independent, so a winner
    pays its support lower bound."""
    ain.profile.require_continuous()
    k = sol.grid.index_of(ain.state)
    s = sol.grid[k]
    deltas = tuple(sol.delta_for(q, k) for q in ain.qualities)
    scores = tuple(
        s * ad.dist.virtual_value(b) + d
        for ad, b, d in zip(ain.profile.ads, ain.bids, deltas)
    )
    w = _argmax_lowest(scores)
    if scores[w] <= 0.0:
        return _no_sale(s, scores)
    dist = ain.profile.ads[w].dist
    if s == 0.0:
        pay = dist.support()[0]
    else:
        threshold = max([0.0] + [x for i, x in enumerate(scores) if i != w])
        pay = dist.inverse_virtual_value((threshold - deltas[w]) / s)
        pay = min(float(pay), ain.bids[w])
    return AuctionOutcome(w, pay, s * pay, scores)


def run_spa_adjusted(ain: AuctionInput, sol: MdpSolution, eta: float, reserve: float) -> AuctionOutcome:
    """Second price on bids adjusted by (eta/state) times the continuation
    gain of showing the ad, with a common reserve on adjusted bids."""
    k = sol.grid.index_of(ain.state)
    s = sol.grid[k]
    if eta != 0.0 and s == 0.0:
        raise ZeroStateUndefined("bid adjustment eta/state is undefined at state 0")
    if eta == 0.0:
        adj = (0.0,) * ain.profile.n
    else:
        adj = tuple((eta / s) * sol.vdiff_for(q, k) for q in ain.qualities)
    scores = tuple(b + a for b, a in zip(ain.bids, adj))
    eligible = [i for i, x in enumerate(scores) if x >= reserve]
    if not eligible:
        return _no_sale(s, scores)
    w = eligible[_argmax_lowest([scores[i] for i in eligible])]
    others = [scores[i] for i in eligible if i != w]
    pay = max(reserve, max(others)) - adj[w] if others else reserve - adj[w]
    pay = max(pay, 0.0)
    return AuctionOutcome(w, pay, s * pay, scores)


def run_spa_reserve(ain: AuctionInput, reserve: float) -> AuctionOutcome:
    """Plain eager-reserve second price; state plays no role beyond revenue
    accounting (alias of the adjusted variant at eta = 0)."""
    s = ain.state
    scores = ain.bids
    eligible = [i for i, x in enumerate(scores) if x >= reserve]
    if not eligible:
        return _no_sale(s, scores)
    w = eligible[_argmax_lowest([scores[i] for i in eligible])]
    others = [scores[i] for i in eligible if i != w]
    pay = max(reserve, max(others)) if others else reserve
    return AuctionOutcome(w, pay, s * pay, tuple(scores))


@dataclass
class MechanismSpec:
    """A tuned per-round auction as declared in config."""

    kind: str
    eta: float = 0.0
    reserve: float = 0.0
    gamma: float | None = None           # which solution an MDP-backed kind uses
    solution: MdpSolution | None = None

    def __post_init__(self):
        if self.kind not in MECHANISM_KINDS:
            raise ValueError(f"unknown mechanism kind {self.kind!r}")
        if self.eta < 0.0 or self.reserve < 0.0:
            raise ValueError("eta and reserve must be nonnegative")

    @property
    def needs_solution(self) -> bool:
        return self.kind in SOLUTION_KINDS

    def label(self) -> str:
        parts = []
        if self.kind in ("static_multiplier", "ctr_scaled", "spa_adjusted"):
            parts.append(f"eta={self.eta:g}")
        if self.kind in ("spa_adjusted", "spa_reserve"):
            parts.append(f"r={self.reserve:g}")
        if self.kind == "optimal_mdp":
            parts.append(f"gamma={self.gamma:g}")
        return ",".join(parts) or "-"


def run_mechanism(spec: MechanismSpec, ain: AuctionInput, rng=None) -> AuctionOutcome:
    """Dispatch a spec to its rule. The two-stage auction lives in
    `two_stage` and is dispatched by the simulator (it needs a generator)."""
    if spec.needs_solution and spec.solution is None:
        raise ValueError(f"{spec.kind} needs a solved value table")
    if spec.kind == "static_multiplier":
        return run_static_multiplier(ain, spec.eta)
    if spec.kind == "ctr_scaled":
        return run_ctr_scaled(ain, spec.eta)
    if spec.kind == "optimal_mdp":
        return run_optimal_mdp(ain, spec.solution)
    if spec.kind == "spa_adjusted":
        return run_spa_adjusted(ain, spec.solution, spec.eta, spec.reserve)
    if spec.kind == "myerson":
        return run_myerson(ain)
    if spec.kind == "spa_reserve":
        return run_spa_reserve(ain, spec.reserve)
    if spec.kind == "simple_two_stage":
        from . import two_stage

        return two_stage.run_simple_mechanism(ain, spec.solution, rng)
    raise ValueError(f"unknown mechanism kind {spec.kind!r}")
