"""Shared independent oracles for the test suite.

The quadrature oracle integrates the winning virtual value directly from
the distribution functions; the bid-sweep harness probes a mechanism as a
black box for monotone allocation and critical payments.
"""

import math

import numpy as np
from scipy.integrate import quad

from admdp.mechanisms import AuctionInput


def myerson_per_round_revenue(dists, lo=None, hi=None) -> float:
    """E[max(0, max_i phi_i(V_i))] for independent bidders by quadrature:
    integrates t * d/dt Pr[max phi <= t] via the product CDF."""

    def cdf_of_max_phi(t):
        p = 1.0
        for d in dists:
            v = d.inverse_virtual_value(t)
            p *= d.cdf(float(v)) if not math.isinf(v) else 1.0
        return p

    top = max(d.virtual_value(d.quantile(1.0 - 1e-12)) for d in dists)
    val, _ = quad(lambda t: 1.0 - cdf_of_max_phi(t), 0.0, top, limit=400)
    return val


def sweep_bidder(run, ain: AuctionInput, bidder: int, n_points: int = 200, tol: float = 1e-6):
    """Sweep one bidder's bid over its support, holding everything else
    fixed. Returns (wins, payments, grid). `run` maps an AuctionInput to an
    AuctionOutcome and must be deterministic across calls."""
    dist = ain.profile.ads[bidder].dist
    lo, hi = dist.support()
    if math.isinf(hi):
        lo, hi = dist.quantile(1e-6), dist.quantile(1.0 - 1e-6)
    bid_grid = np.linspace(lo, hi, n_points)
    wins = np.zeros(n_points, dtype=bool)
    pays = np.full(n_points, np.nan)
    for j, b in enumerate(bid_grid):
        bids = list(ain.bids)
        bids[bidder] = float(b)
        out = run(AuctionInput(ain.state, tuple(bids), ain.qualities, ain.profile))
        wins[j] = out.winner == bidder
        if wins[j]:
            pays[j] = out.payment
    return wins, pays, bid_grid


def check_truthful(run, ain: AuctionInput, bidder: int, n_points: int = 200, tol: float = 1e-6):
    """Monotone win indicator plus critical payment. Returns an error
    string or None.

    The win region must be an up-set of bids; payments must be constant on
    it. When the lose-to-win step happens inside the support, the payment
    must equal the step location (refined by bisection); a bidder who wins
    at every probed bid may pay anything constant up to the lowest probed
    bid (reserve-free second-price pays less)."""
    wins, pays, bid_grid = sweep_bidder(run, ain, bidder, n_points, tol)
    if not wins.any():
        return None
    first = int(np.argmax(wins))
    if not wins[first:].all():
        return f"non-monotone win region for bidder {bidder}"
    won_pays = pays[wins]
    if won_pays.max() - won_pays.min() > tol:
        return f"payment varies on the win region by {won_pays.max() - won_pays.min():g}"
    pay = float(won_pays[0])
    if first == 0:
        if pay > bid_grid[0] + tol:
            return f"always-winning bidder pays {pay} above its lowest bid {bid_grid[0]}"
        return None
    lo_b, hi_b = bid_grid[first - 1], bid_grid[first]

    def wins_at(b):
        bids = list(ain.bids)
        bids[bidder] = float(b)
        out = run(AuctionInput(ain.state, tuple(bids), ain.qualities, ain.profile))
        return out.winner == bidder

    for _ in range(60):
        mid = 0.5 * (lo_b + hi_b)
        if wins_at(mid):
            hi_b = mid
        else:
            lo_b = mid
        if hi_b - lo_b <= 1e-9:
            break
    critical = hi_b
    if abs(pay - critical) > tol:
        return f"payment {pay} != critical bid {critical} for bidder {bidder}"
    return None
