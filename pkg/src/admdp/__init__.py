"""Repeated single-slot ad auctions with a user whose click propensity
reacts to the quality of shown ads.

The package solves for the revenue-optimal long-horizon auction by value
iteration over a discretized click-through-rate state, implements a family
of per-round auction rules (score auctions with quality multipliers,
second-price variants with adjusted bids and reserves, and a two-stage
second-price auction with personalized reserves that tracks the optimal
allocation probabilities), and simulates repeated-auction episodes for
side-by-side revenue comparisons.
"""

__version__ = "0.1.0"
