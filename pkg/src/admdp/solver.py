"""Tabular solver for the discounted user-response auction MDP.

The user state is a click-through rate on a finite grid; showing a good
ad, a bad ad, or nothing moves it according to a per-outcome transition
kernel. Value iteration runs on a frozen common-random-number sample set
of bidder values, so every sweep applies the exact same sample-average
Bellman operator and iteration is a true discount-factor contraction.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from enum import IntEnum

import numpy as np

from .distributions import DiscreteUnsupported, ValueDistribution

SOLUTION_MAGIC = "admdp_solution"
SOLUTION_VERSION = 1


class Outcome(IntEnum):
    GOOD = 0
    BAD = 1
    NONE = 2


class StateOffGrid(ValueError):
    """A queried CTR level is not a grid state."""


class NotConverged(RuntimeError):
    def __init__(self, residual: float, iterations: int):
        super().__init__(f"value iteration stopped at residual {residual:g} after {iterations} sweeps")
        self.residual = residual
        self.iterations = iterations


@dataclass(frozen=True)
class StateGrid:
    """Ordered CTR levels in [0, 1]."""

    values: tuple[float, ...]

    def __post_init__(self):
        vals = tuple(float(v) for v in self.values)
        if not vals:
            raise ValueError("state grid is empty")
        if any(b <= a for a, b in zip(vals, vals[1:])):
            raise ValueError("state grid must be strictly increasing")
        if vals[0] < 0.0 or vals[-1] > 1.0:
            raise ValueError("state grid must lie in [0, 1]")
        object.__setattr__(self, "values", vals)

    @classmethod
    def default(cls, n: int = 11) -> "StateGrid":
        return cls(tuple(np.round(np.linspace(0.0, 1.0, n), 12)))

    def __len__(self):
        return len(self.values)

    def __iter__(self):
        return iter(self.values)

    def __getitem__(self, i):
        return self.values[i]

    def index_of(self, s: float, tol: float = 1e-9) -> int:
        arr = np.asarray(self.values)
        i = int(np.argmin(np.abs(arr - s)))
        if abs(arr[i] - s) > tol:
            raise StateOffGrid(f"state {s} not on grid {self.values}")
        return i

    def as_array(self) -> np.ndarray:
        return np.asarray(self.values)


@dataclass(frozen=True)
class TransitionKernel:
    """Per-(state, shown-outcome) distribution over next grid states."""

    grid: StateGrid
    probs: np.ndarray  # (n_states, 3, n_states)

    def __post_init__(self):
        p = np.asarray(self.probs, dtype=float)
        n = len(self.grid)
        if p.shape != (n, 3, n):
            raise ValueError(f"kernel shape {p.shape} does not match grid of {n} states")
        if np.any(p < 0.0):
            raise ValueError("kernel rows must be nonnegative")
        sums = p.sum(axis=2)
        if np.any(np.abs(sums - 1.0) > 1e-12):
            raise ValueError("kernel rows must sum to 1")
        object.__setattr__(self, "probs", p)

    @classmethod
    def step_kernel(
        cls,
        grid: StateGrid,
        good_up: float = 0.2,
        bad_down: float = 0.8,
        none_up: float = 0.1,
    ) -> "TransitionKernel":
        """One-step-up/down kernel: good moves up one grid state w.p.
        good_up, bad moves down w.p. bad_down, nothing shown moves up
        w.p. none_up; otherwise stay. Moves off the grid clamp to the
        boundary state."""
        n = len(grid)
        p = np.zeros((n, 3, n))
        for k in range(n):
            up = min(k + 1, n - 1)
            down = max(k - 1, 0)
            p[k, Outcome.GOOD, up] += good_up
            p[k, Outcome.GOOD, k] += 1.0 - good_up
            p[k, Outcome.BAD, down] += bad_down
            p[k, Outcome.BAD, k] += 1.0 - bad_down
            p[k, Outcome.NONE, up] += none_up
            p[k, Outcome.NONE, k] += 1.0 - none_up
        return cls(grid, p)

    @classmethod
    def self_absorbing(cls, grid: StateGrid) -> "TransitionKernel":
        n = len(grid)
        p = np.zeros((n, 3, n))
        for k in range(n):
            p[k, :, k] = 1.0
        return cls(grid, p)

    def expectations(self, v: np.ndarray) -> np.ndarray:
        """E[V(next) | state, outcome] for all states: shape (n_states, 3)."""
        return self.probs @ np.asarray(v)

    def sample_next(self, state_idx: int, outcome: Outcome, rng: np.random.Generator) -> int:
        row = self.probs[state_idx, int(outcome)]
        return int(np.searchsorted(np.cumsum(row), rng.random(), side="right"))


@dataclass(frozen=True)
class AdSpec:
    """One bidder: a value law plus a quality law (+1, -1, or None for
    uniform random over both, redrawn each round)."""

    dist: ValueDistribution
    quality: int | None

    def __post_init__(self):
        if self.quality not in (1, -1, None):
            raise ValueError(f"quality must be +1, -1 or None, got {self.quality}")


@dataclass(frozen=True)
class AdProfile:
    ads: tuple[AdSpec, ...]

    def __post_init__(self):
        if not self.ads:
            raise ValueError("profile needs at least one ad")

    @property
    def n(self) -> int:
        return len(self.ads)

    @property
    def has_random_quality(self) -> bool:
        return any(ad.quality is None for ad in self.ads)

    def fixed_qualities(self) -> tuple[int, ...]:
        if self.has_random_quality:
            raise ValueError("profile has random qualities; pass the realized ones")
        return tuple(ad.quality for ad in self.ads)

    def require_continuous(self) -> None:
        for i, ad in enumerate(self.ads):
            if not ad.dist.is_continuous:
                raise DiscreteUnsupported(
                    f"bidder {i} has an atomic value law; only the oracle tools handle those"
                )


@dataclass
class FrozenSamples:
    """Fixed matrix of per-bidder value draws (one row per sample) with
    per-row qualities; drawn once per solve and reused every sweep."""

    values: np.ndarray     # (m, n)
    qualities: np.ndarray  # (m, n) of +-1
    phi: np.ndarray        # (m, n) virtual values
    seed: int
    n_samples: int

    @classmethod
    def draw(cls, profile: AdProfile, seed: int, n_samples: int) -> "FrozenSamples":
        profile.require_continuous()
        rng = np.random.default_rng(np.random.SeedSequence(seed))
        n = profile.n
        u = rng.random((n_samples, n))
        values = np.empty((n_samples, n))
        phi = np.empty((n_samples, n))
        for i, ad in enumerate(profile.ads):
            values[:, i] = ad.dist.quantile_array(u[:, i])
            phi[:, i] = ad.dist.virtual_value_array(values[:, i])
        qualities = np.empty((n_samples, n), dtype=np.int8)
        for i, ad in enumerate(profile.ads):
            if ad.quality is None:
                qualities[:, i] = np.where(rng.random(n_samples) < 0.5, 1, -1)
            else:
                qualities[:, i] = ad.quality
        return cls(values, qualities, phi, seed, n_samples)


@dataclass
class AllocationStats:
    """Sample averages of the optimal per-round mechanism at one state."""

    p_good: float
    p_bad: float
    r_good: float
    r_bad: float
    win_prob: np.ndarray   # per-bidder E[x*]
    vrev: np.ndarray       # per-bidder E[x* phi]
    vrev_pos: np.ndarray   # per-bidder E[x* phi; phi >= 0]

    @property
    def p_show(self) -> float:
        return self.p_good + self.p_bad


@dataclass
class MdpSolution:
    """Converged value table with the per-state quantities the per-round
    mechanisms consume."""

    grid: StateGrid
    gamma: float
    V: np.ndarray            # (S,)
    delta_good: np.ndarray   # (S,) discounted continuation correction, good ad
    delta_bad: np.ndarray
    vdiff_good: np.ndarray   # (S,) undiscounted E[V'|good] - E[V'|none]
    vdiff_bad: np.ndarray
    p_good: np.ndarray
    p_bad: np.ndarray
    win_prob: np.ndarray     # (S, n)
    vrev: np.ndarray         # (S, n)
    residual: float
    iterations: int
    seed: int
    n_samples: int
    residual_history: list[float] = field(default_factory=list)
    profile: AdProfile | None = field(default=None, repr=False)
    _samples: FrozenSamples | None = field(default=None, repr=False)
    _stats_cache: dict = field(default_factory=dict, repr=False)

    @property
    def n_bidders(self) -> int:
        return self.win_prob.shape[1]

    def delta_for(self, quality: int, state_idx: int) -> float:
        return float(self.delta_good[state_idx] if quality == 1 else self.delta_bad[state_idx])

    def vdiff_for(self, quality: int, state_idx: int) -> float:
        return float(self.vdiff_good[state_idx] if quality == 1 else self.vdiff_bad[state_idx])

    def samples(self) -> FrozenSamples:
        if self._samples is None:
            if self.profile is None:
                raise ValueError("no profile attached; load the solution with its profile")
            self._samples = FrozenSamples.draw(self.profile, self.seed, self.n_samples)
        return self._samples

    def __getstate__(self):
        state = self.__dict__.copy()
        state["_samples"] = None
        state["_stats_cache"] = {}
        return state

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow([SOLUTION_MAGIC, SOLUTION_VERSION])
            w.writerow(["gamma", repr(self.gamma)])
            w.writerow(["seed", self.seed])
            w.writerow(["n_samples", self.n_samples])
            w.writerow(["residual", repr(self.residual)])
            w.writerow(["iterations", self.iterations])
            w.writerow(["n_states", len(self.grid)])
            w.writerow(["n_bidders", self.n_bidders])
            w.writerow(["states"] + [repr(s) for s in self.grid])
            header = ["state", "V", "delta_good", "delta_bad", "vdiff_good", "vdiff_bad",
                      "p_good", "p_bad"]
            header += [f"win_prob_{i}" for i in range(self.n_bidders)]
            header += [f"vrev_{i}" for i in range(self.n_bidders)]
            w.writerow(header)
            for k, s in enumerate(self.grid):
                row = [repr(s), repr(float(self.V[k])),
                       repr(float(self.delta_good[k])), repr(float(self.delta_bad[k])),
                       repr(float(self.vdiff_good[k])), repr(float(self.vdiff_bad[k])),
                       repr(float(self.p_good[k])), repr(float(self.p_bad[k]))]
                row += [repr(float(x)) for x in self.win_prob[k]]
                row += [repr(float(x)) for x in self.vrev[k]]
                w.writerow(row)

    @classmethod
    def from_csv(cls, path, profile: AdProfile | None = None) -> "MdpSolution":
        with open(path, newline="") as fh:
            rows = list(csv.reader(fh))
        if not rows or rows[0][0] != SOLUTION_MAGIC or int(rows[0][1]) != SOLUTION_VERSION:
            raise ValueError(f"{path} is not a version-{SOLUTION_VERSION} solution file")
        meta = {}
        i = 1
        while rows[i][0] != "states":
            meta[rows[i][0]] = rows[i][1]
            i += 1
        states = tuple(float(x) for x in rows[i][1:])
        grid = StateGrid(states)
        n_states, n_bidders = int(meta["n_states"]), int(meta["n_bidders"])
        body = rows[i + 2 : i + 2 + n_states]
        arr = np.array([[float(x) for x in r] for r in body])
        k = 8
        return cls(
            grid=grid,
            gamma=float(meta["gamma"]),
            V=arr[:, 1].copy(),
            delta_good=arr[:, 2].copy(),
            delta_bad=arr[:, 3].copy(),
            vdiff_good=arr[:, 4].copy(),
            vdiff_bad=arr[:, 5].copy(),
            p_good=arr[:, 6].copy(),
            p_bad=arr[:, 7].copy(),
            win_prob=arr[:, k : k + n_bidders].copy(),
            vrev=arr[:, k + n_bidders : k + 2 * n_bidders].copy(),
            residual=float(meta["residual"]),
            iterations=int(meta["iterations"]),
            seed=int(meta["seed"]),
            n_samples=int(meta["n_samples"]),
            profile=profile,
        )


def _delta_rows(kernel: TransitionKernel, v: np.ndarray, gamma: float):
    ev = kernel.expectations(v)  # (S, 3)
    vdiff_good = ev[:, Outcome.GOOD] - ev[:, Outcome.NONE]
    vdiff_bad = ev[:, Outcome.BAD] - ev[:, Outcome.NONE]
    return ev, gamma * vdiff_good, gamma * vdiff_bad, vdiff_good, vdiff_bad


def _backup_state(state_value, ev_none, dg, db, samples, gamma):
    delta = np.where(samples.qualities == 1, dg, db)
    scores = state_value * samples.phi + delta
    best = scores.max(axis=1)
    return float(np.maximum(best, 0.0).mean() + gamma * ev_none)


class _SweepBuffers:
    """Reusable scratch space for the per-state backup; the good-quality
    mask is fixed across sweeps, so delta rows reduce to a fused
    multiply-add on a float mask."""

    def __init__(self, samples: FrozenSamples):
        self.phi = samples.phi
        self.goodf = (samples.qualities == 1).astype(float)
        self.scores = np.empty_like(self.phi)
        self.best = np.empty(self.phi.shape[0])

    def backup(self, state_value, ev_none, dg, db, gamma) -> float:
        np.multiply(self.goodf, dg - db, out=self.scores)
        self.scores += db
        self.scores += state_value * self.phi
        self.scores.max(axis=1, out=self.best)
        np.maximum(self.best, 0.0, out=self.best)
        return float(self.best.mean() + gamma * ev_none)


def bellman_backup(
    V: np.ndarray,
    s: float,
    profile: AdProfile,
    kernel: TransitionKernel,
    gamma: float,
    samples: FrozenSamples,
) -> float:
    """One-state backup: mean over sample rows of
    max(0, max_i [s*phi_i(v_i) + delta_i(s)]) plus the discounted
    show-nothing continuation."""
    profile.require_continuous()
    k = kernel.grid.index_of(s)
    ev, dg, db, _, _ = _delta_rows(kernel, np.asarray(V), gamma)
    return _backup_state(kernel.grid[k], ev[k, Outcome.NONE], dg[k], db[k], samples, gamma)


def _row_winners(state_value, dg, db, samples):
    """Per sample row: optimal winner index or -1, ties to lowest index."""
    delta = np.where(samples.qualities == 1, dg, db)
    scores = state_value * samples.phi + delta
    arg = scores.argmax(axis=1)
    best = scores[np.arange(scores.shape[0]), arg]
    return np.where(best > 0.0, arg, -1)


def _stats_at(state_value, dg, db, samples, qualities=None) -> AllocationStats:
    if qualities is None:
        quals = samples.qualities
    else:
        quals = np.broadcast_to(np.asarray(qualities, dtype=np.int8), samples.values.shape)
    delta = np.where(quals == 1, dg, db)
    scores = state_value * samples.phi + delta
    m, n = scores.shape
    arg = scores.argmax(axis=1)
    rows = np.arange(m)
    best = scores[rows, arg]
    won = best > 0.0
    winners = np.where(won, arg, -1)
    win_prob = np.empty(n)
    vrev = np.empty(n)
    vrev_pos = np.empty(n)
    phi_w = samples.phi[rows, arg]
    q_w = quals[rows, arg]
    for i in range(n):
        w = won & (arg == i)
        win_prob[i] = w.mean()
        vrev[i] = np.where(w, samples.phi[:, i], 0.0).mean()
        vrev_pos[i] = np.where(w & (samples.phi[:, i] >= 0.0), samples.phi[:, i], 0.0).mean()
    good_win = won & (q_w == 1)
    bad_win = won & (q_w == -1)
    return AllocationStats(
        p_good=float(good_win.mean()),
        p_bad=float(bad_win.mean()),
        r_good=float(np.where(good_win, phi_w, 0.0).mean()),
        r_bad=float(np.where(bad_win, phi_w, 0.0).mean()),
        win_prob=win_prob,
        vrev=vrev,
        vrev_pos=vrev_pos,
    )


def solve_value_iteration(
    profile: AdProfile,
    kernel: TransitionKernel,
    grid: StateGrid,
    gamma: float,
    tol: float = 1e-9,
    max_iters: int = 10_000,
    seed: int = 0,
    n_samples: int = 20_000,
) -> MdpSolution:
    """Iterate the sample-average Bellman operator to a sup-norm fixed
    point and extract the per-state mechanism statistics."""
    if not 0.0 <= gamma < 1.0:
        raise ValueError(f"gamma must be in [0, 1), got {gamma}")
    if tol <= 0.0:
        raise ValueError("tol must be positive")
    if n_samples < 1:
        raise ValueError("n_samples must be >= 1")
    if kernel.grid is not grid and kernel.grid.values != grid.values:
        raise ValueError("kernel and solver grids differ")
    profile.require_continuous()

    samples = FrozenSamples.draw(profile, seed, n_samples)
    n_states = len(grid)
    states = grid.as_array()
    buffers = _SweepBuffers(samples)
    v = np.zeros(n_states)
    history: list[float] = []
    residual = np.inf
    for it in range(1, max_iters + 1):
        ev, dg, db, _, _ = _delta_rows(kernel, v, gamma)
        new_v = np.empty(n_states)
        for k in range(n_states):
            new_v[k] = buffers.backup(states[k], ev[k, Outcome.NONE], dg[k], db[k], gamma)
        residual = float(np.max(np.abs(new_v - v)))
        history.append(residual)
        v = new_v
        if residual <= tol:
            break
    else:
        raise NotConverged(residual, max_iters)

    ev, dg, db, vdg, vdb = _delta_rows(kernel, v, gamma)
    p_good = np.empty(n_states)
    p_bad = np.empty(n_states)
    win_prob = np.empty((n_states, profile.n))
    vrev = np.empty((n_states, profile.n))
    sol = MdpSolution(
        grid=grid,
        gamma=gamma,
        V=v,
        delta_good=dg,
        delta_bad=db,
        vdiff_good=vdg,
        vdiff_bad=vdb,
        p_good=p_good,
        p_bad=p_bad,
        win_prob=win_prob,
        vrev=vrev,
        residual=residual,
        iterations=it,
        seed=seed,
        n_samples=n_samples,
        residual_history=history,
        profile=profile,
        _samples=samples,
    )
    for k in range(n_states):
        st = _stats_at(states[k], dg[k], db[k], samples)
        p_good[k] = st.p_good
        p_bad[k] = st.p_bad
        win_prob[k] = st.win_prob
        vrev[k] = st.vrev
        sol._stats_cache[(k, None)] = st
    return sol


def modified_virtual_value(
    sol: MdpSolution,
    i: int,
    v: float,
    s: float,
    quality: int | None = None,
) -> float:
    """state * phi_i(v) plus the continuation correction for i's quality."""
    if sol.profile is None:
        raise ValueError("solution has no profile attached")
    k = sol.grid.index_of(s)
    ad = sol.profile.ads[i]
    q = quality if quality is not None else ad.quality
    if q is None:
        raise ValueError(f"bidder {i} has a random quality; pass the realized one")
    return sol.grid[k] * ad.dist.virtual_value(v) + sol.delta_for(q, k)


def allocation_stats(
    sol: MdpSolution,
    profile: AdProfile,
    s: float,
    qualities: tuple[int, ...] | None = None,
) -> AllocationStats:
    """Optimal-mechanism statistics at state s over the frozen sample set.

    With `qualities` given, the per-row quality draws are overridden by the
    realized assignment (value draws are independent of qualities, so the
    same rows estimate the conditional quantities)."""
    k = sol.grid.index_of(s)
    key = (k, qualities)
    hit = sol._stats_cache.get(key)
    if hit is not None:
        return hit
    if sol.profile is None:
        sol.profile = profile
    samples = sol.samples()
    st = _stats_at(sol.grid[k], float(sol.delta_good[k]), float(sol.delta_bad[k]), samples, qualities)
    sol._stats_cache[key] = st
    return st
