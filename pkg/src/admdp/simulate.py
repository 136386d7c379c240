"""Repeated-auction episode engine.

Runs configured mechanisms over seeded episodes: per round it draws
values (and random qualities), executes the mechanism at the current
user state, accounts revenue, and moves the state by the shown outcome.
Experiments repeat episodes with derived seeds and aggregate per-round
means; a tuning sweep crosses the configured parameter grids and flags
the best point per mechanism by final cumulative revenue.
"""

from __future__ import annotations

import csv
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from .mechanisms import (
    AuctionInput,
    MechanismSpec,
    ZeroStateUndefined,
    run_mechanism,
)
from .solver import (
    AdProfile,
    MdpSolution,
    Outcome,
    StateGrid,
    TransitionKernel,
    solve_value_iteration,
)

RUNS_COLUMNS = (
    "experiment", "mechanism", "tuning", "repetition", "round",
    "state", "winner_quality", "payment", "expected_revenue",
)
SUMMARY_COLUMNS = (
    "experiment", "mechanism", "tuning", "round",
    "mean_state", "mean_revenue", "mean_cum_revenue",
    "good_rate", "bad_rate", "none_rate", "is_best",
)
TRACE_COLUMNS = (
    "experiment", "mechanism", "tuning", "repetition", "round",
    "stage", "phi_tilde", "i_star", "rho1", "p1_prime", "rho_clamped",
)

_QUALITY_NAMES = {Outcome.GOOD: "good", Outcome.BAD: "bad", Outcome.NONE: "none"}


@dataclass(frozen=True)
class MechanismGrid:
    """One mechanism with its tuning grids from config."""

    kind: str
    etas: tuple[float, ...] = (0.0,)
    reserves: tuple[float, ...] = (0.0,)
    gammas: tuple[float, ...] = ()

    def points(self, default_gamma: float) -> list[MechanismSpec]:
        if self.kind == "optimal_mdp":
            gammas = self.gammas or (default_gamma,)
            return [MechanismSpec(self.kind, gamma=g) for g in gammas]
        if self.kind in ("static_multiplier", "ctr_scaled"):
            return [MechanismSpec(self.kind, eta=e) for e in self.etas]
        if self.kind == "spa_adjusted":
            return [
                MechanismSpec(self.kind, eta=e, reserve=r, gamma=default_gamma)
                for e in self.etas
                for r in self.reserves
            ]
        if self.kind == "spa_reserve":
            return [MechanismSpec(self.kind, reserve=r) for r in self.reserves]
        if self.kind == "myerson":
            return [MechanismSpec(self.kind)]
        if self.kind == "simple_two_stage":
            return [MechanismSpec(self.kind, gamma=default_gamma)]
        raise ValueError(f"unknown mechanism kind {self.kind!r}")


@dataclass
class ExperimentConfig:
    name: str
    profile: AdProfile
    grid: StateGrid
    kernel: TransitionKernel
    mechanisms: list[MechanismGrid]
    rounds: int = 500
    repetitions: int = 100
    initial_state: float = 0.5
    seed: int = 0
    click_mode: str = "expected"
    gamma: float = 0.95
    solver_tol: float = 1e-9
    solver_max_iters: int = 10_000
    solver_samples: int = 20_000

    def __post_init__(self):
        if self.rounds < 1 or self.repetitions < 1:
            raise ValueError("rounds and repetitions must be >= 1")
        if self.click_mode not in ("expected", "bernoulli"):
            raise ValueError(f"unknown click mode {self.click_mode!r}")
        self.grid.index_of(self.initial_state)  # must be on the grid

    def solver_gammas(self) -> tuple[float, ...]:
        """Every discount factor a configured mechanism needs a solution for."""
        need = set()
        for m in self.mechanisms:
            if m.kind == "optimal_mdp":
                need.update(m.gammas or (self.gamma,))
            elif m.kind in ("spa_adjusted", "simple_two_stage"):
                need.add(self.gamma)
        return tuple(sorted(need))


@dataclass
class EpisodeLog:
    seed_key: tuple
    states: np.ndarray           # state before each round
    outcomes: np.ndarray         # Outcome codes of what was shown
    payments: np.ndarray
    expected_revenue: np.ndarray  # state * payment
    revenue: np.ndarray           # accounted per click mode
    states_after: np.ndarray
    error_rounds: int
    details: list | None = None

    @property
    def rounds(self) -> int:
        return len(self.states)


@dataclass
class ReportEntry:
    kind: str
    tuning: str
    mean_state: np.ndarray
    mean_revenue: np.ndarray
    mean_cum_revenue: np.ndarray
    good_rate: np.ndarray
    bad_rate: np.ndarray
    none_rate: np.ndarray
    discounted: dict[float, tuple[float, float]]  # gamma -> (mean, standard error)
    final_cum_revenue: float
    is_best: bool = False


@dataclass
class SimulationReport:
    experiment: str
    rounds: int
    repetitions: int
    entries: list[ReportEntry] = field(default_factory=list)

    def best_entries(self) -> list[ReportEntry]:
        return [e for e in self.entries if e.is_best]


def apply_transition(
    kernel: TransitionKernel, s: float, outcome: Outcome, rng: np.random.Generator
) -> float:
    """Sample the next state for a shown outcome; off-grid moves were
    already folded onto the boundary rows when the kernel was built."""
    k = kernel.grid.index_of(s)
    return kernel.grid[kernel.sample_next(k, outcome, rng)]


def episode_seed(master: int, mech_idx: int, tuning_idx: int, rep: int) -> tuple:
    return (master, mech_idx, tuning_idx, rep)


def run_episode(
    cfg: ExperimentConfig,
    spec: MechanismSpec,
    seed_key: tuple,
    collect_details: bool = False,
) -> EpisodeLog:
    """One fully seeded episode. Per round the generator is consumed in a
    fixed order: one value per ad, one quality per random-quality ad, any
    mechanism-internal draws, the click (bernoulli mode, only on a win),
    then the state transition."""
    rng = np.random.default_rng(np.random.SeedSequence(list(seed_key)))
    profile = cfg.profile
    grid = cfg.grid
    t = cfg.rounds
    states = np.empty(t)
    outcomes = np.empty(t, dtype=np.int8)
    payments = np.zeros(t)
    exp_rev = np.zeros(t)
    revenue = np.zeros(t)
    states_after = np.empty(t)
    details = [] if collect_details else None
    errors = 0
    k = grid.index_of(cfg.initial_state)
    bernoulli = cfg.click_mode == "bernoulli"
    for i in range(t):
        s = grid[k]
        bids = tuple(ad.dist.quantile(float(rng.random())) for ad in profile.ads)
        qualities = tuple(
            ad.quality if ad.quality is not None else (1 if rng.random() < 0.5 else -1)
            for ad in profile.ads
        )
        ain = AuctionInput(s, bids, qualities, profile)
        try:
            out = run_mechanism(spec, ain, rng)
        except ZeroStateUndefined:
            out = None
            errors += 1
        if out is None or out.winner is None:
            shown = Outcome.NONE
        else:
            shown = Outcome.GOOD if qualities[out.winner] == 1 else Outcome.BAD
        pay = out.payment if out is not None else 0.0
        states[i] = s
        outcomes[i] = shown
        payments[i] = pay
        exp_rev[i] = s * pay
        if bernoulli:
            clicked = out is not None and out.winner is not None and rng.random() < s
            revenue[i] = pay if clicked else 0.0
        else:
            revenue[i] = s * pay
        if collect_details:
            details.append(out.detail if out is not None else None)
        k = cfg.kernel.sample_next(k, shown, rng)
        states_after[i] = grid[k]
    return EpisodeLog(seed_key, states, outcomes, payments, exp_rev, revenue, states_after, errors, details)


def solve_required(cfg: ExperimentConfig) -> dict[float, MdpSolution]:
    """Solve the value tables every configured mechanism needs."""
    out = {}
    for g in cfg.solver_gammas():
        out[g] = solve_value_iteration(
            cfg.profile,
            cfg.kernel,
            cfg.grid,
            gamma=g,
            tol=cfg.solver_tol,
            max_iters=cfg.solver_max_iters,
            seed=cfg.seed,
            n_samples=cfg.solver_samples,
        )
    return out


def _expand_points(cfg: ExperimentConfig, solutions: dict[float, MdpSolution]):
    expanded = []
    for mech_idx, mg in enumerate(cfg.mechanisms):
        for tuning_idx, spec in enumerate(mg.points(cfg.gamma)):
            if spec.needs_solution:
                try:
                    spec = replace(spec, solution=solutions[spec.gamma])
                except KeyError:
                    raise ValueError(
                        f"no solved value table for gamma={spec.gamma}; run the solver first"
                    ) from None
            expanded.append((mech_idx, tuning_idx, spec))
    return expanded


def _episode_batch(args):
    cfg, spec, keys = args
    return [run_episode(cfg, spec, key) for key in keys]


def run_experiment(
    cfg: ExperimentConfig,
    solutions: dict[float, MdpSolution] | None = None,
    jobs: int = 1,
    runs_writer=None,
    trace_writer=None,
    discount_gammas: tuple[float, ...] = (),
) -> SimulationReport:
    """Run every configured (mechanism, tuning point) for the configured
    repetitions and aggregate per-round means. Episode seeds derive from
    (master seed, mechanism, tuning, repetition), so results do not depend
    on scheduling or worker count."""
    if solutions is None:
        solutions = solve_required(cfg)
    expanded = _expand_points(cfg, solutions)
    gammas = tuple(sorted(set(discount_gammas) | {cfg.gamma}))
    report = SimulationReport(cfg.name, cfg.rounds, cfg.repetitions)
    trace = trace_writer is not None

    for mech_idx, tuning_idx, spec in expanded:
        keys = [
            episode_seed(cfg.seed, mech_idx, tuning_idx, rep)
            for rep in range(cfg.repetitions)
        ]
        if jobs > 1 and cfg.repetitions > 1 and not trace:
            chunks = [keys[i : i + 25] for i in range(0, len(keys), 25)]
            with ProcessPoolExecutor(max_workers=jobs) as ex:
                parts = list(ex.map(_episode_batch, [(cfg, spec, c) for c in chunks]))
            logs = [log for part in parts for log in part]
        else:
            logs = [run_episode(cfg, spec, key, collect_details=trace) for key in keys]
        entry = _aggregate(cfg, spec, logs, gammas)
        report.entries.append(entry)
        if runs_writer is not None:
            _write_runs(runs_writer, cfg, spec, logs)
        if trace_writer is not None:
            _write_trace(trace_writer, cfg, spec, logs)

    best: dict[str, ReportEntry] = {}
    for e in report.entries:
        cur = best.get(e.kind)
        if cur is None or e.final_cum_revenue > cur.final_cum_revenue:
            best[e.kind] = e
    for e in best.values():
        e.is_best = True
    return report


def _aggregate(cfg, spec, logs, gammas) -> ReportEntry:
    rev = np.stack([log.revenue for log in logs])
    states = np.stack([log.states for log in logs])
    outcomes = np.stack([log.outcomes for log in logs])
    cum = rev.cumsum(axis=1)
    disc = {}
    for g in gammas:
        weights = g ** np.arange(cfg.rounds)
        per_ep = rev @ weights
        disc[g] = (float(per_ep.mean()), float(per_ep.std(ddof=1) / np.sqrt(len(logs))) if len(logs) > 1 else 0.0)
    return ReportEntry(
        kind=spec.kind,
        tuning=spec.label(),
        mean_state=states.mean(axis=0),
        mean_revenue=rev.mean(axis=0),
        mean_cum_revenue=cum.mean(axis=0),
        good_rate=(outcomes == Outcome.GOOD).mean(axis=0),
        bad_rate=(outcomes == Outcome.BAD).mean(axis=0),
        none_rate=(outcomes == Outcome.NONE).mean(axis=0),
        discounted=disc,
        final_cum_revenue=float(cum.mean(axis=0)[-1]),
    )


def _write_runs(writer, cfg, spec, logs):
    for rep, log in enumerate(logs):
        for i in range(cfg.rounds):
            writer.writerow(
                [
                    cfg.name,
                    spec.kind,
                    spec.label(),
                    rep,
                    i,
                    repr(float(log.states[i])),
                    _QUALITY_NAMES[Outcome(log.outcomes[i])],
                    repr(float(log.payments[i])),
                    repr(float(log.expected_revenue[i])),
                ]
            )


def _write_trace(writer, cfg, spec, logs):
    for rep, log in enumerate(logs):
        if not log.details:
            continue
        for i, d in enumerate(log.details):
            if not d:
                continue
            writer.writerow(
                [
                    cfg.name, spec.kind, spec.label(), rep, i,
                    d.get("stage"), d.get("phi_tilde"), d.get("i_star"),
                    d.get("rho1"), d.get("p1_prime"), int(bool(d.get("rho_clamped"))),
                ]
            )


def write_summary(path_or_fh, report: SimulationReport) -> None:
    close = False
    if isinstance(path_or_fh, (str, bytes)) or hasattr(path_or_fh, "__fspath__"):
        fh = open(path_or_fh, "w", newline="")
        close = True
    else:
        fh = path_or_fh
    try:
        w = csv.writer(fh)
        w.writerow(SUMMARY_COLUMNS)
        for e in report.entries:
            for i in range(report.rounds):
                w.writerow(
                    [
                        report.experiment,
                        e.kind,
                        e.tuning,
                        i,
                        repr(float(e.mean_state[i])),
                        repr(float(e.mean_revenue[i])),
                        repr(float(e.mean_cum_revenue[i])),
                        repr(float(e.good_rate[i])),
                        repr(float(e.bad_rate[i])),
                        repr(float(e.none_rate[i])),
                        int(e.is_best),
                    ]
                )
    finally:
        if close:
            fh.close()


def sweep_tuning(
    cfg: ExperimentConfig,
    solutions: dict[float, MdpSolution] | None = None,
    jobs: int = 1,
) -> list[tuple[str, str, float]]:
    """Cross-product sweep over the configured tuning grids; returns
    (mechanism, tuning, final mean cumulative revenue) rows."""
    report = run_experiment(cfg, solutions, jobs=jobs)
    return [(e.kind, e.tuning, e.final_cum_revenue) for e in report.entries]
