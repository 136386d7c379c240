"""Experiment configuration files.

Flat key=value sections: [experiment] for run parameters, [kernel] for
the per-outcome state transitions, one [ad.N] section per bidder, one
[mechanism.NAME] section per auction rule (values may be comma lists,
which become tuning grids). A config may instead carry an [oracle]
section with explicit [transition.OUTCOME] rows to describe a small
discrete instance for the verification tools.
"""

from __future__ import annotations

import configparser

import numpy as np

from .distributions import make_distribution
from .mechanisms import MECHANISM_KINDS
from .oracle import DiscreteInstance
from .simulate import ExperimentConfig, MechanismGrid
from .solver import AdProfile, AdSpec, Outcome, StateGrid, TransitionKernel


class ConfigError(ValueError):
    """Malformed or inconsistent configuration."""


def _floats(raw: str) -> tuple[float, ...]:
    raw = raw.strip().strip("[]")
    if not raw:
        return ()
    return tuple(float(x) for x in raw.replace(";", ",").split(","))


def _quality(raw: str) -> int | None:
    key = raw.strip().lower()
    table = {"good": 1, "+1": 1, "1": 1, "bad": -1, "-1": -1, "random": None}
    if key not in table:
        raise ConfigError(f"quality must be good/bad/random, got {raw!r}")
    return table[key]


def _read(path) -> configparser.ConfigParser:
    cp = configparser.ConfigParser(interpolation=None)
    cp.optionxform = str
    found = cp.read(path)
    if not found:
        raise ConfigError(f"cannot read config file {path}")
    return cp


def _distribution(section) -> "make_distribution":
    kind = section.get("kind")
    if kind is None:
        raise ConfigError("ad section needs a 'kind'")
    params = {}
    for key in ("lo", "hi", "mu", "sigma", "v"):
        if key in section:
            params[key] = float(section[key])
    if "support" in section:
        params["support"] = _floats(section["support"])
    if "probs" in section:
        params["probs"] = _floats(section["probs"])
    try:
        return make_distribution(kind.strip().lower(), **params)
    except (ValueError, KeyError) as exc:
        raise ConfigError(f"bad distribution: {exc}") from exc


def _ads(cp) -> tuple[AdSpec, ...]:
    sections = sorted(
        (name for name in cp.sections() if name.startswith("ad.")),
        key=lambda s: int(s.split(".", 1)[1]),
    )
    if not sections:
        raise ConfigError("config declares no [ad.N] sections")
    ads = []
    for name in sections:
        sec = cp[name]
        if "quality" not in sec:
            raise ConfigError(f"[{name}] needs a quality")
        ads.append(AdSpec(_distribution(sec), _quality(sec["quality"])))
    return tuple(ads)


def _mechanisms(cp) -> list[MechanismGrid]:
    grids = []
    for name in cp.sections():
        if not name.startswith("mechanism."):
            continue
        kind = name.split(".", 1)[1].strip().lower()
        if kind not in MECHANISM_KINDS:
            raise ConfigError(f"unknown mechanism kind {kind!r} in [{name}]")
        sec = cp[name]
        grids.append(
            MechanismGrid(
                kind=kind,
                etas=_floats(sec["eta"]) if "eta" in sec else (0.0,),
                reserves=_floats(sec["r"]) if "r" in sec else (0.0,),
                gammas=_floats(sec["gamma"]) if "gamma" in sec else (),
            )
        )
    return grids


def load_experiment(path, seed_override: int | None = None) -> ExperimentConfig:
    cp = _read(path)
    if "experiment" not in cp:
        raise ConfigError(f"{path} has no [experiment] section")
    exp = cp["experiment"]
    try:
        grid_points = int(exp.get("grid_points", 11))
        grid = StateGrid.default(grid_points)
        kern_sec = cp["kernel"] if "kernel" in cp else {}
        kernel = TransitionKernel.step_kernel(
            grid,
            good_up=float(kern_sec.get("good_up", 0.2)),
            bad_down=float(kern_sec.get("bad_down", 0.8)),
            none_up=float(kern_sec.get("none_up", 0.1)),
        )
        gamma = float(exp.get("gamma", 0.95))
        if not 0.0 <= gamma < 1.0:
            raise ConfigError(f"gamma must be < 1 and >= 0, got {gamma}")
        cfg = ExperimentConfig(
            name=exp.get("name", "experiment"),
            profile=AdProfile(_ads(cp)),
            grid=grid,
            kernel=kernel,
            mechanisms=_mechanisms(cp),
            rounds=int(exp.get("rounds", 500)),
            repetitions=int(exp.get("repetitions", 100)),
            initial_state=float(exp.get("initial_state", 0.5)),
            seed=seed_override if seed_override is not None else int(exp.get("seed", 0)),
            click_mode=exp.get("click_mode", "expected").strip().lower(),
            gamma=gamma,
            solver_tol=float(exp.get("solver_tol", 1e-9)),
            solver_max_iters=int(exp.get("solver_max_iters", 10_000)),
            solver_samples=int(exp.get("solver_samples", 20_000)),
        )
    except ConfigError:
        raise
    except (KeyError, ValueError) as exc:
        raise ConfigError(f"bad experiment config {path}: {exc}") from exc
    return cfg


def has_oracle_section(path) -> bool:
    return "oracle" in _read(path)


def load_oracle_instance(path) -> DiscreteInstance:
    cp = _read(path)
    if "oracle" not in cp:
        raise ConfigError(f"{path} has no [oracle] section")
    sec = cp["oracle"]
    try:
        states = _floats(sec["states"])
        gamma = float(sec.get("gamma", 0.95))
        ads = _ads(cp)
        n = len(states)
        t = np.zeros((n, 3, n))
        names = {"good": Outcome.GOOD, "bad": Outcome.BAD, "none": Outcome.NONE}
        for label, outcome in names.items():
            section = f"transition.{label}"
            if section not in cp:
                raise ConfigError(f"missing [{section}] rows")
            for key, raw in cp[section].items():
                k = _state_index(states, float(key))
                row = _floats(raw)
                if len(row) != n:
                    raise ConfigError(f"[{section}] row for {key} has {len(row)} entries, needs {n}")
                t[k, outcome] = row
        return DiscreteInstance(tuple(states), t, ads, gamma)
    except ConfigError:
        raise
    except (KeyError, ValueError) as exc:
        raise ConfigError(f"bad oracle config {path}: {exc}") from exc


def _state_index(states, value: float) -> int:
    diffs = [abs(s - value) for s in states]
    k = int(np.argmin(diffs))
    if diffs[k] > 1e-9:
        raise ConfigError(f"transition row state {value} not in {states}")
    return k
