"""Behavioural strategies over finite observation histories."""
from __future__ import annotations

import itertools
import json
import math
from collections.abc import Mapping, Sequence
from dataclasses import dataclass
from typing import Any, Callable, Optional

import numpy as np

from .errors import DomainError, ProtocolViolation, UnknownObservationError

ROW_TOLERANCE = 1e-12


def observation_key(obs) -> str:
    """Stable JSON text for an observation (snapshot keys)."""
    return json.dumps(
        [obs.channel, obs.view, obs.label, [[c, list(h)] for c, h in obs.histories]],
        default=str,
        separators=(",", ":"),
    )


class Strategy:
    """Base class: ``distribution(obs)`` returns a probability vector over ``obs.space``."""

    def distribution(self, obs) -> np.ndarray:  # pragma: no cover - interface
        raise NotImplementedError

    @property
    def is_lottery(self) -> bool:
        return False


def _check_row(row, size: int, where) -> np.ndarray:
    vec = np.asarray(row, dtype=float)
    if vec.shape != (size,):
        raise DomainError(f"row for {where!r} has shape {vec.shape}, expected ({size},)")
    if np.any(vec < 0) or not np.all(np.isfinite(vec)) or abs(vec.sum() - 1.0) > ROW_TOLERANCE * max(1, size):
        raise DomainError(f"row for {where!r} is not a probability vector: {vec}")
    return vec


class TabularStrategy(Strategy):
    """Explicit probability rows per observation; unknown observations are errors."""

    def __init__(self, table: Mapping[Any, Sequence[float]]):
        self.table = {obs: _check_row(row, len(obs.space), obs) for obs, row in table.items()}

    def distribution(self, obs) -> np.ndarray:
        try:
            return self.table[obs]
        except KeyError:
            raise UnknownObservationError(observation_key(obs)) from None

    def is_pure(self) -> bool:
        return all(np.count_nonzero(r) == 1 for r in self.table.values())

    def replace_rows(self, rows: Mapping[Any, Sequence[float]]) -> "TabularStrategy":
        merged = dict(self.table)
        merged.update(rows)
        return TabularStrategy(merged)

    def __repr__(self) -> str:
        return f"TabularStrategy({len(self.table)} rows)"


class SoftmaxStrategy(Strategy):
    """Logit rows per observation, temperature 1.

    ``params()`` flattens the rows in ``keys`` order; ``with_params`` inverts it.
    """

    def __init__(self, logits: Mapping[Any, Sequence[float]]):
        self.keys = tuple(logits)
        self.logits = {}
        for obs in self.keys:
            row = np.asarray(logits[obs], dtype=float)
            if row.shape != (len(obs.space),) or not np.all(np.isfinite(row)):
                raise DomainError(f"invalid logits for {observation_key(obs)}")
            self.logits[obs] = row
        offsets = np.cumsum([0] + [len(k.space) for k in self.keys])
        self.slices = {k: slice(int(offsets[i]), int(offsets[i + 1])) for i, k in enumerate(self.keys)}
        self.size = int(offsets[-1])

    def distribution(self, obs) -> np.ndarray:
        try:
            z = self.logits[obs]
        except KeyError:
            raise UnknownObservationError(observation_key(obs)) from None
        e = np.exp(z - z.max())
        return e / e.sum()

    def params(self) -> np.ndarray:
        if not self.keys:
            return np.zeros(0)
        return np.concatenate([self.logits[k] for k in self.keys])

    def with_params(self, theta: np.ndarray) -> "SoftmaxStrategy":
        theta = np.asarray(theta, dtype=float)
        if theta.shape != (self.size,):
            raise DomainError(f"expected {self.size} parameters, got {theta.shape}")
        return SoftmaxStrategy({k: theta[self.slices[k]] for k in self.keys})

    def to_tabular(self) -> TabularStrategy:
        return TabularStrategy({k: self.distribution(k) for k in self.keys})

    def __repr__(self) -> str:
        return f"SoftmaxStrategy({len(self.keys)} rows, {self.size} params)"


class FunctionStrategy(Strategy):
    """Wraps ``fn(obs)`` returning a message or a ``{message: prob}`` mapping."""

    def __init__(self, fn: Callable, name: str = "fn"):
        self.fn = fn
        self.name = name

    def distribution(self, obs) -> np.ndarray:
        out = self.fn(obs)
        vec = np.zeros(len(obs.space))
        if isinstance(out, Mapping):
            for m, p in out.items():
                if m not in obs.space:
                    raise ProtocolViolation(f"{self.name} produced {m!r} outside {obs.space!r}")
                vec[obs.space.index(m)] += p
        else:
            if out not in obs.space:
                raise ProtocolViolation(f"{self.name} produced {out!r} outside {obs.space!r}")
            vec[obs.space.index(out)] = 1.0
        return vec

    def __repr__(self) -> str:
        return f"FunctionStrategy({self.name})"


class MixtureStrategy(Strategy):
    """Convex combination of component strategies.

    With ``lottery=False`` the mixture is applied at every decision node; with
    ``lottery=True`` one component is drawn per episode (see ``Profile.branches``).
    """

    def __init__(self, components: Sequence[Strategy], weights: Sequence[float], lottery: bool = False,
                 name: str = "mixture"):
        w = np.asarray(weights, dtype=float)
        if len(components) != len(w) or not len(w):
            raise DomainError("components and weights must be non-empty and aligned")
        if np.any(w < 0) or abs(w.sum() - 1.0) > 1e-9:
            raise DomainError(f"mixture weights must form a distribution, got {w}")
        self.components = tuple(components)
        self.weights = w / w.sum()
        self.lottery = lottery
        self.name = name

    @property
    def is_lottery(self) -> bool:
        return self.lottery

    def distribution(self, obs) -> np.ndarray:
        if self.lottery:
            raise DomainError("a lottery must be resolved per episode before it is queried")
        out = np.zeros(len(obs.space))
        for c, w in zip(self.components, self.weights):
            if w > 0:
                out += w * c.distribution(obs)
        return out

    def __repr__(self) -> str:
        return f"MixtureStrategy({self.name}, weights={np.round(self.weights, 6).tolist()})"


@dataclass(frozen=True, eq=False)
class CorrelationDevice:
    """Distribution over joint pure strategies for ``agents``."""

    agents: tuple
    support: tuple
    probs: tuple

    def __post_init__(self):
        p = np.asarray(self.probs, dtype=float)
        if len(self.support) != len(p) or not len(p):
            raise DomainError("device support and probabilities must be non-empty and aligned")
        if np.any(p < 0) or abs(p.sum() - 1.0) > 1e-9:
            raise DomainError("device probabilities must be normalised")
        for joint in self.support:
            if len(joint) != len(self.agents):
                raise DomainError("each joint strategy needs one entry per agent")
        object.__setattr__(self, "agents", tuple(self.agents))
        object.__setattr__(self, "support", tuple(tuple(j) for j in self.support))
        object.__setattr__(self, "probs", tuple(float(x) for x in p / p.sum()))

    @classmethod
    def product(cls, agents: Sequence[str], marginals: Sequence[tuple[Sequence[Strategy], Sequence[float]]]):
        support, probs = [], []
        for combo in itertools.product(*[list(zip(s, w)) for s, w in marginals]):
            support.append(tuple(s for s, _ in combo))
            probs.append(math.prod(w for _, w in combo))
        return cls(tuple(agents), tuple(support), tuple(probs))


def sample_joint_prover(device: CorrelationDevice, rng: np.random.Generator) -> tuple:
    i = rng.choice(len(device.support), p=np.asarray(device.probs))
    return device.support[i]


@dataclass(frozen=True, eq=False)
class Profile:
    """Strategies per agent plus an optional correlation device over some agents."""

    strategies: Mapping[str, Strategy]
    device: Optional[CorrelationDevice] = None

    def __post_init__(self):
        object.__setattr__(self, "strategies", dict(self.strategies))

    def replace(self, **updates: Strategy) -> "Profile":
        merged = dict(self.strategies)
        merged.update(updates)
        return Profile(merged, self.device)

    def with_device(self, device: Optional[CorrelationDevice]) -> "Profile":
        return Profile(self.strategies, device)

    def branches(self) -> list[tuple[float, dict]]:
        """Episode-level resolution of lotteries and the device into behavioural profiles."""
        options: list[list[tuple[float, dict]]] = []
        if self.device is not None:
            options.append([(p, dict(zip(self.device.agents, joint)))
                            for joint, p in zip(self.device.support, self.device.probs) if p > 0])
        for agent, s in self.strategies.items():
            if s.is_lottery:
                options.append([(w, {agent: c}) for c, w in zip(s.components, s.weights) if w > 0])
        if not options:
            return [(1.0, dict(self.strategies))]
        out = []
        for combo in itertools.product(*options):
            merged = dict(self.strategies)
            weight = 1.0
            for w, assignment in combo:
                weight *= w
                merged.update(assignment)
            out.append((weight, merged))
        return out

    def sample(self, rng: np.random.Generator) -> dict:
        branches = self.branches()
        if len(branches) == 1:
            return branches[0][1]
        i = rng.choice(len(branches), p=np.array([w for w, _ in branches]))
        return branches[i][1]


# -- constructors ---------------------------------------------------------------------


def uniform_strategy(game, agent: str) -> TabularStrategy:
    from .messaging import reachable_observations

    return TabularStrategy({obs: np.full(len(obs.space), 1.0 / len(obs.space))
                            for obs in reachable_observations(game, agent)})


def make_tabular_softmax(game, agent: str, init: str = "zeros", std: float = 1.0,
                         seed: Optional[int] = None) -> SoftmaxStrategy:
    from .messaging import reachable_observations

    if agent not in game.agent_names:
        raise DomainError(f"unknown agent {agent!r}")
    keys = reachable_observations(game, agent)
    if init == "zeros" or std == 0:
        return SoftmaxStrategy({k: np.zeros(len(k.space)) for k in keys})
    if init != "gaussian":
        raise DomainError(f"unknown init scheme {init!r}")
    rng = np.random.default_rng(seed)
    return SoftmaxStrategy({k: std * rng.standard_normal(len(k.space)) for k in keys})


def pure_strategies(game, agent: str, limit: int = 100_000) -> list[TabularStrategy]:
    """Every deterministic tabular strategy over the agent's reachable observations."""
    from .errors import BudgetExceeded
    from .messaging import reachable_observations

    keys = reachable_observations(game, agent)
    count = math.prod(len(k.space) for k in keys)
    if count > limit:
        raise BudgetExceeded(f"{count} pure strategies for {agent!r} exceed the cap {limit}")
    out = []
    for choice in itertools.product(*[range(len(k.space)) for k in keys]):
        out.append(TabularStrategy({k: np.eye(len(k.space))[c] for k, c in zip(keys, choice)}))
    return out


def tabular_from_rule(game, agent: str, rule: Callable) -> TabularStrategy:
    """Deterministic table from ``rule(obs) -> message`` on every reachable observation."""
    from .messaging import reachable_observations

    table = {}
    for obs in reachable_observations(game, agent):
        m = rule(obs)
        if m not in obs.space:
            raise ProtocolViolation(f"rule produced {m!r} outside {obs.space!r}")
        table[obs] = np.eye(len(obs.space))[obs.space.index(m)]
    return TabularStrategy(table)


def strategy_snapshot(strategy: Strategy) -> dict:
    if isinstance(strategy, SoftmaxStrategy):
        return {"kind": "softmax",
                "rows": {observation_key(k): strategy.logits[k].tolist() for k in strategy.keys}}
    if isinstance(strategy, TabularStrategy):
        return {"kind": "tabular",
                "rows": {observation_key(k): v.tolist() for k, v in strategy.table.items()}}
    if isinstance(strategy, MixtureStrategy):
        return {"kind": "mixture", "lottery": strategy.lottery, "weights": strategy.weights.tolist(),
                "components": [strategy_snapshot(c) for c in strategy.components]}
    return {"kind": "function", "name": getattr(strategy, "name", repr(strategy))}


def load_snapshot(snapshot: dict, observations: Sequence) -> Strategy:
    """Rebuild a tabular or softmax strategy from a snapshot and the game's observation set."""
    by_key = {observation_key(o): o for o in observations}
    rows = {}
    for key, row in snapshot["rows"].items():
        if key not in by_key:
            raise UnknownObservationError(key)
        rows[by_key[key]] = row
    if snapshot["kind"] == "softmax":
        return SoftmaxStrategy(rows)
    if snapshot["kind"] == "tabular":
        return TabularStrategy(rows)
    raise DomainError(f"cannot rebuild a {snapshot['kind']!r} snapshot")
