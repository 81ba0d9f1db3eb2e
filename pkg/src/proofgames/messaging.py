"""Messaging games: channels, mechanism, anonymous observations, rollouts and exact enumeration.

Time 0 is always the opening move: every channel receives the instance drawn from the
problem prior.  The mechanism is consulted for ``t >= 1`` only.
"""
from __future__ import annotations

import itertools
import json
import weakref
from collections.abc import Mapping, Sequence
from dataclasses import dataclass, field
from typing import Any, Callable, NamedTuple, Optional

import numpy as np

from .errors import BudgetExceeded, DomainError, NotTerminatedError, ProtocolViolation
from .problems import DecisionProblem

ROLES = ("prover", "verifier", "adversary", "simulator")
DEFAULT_BUDGET = 10**7
PROB_TOLERANCE = 1e-9


@dataclass(frozen=True)
class Agent:
    name: str
    role: str

    def __post_init__(self):
        if self.role not in ROLES:
            raise DomainError(f"unknown role {self.role!r}")


@dataclass(frozen=True)
class Channel:
    name: str
    members: tuple

    def __post_init__(self):
        object.__setattr__(self, "members", tuple(self.members))


SenderDistribution = Sequence[tuple[frozenset, float]]


@dataclass(frozen=True, eq=False)
class GameSpec:
    """A finite messaging game over a decision problem.

    ``mechanism(channel_index, t)`` gives the sender-set distribution for ``t >= 1``.
    ``message_spaces[(agent, channel_name)]`` is the ordered alphabet the agent uses
    there.  A message of ``decision_agent`` in the decision channel that appears in
    ``decisions`` ends play with the mapped value.
    """

    problem: DecisionProblem
    agents: tuple
    channels: tuple
    mechanism: Callable[[int, int], SenderDistribution]
    message_spaces: Mapping[tuple, tuple]
    decision_channel: int
    decision_agent: str
    decisions: Mapping[Any, int]
    max_rounds: int
    loss_spec: Any = None
    views: Mapping[str, Callable] = field(default_factory=dict)
    label_visible: frozenset = frozenset()
    random_messages: tuple = ()
    correct: Optional[Callable] = None
    pure_only: frozenset = frozenset()
    name: str = "game"
    meta: Mapping = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "agents", tuple(self.agents))
        object.__setattr__(self, "channels", tuple(self.channels))
        object.__setattr__(self, "message_spaces", {k: tuple(v) for k, v in self.message_spaces.items()})
        object.__setattr__(self, "label_visible", frozenset(self.label_visible))
        object.__setattr__(self, "pure_only", frozenset(self.pure_only))
        object.__setattr__(self, "random_messages", tuple(self.random_messages))
        names = [a.name for a in self.agents]
        if len(set(names)) != len(names):
            raise DomainError("agent names must be unique")
        if self.max_rounds < 1:
            raise DomainError("max_rounds must be at least 1")
        if not 0 <= self.decision_channel < len(self.channels):
            raise DomainError("decision channel index out of range")
        for ch in self.channels:
            unknown = set(ch.members) - set(names)
            if unknown:
                raise DomainError(f"channel {ch.name!r} has unknown members {sorted(unknown)}")
        dec = self.channels[self.decision_channel]
        deciders = [a for a in self.agents if a.name in dec.members and a.role in ("verifier", "simulator")]
        if len(deciders) != 1 or deciders[0].name != self.decision_agent:
            raise DomainError("the decision channel must contain exactly one deciding verifier")
        for (agent, channel), space in self.message_spaces.items():
            if not space:
                raise DomainError(f"empty message space for {agent!r} on {channel!r}")
        if (self.decision_agent, dec.name) not in self.message_spaces:
            raise DomainError("the deciding verifier has no message space in the decision channel")
        if not any(m in self.decisions for m in self.message_spaces[(self.decision_agent, dec.name)]):
            raise DomainError("the deciding verifier cannot emit any decision")

    # -- lookups ------------------------------------------------------------------

    @property
    def agent_names(self) -> tuple:
        return tuple(a.name for a in self.agents)

    def role(self, agent: str) -> str:
        for a in self.agents:
            if a.name == agent:
                return a.role
        raise DomainError(f"unknown agent {agent!r}")

    def agents_with_role(self, role: str) -> tuple:
        return tuple(a.name for a in self.agents if a.role == role)

    def channel_index(self, name: str) -> int:
        for i, ch in enumerate(self.channels):
            if ch.name == name:
                return i
        raise DomainError(f"unknown channel {name!r}")

    def channels_of(self, agent: str) -> tuple:
        return tuple(i for i, ch in enumerate(self.channels) if agent in ch.members)

    def view(self, agent: str, x):
        fn = self.views.get(agent)
        return x if fn is None else fn(x)

    def senders(self, channel: int, t: int) -> SenderDistribution:
        if t == 0:
            return ((frozenset(), 1.0),)
        return tuple(self.mechanism(channel, t))

    def is_correct(self, transcript: "Transcript", y: int) -> bool:
        if self.correct is not None:
            return bool(self.correct(transcript, y))
        return decision_of(transcript) == y


class Observation(NamedTuple):
    """What an agent sees when asked to speak: no sender identities, no clock."""

    channel: str
    view: Any
    label: Optional[int]
    histories: tuple  # ((channel_name, (messages...)), ...) over the agent's channels
    space: tuple


class Event(NamedTuple):
    t: int
    channel: str
    sender: Optional[str]
    message: Any


@dataclass(frozen=True)
class Transcript:
    events: tuple
    decision: Optional[int]
    truncated: bool = False

    def messages(self, channel: Optional[str] = None) -> tuple:
        """Post-opening messages in order, optionally restricted to one channel."""
        return tuple(e.message for e in self.events if e.t > 0 and (channel is None or e.channel == channel))

    def to_json(self, game: GameSpec) -> dict:
        events = []
        for e in self.events:
            if e.t == 0:
                idx = game.problem.index(e.message)
            elif e.sender is None:
                idx = game.random_messages.index(e.message)
            else:
                idx = game.message_spaces[(e.sender, e.channel)].index(e.message)
            events.append({"t": e.t, "channel": e.channel, "sender": e.sender, "message": idx})
        return {"events": events, "decision": self.decision, "truncated": self.truncated}

    def dumps(self, game: GameSpec) -> str:
        return json.dumps(self.to_json(game), sort_keys=True, separators=(",", ":"))


def decision_of(transcript: Transcript) -> int:
    if transcript.decision is not None:
        return transcript.decision
    if transcript.truncated:
        return 0
    raise NotTerminatedError("transcript has no decision yet")


@dataclass(frozen=True)
class GameState:
    x: Any
    histories: tuple
    t: int
    events: tuple
    decision: Optional[int] = None
    truncated: bool = False

    @property
    def terminated(self) -> bool:
        return self.decision is not None or self.truncated

    def transcript(self) -> Transcript:
        return Transcript(self.events, self.decision, self.truncated)


def initial_state(game: GameSpec, x) -> GameState:
    """State right after the opening move (clock at 1)."""
    game.problem.index(x)
    events = tuple(Event(0, ch.name, None, x) for ch in game.channels)
    return GameState(x, tuple(() for _ in game.channels), 1, events)


def observe(game: GameSpec, state: GameState, agent: str, channel: int) -> Observation:
    ch = game.channels[channel]
    label = game.problem.labels[state.x] if agent in game.label_visible else None
    hist = tuple((game.channels[c].name, state.histories[c]) for c in game.channels_of(agent))
    return Observation(ch.name, game.view(agent, state.x), label, hist,
                       game.message_spaces[(agent, ch.name)])


class Choice(NamedTuple):
    agent: str
    obs: Observation
    index: int
    dist: np.ndarray


def _validated(dist, obs: Observation, agent: str) -> np.ndarray:
    vec = np.asarray(dist, dtype=float)
    if vec.shape != (len(obs.space),):
        raise ProtocolViolation(f"{agent!r} returned {vec.shape[0] if vec.ndim else 0} probabilities "
                                f"for a space of size {len(obs.space)}")
    if np.any(vec < -PROB_TOLERANCE) or abs(vec.sum() - 1.0) > PROB_TOLERANCE:
        raise ProtocolViolation(f"{agent!r} returned a non-distribution {vec}")
    return vec


def _step_outcomes(game: GameSpec, strategies: Mapping, state: GameState):
    """All one-step successors: yields (prob, next_state, choices)."""
    per_channel = []
    for ci, ch in enumerate(game.channels):
        options = []
        for senders, p_set in game.senders(ci, state.t):
            if p_set <= 0:
                continue
            senders = frozenset(senders)
            if not senders <= set(ch.members):
                raise ProtocolViolation(f"mechanism selected non-members {sorted(senders - set(ch.members))} "
                                        f"in channel {ch.name!r}")
            if not senders:
                if game.random_messages:
                    q = 1.0 / len(game.random_messages)
                    for m in game.random_messages:
                        options.append((p_set * q, ((None, m, None),)))
                else:
                    options.append((p_set, ()))
                continue
            ordered = [a for a in game.agent_names if a in senders]
            draws = []
            for agent in ordered:
                obs = observe(game, state, agent, ci)
                dist = _validated(strategies[agent].distribution(obs), obs, agent)
                draws.append([(dist[k], (agent, obs.space[k], Choice(agent, obs, k, dist)))
                              for k in range(len(obs.space)) if dist[k] > 0])
            for combo in itertools.product(*draws):
                prob = p_set
                for p, _ in combo:
                    prob *= p
                options.append((prob, tuple(item for _, item in combo)))
        per_channel.append(options)
    dec_name = game.channels[game.decision_channel].name
    for combo in itertools.product(*per_channel):
        prob = 1.0
        new_hist = list(state.histories)
        events = list(state.events)
        choices = []
        decision = None
        for ci, (p, sends) in enumerate(combo):
            prob *= p
            ch_name = game.channels[ci].name
            msgs = []
            for agent, m, choice in sends:
                msgs.append(m)
                events.append(Event(state.t, ch_name, agent, m))
                if choice is not None:
                    choices.append(choice)
                if agent == game.decision_agent and ch_name == dec_name and m in game.decisions:
                    decision = game.decisions[m]
            new_hist[ci] = new_hist[ci] + tuple(msgs)
        truncated = decision is None and state.t >= game.max_rounds
        yield prob, GameState(state.x, tuple(new_hist), state.t + 1, tuple(events), decision, truncated), tuple(choices)


def _behavioural(game: GameSpec, profile) -> Mapping:
    branches = profile.branches()
    if len(branches) != 1:
        raise DomainError("profile contains lotteries; resolve it with Profile.sample first")
    return branches[0][1]


def advance_state(game: GameSpec, profile, state: GameState, rng: np.random.Generator) -> GameState:
    """One sampled step of play under a behavioural profile (or a resolved strategy map)."""
    if state.terminated:
        raise DomainError("cannot advance a terminated state")
    strategies = profile if isinstance(profile, Mapping) else _behavioural(game, profile)
    outcomes = list(_step_outcomes(game, strategies, state))
    probs = np.array([p for p, _, _ in outcomes])
    i = rng.choice(len(outcomes), p=probs / probs.sum())
    return outcomes[i][1]


def rollout(game: GameSpec, profile, x, rng: np.random.Generator) -> Transcript:
    strategies = profile.sample(rng) if not isinstance(profile, Mapping) else profile
    state = initial_state(game, x)
    while not state.terminated:
        state = advance_state(game, strategies, state, rng)
    return state.transcript()


class Branch(NamedTuple):
    transcript: Transcript
    prob: float
    choices: tuple


def enumerate_branches(game: GameSpec, strategies: Mapping, x, budget: int = DEFAULT_BUDGET) -> list[Branch]:
    """Depth-first expansion of a behavioural profile into weighted terminal branches."""
    out: list[Branch] = []
    expanded = 0
    stack = [(initial_state(game, x), 1.0, ())]
    while stack:
        state, prob, choices = stack.pop()
        if state.terminated:
            out.append(Branch(state.transcript(), prob, choices))
            continue
        succ = list(_step_outcomes(game, strategies, state))
        expanded += len(succ)
        if expanded > budget:
            raise BudgetExceeded(f"enumeration exceeded {budget} branches on instance {x!r}")
        for p, nxt, ch in reversed(succ):
            if p > 0:
                stack.append((nxt, prob * p, choices + ch))
    return out


def enumerate_transcript_distribution(game: GameSpec, profile, x, budget: int = DEFAULT_BUDGET) -> dict:
    """Exact mapping transcript -> probability, lotteries and devices included."""
    dist: dict = {}
    for weight, strategies in profile.branches():
        for b in enumerate_branches(game, strategies, x, budget):
            dist[b.transcript] = dist.get(b.transcript, 0.0) + weight * b.prob
    return dist


def reachable_observations(game: GameSpec, agent: str, budget: int = DEFAULT_BUDGET) -> list[Observation]:
    """Every observation at which ``agent`` may be asked to speak, in discovery order."""
    if hasattr(game, "parts"):
        merged: dict = {}
        for g in game.parts().values():
            if agent in g.agent_names:
                merged.update(dict.fromkeys(reachable_observations(g, agent, budget)))
        return list(merged)
    per_game = _REACHABLE_CACHE.setdefault(game, {})
    if agent in per_game:
        return list(per_game[agent])
    seen: dict = {}
    everyone = {a: _AllMessages() for a in game.agent_names}
    expanded = 0
    for x in game.problem.instances:
        stack = [initial_state(game, x)]
        while stack:
            state = stack.pop()
            if state.terminated:
                continue
            for ci in range(len(game.channels)):
                for senders, p in game.senders(ci, state.t):
                    if p > 0 and agent in senders:
                        obs = observe(game, state, agent, ci)
                        seen.setdefault(obs, None)
            succ = list(_step_outcomes(game, everyone, state))
            expanded += len(succ)
            if expanded > budget:
                raise BudgetExceeded(f"observation search exceeded {budget} branches")
            stack.extend(nxt for _, nxt, _ in reversed(succ))
    result = list(seen)
    per_game[agent] = tuple(result)
    return result


_REACHABLE_CACHE: "weakref.WeakKeyDictionary" = weakref.WeakKeyDictionary()


class _AllMessages:
    def distribution(self, obs):
        return np.full(len(obs.space), 1.0 / len(obs.space))
