"""Protocol builders: adp, nip, mnip, debate, mac, zk-nip and a solo-verifier baseline."""
from __future__ import annotations

from collections.abc import Mapping, Sequence
from dataclasses import dataclass
from typing import Callable, Optional

from .errors import DomainError
from .messaging import Agent, Channel, GameSpec
from .problems import DecisionProblem

LOSS_IDS = frozenset({
    "adp_prover", "adp_verifier", "nip_prover", "nip_verifier", "debate_p1", "debate_p2",
    "debate_verifier", "mac_helpful", "mac_unhelpful", "mac_verifier", "zk_v2", "zk_v3",
    "zk_prover_lex", "zk_prover_weighted", "adversary", "solo_verifier",
})

REJECT, ACCEPT = "reject", "accept"
BINARY_DECISIONS = {REJECT: 0, ACCEPT: 1}
UNSURE = "unsure"
PROTOCOLS = ("adp", "nip", "mnip", "debate", "mac", "zk-nip", "solo")


@dataclass(frozen=True)
class LossSpec:
    protocol: str
    agent_losses: Mapping[str, str]
    gamma: float = 0.5
    zk_coefficient: float = 0.0
    lex_tolerance: float = 1e-9

    def __post_init__(self):
        object.__setattr__(self, "agent_losses", dict(self.agent_losses))
        unknown = set(self.agent_losses.values()) - LOSS_IDS
        if unknown:
            raise DomainError(f"unknown loss identifiers {sorted(unknown)}")
        if not 0.0 <= self.gamma <= 1.0:
            raise DomainError("gamma must lie in [0, 1]")
        if self.zk_coefficient < 0:
            raise DomainError("zk_coefficient must be non-negative")
        if self.lex_tolerance < 0:
            raise DomainError("lex_tolerance must be non-negative")


def _deterministic(table: Mapping[int, Sequence[str]]):
    def mechanism(channel: int, t: int):
        members = table.get(channel, {}).get(t)
        return ((frozenset(members or ()), 1.0),)
    return mechanism


def _default_max_rounds(n_agents: int, rounds: int) -> int:
    return 2 * n_agents * rounds


def _check_rounds(rounds: int) -> None:
    if rounds < 1:
        raise DomainError("rounds must be at least 1")


def build_adp(problem: DecisionProblem, prover_messages: Optional[Sequence] = None,
              verifier_view: Optional[Callable] = None) -> GameSpec:
    """One deterministic prover message, then the verifier decides."""
    msgs = tuple(problem.instances if prover_messages is None else prover_messages)
    mechanism = _deterministic({0: {1: ("p",), 2: ("v",)}})
    return GameSpec(
        problem=problem,
        agents=(Agent("p", "prover"), Agent("v", "verifier")),
        channels=(Channel("main", ("p", "v")),),
        mechanism=mechanism,
        message_spaces={("p", "main"): msgs, ("v", "main"): (REJECT, ACCEPT)},
        decision_channel=0,
        decision_agent="v",
        decisions=BINARY_DECISIONS,
        max_rounds=2,
        loss_spec=LossSpec("adp", {"p": "adp_prover", "v": "adp_verifier"}),
        views={} if verifier_view is None else {"v": verifier_view},
        pure_only={"p"},
        name="adp",
    )


def _alternating(prover: str, verifier: str, t: int) -> tuple:
    return (prover,) if (t - 1) % 2 == 0 else (verifier,)


def build_nip(problem: DecisionProblem, rounds: int = 1, prover_messages: Optional[Sequence] = None,
              verifier_queries: Sequence = (), verifier_view: Optional[Callable] = None,
              max_rounds: Optional[int] = None, label_visible: Sequence[str] = (),
              verifier_name: str = "v", name: str = "nip") -> GameSpec:
    """Single decision channel, prover on even steps, verifier on odd steps."""
    _check_rounds(rounds)
    msgs = tuple(problem.instances if prover_messages is None else prover_messages)
    queries = tuple(verifier_queries)
    v = verifier_name

    def mechanism(channel: int, t: int):
        return ((frozenset(_alternating("p", v, t)), 1.0),)

    return GameSpec(
        problem=problem,
        agents=(Agent("p", "prover"), Agent(v, "verifier")),
        channels=(Channel("main", ("p", v)),),
        mechanism=mechanism,
        message_spaces={("p", "main"): msgs, (v, "main"): queries + (REJECT, ACCEPT)},
        decision_channel=0,
        decision_agent=v,
        decisions=BINARY_DECISIONS,
        max_rounds=_default_max_rounds(2, rounds) if max_rounds is None else max_rounds,
        loss_spec=LossSpec("nip", {"p": "nip_prover", v: "nip_verifier"}),
        views={} if verifier_view is None else {v: verifier_view},
        label_visible=label_visible,
        name=name,
    )


def build_mnip(problem: DecisionProblem, rounds: int = 1, prover_messages: Optional[Sequence] = None,
               verifier_queries: Sequence = (), verifier_view: Optional[Callable] = None,
               max_rounds: Optional[int] = None) -> GameSpec:
    """Two provers on private channels with the verifier; the first channel carries decisions."""
    _check_rounds(rounds)
    msgs = tuple(problem.instances if prover_messages is None else prover_messages)
    queries = tuple(verifier_queries)

    def mechanism(channel: int, t: int):
        if (t - 1) % 2 == 0:
            return ((frozenset({"p1" if channel == 0 else "p2"}), 1.0),)
        if channel == 1 and not queries:
            return ((frozenset(), 1.0),)
        return ((frozenset({"v"}), 1.0),)

    spaces = {("p1", "c1"): msgs, ("p2", "c2"): msgs, ("v", "c1"): queries + (REJECT, ACCEPT)}
    if queries:
        spaces[("v", "c2")] = queries
    return GameSpec(
        problem=problem,
        agents=(Agent("p1", "prover"), Agent("p2", "prover"), Agent("v", "verifier")),
        channels=(Channel("c1", ("p1", "v")), Channel("c2", ("p2", "v"))),
        mechanism=mechanism,
        message_spaces=spaces,
        decision_channel=0,
        decision_agent="v",
        decisions=BINARY_DECISIONS,
        max_rounds=_default_max_rounds(3, rounds) if max_rounds is None else max_rounds,
        loss_spec=LossSpec("mnip", {"p1": "nip_prover", "p2": "nip_prover", "v": "nip_verifier"}),
        views={} if verifier_view is None else {"v": verifier_view},
        name="mnip",
    )


def debate_declaration(transcript, prover: str):
    """First message a debater sent (its declared answer), or ``None``."""
    for e in transcript.events:
        if e.sender == prover:
            return e.message
    return None


def _debate_correct(transcript, y: int) -> bool:
    choice = transcript.decision
    if choice not in (1, 2):
        return False
    return debate_declaration(transcript, f"p{choice}") == y


def build_debate(problem: DecisionProblem, rounds: int = 1, arguments: Sequence = (),
                 verifier_view: Optional[Callable] = None, max_rounds: Optional[int] = None) -> GameSpec:
    """Turns cycle p1, p2, v; the verifier picks a debater (1, 2) or keeps listening (0)."""
    _check_rounds(rounds)
    prover_msgs = (0, 1) + tuple(arguments)
    order = ("p1", "p2", "v")

    def mechanism(channel: int, t: int):
        return ((frozenset({order[(t - 1) % 3]}), 1.0),)

    return GameSpec(
        problem=problem,
        agents=(Agent("p1", "prover"), Agent("p2", "prover"), Agent("v", "verifier")),
        channels=(Channel("main", order),),
        mechanism=mechanism,
        message_spaces={("p1", "main"): prover_msgs, ("p2", "main"): prover_msgs, ("v", "main"): (0, 1, 2)},
        decision_channel=0,
        decision_agent="v",
        decisions={1: 1, 2: 2},
        max_rounds=3 * rounds if max_rounds is None else max_rounds,
        loss_spec=LossSpec("debate", {"p1": "debate_p1", "p2": "debate_p2", "v": "debate_verifier"}),
        views={} if verifier_view is None else {"v": verifier_view},
        correct=_debate_correct,
        name="debate",
    )


def build_mac(problem: DecisionProblem, feature_space: Optional[Sequence] = None, gamma: float = 0.5,
              verifier_view: Optional[Callable] = None) -> GameSpec:
    """Nature picks the helpful or unhelpful prover; the chosen one sends a feature; the verifier classifies."""
    features = tuple(problem.instances if feature_space is None else feature_space)
    if not features:
        raise DomainError("feature space must be non-empty")

    def mechanism(channel: int, t: int):
        if t == 1:
            return ((frozenset({"p1"}), 0.5), (frozenset({"p2"}), 0.5))
        if t == 2:
            return ((frozenset({"v"}), 1.0),)
        return ((frozenset(), 1.0),)

    return GameSpec(
        problem=problem,
        agents=(Agent("p1", "prover"), Agent("p2", "prover"), Agent("v", "verifier")),
        channels=(Channel("main", ("p1", "p2", "v")),),
        mechanism=mechanism,
        message_spaces={("p1", "main"): features, ("p2", "main"): features, ("v", "main"): (UNSURE, 0, 1)},
        decision_channel=0,
        decision_agent="v",
        decisions={UNSURE: -1, 0: 0, 1: 1},
        max_rounds=2,
        loss_spec=LossSpec("mac", {"p1": "mac_helpful", "p2": "mac_unhelpful", "v": "mac_verifier"},
                           gamma=gamma),
        views={} if verifier_view is None else {"v": verifier_view},
        meta={"selection": {"p1": 0.5, "p2": 0.5}},
        name="mac",
    )


def build_solo(problem: DecisionProblem, verifier_view: Optional[Callable] = None) -> GameSpec:
    """Verifier alone: one decision after the opening move."""
    return GameSpec(
        problem=problem,
        agents=(Agent("v", "verifier"),),
        channels=(Channel("main", ("v",)),),
        mechanism=_deterministic({0: {1: ("v",)}}),
        message_spaces={("v", "main"): (REJECT, ACCEPT)},
        decision_channel=0,
        decision_agent="v",
        decisions=BINARY_DECISIONS,
        max_rounds=1,
        loss_spec=LossSpec("solo", {"v": "solo_verifier"}),
        views={} if verifier_view is None else {"v": verifier_view},
        name="solo",
    )


@dataclass(frozen=True, eq=False)
class ZKNipGame:
    """zk-nip as three linked games sharing the prover ``p``.

    ``main`` is the nip game with the honest verifier ``v1``; ``dishonest`` pits the
    same prover policy against ``v2``; ``simulator`` lets ``v3`` emit message
    sequences alone.  The prover sees the label in both of its games; ``v2`` and ``v3``
    see the label and, by default, the honest verifier's view of the instance.
    """

    problem: DecisionProblem
    main: GameSpec
    dishonest: GameSpec
    simulator: GameSpec
    loss_spec: LossSpec
    mode: str = "weighted"
    name: str = "zk-nip"

    @property
    def agent_names(self) -> tuple:
        return ("p", "v1", "v2", "v3")

    def parts(self) -> dict:
        return {"main": self.main, "dishonest": self.dishonest, "simulator": self.simulator}

    def role(self, agent: str) -> str:
        return {"p": "prover", "v1": "verifier", "v2": "verifier", "v3": "simulator"}[agent]

    def games_of(self, agent: str) -> tuple:
        return {"p": ("main", "dishonest"), "v1": ("main",), "v2": ("dishonest",), "v3": ("simulator",)}[agent]


def build_zk_nip(problem: DecisionProblem, rounds: int = 1, zk_coefficient: float = 1.0,
                 mode: str = "weighted", prover_messages: Optional[Sequence] = None,
                 verifier_queries: Sequence = (), verifier_view: Optional[Callable] = None,
                 max_rounds: Optional[int] = None, lex_tolerance: float = 1e-9,
                 simulator_view: Optional[Callable] = None) -> ZKNipGame:
    if mode not in ("weighted", "lexicographic"):
        raise DomainError(f"mode must be 'weighted' or 'lexicographic', got {mode!r}")
    if zk_coefficient < 0:
        raise DomainError("zk_coefficient must be non-negative")
    msgs = tuple(problem.instances if prover_messages is None else prover_messages)
    queries = tuple(verifier_queries)
    cap = _default_max_rounds(2, rounds) if max_rounds is None else max_rounds
    main = build_nip(problem, rounds, msgs, queries, verifier_view, cap, label_visible=("p",),
                     verifier_name="v1", name="zk-nip/main")
    dishonest = build_nip(problem, rounds, msgs, queries, verifier_view, cap, label_visible=("p", "v2"),
                          verifier_name="v2", name="zk-nip/dishonest")
    sim_space = tuple(dict.fromkeys(msgs + queries + (REJECT, ACCEPT)))
    sim_view = verifier_view if simulator_view is None else simulator_view
    simulator = GameSpec(
        problem=problem,
        agents=(Agent("v3", "simulator"),),
        channels=(Channel("sim", ("v3",)),),
        mechanism=lambda channel, t: ((frozenset({"v3"}), 1.0),),
        message_spaces={("v3", "sim"): sim_space},
        decision_channel=0,
        decision_agent="v3",
        decisions=BINARY_DECISIONS,
        max_rounds=cap,
        views={} if sim_view is None else {"v3": sim_view},
        label_visible=("v3",),
        name="zk-nip/simulator",
    )
    prover_id = "zk_prover_weighted" if mode == "weighted" else "zk_prover_lex"
    spec = LossSpec("zk-nip", {"p": prover_id, "v1": "nip_verifier", "v2": "zk_v2", "v3": "zk_v3"},
                    zk_coefficient=zk_coefficient, lex_tolerance=lex_tolerance)
    return ZKNipGame(problem, main, dishonest, simulator, spec, mode)


def build_protocol(name: str, problem: DecisionProblem, **kwargs):
    """Dispatch on a protocol name from the run configuration."""
    builders = {
        "adp": build_adp, "nip": build_nip, "mnip": build_mnip, "debate": build_debate,
        "mac": build_mac, "zk-nip": build_zk_nip, "solo": build_solo,
    }
    try:
        builder = builders[name]
    except KeyError:
        raise DomainError(f"unknown protocol {name!r}; choose from {sorted(builders)}") from None
    return builder(problem, **kwargs)
