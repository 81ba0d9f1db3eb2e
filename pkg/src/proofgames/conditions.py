"""Well-formedness checks for prover-verifier games over finite strategy sets."""
from __future__ import annotations

import itertools
import math
from collections.abc import Mapping, Sequence
from dataclasses import dataclass, field
from typing import Any, Optional

import numpy as np

from .errors import DomainError
from .losses import Evaluation, loss_terms
from .messaging import Agent, Channel, GameSpec
from .protocols import BINARY_DECISIONS, REJECT, ACCEPT, LossSpec
from .strategies import Profile, pure_strategies, uniform_strategy


@dataclass(frozen=True)
class ConditionResult:
    holds: Optional[bool]
    detail: str
    witness: Any = None


@dataclass(frozen=True)
class PVGReport:
    conditions: Mapping[int, ConditionResult] = field(default_factory=dict)

    @property
    def all_hold(self) -> bool:
        return all(r.holds for r in self.conditions.values())

    def table(self) -> str:
        return "\n".join(f"{i}  {'-' if r.holds is None else ('yes' if r.holds else 'no '):<3}  {r.detail}"
                         for i, r in sorted(self.conditions.items()))


def accuracy(game: GameSpec, profile: Profile) -> float:
    """Prior-weighted probability of a correct decision."""
    ev = Evaluation(game, profile)
    return 1.0 - math.fsum(game.problem.prior[x] * ev.data[("main", x)].loss for x in game.problem.instances)


def _profiles(strategy_sets: Mapping[str, Sequence], limit: int, rng) -> list[dict]:
    agents = list(strategy_sets)
    sizes = [len(strategy_sets[a]) for a in agents]
    total = math.prod(sizes)
    if total <= limit:
        combos = itertools.product(*[range(s) for s in sizes])
    else:
        combos = (tuple(int(rng.integers(s)) for s in sizes) for _ in range(limit))
    return [{a: strategy_sets[a][i] for a, i in zip(agents, c)} for c in combos]


def prover_decides_game(game: GameSpec, prover: str) -> GameSpec:
    """Counterfactual game where ``prover`` alone owns the decision channel and decides at once."""
    if game.role(prover) != "prover":
        raise DomainError(f"{prover!r} is not a prover")
    kind = game.loss_spec.agent_losses[game.decision_agent]
    if set(game.decisions.values()) != {0, 1}:
        raise DomainError(f"counterfactual decider needs binary decisions, {game.name} has {game.decisions}")
    return GameSpec(
        problem=game.problem,
        agents=(Agent(prover, "verifier"),),
        channels=(Channel("decide", (prover,)),),
        mechanism=lambda channel, t: ((frozenset({prover}), 1.0),),
        message_spaces={(prover, "decide"): (REJECT, ACCEPT)},
        decision_channel=0,
        decision_agent=prover,
        decisions=BINARY_DECISIONS,
        max_rounds=1,
        loss_spec=LossSpec(game.loss_spec.protocol, {prover: kind}),
        views={prover: game.views[prover]} if prover in game.views else {},
        name=f"{game.name}/decided-by-{prover}",
    )


def _loss(game, strategies: Mapping, agent: str) -> float:
    return loss_terms(Evaluation(game, Profile(strategies)), agent).value


def check_pvg_conditions(game: GameSpec, problem, strategy_sets: Mapping[str, Sequence],
                         margin: float = 0.25, max_profiles: int = 400, seed: int = 0) -> PVGReport:
    """Check the four PVG conditions over the supplied finite strategy sets.

    Condition 2 reads "much greater" as a gap of at least ``margin`` above the best
    verifier loss over the sets.  Condition 3 minimises over every pure deciding
    strategy of the counterfactual game.
    """
    if problem is not game.problem:
        raise DomainError("problem must be the one the game was built on")
    for a in game.agent_names:
        if not len(strategy_sets.get(a, ())):
            raise DomainError(f"empty strategy set for {a!r}")
    rng = np.random.default_rng(seed)
    verifiers = game.agents_with_role("verifier")
    provers = game.agents_with_role("prover")
    decider = game.decision_agent
    profiles = _profiles({a: strategy_sets[a] for a in game.agent_names}, max_profiles, rng)
    losses = [{a: _loss(game, s, a) for a in game.agent_names} for s in profiles]
    acc = [accuracy(game, Profile(s)) for s in profiles]
    best_v = min(row[decider] for row in losses)
    out: dict[int, ConditionResult] = {}

    bad = None
    for i, j in itertools.combinations(range(len(profiles)), 2):
        for u, w in ((i, j), (j, i)):
            if (losses[u][decider] <= losses[w][decider]) != (acc[u] >= acc[w] - 1e-12):
                bad = (u, w)
                break
        if bad:
            break
    out[1] = ConditionResult(bad is None, "verifier loss order matches accuracy order"
                             if bad is None else f"profiles {bad} order loss and accuracy differently", bad)

    others = {a: uniform_strategy(game, a) for a in game.agent_names if a not in verifiers}
    solo = min(_loss(game, {**others, **dict(zip(verifiers, combo))}, j)
               for combo in itertools.product(*[strategy_sets[v] for v in verifiers]) for j in verifiers)
    out[2] = ConditionResult(solo >= best_v + margin,
                             f"best verifier-only loss {solo:.6g} vs optimum {best_v:.6g} (margin {margin})", solo)

    if not provers:
        out[3] = ConditionResult(False, "no prover")
    else:
        try:
            cf = {p: min(_loss(g, {p: s}, p) for s in pure_strategies(g, p))
                  for p in provers for g in [prover_decides_game(game, p)]}
            worst = max(cf.values())
            out[3] = ConditionResult(worst <= best_v + 1e-12,
                                     f"worst prover-decides optimum {worst:.6g} vs {best_v:.6g}", cf)
        except DomainError as exc:
            out[3] = ConditionResult(None, f"not applicable: {exc}")

    found = None
    for u, w in itertools.permutations(range(len(profiles)), 2):
        for i in verifiers:
            for j in provers:
                if losses[u][i] > losses[w][i] and losses[u][j] <= losses[w][j]:
                    found = (i, j, u, w)
                    break
            if found:
                break
        if found:
            break
    out[4] = ConditionResult(found is not None, "objectives misaligned" if found else
                             ("no prover" if not provers else "no opposed profile pair found"), found)
    return PVGReport(out)
