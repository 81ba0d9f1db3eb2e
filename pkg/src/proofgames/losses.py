"""Exact instance losses, protocol loss functionals, validity and zero-knowledge errors.

Every protocol loss is a function of the terminal-branch probabilities of one or more
games, plus (for log-loss protocols) the deciding agent's own probability at its
decision node.  ``loss_terms`` returns the value together with the partial derivatives
with respect to each branch probability and those direct log-probability terms, which
is exactly what ``dynamics.exact_gradient`` needs.
"""
from __future__ import annotations

import json
import math
from collections.abc import Iterable, Mapping, Sequence
from dataclasses import dataclass, field
from typing import Any, Optional

import numpy as np

from .errors import BudgetExceeded, DomainError
from .messaging import (DEFAULT_BUDGET, Branch, GameSpec, decision_of, enumerate_branches, rollout)
from .protocols import ZKNipGame
from .strategies import Profile, pure_strategies

INF = math.inf


@dataclass(frozen=True)
class LossEstimate:
    value: float
    mode: str = "exact"
    samples: Optional[int] = None
    stderr: Optional[float] = None
    witness: Any = None
    secondary: Optional[float] = None

    def __post_init__(self):
        if self.mode not in ("exact", "monte-carlo"):
            raise DomainError(f"unknown estimate mode {self.mode!r}")
        if self.mode == "exact" and self.stderr is not None:
            raise DomainError("exact estimates carry no standard error")

    def __float__(self) -> float:
        return float(self.value)


# -- branch bookkeeping -----------------------------------------------------------------


def profile_branches(game: GameSpec, profile: Profile, x, budget: int = DEFAULT_BUDGET) -> list[Branch]:
    """Terminal branches with lotteries folded into the probabilities."""
    out = []
    for weight, strategies in profile.branches():
        for b in enumerate_branches(game, strategies, x, budget):
            out.append(Branch(b.transcript, weight * b.prob, b.choices))
    return out


@dataclass
class InstanceData:
    x: Any
    y: int
    branches: list
    probs: np.ndarray
    wrong: np.ndarray

    @property
    def loss(self) -> float:
        return float(self.probs @ self.wrong)


def instance_data(game: GameSpec, profile: Profile, x, budget: int = DEFAULT_BUDGET) -> InstanceData:
    y = game.problem.labels[x]
    branches = profile_branches(game, profile, x, budget)
    probs = np.array([b.prob for b in branches], dtype=float)
    wrong = np.array([0.0 if game.is_correct(b.transcript, y) else 1.0 for b in branches])
    return InstanceData(x, y, branches, probs, wrong)


def instance_loss(game: GameSpec, profile: Profile, x, budget: int = DEFAULT_BUDGET,
                  monte_carlo: bool = True, samples: int = 20_000, seed: int = 0) -> LossEstimate:
    """Probability that play on ``x`` ends in a wrong decision."""
    game.problem.index(x)
    try:
        return LossEstimate(instance_data(game, profile, x, budget).loss)
    except BudgetExceeded:
        if not monte_carlo:
            raise
    rng = np.random.default_rng(seed)
    y = game.problem.labels[x]
    hits = np.array([0.0 if game.is_correct(rollout(game, profile, x, rng), y) else 1.0 for _ in range(samples)])
    return LossEstimate(float(hits.mean()), "monte-carlo", samples, float(hits.std(ddof=1) / math.sqrt(samples)))


# -- empirical risks --------------------------------------------------------------------


def _dataset_losses(game, profile, dataset: Sequence) -> list[tuple[Any, float]]:
    cache: dict = {}
    out = []
    for x in dataset:
        if x not in cache:
            cache[x] = instance_loss(game, profile, x, monte_carlo=False).value
        out.append((x, cache[x]))
    return out


def empirical_risk(game: GameSpec, profile: Profile, dataset: Sequence) -> LossEstimate:
    if not len(dataset):
        raise DomainError("dataset must be non-empty")
    losses = _dataset_losses(game, profile, dataset)
    return LossEstimate(math.fsum(v for _, v in losses) / len(losses))


def empirical_worst_case(game: GameSpec, profile: Profile, dataset: Sequence,
                         condition: Optional[int] = None) -> LossEstimate:
    rows = [x for x in dataset if condition is None or game.problem.labels[x] == condition]
    if not rows:
        raise DomainError(f"no instances with label {condition!r} in the dataset")
    losses = _dataset_losses(game, profile, rows)
    best = max(range(len(losses)), key=lambda i: (losses[i][1], -i))
    return LossEstimate(losses[best][1], witness=losses[best][0])


# -- protocol loss functionals ----------------------------------------------------------


@dataclass
class LossTerms:
    """Value plus partial derivatives for gradient assembly.

    ``weights[(part, x)][b]`` is dL/dP(branch b); ``direct`` holds
    ``(coeff, choice, target_indices)`` meaning ``coeff * log(sum of choice.dist[targets])``.
    """

    value: float
    weights: dict = field(default_factory=dict)
    direct: list = field(default_factory=list)
    secondary: Optional[float] = None


class Evaluation:
    """Branch data of every instance in every part of a (possibly composite) game."""

    def __init__(self, game, profile: Profile, budget: int = DEFAULT_BUDGET):
        self.game = game
        self.profile = profile
        self.parts = game.parts() if isinstance(game, ZKNipGame) else {"main": game}
        self.data: dict = {}
        for part, g in self.parts.items():
            agents = set(g.agent_names)
            sub = Profile({a: s for a, s in profile.strategies.items() if a in agents},
                          profile.device if profile.device is not None
                          and set(profile.device.agents) <= agents else None)
            for x in g.problem.instances:
                self.data[(part, x)] = instance_data(g, sub, x, budget)

    @property
    def problem(self):
        return self.game.problem

    def instance_losses(self, part: str = "main") -> dict:
        return {x: self.data[(part, x)].loss for x in self.problem.instances}


def _max_weights(values: Sequence[float], smooth: Optional[float]) -> tuple[float, np.ndarray]:
    """max (or its log-sum-exp softening) and the derivative weights over entries."""
    v = np.asarray(values, dtype=float)
    if smooth:
        z = v / smooth
        zmax = z.max()
        e = np.exp(z - zmax)
        return float(smooth * (zmax + math.log(e.sum()))), e / e.sum()
    m = v.max()
    active = np.isclose(v, m, rtol=0.0, atol=1e-12)
    return float(m), active / active.sum()


def _worst_case(ev: Evaluation, label: int, part: str, smooth: Optional[float]):
    xs = [x for x in ev.problem.instances if ev.problem.labels[x] == label]
    if not xs:
        raise DomainError(f"worst-case loss needs an instance with label {label}")
    value, w = _max_weights([ev.data[(part, x)].loss for x in xs], smooth)
    return value, {(part, x): w[i] * ev.data[(part, x)].wrong for i, x in enumerate(xs)}


def _add(acc: dict, terms: dict, scale: float) -> None:
    for k, v in terms.items():
        acc[k] = acc.get(k, 0.0) + scale * v


def _decision_choice(branch: Branch, game: GameSpec):
    dec = game.channels[game.decision_channel].name
    for c in reversed(branch.choices):
        if c.agent == game.decision_agent and c.obs.channel == dec:
            return c
    return None


def _targets(game: GameSpec, choice, values: Iterable[int]) -> list[int]:
    wanted = set(values)
    return [i for i, m in enumerate(choice.obs.space) if game.decisions.get(m) in wanted]


def _expected_log(ev: Evaluation, part: str, values_of, scale_of=None) -> LossTerms:
    """Sum over x, b of prior(x) * scale(b) * P_b * log(sum of pi at decision over values_of(y))."""
    game = ev.parts[part]
    prior = ev.problem.prior
    total = 0.0
    weights: dict = {}
    direct = []
    for x in ev.problem.instances:
        d = ev.data[(part, x)]
        w = np.zeros(len(d.branches))
        for b, br in enumerate(d.branches):
            s = prior[x] * (1.0 if scale_of is None else scale_of(br))
            if s == 0 or br.prob == 0:
                continue
            wanted = values_of(d.y)
            choice = _decision_choice(br, game)
            if choice is None:
                logp = 0.0 if decision_of(br.transcript) in wanted else -INF
                idx = None
            else:
                idx = _targets(game, choice, wanted)
                mass = float(choice.dist[idx].sum()) if idx else 0.0
                logp = math.log(mass) if mass > 0 else -INF
            if logp == -INF:
                total = -INF if s > 0 else INF
                continue
            total += s * br.prob * logp
            w[b] = s * logp
            if idx is not None:
                direct.append((s * br.prob, choice, idx))
        weights[(part, x)] = w
    return LossTerms(total, weights, direct)


def _negate(t: LossTerms) -> LossTerms:
    return LossTerms(-t.value, {k: -v for k, v in t.weights.items()},
                     [(-c, ch, idx) for c, ch, idx in t.direct])


def _scaled(t: LossTerms, s: float) -> LossTerms:
    return LossTerms(s * t.value, {k: s * v for k, v in t.weights.items()},
                     [(s * c, ch, idx) for c, ch, idx in t.direct])


def _sum_terms(*terms: LossTerms) -> LossTerms:
    out = LossTerms(0.0)
    for t in terms:
        out.value += t.value
        _add(out.weights, t.weights, 1.0)
        out.direct.extend(t.direct)
    return out


def _expectation(ev: Evaluation, part: str, indicator) -> LossTerms:
    """prior-weighted probability of branches where ``indicator(branch, y)`` holds."""
    prior = ev.problem.prior
    value = 0.0
    weights = {}
    for x in ev.problem.instances:
        d = ev.data[(part, x)]
        f = np.array([1.0 if indicator(br, d.y) else 0.0 for br in d.branches])
        value += prior[x] * float(d.probs @ f)
        weights[(part, x)] = prior[x] * f
    return LossTerms(value, weights)


def _tv_by_instance(ev: Evaluation, instances: Sequence) -> dict:
    """Per-instance TV between dishonest-game and simulator message sequences, with weights."""
    out = {}
    for x in instances:
        real = ev.data[("dishonest", x)]
        sim = ev.data[("simulator", x)]
        p_seq: dict = {}
        q_seq: dict = {}
        for br in real.branches:
            m = br.transcript.messages()
            p_seq[m] = p_seq.get(m, 0.0) + br.prob
        for br in sim.branches:
            m = br.transcript.messages()
            q_seq[m] = q_seq.get(m, 0.0) + br.prob
        keys = set(p_seq) | set(q_seq)
        tv = 0.5 * math.fsum(abs(p_seq.get(k, 0.0) - q_seq.get(k, 0.0)) for k in keys)
        sign = {k: np.sign(p_seq.get(k, 0.0) - q_seq.get(k, 0.0)) for k in keys}
        wp = np.array([0.5 * sign[br.transcript.messages()] for br in real.branches])
        wq = np.array([-0.5 * sign[br.transcript.messages()] for br in sim.branches])
        out[x] = (tv, wp, wq)
    return out


def zk_terms(ev: Evaluation, smooth: Optional[float] = None, instances: Optional[Sequence] = None) -> LossTerms:
    """max over instances of the transcript TV distance, with derivative weights."""
    xs = list(ev.problem.instances if instances is None else instances)
    per = _tv_by_instance(ev, xs)
    value, w = _max_weights([per[x][0] for x in xs], smooth)
    weights = {}
    for i, x in enumerate(xs):
        weights[("dishonest", x)] = w[i] * per[x][1]
        weights[("simulator", x)] = w[i] * per[x][2]
    return LossTerms(value, weights)


def loss_terms(ev: Evaluation, agent: str, smooth: Optional[float] = None) -> LossTerms:
    """Loss of ``agent`` under the evaluated profile; ``smooth`` softens worst-case maxima."""
    game = ev.game
    spec = game.loss_spec
    if spec is None or agent not in spec.agent_losses:
        raise DomainError(f"no loss defined for agent {agent!r}")
    kind = spec.agent_losses[agent]
    if kind in ("nip_prover", "nip_verifier"):
        return loss_terms_for(ev, kind, smooth)
    if kind == "adp_verifier":
        return _negate(_expected_log(ev, "main", lambda y: {y}))
    if kind == "adp_prover":
        return _negate(_expected_log(ev, "main", lambda y: {1}))
    if kind == "solo_verifier":
        return _expectation(ev, "main", lambda br, y: not game.is_correct(br.transcript, y))
    if kind == "debate_p1":
        return _negate(_expectation(ev, "main", lambda br, y: br.transcript.decision == 1))
    if kind == "debate_p2":
        return _negate(_expectation(ev, "main", lambda br, y: br.transcript.decision == 2))
    if kind == "debate_verifier":
        return _negate(_expectation(ev, "main", lambda br, y: game.is_correct(br.transcript, y)))
    if kind in ("mac_helpful", "mac_unhelpful", "mac_verifier"):
        return _mac_terms(ev, kind, spec.gamma)
    if kind in ("zk_v2", "zk_v3"):
        t = zk_terms(ev, smooth)
        return _negate(t) if kind == "zk_v2" else t
    if kind == "zk_prover_weighted":
        base = loss_terms_for(ev, "nip_prover", smooth)
        return _sum_terms(base, _scaled(zk_terms(ev, smooth), spec.zk_coefficient))
    if kind == "zk_prover_lex":
        base = loss_terms_for(ev, "nip_prover", smooth)
        base.secondary = zk_terms(ev, smooth).value
        return base
    raise DomainError(f"loss {kind!r} is not evaluated on messaging games")


def loss_terms_for(ev: Evaluation, kind: str, smooth: Optional[float] = None) -> LossTerms:
    if kind not in ("nip_prover", "nip_verifier"):
        raise DomainError(f"unsupported base loss {kind!r}")
    wc1, g1 = _worst_case(ev, 1, "main", smooth)
    wc0, g0 = _worst_case(ev, 0, "main", smooth)
    sign = -1.0 if kind == "nip_prover" else 1.0
    out = LossTerms(wc1 + sign * wc0)
    _add(out.weights, g1, 1.0)
    _add(out.weights, g0, sign)
    return out


def _first_sender(br: Branch) -> Optional[str]:
    for e in br.transcript.events:
        if e.t > 0 and e.sender is not None:
            return e.sender
    return None


def _mac_terms(ev: Evaluation, kind: str, gamma: float) -> LossTerms:
    right = lambda y: {y}  # noqa: E731
    right_or_unsure = lambda y: {y, -1}  # noqa: E731
    if kind == "mac_helpful":
        return _negate(_expected_log(ev, "main", right))
    if kind == "mac_unhelpful":
        return _expected_log(ev, "main", right_or_unsure)
    sel = ev.game.meta.get("selection", {"p1": 0.5, "p2": 0.5})
    helpful = _expected_log(ev, "main", right, lambda br: 1.0 / sel["p1"] if _first_sender(br) == "p1" else 0.0)
    unhelpful = _expected_log(ev, "main", right_or_unsure,
                              lambda br: 1.0 / sel["p2"] if _first_sender(br) == "p2" else 0.0)
    return _negate(_sum_terms(_scaled(helpful, 1.0 - gamma), _scaled(unhelpful, gamma)))


def agent_expected_loss(game, profile: Profile, agent: str, budget: int = DEFAULT_BUDGET,
                        smooth: Optional[float] = None) -> LossEstimate:
    """Exact loss of ``agent``; a log of zero probability gives ``+inf``."""
    t = loss_terms(Evaluation(game, profile, budget), agent, smooth)
    value = t.value
    if isinstance(value, float) and math.isnan(value):
        value = INF
    return LossEstimate(float(value), secondary=t.secondary)


def all_losses(game, profile: Profile, budget: int = DEFAULT_BUDGET) -> dict:
    ev = Evaluation(game, profile, budget)
    return {a: loss_terms(ev, a).value for a in game.loss_spec.agent_losses}


# -- validity ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ValidityReport:
    completeness_error: float
    soundness_error: float
    valid: bool
    zk_distance: Optional[float] = None
    completeness_witness: Any = None
    soundness_witness: Any = None
    soundness_deviation: Optional[int] = None
    tolerance: float = 0.0

    def __post_init__(self):
        for name in ("completeness_error", "soundness_error"):
            v = getattr(self, name)
            if not -1e-12 <= v <= 1 + 1e-12:
                raise DomainError(f"{name} = {v} outside [0, 1]")
        if self.valid != (self.completeness_error + self.soundness_error < 1.0 - self.tolerance):
            raise DomainError("validity verdict inconsistent with the reported errors")

    def to_json(self) -> str:
        return json.dumps({
            "completeness_error": self.completeness_error,
            "soundness_error": self.soundness_error,
            "valid": self.valid,
            "zk_distance": self.zk_distance,
            "completeness_witness": repr(self.completeness_witness),
            "soundness_witness": repr(self.soundness_witness),
            "soundness_deviation": self.soundness_deviation,
            "tolerance": self.tolerance,
        }, sort_keys=True)

    def table(self) -> str:
        rows = [("eps_c", f"{self.completeness_error:.12g}"), ("eps_s", f"{self.soundness_error:.12g}"),
                ("valid", str(self.valid)),
                ("zk_tv", "-" if self.zk_distance is None else f"{self.zk_distance:.12g}")]
        return "\n".join(f"{k:<6} {v}" for k, v in rows)


def _nip_part(game):
    return game.main if isinstance(game, ZKNipGame) else game


def completeness_error(game, profile: Profile, budget: int = DEFAULT_BUDGET) -> tuple[float, Any]:
    g = _nip_part(game)
    xs = g.problem.positives
    if not xs:
        raise DomainError("completeness needs at least one positive instance")
    sub = _restrict(profile, g)
    losses = [instance_data(g, sub, x, budget).loss for x in xs]
    i = int(np.argmax(losses))
    return float(losses[i]), xs[i]


def _restrict(profile: Profile, g: GameSpec) -> Profile:
    agents = set(g.agent_names)
    device = profile.device if profile.device is not None and set(profile.device.agents) <= agents else None
    return Profile({a: s for a, s in profile.strategies.items() if a in agents}, device)


def _deviation_profiles(profile: Profile, provers: Sequence[str], deviation) -> Profile:
    if isinstance(deviation, Profile):
        return profile.replace(**deviation.strategies).with_device(deviation.device)
    if isinstance(deviation, Mapping):
        return profile.replace(**deviation).with_device(None)
    if isinstance(deviation, tuple) and len(provers) > 1:
        return profile.replace(**dict(zip(provers, deviation))).with_device(None)
    if len(provers) != 1:
        raise DomainError("multi-prover deviations must be mappings or tuples")
    return profile.replace(**{provers[0]: deviation}).with_device(None)


def default_prover_set(game, limit: int = 4096) -> list:
    """All pure prover deviations (joint for several provers) when enumerable."""
    g = _nip_part(game)
    provers = g.agents_with_role("prover")
    per = [pure_strategies(g, p, limit) for p in provers]
    if len(per) == 1:
        return per[0]
    import itertools

    total = math.prod(len(s) for s in per)
    if total > limit:
        raise BudgetExceeded(f"{total} joint prover deviations exceed the cap {limit}")
    return [tuple(c) for c in itertools.product(*per)]


def soundness_error(game, profile: Profile, prover_set: Optional[Sequence] = None,
                    budget: int = DEFAULT_BUDGET) -> tuple[float, Any, int]:
    """Largest loss on a negative instance over prover deviations: (value, instance, deviation index)."""
    g = _nip_part(game)
    if prover_set is None:
        prover_set = default_prover_set(game)
    if not len(prover_set):
        raise DomainError("prover deviation set must be non-empty")
    provers = g.agents_with_role("prover")
    xs = g.problem.negatives
    if not xs:
        return 0.0, None, 0
    best = (-1.0, None, 0)
    base = _restrict(profile, g)
    for j, dev in enumerate(prover_set):
        prof = _deviation_profiles(base, provers, dev)
        for x in xs:
            v = instance_data(g, prof, x, budget).loss
            if v > best[0] + 1e-15:
                best = (v, x, j)
    return float(best[0]), best[1], best[2]


def zk_statistical_distance(game: ZKNipGame, profile: Profile, instances: Optional[Sequence] = None,
                            budget: int = DEFAULT_BUDGET) -> float:
    """max over ``instances`` (default all of X) of the TV distance between real and simulated sequences."""
    ev = Evaluation(game, profile, budget)
    return zk_terms(ev, None, instances).value


def tv_distance(p: Mapping, q: Mapping) -> float:
    keys = set(p) | set(q)
    return 0.5 * math.fsum(abs(p.get(k, 0.0) - q.get(k, 0.0)) for k in keys)


def validity_report(game, profile: Profile, prover_set: Optional[Sequence] = None, zk: bool = False,
                    zk_instances: Optional[Sequence] = None, budget: int = DEFAULT_BUDGET) -> ValidityReport:
    ec, wc = completeness_error(game, profile, budget)
    es, ws, dev = soundness_error(game, profile, prover_set, budget)
    zk_value = zk_statistical_distance(game, profile, zk_instances, budget) if zk else None
    return ValidityReport(ec, es, ec + es < 1.0, zk_value, wc, ws, dev)
