"""Equilibria over finite strategy grids.

Messaging games are reduced to loss tensors (one axis per agent, one grid entry per
index) and solved exhaustively.  Stackelberg equilibria are computed level by level
from the last follower upwards, so any number of leaders and followers is handled by
the same response kernel.
"""
from __future__ import annotations

import itertools
import json
import math
import time
from collections.abc import Mapping, Sequence
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import BudgetExceeded, DomainError
from .kernels import response_layer
from .losses import Evaluation, loss_terms
from .messaging import DEFAULT_BUDGET, GameSpec
from .protocols import ZKNipGame, build_nip
from .problems import DecisionProblem
from .strategies import (CorrelationDevice, MixtureStrategy, Profile, Strategy, pure_strategies,
                         tabular_from_rule)

ATOL = 1e-12
MAX_PROFILES = 2_000_000


# -- simplex grids ----------------------------------------------------------------------


def simplex_grid(k: int, resolution: int) -> np.ndarray:
    """All points of the probability simplex in ``k`` dimensions with denominators ``resolution``."""
    if k < 1 or resolution < 1:
        raise DomainError("simplex grid needs k >= 1 and resolution >= 1")
    rows = []
    for bars in itertools.combinations(range(resolution + k - 1), k - 1):
        edges = (-1,) + bars + (resolution + k - 1,)
        rows.append([edges[i + 1] - edges[i] - 1 for i in range(k)])
    return np.array(rows, dtype=float) / resolution


def zoom_simplex(center: Sequence[float], step: float, radius: int) -> np.ndarray:
    """Simplex points within ``radius`` steps of ``center`` (per coordinate) on a lattice of ``step``."""
    c = np.asarray(center, dtype=float)
    k = len(c)
    offsets = itertools.product(range(-radius, radius + 1), repeat=k - 1)
    out = []
    for off in offsets:
        head = c[:-1] + step * np.array(off)
        last = 1.0 - head.sum()
        if np.all(head >= -1e-12) and last >= -1e-12:
            out.append(np.clip(np.append(head, last), 0.0, 1.0))
    return np.array(out)


def mixture_grid(components: Sequence[Strategy], resolution: int, lottery: bool = False,
                 names: Optional[Sequence[str]] = None) -> list[MixtureStrategy]:
    tag = names or [getattr(c, "name", str(i)) for i, c in enumerate(components)]
    return [MixtureStrategy(components, w, lottery, name="+".join(f"{x:g}{n}" for x, n in zip(w, tag) if x))
            for w in simplex_grid(len(components), resolution)]


def device_grid(agents: Sequence[str], pure_sets: Sequence[Sequence[Strategy]], resolution: int,
                product_only: bool = False) -> list[CorrelationDevice]:
    """Correlation devices over joint pure strategies, or products of marginals."""
    if product_only:
        out = []
        for combo in itertools.product(*[simplex_grid(len(s), resolution) for s in pure_sets]):
            marginals = []
            for strategies, w in zip(pure_sets, combo):
                keep = [i for i, v in enumerate(w) if v > 0]
                marginals.append(([strategies[i] for i in keep], [w[i] for i in keep]))
            out.append(CorrelationDevice.product(agents, marginals))
        return out
    joints = list(itertools.product(*pure_sets))
    out = []
    for w in simplex_grid(len(joints), resolution):
        keep = [i for i, v in enumerate(w) if v > 0]
        out.append(CorrelationDevice(tuple(agents), tuple(joints[i] for i in keep), tuple(w[i] for i in keep)))
    return out


# -- loss tensors -----------------------------------------------------------------------


@dataclass
class TensorGame:
    """Agents (names or tuples of names sharing one decision) with a loss tensor.

    ``losses[k]`` has one axis per agent in ``agents`` order.  ``secondary`` holds
    lexicographic tie-break losses for agents that have them.
    """

    agents: tuple
    losses: np.ndarray
    secondary: dict = field(default_factory=dict)
    labels: Optional[tuple] = None
    instance_losses: Optional[np.ndarray] = None
    instances: Optional[tuple] = None
    lex_tolerance: float = 1e-9

    def __post_init__(self):
        self.agents = tuple(self.agents)
        self.losses = np.asarray(self.losses, dtype=float)
        if self.losses.shape[0] != len(self.agents) or self.losses.ndim != len(self.agents) + 1:
            raise DomainError(f"loss tensor shape {self.losses.shape} does not match {len(self.agents)} agents")

    @property
    def sizes(self) -> tuple:
        return self.losses.shape[1:]

    def axis(self, agent) -> int:
        try:
            return self.agents.index(agent)
        except ValueError:
            raise DomainError(f"agent {agent!r} not in {self.agents}") from None

    def loss(self, agent, index: Sequence[int]) -> float:
        return float(self.losses[(self.axis(agent),) + tuple(index)])

    @classmethod
    def from_payoffs(cls, agents: Sequence, payoffs: Sequence) -> "TensorGame":
        """Normal-form game from per-agent payoff arrays (losses are negated payoffs)."""
        return cls(tuple(agents), -np.asarray(payoffs, dtype=float))


def mixed_extension(tg: TensorGame, resolutions: Mapping) -> TensorGame:
    """Expected losses of simplex-grid mixtures for agents in ``resolutions`` (multilinear)."""
    losses = tg.losses
    labels = list(tg.labels or [tuple(range(s)) for s in tg.sizes])
    for agent, r in resolutions.items():
        ax = tg.axis(agent) + 1
        w = simplex_grid(tg.sizes[ax - 1], r)
        losses = np.moveaxis(np.tensordot(w, losses, axes=([1], [ax])), 0, ax)
        labels[ax - 1] = tuple(tuple(row) for row in w)
    return TensorGame(tg.agents, losses, labels=tuple(labels))


def _members(key) -> tuple:
    return key if isinstance(key, tuple) else (key,)


def grid_game(game, grids: Mapping, budget: int = DEFAULT_BUDGET, max_profiles: int = MAX_PROFILES) -> TensorGame:
    """Evaluate every joint grid profile of a messaging game exactly.

    Keys of ``grids`` are agent names with lists of strategies, or tuples of agent
    names with lists of ``CorrelationDevice`` (a joint decision of those agents).
    """
    keys = tuple(grids)
    covered = [a for k in keys for a in _members(k)]
    if sorted(covered) != sorted(game.agent_names):
        raise DomainError(f"grids cover {covered}, game has {list(game.agent_names)}")
    sizes = tuple(len(grids[k]) for k in keys)
    if not all(sizes):
        raise DomainError("every grid must be non-empty")
    total = math.prod(sizes)
    if total > max_profiles:
        raise BudgetExceeded(f"{total} joint profiles exceed the cap {max_profiles}")
    spec = game.loss_spec
    lex = [k for k in keys if spec.agent_losses.get(_members(k)[0]) == "zk_prover_lex"]
    xs = game.problem.instances
    losses = np.empty((len(keys),) + sizes)
    secondary = {k: np.empty(sizes) for k in lex}
    inst = np.empty(sizes + (len(xs),))
    for idx in itertools.product(*[range(s) for s in sizes]):
        strategies: dict = {}
        device = None
        for k, i in zip(keys, idx):
            if isinstance(k, tuple):
                device = grids[k][i]
            else:
                strategies[k] = grids[k][i]
        ev = Evaluation(game, Profile(strategies, device), budget)
        for j, k in enumerate(keys):
            terms = loss_terms(ev, _members(k)[0])
            losses[(j,) + idx] = terms.value
            if k in secondary:
                secondary[k][idx] = terms.secondary
        inst[idx] = [ev.data[("main", x)].loss for x in xs]
    labels = tuple(tuple(repr(s) for s in grids[k]) for k in keys)
    return TensorGame(keys, losses, secondary, labels, inst, tuple(xs), spec.lex_tolerance)


# -- queries and results ----------------------------------------------------------------


@dataclass(frozen=True)
class EquilibriumQuery:
    kind: str = "SE"
    order: tuple = ()
    tolerances: Mapping = field(default_factory=dict)
    strict: bool = False
    tie_breaking: str = "pessimistic"
    resolution: int = 1

    def __post_init__(self):
        if self.kind not in ("NE", "SE", "correlated-SE"):
            raise DomainError(f"unknown equilibrium kind {self.kind!r}")
        if self.tie_breaking not in ("pessimistic", "optimistic"):
            raise DomainError("tie_breaking must be 'pessimistic' or 'optimistic'")
        if any(v < 0 for v in self.tolerances.values()):
            raise DomainError("tolerances must be non-negative")
        if self.resolution < 1:
            raise DomainError("mixing resolution must be at least 1")
        object.__setattr__(self, "order", tuple(self.order))
        object.__setattr__(self, "tolerances", dict(self.tolerances))

    def tolerance(self, agent) -> float:
        return float(self.tolerances.get(agent, 0.0))


@dataclass
class EquilibriumResult:
    agents: tuple
    profiles: list
    certificates: list
    leader_values: Optional[np.ndarray] = None
    stats: dict = field(default_factory=dict)

    def __contains__(self, profile) -> bool:
        return tuple(profile) in set(self.profiles)

    def as_set(self) -> set:
        return set(self.profiles)

    def to_json(self) -> str:
        return json.dumps({
            "agents": [list(_members(a)) for a in self.agents],
            "profiles": [list(p) for p in self.profiles],
            "certificates": [{"/".join(_members(a)): g for a, g in c.items()} for c in self.certificates],
            "stats": self.stats,
        }, sort_keys=True)


def best_responses(tg: TensorGame, agent, fixed: Mapping, tolerance: float = 0.0,
                   strict: bool = False) -> list[tuple[int, float]]:
    """Grid indices of ``agent`` within ``tolerance`` of its minimum against ``fixed`` opponents."""
    ax = tg.axis(agent)
    idx = []
    for k, a in enumerate(tg.agents):
        if k == ax:
            idx.append(slice(None))
        elif a in fixed:
            idx.append(int(fixed[a]))
        else:
            raise DomainError(f"opponent {a!r} is not fixed")
    row = tg.losses[(ax,) + tuple(idx)]
    mask, _ = response_layer(row[None, :], row[None, :], np.ones((1, len(row)), np.uint8),
                             float(tolerance), bool(strict), True)
    return [(int(i), float(row[i])) for i in np.flatnonzero(mask[0])]


def find_nash(tg: TensorGame, query: EquilibriumQuery, max_profiles: int = MAX_PROFILES) -> EquilibriumResult:
    """Every grid profile whose unilateral deviation gains are within tolerance."""
    start = time.perf_counter()
    if math.prod(tg.sizes) > max_profiles:
        raise BudgetExceeded(f"{math.prod(tg.sizes)} profiles exceed the cap {max_profiles}")
    ok = np.ones(tg.sizes, dtype=bool)
    gains = []
    for k, a in enumerate(tg.agents):
        g = tg.losses[k] - tg.losses[k].min(axis=k, keepdims=True)
        g = np.where(np.isnan(g), 0.0, g)
        gains.append(g)
        e = query.tolerance(a)
        ok &= (g == 0) | ((g < e - ATOL) if query.strict else (g <= e + ATOL))
    profiles = [tuple(int(i) for i in p) for p in np.argwhere(ok)]
    certs = [{a: float(gains[k][p]) for k, a in enumerate(tg.agents)} for p in profiles]
    return EquilibriumResult(tg.agents, profiles, certs,
                             stats={"profiles_scanned": int(ok.size), "seconds": time.perf_counter() - start})


def _aggregate(mask_rows: np.ndarray, values_rows: np.ndarray, pessimistic: bool) -> np.ndarray:
    zeros = np.zeros_like(values_rows)
    _, out = response_layer(zeros, values_rows, mask_rows, 0.0, False, pessimistic)
    return out


def solve_stackelberg(tg: TensorGame, order: Sequence, tolerances: Mapping, strict: bool = False,
                      pessimistic: bool = True) -> EquilibriumResult:
    """Approximate Stackelberg equilibria with ``order[0]`` leading and ``order[-1]`` moving last.

    Each level keeps the follower choices within tolerance of its best response; higher
    levels score a choice by the worst (``pessimistic``) or best case of their loss over
    the kept responses below.  A zero deviation gain is always acceptable.
    """
    start = time.perf_counter()
    order = tuple(order)
    if sorted(map(repr, order)) != sorted(map(repr, tg.agents)):
        raise DomainError(f"order {order} must list every agent of {tg.agents} once")
    perm = [tg.axis(a) for a in order]
    current = {("loss", a): np.transpose(tg.losses[tg.axis(a)], perm) for a in order}
    for a, sec in tg.secondary.items():
        current[("secondary", a)] = np.transpose(sec, perm)
    k = len(order)
    masks: list = [None] * k
    level_values: list = [None] * k
    for lvl in reversed(range(k)):
        agent = order[lvl]
        F = current[("loss", agent)]
        level_values[lvl] = F
        shape = F.shape
        rows = F.reshape(-1, shape[-1])
        allowed = np.ones(rows.shape, np.uint8)
        mask, _ = response_layer(rows, rows, allowed, float(tolerances.get(agent, 0.0)), strict, pessimistic)
        if ("secondary", agent) in current:
            sec = current[("secondary", agent)].reshape(-1, shape[-1])
            mask, _ = response_layer(sec, sec, mask, tg.lex_tolerance, False, pessimistic)
        masks[lvl] = mask.reshape(shape).astype(bool)
        for key in list(current):
            if key[1] in order[:lvl]:
                current[key] = _aggregate(mask, current[key].reshape(-1, shape[-1]), pessimistic).reshape(shape[:-1])
    ok = masks[0]
    for lvl in range(1, k):
        ok = ok[..., None] & masks[lvl]
    found = np.argwhere(ok)
    inverse = np.argsort(perm)
    profiles, certs = [], []
    for p in found:
        cert = {}
        for lvl, agent in enumerate(order):
            vals = level_values[lvl][tuple(p[:lvl])]
            cert[agent] = float(vals[p[lvl]] - np.nanmin(vals)) if np.isfinite(np.nanmin(vals)) else 0.0
        profiles.append(tuple(int(p[i]) for i in inverse))
        certs.append(cert)
    return EquilibriumResult(tg.agents, profiles, certs, leader_values=level_values[0],
                             stats={"order": [repr(a) for a in order], "profiles_scanned": int(ok.size),
                                    "seconds": time.perf_counter() - start})


def _order_for(game, query: EquilibriumQuery, agents: tuple) -> tuple:
    if query.order:
        return query.order
    if isinstance(game, ZKNipGame):
        return tuple(a for a in ("v1", "p", "v2", "v3") if a in agents)
    verifiers = [a for a in agents if not isinstance(a, tuple) and game.role(a) == "verifier"]
    return tuple(verifiers) + tuple(a for a in agents if a not in verifiers)


def find_verifier_leading_se(game, grids: Mapping, query: EquilibriumQuery,
                             budget: int = DEFAULT_BUDGET) -> tuple[EquilibriumResult, TensorGame]:
    """Verifier-leading approximate SE over the given grids of a messaging game."""
    if query.kind not in ("SE", "correlated-SE"):
        raise DomainError(f"query kind {query.kind!r} is not a Stackelberg query")
    tg = grid_game(game, grids, budget)
    order = _order_for(game, query, tg.agents)
    return solve_stackelberg(tg, order, query.tolerances, query.strict,
                             query.tie_breaking == "pessimistic"), tg


def find_correlated_se(game: GameSpec, verifier_grid: Sequence, prover_sets: Mapping[str, Sequence],
                       query: EquilibriumQuery, product_only: bool = False,
                       budget: int = DEFAULT_BUDGET) -> tuple[EquilibriumResult, TensorGame]:
    """SE where the provers jointly choose a correlation device and deviate jointly."""
    provers = tuple(prover_sets)
    if len(provers) < 2:
        raise DomainError("correlated equilibria need at least two provers")
    kinds = {game.loss_spec.agent_losses[p] for p in provers}
    if len(kinds) != 1:
        raise DomainError("provers must share one loss")
    devices = device_grid(provers, [prover_sets[p] for p in provers], query.resolution, product_only)
    verifier = game.decision_agent
    grids = {verifier: list(verifier_grid), provers: devices}
    tg = grid_game(game, grids, budget)
    order = query.order or (verifier, provers)
    tol = dict(query.tolerances)
    if provers not in tol:
        tol[provers] = max((query.tolerance(p) for p in provers), default=0.0)
    return solve_stackelberg(tg, order, tol, query.strict, query.tie_breaking == "pessimistic"), tg


# -- adversarial game -------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class AdversarialGame:
    """A nip game with an adversary choosing one positive and one negative instance."""

    base: GameSpec
    pairs: tuple
    sign: float = 1.0

    @property
    def agent_names(self) -> tuple:
        return tuple(self.base.agent_names) + ("a",)

    def losses(self, profile: Profile, pair) -> dict:
        """Exact losses of prover, verifier and adversary when the adversary plays ``pair``."""
        s, x = pair
        ev = Evaluation(self.base, profile)
        ls, lx = ev.data[("main", s)].loss, ev.data[("main", x)].loss
        prover = self.base.agents_with_role("prover")[0]
        return {prover: ls - lx, self.base.decision_agent: ls + lx, "a": -self.sign * (ls + lx)}

    def tensor(self, base_tensor: TensorGame) -> TensorGame:
        """Loss tensor with the adversary as an extra last axis, from the base game's instance losses."""
        inst = base_tensor.instance_losses
        pos = {x: i for i, x in enumerate(base_tensor.instances)}
        s_idx = np.array([pos[s] for s, _ in self.pairs])
        x_idx = np.array([pos[x] for _, x in self.pairs])
        ls, lx = inst[..., s_idx], inst[..., x_idx]
        prover = self.base.agents_with_role("prover")[0]
        verifier = self.base.decision_agent
        by_agent = {prover: ls - lx, verifier: ls + lx}
        losses = [by_agent[a] for a in base_tensor.agents] + [-self.sign * (ls + lx)]
        labels = (base_tensor.labels or ()) + (tuple(repr(p) for p in self.pairs),)
        return TensorGame(base_tensor.agents + ("a",), np.stack(losses), labels=labels)


def build_adversarial_game(nip_game: GameSpec, corrupt_sign: bool = False) -> AdversarialGame:
    """Adversary over (positive, negative) instance pairs; ``corrupt_sign`` flips its loss."""
    if nip_game.loss_spec is None or nip_game.loss_spec.protocol != "nip":
        raise DomainError("the adversarial transformation applies to nip games")
    problem = nip_game.problem
    if not problem.positives or not problem.negatives:
        raise DomainError("the adversary needs at least one instance with each label")
    pairs = tuple(itertools.product(problem.positives, problem.negatives))
    return AdversarialGame(nip_game, pairs, -1.0 if corrupt_sign else 1.0)


# -- correspondence harnesses -----------------------------------------------------------


@dataclass
class EquivalenceReport:
    hypothesis_met: bool
    e_p: Optional[float] = None
    e_v: Optional[float] = None
    profiles: int = 0
    valid: set = field(default_factory=set)
    equilibria: set = field(default_factory=set)
    violations: list = field(default_factory=list)

    @property
    def holds(self) -> bool:
        return self.hypothesis_met and not self.violations


def _nip_agents(game: GameSpec) -> tuple[str, str]:
    return game.agents_with_role("prover")[0], game.decision_agent


def validity_tensor(tg: TensorGame, game: GameSpec) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """(completeness, soundness, valid) for every (prover, verifier) grid profile."""
    prover, verifier = _nip_agents(game)
    inst = np.moveaxis(tg.instance_losses, (tg.axis(prover), tg.axis(verifier)), (0, 1))
    pos = [i for i, x in enumerate(tg.instances) if game.problem.labels[x] == 1]
    neg = [i for i, x in enumerate(tg.instances) if game.problem.labels[x] == 0]
    ec = inst[..., pos].max(axis=-1)
    es_v = inst[..., neg].max(axis=-1).max(axis=0) if neg else np.zeros(inst.shape[1])
    es = np.broadcast_to(es_v, ec.shape)
    return ec, es, ec + es < 1.0


def canonical_tolerances(tg: TensorGame, game: GameSpec) -> Optional[tuple[float, float]]:
    """The proof's tolerance pair, or ``None`` if no grid profile is a valid system."""
    prover, verifier = _nip_agents(game)
    _, _, valid = validity_tensor(tg, game)
    if not valid.any():
        return None
    lv = np.moveaxis(tg.losses[tg.axis(verifier)], (tg.axis(prover), tg.axis(verifier)), (0, 1))
    lp = np.moveaxis(tg.losses[tg.axis(prover)], (tg.axis(prover), tg.axis(verifier)), (0, 1))
    e_p = 1.0 - float(lv[valid].min())
    worst = []
    for j in range(lv.shape[1]):
        col = lp[:, j]
        gain = col - col.min()
        br = (gain == 0) | (gain < e_p - ATOL)
        worst.append(lv[br, j].max())
    e_v = 1.0 - float(min(worst))
    return e_p, e_v


def classify_validity_equivalence(game: GameSpec, grids: Mapping, tg: Optional[TensorGame] = None,
                                  strict: bool = True) -> EquivalenceReport:
    """Profile-by-profile check of valid system <=> strict SE under the canonical tolerances."""
    prover, verifier = _nip_agents(game)
    tg = tg or grid_game(game, {prover: grids[prover], verifier: grids[verifier]})
    tol = canonical_tolerances(tg, game)
    if tol is None:
        return EquivalenceReport(False)
    e_p, e_v = tol
    res = solve_stackelberg(tg, (verifier, prover), {prover: e_p, verifier: e_v}, strict, True)
    ip, iv = tg.axis(prover), tg.axis(verifier)
    se = {(p[ip], p[iv]) for p in res.profiles}
    _, _, valid = validity_tensor(tg, game)
    valid_set = {(int(a), int(b)) for a, b in np.argwhere(valid)}
    violations = [(pv, pv in valid_set, pv in se) for pv in sorted(valid_set ^ se)]
    return EquivalenceReport(True, e_p, e_v, int(valid.size), valid_set, se, violations)


@dataclass
class CorrespondenceReport:
    equal: bool
    se_base: set
    se_projected: set
    counterexamples: list


def check_se_adversarial_correspondence(game: GameSpec, grids: Mapping, tolerances: Mapping,
                                        strict: bool = False, corrupt_sign: bool = False,
                                        tg: Optional[TensorGame] = None) -> CorrespondenceReport:
    """Compare SE led by the verifier in the nip game with projected SE of the adversarial game."""
    prover, verifier = _nip_agents(game)
    tg = tg or grid_game(game, {prover: grids[prover], verifier: grids[verifier]})
    base = solve_stackelberg(tg, (verifier, prover), tolerances, strict, True)
    adv_game = build_adversarial_game(game, corrupt_sign)
    atg = adv_game.tensor(tg)
    tol = dict(tolerances)
    tol["a"] = 0.0
    adv = solve_stackelberg(atg, (verifier, prover, "a"), tol, strict, True)
    ip, iv = tg.axis(prover), tg.axis(verifier)
    se_base = {(p[ip], p[iv]) for p in base.profiles}
    se_proj = {(p[ip], p[iv]) for p in adv.profiles}
    diff = sorted(se_base ^ se_proj)
    return CorrespondenceReport(not diff, se_base, se_proj, [(d, d in se_base, d in se_proj) for d in diff])


# -- random nip suite -------------------------------------------------------------------


@dataclass
class SuiteCase:
    seed: int
    game: GameSpec
    grids: dict
    tensor: TensorGame


def random_nip_case(seed: int, max_instances: int = 4, max_messages: int = 3, grid_size: int = 10) -> SuiteCase:
    """Random one-round nip game on a tiny problem with random pure grids for both agents.

    The verifier sees a random coarsening of the instance.  One grid entry per agent
    is planted: the prover announcing the label and the verifier accepting exactly that.
    """
    rng = np.random.default_rng(seed)
    n = int(rng.integers(2, max_instances + 1))
    xs = tuple(range(n))
    labels = rng.permutation([0, 1] + [int(b) for b in rng.integers(0, 2, n - 2)])
    prior = rng.dirichlet(np.ones(n))
    problem = DecisionProblem(xs, {x: int(labels[x]) for x in xs}, {x: float(prior[x]) for x in xs},
                              name=f"random-{seed}")
    n_msg = int(rng.integers(2, max_messages + 1))
    blocks = rng.integers(0, max(1, n - 1), n)
    game = build_nip(problem, rounds=1, prover_messages=tuple(range(n_msg)),
                     verifier_view=lambda x, b=tuple(int(v) for v in blocks): b[x], max_rounds=2,
                     name=f"nip-random-{seed}")
    grids = {}
    for agent in ("p", "v"):
        pure = pure_strategies(game, agent, limit=1 << 16)
        pick = rng.choice(len(pure), size=min(grid_size - 1, len(pure)), replace=False)
        grids[agent] = [pure[int(i)] for i in sorted(pick)]
    honest = tabular_from_rule(game, "p", lambda o: problem.labels[o.view])
    grids["p"].append(honest)
    grids["v"].append(tabular_from_rule(game, "v", lambda o: "accept" if o.histories[0][1][-1] == 1 else "reject"))
    tg = grid_game(game, grids)
    return SuiteCase(seed, game, grids, tg)


def random_nip_suite(count: int = 100, seed: int = 0, max_tries: int = 100_000) -> list[SuiteCase]:
    """``count`` random cases whose grids contain at least one valid system."""
    out = []
    s = seed
    while len(out) < count:
        if s - seed > max_tries:
            raise BudgetExceeded(f"found only {len(out)} admissible cases in {max_tries} tries")
        case = random_nip_case(s)
        s += 1
        if validity_tensor(case.tensor, case.game)[2].any():
            out.append(case)
    return out
