"""Training dynamics: exact policy gradients, Stackelberg/LOLA updates, expert iteration."""
from __future__ import annotations

import csv
import io
import json
import math
from collections.abc import Mapping, Sequence
from dataclasses import asdict, dataclass, field
from typing import Any, Callable, Optional, Union

import numpy as np

from .errors import BudgetExceeded, DomainError, SingularityError
from .losses import Evaluation, loss_terms, validity_report, zk_terms
from .messaging import DEFAULT_BUDGET, GameSpec, enumerate_branches
from .protocols import ZKNipGame
from .strategies import Profile, SoftmaxStrategy, TabularStrategy, strategy_snapshot

CONDITION_LIMIT = 1e8
METHODS = ("stackelberg-implicit", "lola", "lookahead-interp", "simultaneous",
           "expert-iteration", "stabilised-expert-iteration")


# -- exact gradients --------------------------------------------------------------------


def exact_gradient(game, profile: Profile, agent: str, wrt: Union[str, Sequence[str], None] = None,
                   smooth: Optional[float] = None, budget: int = DEFAULT_BUDGET,
                   evaluation: Optional[Evaluation] = None):
    """Gradient of ``agent``'s exact loss with respect to the logits of ``wrt`` (default: itself).

    Returns ``(value, gradient)``; with a sequence ``wrt`` the gradient is a dict.  Worst-case
    terms use the average of tied maximisers, or a log-sum-exp softening when ``smooth`` is set.
    """
    targets = (agent,) if wrt is None else ((wrt,) if isinstance(wrt, str) else tuple(wrt))
    strategies = {}
    for a in targets:
        s = profile.strategies.get(a)
        if not isinstance(s, SoftmaxStrategy):
            raise DomainError(f"{a!r} must play a SoftmaxStrategy to be differentiated")
        strategies[a] = s
    ev = evaluation or Evaluation(game, profile, budget)
    terms = loss_terms(ev, agent, smooth)
    grads = {a: np.zeros(s.size) for a, s in strategies.items()}
    for key, w in terms.weights.items():
        branches = ev.data[key].branches
        for b in np.flatnonzero(w):
            br = branches[b]
            scale = w[b] * br.prob
            for c in br.choices:
                g = grads.get(c.agent)
                if g is None:
                    continue
                sl = strategies[c.agent].slices[c.obs]
                g[sl] -= scale * c.dist
                g[sl.start + c.index] += scale
    for coeff, c, idx in terms.direct:
        g = grads.get(c.agent)
        if g is None:
            continue
        sl = strategies[c.agent].slices[c.obs]
        mass = c.dist[idx].sum()
        g[sl] -= coeff * c.dist
        g[sl.start + np.asarray(idx)] += coeff * c.dist[idx] / mass
    if wrt is None or isinstance(wrt, str):
        return terms.value, grads[targets[0]]
    return terms.value, grads


def finite_difference_gradient(game, profile: Profile, agent: str, wrt: Optional[str] = None,
                               step: float = 1e-5, smooth: Optional[float] = None) -> np.ndarray:
    """Central differences of the exact loss over ``wrt``'s logits."""
    wrt = wrt or agent
    base = profile.strategies[wrt]
    theta = base.params()
    out = np.zeros_like(theta)
    for i in range(len(theta)):
        vals = []
        for sgn in (1.0, -1.0):
            t = theta.copy()
            t[i] += sgn * step
            prof = profile.replace(**{wrt: base.with_params(t)})
            vals.append(loss_terms(Evaluation(game, prof), agent, smooth).value)
        out[i] = (vals[0] - vals[1]) / (2 * step)
    return out


# -- two-player differentiable objectives ----------------------------------------------


class QuadraticGame:
    """``L^v = v.v + v.p`` and ``L^p = |p + v|^2`` with closed-form derivatives."""

    agents = ("p", "v")

    def __init__(self, dim: int = 1):
        self.dim = dim

    def loss(self, agent: str, theta_p, theta_v) -> float:
        p, v = np.asarray(theta_p, float), np.asarray(theta_v, float)
        if agent == "v":
            return float(v @ v + v @ p)
        return float((p + v) @ (p + v))

    def grad(self, agent: str, wrt: str, theta_p, theta_v) -> np.ndarray:
        p, v = np.asarray(theta_p, float), np.asarray(theta_v, float)
        if agent == "v":
            return 2 * v + p if wrt == "v" else v.copy()
        return 2 * (p + v)

    def basis(self, wrt: str) -> Optional[np.ndarray]:
        return None


class SoftmaxObjective:
    """Prover and verifier softmax logits of a messaging game seen as a two-player objective."""

    def __init__(self, game, profile: Profile, prover: str, verifier: str, smooth: Optional[float] = 0.01):
        self.game = game
        self.profile = profile
        self.prover = prover
        self.verifier = verifier
        self.smooth = smooth
        self.agents = (prover, verifier)
        self._cache: dict = {}

    def _profile(self, theta_p, theta_v) -> Profile:
        return self.profile.replace(**{
            self.prover: self.profile.strategies[self.prover].with_params(theta_p),
            self.verifier: self.profile.strategies[self.verifier].with_params(theta_v),
        })

    def _name(self, agent: str) -> str:
        return {"p": self.prover, "v": self.verifier}.get(agent, agent)

    def _terms(self, agent: str, theta_p, theta_v):
        key = (agent, np.asarray(theta_p).tobytes(), np.asarray(theta_v).tobytes())
        if key not in self._cache:
            if len(self._cache) > 4096:
                self._cache.clear()
            prof = self._profile(theta_p, theta_v)
            self._cache[key] = exact_gradient(self.game, prof, self._name(agent),
                                              (self.prover, self.verifier), self.smooth)
        return self._cache[key]

    def loss(self, agent: str, theta_p, theta_v) -> float:
        return float(self._terms(agent, theta_p, theta_v)[0])

    def grad(self, agent: str, wrt: str, theta_p, theta_v) -> np.ndarray:
        return self._terms(agent, theta_p, theta_v)[1][self._name(wrt)]

    def basis(self, wrt: str) -> Optional[np.ndarray]:
        """Orthonormal basis of logit directions that change some distribution (row sums removed)."""
        s = self.profile.strategies[self._name(wrt)]
        cols = []
        for k in s.keys:
            sl = s.slices[k]
            n = sl.stop - sl.start
            if n < 2:
                continue
            q, _ = np.linalg.qr(np.eye(n) - 1.0 / n)
            block = np.zeros((s.size, n - 1))
            block[sl] = q[:, : n - 1]
            cols.append(block)
        return np.hstack(cols) if cols else np.zeros((s.size, 0))


def _fd_jacobian(fn: Callable[[np.ndarray], np.ndarray], x: np.ndarray, fd_step: float) -> np.ndarray:
    """Central-difference Jacobian of ``fn`` at ``x`` with steps relative to ``|x_j|``."""
    cols = []
    for j in range(len(x)):
        h = fd_step * max(1.0, abs(x[j]))
        up, down = x.copy(), x.copy()
        up[j] += h
        down[j] -= h
        cols.append((fn(up) - fn(down)) / (2 * h))
    return np.stack(cols, axis=1) if cols else np.zeros((0, 0))


def implicit_correction(objective, theta_p, theta_v, fd_step: float = 1e-4) -> np.ndarray:
    """``grad_p L^v (hess_p L^p)^{-1} grad_pv L^p`` by a pivoted solve in the identifiable subspace."""
    theta_p = np.asarray(theta_p, float)
    theta_v = np.asarray(theta_v, float)
    hess = _fd_jacobian(lambda t: objective.grad("p", "p", t, theta_v), theta_p, fd_step)
    mixed = _fd_jacobian(lambda t: objective.grad("p", "p", theta_p, t), theta_v, fd_step)
    gv = objective.grad("v", "p", theta_p, theta_v)
    basis = objective.basis("p")
    if basis is not None:
        hess = basis.T @ hess @ basis
        mixed = basis.T @ mixed
        gv = basis.T @ gv
    hess = 0.5 * (hess + hess.T)
    if hess.size == 0:
        return np.zeros_like(theta_v)
    cond = np.linalg.cond(hess)
    if not np.isfinite(cond) or cond > CONDITION_LIMIT:
        raise SingularityError(f"prover Hessian condition number {cond:.3g} exceeds {CONDITION_LIMIT:g} "
                               f"at theta_p={np.round(theta_p, 6).tolist()}, theta_v={np.round(theta_v, 6).tolist()}")
    return np.linalg.solve(hess, gv) @ mixed


def stackelberg_implicit_update(objective, theta_p, theta_v, rate_p: float, rate_v: float,
                                fd_step: float = 1e-4, scale_correction: bool = False):
    """One step of the timescale-separated update with the implicit verifier correction.

    The correction enters unscaled by ``rate_v`` as displayed in the method's update rule;
    ``scale_correction`` multiplies it by ``rate_v`` instead.
    """
    theta_p = np.asarray(theta_p, float)
    theta_v = np.asarray(theta_v, float)
    gp = objective.grad("p", "p", theta_p, theta_v)
    gv = objective.grad("v", "v", theta_p, theta_v)
    corr = implicit_correction(objective, theta_p, theta_v, fd_step)
    if scale_correction:
        corr = rate_v * corr
    return theta_p - rate_p * gp, theta_v - rate_v * gv - corr


def lola_update(objective, theta_p, theta_v, rate_p: float, rate_v: float, rate_p_next: Optional[float] = None,
                lookahead: float = 0.0, fd_step: float = 1e-4):
    """LOLA step (``lookahead=0``) or its interpolation with LookAhead (``lookahead`` in [0, 1]).

    The inverse prover Hessian is replaced by the prover's next learning rate.
    """
    if not 0.0 <= lookahead <= 1.0:
        raise DomainError("lookahead weight must lie in [0, 1]")
    theta_p = np.asarray(theta_p, float)
    theta_v = np.asarray(theta_v, float)
    nxt = rate_p if rate_p_next is None else rate_p_next
    gp = objective.grad("p", "p", theta_p, theta_v)
    gv = objective.grad("v", "v", theta_p, theta_v)
    shaping = np.zeros_like(theta_v)
    ahead = np.zeros_like(theta_v)
    if nxt and lookahead < 1.0:
        mixed = _fd_jacobian(lambda t: objective.grad("p", "p", theta_p, t), theta_v, fd_step)
        shaping = objective.grad("v", "p", theta_p, theta_v) @ mixed
    if nxt and lookahead > 0.0:
        cross = _fd_jacobian(lambda t: objective.grad("v", "v", t, theta_v), theta_p, fd_step)
        ahead = -(cross @ gp)
    corr = nxt * ((1.0 - lookahead) * shaping + lookahead * ahead)
    return theta_p - rate_p * gp, theta_v - rate_v * gv - corr


def simultaneous_update(objective, theta_p, theta_v, rate_p: float, rate_v: float):
    theta_p = np.asarray(theta_p, float)
    theta_v = np.asarray(theta_v, float)
    return (theta_p - rate_p * objective.grad("p", "p", theta_p, theta_v),
            theta_v - rate_v * objective.grad("v", "v", theta_p, theta_v))


# -- expert iteration -------------------------------------------------------------------


@dataclass
class ExpertIterationStats:
    rollouts: int
    kept: dict
    noop: dict
    acceptance_rate: float
    sampled_acceptance_rate: float
    replaced: int = 0


def _sample_branch(branches, rng):
    probs = np.array([b.prob for b in branches])
    return branches[rng.choice(len(branches), p=probs / probs.sum())]


def _reward_kept(game: GameSpec, agent: str, decision: Optional[int], y: int, first_sender) -> bool:
    """Whether ``agent`` received positive reward on a rollout ending in ``decision``."""
    kind = game.loss_spec.agent_losses[agent]
    if kind in ("nip_verifier", "adp_verifier", "solo_verifier", "debate_verifier", "mac_verifier"):
        if kind == "debate_verifier":
            return decision in (1, 2) and first_sender.get(decision) == y
        return decision == y
    if kind in ("nip_prover", "adp_prover"):
        return decision == 1
    if kind in ("debate_p1", "debate_p2"):
        return decision == int(kind[-1])
    if kind == "mac_helpful":
        return decision == y
    if kind == "mac_unhelpful":
        return decision not in (y, -1)
    raise DomainError(f"no expert-iteration reward for loss {kind!r}")


def exact_acceptance_rate(game: GameSpec, profile: Profile) -> float:
    ev = Evaluation(game, profile)
    total = 0.0
    for x in game.problem.instances:
        d = ev.data[("main", x)]
        total += game.problem.prior[x] * sum(b.prob for b in d.branches if b.transcript.decision == 1)
    return float(total)


def expert_iteration_round(game: GameSpec, profile: Profile, rollout_budget: int, rng: np.random.Generator,
                           replace_fraction: float = 0.0, pseudo_count: float = 0.5,
                           agents: Optional[Sequence[str]] = None):
    """Refit each tabular agent on the rollouts where it was rewarded.

    In a ``replace_fraction`` share of rollouts the verifier's decision is overwritten by
    the true label before filtering.  Rows are refit to kept message counts plus
    ``pseudo_count`` per message; unvisited rows stay as they were.
    """
    if not 0.0 <= replace_fraction <= 1.0:
        raise DomainError("replace_fraction must lie in [0, 1]")
    if rollout_budget < 1:
        raise DomainError("rollout_budget must be positive")
    agents = tuple(agents or [a for a, s in profile.strategies.items() if isinstance(s, TabularStrategy)])
    for a in agents:
        if not isinstance(profile.strategies[a], TabularStrategy):
            raise DomainError(f"expert iteration refits tabular strategies; {a!r} is not tabular")
    problem = game.problem
    xs = problem.instances
    prior = problem.prior_vector()
    cache: dict = {}
    counts: dict = {a: {} for a in agents}
    kept = {a: 0 for a in agents}
    accepted = 0
    replaced = 0
    dec_name = game.channels[game.decision_channel].name
    inverse = {v: m for m, v in game.decisions.items()}
    for _ in range(rollout_budget):
        x = xs[rng.choice(len(xs), p=prior)]
        if x not in cache:
            cache[x] = enumerate_branches(game, profile.strategies, x)
        br = _sample_branch(cache[x], rng)
        y = problem.labels[x]
        decision = br.transcript.decision
        accepted += decision == 1
        swap = rng.random() < replace_fraction
        choices = list(br.choices)
        if swap:
            replaced += 1
            decision = y
            for i in range(len(choices) - 1, -1, -1):
                c = choices[i]
                if c.agent == game.decision_agent and c.obs.channel == dec_name:
                    choices[i] = c._replace(index=c.obs.space.index(inverse[y]))
                    break
        firsts = {}
        for e in br.transcript.events:
            if e.t > 0 and e.sender and e.sender.startswith("p") and e.sender[1:].isdigit():
                firsts.setdefault(int(e.sender[1:]), e.message)
        for a in agents:
            if _reward_kept(game, a, decision, y, firsts):
                kept[a] += 1
                for c in choices:
                    if c.agent == a:
                        row = counts[a].setdefault(c.obs, np.zeros(len(c.obs.space)))
                        row[c.index] += 1
    new = dict(profile.strategies)
    noop = {}
    for a in agents:
        noop[a] = kept[a] == 0
        if noop[a]:
            continue
        rows = {obs: (c + pseudo_count) / (c.sum() + pseudo_count * len(c)) for obs, c in counts[a].items()}
        new[a] = profile.strategies[a].replace_rows(rows)
    updated = Profile(new, profile.device)
    stats = ExpertIterationStats(rollout_budget, kept, noop, exact_acceptance_rate(game, updated),
                                 accepted / rollout_budget, replaced)
    return updated, stats


def stabilised_expert_iteration_round(game: GameSpec, profile: Profile, rollout_budget: int,
                                      replace_fraction: float, rng: np.random.Generator, **kw):
    return expert_iteration_round(game, profile, rollout_budget, rng, replace_fraction, **kw)


def anneal_fraction(round_index: int, rounds: int, start: float = 0.8, end: float = 0.0) -> float:
    """Linear anneal of the replacement fraction from ``start`` (first round) to ``end`` (last)."""
    if rounds <= 1:
        return start
    return start + (end - start) * round_index / (rounds - 1)


# -- configuration and orchestration ----------------------------------------------------


@dataclass(frozen=True)
class Schedule:
    """Learning rate ``base / (1 + decay * t) ** power``."""

    base: float
    decay: float = 0.0
    power: float = 1.0

    def __post_init__(self):
        if not self.base > 0:
            raise DomainError("learning rates must be positive")
        if self.decay < 0 or self.power < 0:
            raise DomainError("decay and power must be non-negative")

    def __call__(self, t: int) -> float:
        return self.base / (1.0 + self.decay * t) ** self.power

    @classmethod
    def parse(cls, value) -> "Schedule":
        if isinstance(value, Schedule):
            return value
        if isinstance(value, Mapping):
            return cls(**value)
        return cls(float(value))


@dataclass(frozen=True)
class TrainConfig:
    method: str = "simultaneous"
    rate_p: Any = 0.5
    rate_v: Any = 0.05
    steps: int = 100
    fd_step: float = 1e-4
    lookahead: float = 0.0
    anneal: tuple = (0.8, 0.0)
    rollouts: int = 2000
    smooth: Optional[float] = 0.01
    checkpoint_every: int = 0
    scale_correction: bool = False
    seed: int = 0

    def __post_init__(self):
        if self.method not in METHODS:
            raise DomainError(f"unknown method {self.method!r}; choose from {list(METHODS)}")
        if self.steps < 0:
            raise DomainError("steps must be non-negative")
        object.__setattr__(self, "rate_p", Schedule.parse(self.rate_p))
        object.__setattr__(self, "rate_v", Schedule.parse(self.rate_v))
        start, end = self.anneal
        if not (0 <= end <= start <= 1):
            raise DomainError("anneal fractions must lie in [0, 1] and not increase")
        if not 0 <= self.lookahead <= 1:
            raise DomainError("lookahead weight must lie in [0, 1]")
        if self.method == "stackelberg-implicit" and self.steps:
            ratios = [self.rate_v(t) / self.rate_p(t) for t in range(self.steps)]
            if ratios[0] > 0.1 or any(b > a + 1e-15 for a, b in zip(ratios, ratios[1:])):
                raise DomainError("timescale separation needs rate_v/rate_p <= 0.1 and non-increasing")

    def to_json(self) -> dict:
        d = asdict(self)
        d["rate_p"] = asdict(self.rate_p)
        d["rate_v"] = asdict(self.rate_v)
        d["anneal"] = list(self.anneal)
        return d


@dataclass
class TrainTrace:
    rows: list = field(default_factory=list)
    snapshots: dict = field(default_factory=dict)
    final: Any = None

    def __len__(self) -> int:
        return len(self.rows)

    def column(self, name: str) -> list:
        return [r.get(name) for r in self.rows]

    def to_csv(self) -> str:
        names = []
        for r in self.rows:
            for k in r:
                if k not in names:
                    names.append(k)
        buf = io.StringIO()
        w = csv.DictWriter(buf, fieldnames=names, lineterminator="\n")
        w.writeheader()
        for r in self.rows:
            w.writerow({k: (repr(v) if isinstance(v, float) else v) for k, v in r.items()})
        return buf.getvalue()

    def snapshots_json(self) -> str:
        return json.dumps(self.snapshots, sort_keys=True)


def _checkpoint(game, profile: Profile, row: dict) -> None:
    try:
        rep = validity_report(game, profile, zk=isinstance(game, ZKNipGame))
        row.update(eps_c=rep.completeness_error, eps_s=rep.soundness_error)
        if rep.zk_distance is not None:
            row["zk_tv"] = rep.zk_distance
    except (BudgetExceeded, DomainError):
        row.update(eps_c=math.nan, eps_s=math.nan)


def _train_quadratic(game: QuadraticGame, config: TrainConfig, profile: Mapping) -> TrainTrace:
    p = np.asarray(profile["p"], float)
    v = np.asarray(profile["v"], float)
    trace = TrainTrace()
    for t in range(config.steps):
        ap, av = config.rate_p(t), config.rate_v(t)
        p, v = _two_player_step(game, config, p, v, t)
        trace.rows.append({"step": t, "loss_p": game.loss("p", p, v), "loss_v": game.loss("v", p, v),
                           "theta_p": p.tolist(), "theta_v": v.tolist(), "rate_p": ap, "rate_v": av})
    trace.final = {"p": p, "v": v}
    return trace


def _two_player_step(objective, config: TrainConfig, p, v, t: int):
    ap, av = config.rate_p(t), config.rate_v(t)
    if config.method == "stackelberg-implicit":
        return stackelberg_implicit_update(objective, p, v, ap, av, config.fd_step, config.scale_correction)
    if config.method in ("lola", "lookahead-interp"):
        lam = config.lookahead if config.method == "lookahead-interp" else 0.0
        return lola_update(objective, p, v, ap, av, config.rate_p(t + 1), lam, config.fd_step)
    return simultaneous_update(objective, p, v, ap, av)


def run_training(game, config: TrainConfig, profile) -> TrainTrace:
    """Run ``config.method`` for ``config.steps`` steps; deterministic given ``config.seed``."""
    if isinstance(game, QuadraticGame):
        return _train_quadratic(game, config, profile)
    trace = TrainTrace(final=profile)
    if config.steps == 0:
        return trace
    rng = np.random.default_rng(config.seed)
    names = list(game.loss_spec.agent_losses)
    if config.method in ("expert-iteration", "stabilised-expert-iteration"):
        prof = Profile({a: (s.to_tabular() if isinstance(s, SoftmaxStrategy) else s)
                        for a, s in profile.strategies.items()}, profile.device)
        trace.rows.append({"step": 0, "acceptance_rate": exact_acceptance_rate(game, prof)})
        for t in range(config.steps):
            frac = 0.0
            if config.method == "stabilised-expert-iteration":
                frac = anneal_fraction(t, config.steps, *config.anneal)
            prof, stats = expert_iteration_round(game, prof, config.rollouts, rng, frac)
            row = {"step": t + 1, "acceptance_rate": stats.acceptance_rate, "replace_fraction": frac,
                   "accuracy": 1.0 - sum(game.problem.prior[x] * v for x, v in
                                         Evaluation(game, prof).instance_losses().items())}
            row.update({f"kept_{a}": k for a, k in stats.kept.items()})
            trace.rows.append(row)
        trace.final = prof
        trace.snapshots[str(config.steps)] = {a: strategy_snapshot(s) for a, s in prof.strategies.items()}
        return trace
    softmax = [a for a in names if isinstance(profile.strategies.get(a), SoftmaxStrategy)]
    if not softmax:
        raise DomainError("gradient methods need at least one SoftmaxStrategy agent")
    prof = profile
    if config.method != "simultaneous":
        roles = {a: (game.role(a)) for a in softmax}
        provers = [a for a in softmax if roles[a] == "prover"]
        verifiers = [a for a in softmax if roles[a] == "verifier"]
        if len(provers) != 1 or len(verifiers) != 1 or len(softmax) != 2:
            raise DomainError(f"{config.method} needs exactly one softmax prover and one softmax verifier")
        objective = SoftmaxObjective(game, prof, provers[0], verifiers[0], config.smooth)
    for t in range(config.steps):
        ev = Evaluation(game, prof)
        row: dict = {"step": t}
        for a in names:
            row[f"loss_{a}"] = loss_terms(ev, a).value
        if isinstance(game, ZKNipGame):
            row["zk_tv"] = zk_terms(ev).value
        if config.method == "simultaneous":
            updates = {}
            for a in softmax:
                rate = config.rate_p(t) if game.role(a) == "prover" else config.rate_v(t)
                _, g = exact_gradient(game, prof, a, smooth=config.smooth, evaluation=ev)
                row[f"grad_norm_{a}"] = float(np.linalg.norm(g))
                updates[a] = prof.strategies[a].with_params(prof.strategies[a].params() - rate * g)
            prof = prof.replace(**updates)
        else:
            objective.profile = prof
            p0 = prof.strategies[objective.prover].params()
            v0 = prof.strategies[objective.verifier].params()
            p1, v1 = _two_player_step(objective, config, p0, v0, t)
            row["grad_norm_" + objective.prover] = float(np.linalg.norm(objective.grad("p", "p", p0, v0)))
            row["grad_norm_" + objective.verifier] = float(np.linalg.norm(objective.grad("v", "v", p0, v0)))
            prof = objective._profile(p1, v1)
        if config.checkpoint_every and (t + 1) % config.checkpoint_every == 0:
            _checkpoint(game, prof, row)
            trace.snapshots[str(t + 1)] = {a: strategy_snapshot(prof.strategies[a]) for a in softmax}
        trace.rows.append(row)
    trace.final = prof
    return trace
