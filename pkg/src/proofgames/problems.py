"""Finite probabilistic decision problems and the parity counterexample fixture."""
from __future__ import annotations

import math
from collections.abc import Hashable, Mapping, Sequence
from dataclasses import dataclass, field
from types import MappingProxyType
from typing import Callable

import numpy as np

from .errors import DomainError, UnknownInstanceError

Instance = Hashable

PRIOR_TOLERANCE = 1e-12


@dataclass(frozen=True, eq=False)
class DecisionProblem:
    """A decision problem ``(X, S)`` with a prior over ``X``.

    ``labels[x]`` is 1 exactly when ``x`` belongs to the positive set.
    """

    instances: tuple
    labels: Mapping[Instance, int]
    prior: Mapping[Instance, float]
    degenerate: bool = False
    name: str = "problem"

    def __post_init__(self):
        instances = tuple(self.instances)
        if len(set(instances)) != len(instances):
            raise DomainError("instances must be distinct")
        if not instances:
            raise DomainError("a decision problem needs at least one instance")
        labels = {x: int(self.labels[x]) for x in instances if x in self.labels}
        missing = [x for x in instances if x not in labels]
        if missing:
            raise DomainError(f"instances without a label: {missing!r}")
        if any(v not in (0, 1) for v in labels.values()):
            raise DomainError("labels must be 0 or 1")
        prior = {x: float(self.prior.get(x, 0.0)) for x in instances}
        if any(p < 0 or not math.isfinite(p) for p in prior.values()):
            raise DomainError("prior values must be finite and non-negative")
        total = math.fsum(prior.values())
        if abs(total - 1.0) > PRIOR_TOLERANCE:
            raise DomainError(f"prior sums to {total!r}, not 1")
        if not self.degenerate and len(set(labels.values())) < 2:
            raise DomainError("both labels must occur unless the problem is flagged degenerate")
        object.__setattr__(self, "instances", instances)
        object.__setattr__(self, "labels", MappingProxyType(labels))
        object.__setattr__(self, "prior", MappingProxyType(prior))

    @property
    def positives(self) -> tuple:
        return tuple(x for x in self.instances if self.labels[x] == 1)

    @property
    def negatives(self) -> tuple:
        return tuple(x for x in self.instances if self.labels[x] == 0)

    def prior_vector(self) -> np.ndarray:
        return np.array([self.prior[x] for x in self.instances], dtype=float)

    def base_rate(self) -> float:
        """Prior probability of a positive instance."""
        return math.fsum(self.prior[x] for x in self.positives)

    def index(self, x: Instance) -> int:
        try:
            return self.instances.index(x)
        except ValueError:
            raise UnknownInstanceError(x) from None


def membership_label(problem: DecisionProblem, x: Instance) -> int:
    try:
        return problem.labels[x]
    except KeyError:
        raise UnknownInstanceError(x) from None


def sample_instances(problem: DecisionProblem, count: int, rng_seed) -> list:
    """Draw ``count`` i.i.d. instances from the prior; deterministic for a given seed."""
    if count < 0:
        raise DomainError("count must be non-negative")
    rng = np.random.default_rng(rng_seed)
    idx = rng.choice(len(problem.instances), size=count, p=problem.prior_vector())
    return [problem.instances[i] for i in idx]


def make_problem(labels: Mapping[Instance, int], prior: Mapping[Instance, float] | None = None,
                 name: str = "problem", degenerate: bool = False) -> DecisionProblem:
    """Convenience constructor; a missing prior means uniform."""
    instances = tuple(labels)
    if prior is None:
        prior = {x: 1.0 / len(instances) for x in instances}
    return DecisionProblem(instances, dict(labels), dict(prior), degenerate=degenerate, name=name)


@dataclass(frozen=True)
class ParityFixtures:
    """Named pure strategies for the parity counterexample.

    Prover strategies map an instance to a message in ``X``; verifier strategies map
    the prover's message to a decision.  They ignore everything else.
    """

    provers: Mapping[str, Callable[[int], int]] = field(default_factory=dict)
    verifiers: Mapping[str, Callable[[int], int]] = field(default_factory=dict)


def _delta_p1(x):
    return x % 2


def _delta_p2(x):
    return 2 - abs(x - 2)


def _delta_p3(x):
    return x


def _delta_v1(m):
    return int(0 < m < 3)


def _delta_v2(m):
    return int(m < 2)


def _delta_v3(m):
    return 1


def make_parity_problem(a: float) -> tuple[DecisionProblem, ParityFixtures]:
    """Parity problem on ``{0,1,2,3}`` with ``Pr(0)=Pr(1)=Pr(2)=a`` and ``Pr(3)=1-3a``.

    Prover fixtures follow the closed forms ``x mod 2``, ``2-|x-2|`` and ``x``.
    """
    if not 0 < a < 1 / 3:
        raise DomainError(f"a must lie in (0, 1/3), got {a!r}")
    instances = (0, 1, 2, 3)
    labels = {x: x % 2 for x in instances}
    prior = {0: a, 1: a, 2: a, 3: 1.0 - 3.0 * a}
    problem = DecisionProblem(instances, labels, prior, name=f"parity(a={a:g})")
    fixtures = ParityFixtures(
        provers={"dp1": _delta_p1, "dp2": _delta_p2, "dp3": _delta_p3},
        verifiers={"dv1": _delta_v1, "dv2": _delta_v2, "dv3": _delta_v3},
    )
    return problem, fixtures


def problem_from_sequence(xs: Sequence, ys: Sequence[int], name: str = "dataset") -> DecisionProblem:
    """Empirical problem: uniform weight per row, repeated rows accumulate mass."""
    if len(xs) != len(ys) or not xs:
        raise DomainError("need equally many instances and labels, at least one")
    prior: dict = {}
    labels: dict = {}
    for x, y in zip(xs, ys):
        if x in labels and labels[x] != y:
            raise DomainError(f"conflicting labels for {x!r}")
        labels[x] = int(y)
        prior[x] = prior.get(x, 0.0) + 1.0 / len(xs)
    total = math.fsum(prior.values())
    prior = {x: p / total for x, p in prior.items()}
    return DecisionProblem(tuple(labels), labels, prior, degenerate=len(set(labels.values())) < 2, name=name)
