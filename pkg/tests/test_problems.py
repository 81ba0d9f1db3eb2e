import math

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from proofgames.errors import DomainError, UnknownInstanceError
from proofgames.problems import (DecisionProblem, make_parity_problem, make_problem, membership_label,
                                 problem_from_sequence, sample_instances)


def test_parity_prior_and_labels():
    problem, fx = make_parity_problem(0.2)
    assert problem.instances == (0, 1, 2, 3)
    assert [problem.prior[x] for x in problem.instances] == pytest.approx([0.2, 0.2, 0.2, 0.4], abs=1e-15)
    assert [problem.labels[x] for x in problem.instances] == [0, 1, 0, 1]
    assert problem.base_rate() == pytest.approx(0.6)


def test_parity_fixture_tables():
    _, fx = make_parity_problem(0.2)
    xs = range(4)
    assert [fx.provers["dp1"](x) for x in xs] == [0, 1, 0, 1]
    assert [fx.provers["dp2"](x) for x in xs] == [0, 1, 2, 1]
    assert [fx.provers["dp3"](x) for x in xs] == [0, 1, 2, 3]
    assert [fx.verifiers["dv1"](m) for m in xs] == [0, 1, 1, 0]
    assert [fx.verifiers["dv2"](m) for m in xs] == [1, 1, 0, 0]
    assert [fx.verifiers["dv3"](m) for m in xs] == [1, 1, 1, 1]


@pytest.mark.parametrize("a", [0.0, 1 / 3, -0.1, 0.5])
def test_parity_rejects_out_of_range(a):
    with pytest.raises(DomainError):
        make_parity_problem(a)


def test_prior_must_normalise():
    with pytest.raises(DomainError, match="sums to"):
        make_problem({0: 0, 1: 1}, {0: 0.5, 1: 0.6})


def test_single_label_needs_degenerate_flag():
    with pytest.raises(DomainError):
        make_problem({0: 1, 1: 1})
    p = make_problem({0: 1, 1: 1}, degenerate=True)
    assert p.negatives == ()


def test_membership_unknown_instance():
    problem, _ = make_parity_problem(0.1)
    assert membership_label(problem, 3) == 1
    with pytest.raises(UnknownInstanceError):
        membership_label(problem, 7)


def test_problem_from_sequence_accumulates_repeats():
    p = problem_from_sequence(["a", "b", "a", "c"], [1, 0, 1, 0])
    assert p.prior["a"] == pytest.approx(0.5)
    assert p.labels["c"] == 0


def test_duplicate_instances_rejected():
    with pytest.raises(DomainError):
        DecisionProblem((0, 0), {0: 1}, {0: 1.0})


@settings(max_examples=50, deadline=None)
@given(a=st.floats(0.01, 0.32), seed=st.integers(0, 2**32 - 1), count=st.integers(0, 50))
def test_sampling_deterministic_and_in_support(a, seed, count):
    problem, _ = make_parity_problem(a)
    first = sample_instances(problem, count, seed)
    assert first == sample_instances(problem, count, seed)
    assert set(first) <= set(problem.instances)
    assert math.isclose(sum(problem.prior.values()), 1.0)
