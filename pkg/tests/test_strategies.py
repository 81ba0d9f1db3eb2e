import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from proofgames.errors import BudgetExceeded, DomainError, UnknownObservationError
from proofgames.losses import profile_branches
from proofgames.messaging import reachable_observations
from proofgames.problems import make_parity_problem
from proofgames.protocols import ACCEPT, REJECT, build_adp, build_nip
from proofgames.strategies import (CorrelationDevice, FunctionStrategy, MixtureStrategy, Profile,
                                   SoftmaxStrategy, TabularStrategy, load_snapshot, make_tabular_softmax,
                                   pure_strategies, sample_joint_prover, strategy_snapshot, tabular_from_rule)


@pytest.fixture(scope="module")
def nip():
    return build_nip(make_parity_problem(0.2)[0], 1, prover_messages=(0, 1))


def test_tabular_rejects_bad_rows(nip):
    obs = reachable_observations(nip, "p")[0]
    with pytest.raises(DomainError):
        TabularStrategy({obs: [0.7, 0.7]})
    with pytest.raises(DomainError):
        TabularStrategy({obs: [1.0]})
    t = TabularStrategy({obs: [1.0, 0.0]})
    with pytest.raises(UnknownObservationError):
        t.distribution(reachable_observations(nip, "p")[1])


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 10**6), shift=st.floats(-50, 50))
def test_softmax_params_roundtrip_and_shift_invariance(nip, seed, shift):
    s = make_tabular_softmax(nip, "v", "gaussian", 3.0, seed)
    theta = s.params()
    assert np.array_equal(s.with_params(theta).params(), theta)
    shifted = s.with_params(theta + shift)
    for k in s.keys:
        assert np.allclose(s.distribution(k), shifted.distribution(k), atol=1e-12)
        assert s.distribution(k).sum() == pytest.approx(1.0, abs=1e-12)


def test_softmax_param_shape_checked(nip):
    s = make_tabular_softmax(nip, "v")
    with pytest.raises(DomainError):
        s.with_params(np.zeros(s.size + 1))


def test_pure_strategy_count_and_cap(nip):
    assert len(pure_strategies(nip, "p")) == 2**4
    assert len(pure_strategies(nip, "v")) == 2**8
    with pytest.raises(BudgetExceeded):
        pure_strategies(nip, "v", limit=10)


def test_mixture_behavioural_vs_lottery():
    problem, _ = make_parity_problem(0.2)
    g = build_nip(problem, 2, prover_messages=(0, 1), verifier_queries=("q",))
    yes = tabular_from_rule(g, "v", lambda o: "q" if len(o.histories[0][1]) < 2 else ACCEPT)
    no = tabular_from_rule(g, "v", lambda o: REJECT)
    p = FunctionStrategy(lambda o: 0)
    behavioural = Profile({"p": p, "v": MixtureStrategy([yes, no], [0.5, 0.5])})
    lottery = Profile({"p": p, "v": MixtureStrategy([yes, no], [0.5, 0.5], lottery=True)})
    acc = lambda prof: sum(b.prob for b in profile_branches(g, prof, 1) if b.transcript.decision == 1)  # noqa: E731
    assert acc(lottery) == pytest.approx(0.5)
    assert acc(behavioural) == pytest.approx(0.25)


def test_lottery_cannot_be_queried(nip):
    m = MixtureStrategy([FunctionStrategy(lambda o: 0)], [1.0], lottery=True)
    with pytest.raises(DomainError):
        m.distribution(reachable_observations(nip, "p")[0])


def test_product_device_and_branches():
    a = FunctionStrategy(lambda o: 0, "a")
    b = FunctionStrategy(lambda o: 1, "b")
    dev = CorrelationDevice.product(("p1", "p2"), [([a, b], [0.25, 0.75]), ([a], [1.0])])
    assert dev.probs == (0.25, 0.75)
    prof = Profile({"v": a}, dev)
    branches = prof.branches()
    assert [w for w, _ in branches] == [0.25, 0.75]
    assert branches[1][1]["p1"] is b and branches[1][1]["p2"] is a
    rng = np.random.default_rng(0)
    draws = [sample_joint_prover(dev, rng)[0] is b for _ in range(4000)]
    assert abs(np.mean(draws) - 0.75) < 0.03


def test_device_validation():
    a = FunctionStrategy(lambda o: 0)
    with pytest.raises(DomainError):
        CorrelationDevice(("p1", "p2"), ((a,),), (1.0,))
    with pytest.raises(DomainError):
        CorrelationDevice(("p1",), ((a,),), (0.5,))


def test_snapshot_roundtrip(nip):
    s = make_tabular_softmax(nip, "v", "gaussian", 1.0, 3)
    obs = reachable_observations(nip, "v")
    back = load_snapshot(strategy_snapshot(s), obs)
    assert isinstance(back, SoftmaxStrategy)
    assert np.array_equal(back.params(), s.params())
    t = back.to_tabular()
    again = load_snapshot(strategy_snapshot(t), obs)
    for o in obs:
        assert np.array_equal(again.distribution(o), t.distribution(o))


def test_function_strategy_mapping_output():
    g = build_adp(make_parity_problem(0.2)[0])
    obs = reachable_observations(g, "p")[0]
    f = FunctionStrategy(lambda o: {0: 0.25, 3: 0.75})
    assert f.distribution(obs).tolist() == [0.25, 0.0, 0.0, 0.75]
