import math

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from proofgames.errors import DomainError
from proofgames.experiments import SIGMA_STAR, parity_game
from proofgames.losses import (Evaluation, LossEstimate, agent_expected_loss, all_losses, completeness_error,
                               empirical_risk, empirical_worst_case, instance_loss, loss_terms, soundness_error,
                               tv_distance, validity_report, zk_statistical_distance)
from proofgames.problems import make_parity_problem, make_problem
from proofgames.protocols import ACCEPT, REJECT, UNSURE, build_debate, build_mac, build_nip, build_zk_nip
from proofgames.strategies import FunctionStrategy, Profile

from oracles import nip_losses, one_round_accept, tv


def _last(o):
    return o.histories[0][1][-1]


def test_parity_adp_losses_closed_form():
    a = 0.2
    pg = parity_game(a)
    lp1 = agent_expected_loss(pg.game, pg.profile("dp1", SIGMA_STAR), "p").value
    lp2 = agent_expected_loss(pg.game, pg.profile("dp2", SIGMA_STAR), "p").value
    assert lp1 == pytest.approx(a * math.log(64 / 9), abs=1e-12)
    assert lp2 == pytest.approx(a * math.log(64 / 15), abs=1e-12)
    # messages 0,1,0,1; accept(0)=3/8, accept(1)=1 -> only x in {0,2} pay log(5/8)
    lv = agent_expected_loss(pg.game, pg.profile("dp1", SIGMA_STAR), "v").value
    assert lv == pytest.approx(-2 * a * math.log(5 / 8), abs=1e-12)


def test_parity_validity_report():
    pg = parity_game(0.2)
    rep = validity_report(pg.game, pg.profile("dp1", SIGMA_STAR), list(pg.provers.values()))
    assert rep.completeness_error == pytest.approx(0.0, abs=1e-12)
    assert rep.soundness_error == pytest.approx(5 / 8, abs=1e-12)
    assert rep.valid
    assert rep.soundness_witness in (0, 2)


def test_adp_log_of_zero_is_infinite():
    pg = parity_game(0.2)
    v = agent_expected_loss(pg.game, pg.profile("dp3", (0.0, 0.0, 1.0)), "v").value
    assert v == math.inf


@settings(max_examples=40, deadline=None)
@given(send=st.lists(st.floats(0, 1), min_size=4, max_size=4),
       acc=st.lists(st.floats(0, 1), min_size=8, max_size=8))
def test_nip_losses_match_oracle(send, acc):
    problem, _ = make_parity_problem(0.2)
    g = build_nip(problem, 1, prover_messages=(0, 1))
    p = FunctionStrategy(lambda o: {0: 1 - send[o.view], 1: send[o.view]})
    v = FunctionStrategy(lambda o: {REJECT: 1 - acc[2 * o.view + _last(o)], ACCEPT: acc[2 * o.view + _last(o)]})
    losses = all_losses(g, Profile({"p": p, "v": v}))
    accept = one_round_accept(problem.prior, problem.labels, lambda x: {0: 1 - send[x], 1: send[x]},
                              lambda x, m: acc[2 * x + m])
    lp, lv = nip_losses(problem.prior, problem.labels, accept)
    assert losses["p"] == pytest.approx(lp, abs=1e-12)
    assert losses["v"] == pytest.approx(lv, abs=1e-12)


def test_smoothed_max_upper_bounds_exact():
    problem, _ = make_parity_problem(0.2)
    g = build_nip(problem, 1, prover_messages=(0, 1))
    prof = Profile({"p": FunctionStrategy(lambda o: {0: 0.3, 1: 0.7}),
                    "v": FunctionStrategy(lambda o: {REJECT: 0.4, ACCEPT: 0.6})})
    ev = Evaluation(g, prof)
    exact = loss_terms(ev, "v").value
    soft = loss_terms(ev, "v", smooth=0.01).value
    assert exact <= soft <= exact + 2 * 0.01 * math.log(2) + 1e-12


def test_debate_losses():
    problem = make_problem({0: 0, 1: 1})
    g = build_debate(problem)
    prof = Profile({"p1": FunctionStrategy(lambda o: 1), "p2": FunctionStrategy(lambda o: 0),
                    "v": FunctionStrategy(lambda o: {1: 0.75, 2: 0.25})})
    losses = all_losses(g, prof)
    assert losses["p1"] == pytest.approx(-0.75)
    assert losses["p2"] == pytest.approx(-0.25)
    # p1 claims 1: right on x=1 when picked, p2 claims 0: right on x=0 when picked
    assert losses["v"] == pytest.approx(-(0.5 * 0.25 + 0.5 * 0.75))


def test_mac_losses_by_hand():
    problem = make_problem({0: 0, 1: 1})
    g = build_mac(problem, gamma=0.25)
    honest = FunctionStrategy(lambda o: o.view)
    liar = FunctionStrategy(lambda o: 1 - o.view)
    q, r = 0.7, 0.1
    u = 1 - q - r
    v = FunctionStrategy(lambda o: {_last(o): q, 1 - _last(o): r, UNSURE: u})
    losses = all_losses(g, Profile({"p1": honest, "p2": liar, "v": v}))
    # the honest feature gets the truth with prob q, the lying one with prob r
    assert losses["p1"] == pytest.approx(-0.5 * (math.log(q) + math.log(r)))
    assert losses["p2"] == pytest.approx(0.5 * (math.log(q + u) + math.log(r + u)))
    assert losses["v"] == pytest.approx(-(0.75 * math.log(q) + 0.25 * math.log(r + u)))


def _zk_fixture(real, sim):
    problem = make_problem({0: 0, 1: 1})
    zk = build_zk_nip(problem, 1, 1.0, prover_messages=(0, 1), verifier_view=lambda x: 0)
    accept = FunctionStrategy(lambda o: ACCEPT)
    sim_v = FunctionStrategy(lambda o: sim if not o.histories[0][1] else ACCEPT)
    prof = Profile({"p": FunctionStrategy(lambda o: real), "v1": accept, "v2": accept, "v3": sim_v})
    return zk, prof


@pytest.mark.parametrize("real,sim,expected", [
    ({0: 1.0}, {0: 1.0}, 0.0),
    ({0: 1.0}, {1: 1.0}, 1.0),
    ({0: 0.75, 1: 0.25}, {0: 0.5, 1: 0.5}, 0.25),
])
def test_zk_distance_fixtures(real, sim, expected):
    zk, prof = _zk_fixture(real, sim)
    assert zk_statistical_distance(zk, prof) == pytest.approx(expected, abs=1e-12)
    seq = lambda d: {(m, ACCEPT): p for m, p in d.items()}  # noqa: E731
    assert tv(seq(real), seq(sim)) == pytest.approx(expected, abs=1e-12)


def test_tv_distance_helper():
    assert tv_distance({"a": 0.75, "b": 0.25}, {"a": 0.5, "b": 0.5}) == pytest.approx(0.25)
    assert tv_distance({"a": 1.0}, {"b": 1.0}) == 1.0


def test_zk_prover_loss_adds_weighted_distance():
    zk, prof = _zk_fixture({0: 0.75, 1: 0.25}, {0: 0.5, 1: 0.5})
    ev = Evaluation(zk, prof)
    lp = loss_terms(ev, "p").value
    lv2 = loss_terms(ev, "v2").value
    lv3 = loss_terms(ev, "v3").value
    assert lv3 == pytest.approx(0.25)
    assert lv2 == pytest.approx(-0.25)
    # always-accept verifier: positive worst case 0, negative worst case 1
    assert lp == pytest.approx((0.0 - 1.0) + 1.0 * 0.25, abs=1e-12)


def test_completeness_and_soundness_witnesses():
    problem, _ = make_parity_problem(0.2)
    g = build_nip(problem, 1, prover_messages=(0, 1))
    honest = FunctionStrategy(lambda o: o.view % 2)
    trusting = FunctionStrategy(lambda o: ACCEPT if _last(o) == 1 else REJECT)
    prof = Profile({"p": honest, "v": trusting})
    assert completeness_error(g, prof) == (0.0, 1)
    value, x, dev = soundness_error(g, prof)
    assert value == 1.0 and problem.labels[x] == 0


def test_validity_report_rejects_inconsistent_verdict():
    from proofgames.losses import ValidityReport

    with pytest.raises(DomainError):
        ValidityReport(0.6, 0.6, True)


def test_empirical_risks_and_monte_carlo_fallback():
    problem, _ = make_parity_problem(0.2)
    g = build_nip(problem, 1, prover_messages=(0, 1))
    prof = Profile({"p": FunctionStrategy(lambda o: 1), "v": FunctionStrategy(lambda o: {REJECT: .3, ACCEPT: .7})})
    assert empirical_risk(g, prof, [0, 1]).value == pytest.approx((0.7 + 0.3) / 2)
    wc = empirical_worst_case(g, prof, [0, 1, 2, 3], condition=0)
    assert wc.value == pytest.approx(0.7) and wc.witness == 0
    mc = instance_loss(g, prof, 0, budget=1, samples=4000)
    assert mc.mode == "monte-carlo" and abs(mc.value - 0.7) < 5 * mc.stderr
    with pytest.raises(DomainError):
        LossEstimate(0.1, "exact", stderr=0.1)
