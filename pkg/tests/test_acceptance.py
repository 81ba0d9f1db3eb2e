import json
import math
import time

import numpy as np
import pytest

from proofgames.cli import main
from proofgames.dynamics import (QuadraticGame, TrainConfig, exact_gradient, finite_difference_gradient,
                                 lola_update, run_training, stackelberg_implicit_update)
from proofgames.equilibrium import (build_adversarial_game, check_se_adversarial_correspondence,
                                    classify_validity_equivalence, random_nip_suite)
from proofgames.experiments import (SIGMA_STAR, b_oracle, expert_iteration_toy, parity_game, parity_se,
                                    sweep_means, zk_sweep)
from proofgames.graphs import adjacency_from_edges, is_isomorphic, read_dataset_jsonl, wl_round_of
from proofgames.losses import agent_expected_loss, validity_report, zk_statistical_distance
from proofgames.problems import make_problem
from proofgames.protocols import (ACCEPT, build_adp, build_debate, build_mac, build_mnip, build_nip, build_solo,
                                  build_zk_nip)
from proofgames.strategies import FunctionStrategy, Profile, make_tabular_softmax

from oracles import brute_force_isomorphic

pytestmark = pytest.mark.acceptance

A = 0.2


@pytest.fixture(scope="module")
def suite():
    start = time.perf_counter()
    cases = random_nip_suite(100, seed=0)
    return cases, time.perf_counter() - start


@pytest.fixture(scope="module")
def dataset_run(tmp_path_factory):
    out = tmp_path_factory.mktemp("gen")
    cfg = out / "config.json"
    cfg.write_text(json.dumps({"seed": 0, "dataset": {"total_count": 1000}}))
    start = time.perf_counter()
    code = main(["gen-data", "--config", str(cfg), "--out", str(out)])
    return out, code, time.perf_counter() - start


def test_criterion_01_counterexample_validity(criterion):
    start = time.perf_counter()
    pg = parity_game(A)
    rep = validity_report(pg.game, pg.profile("dp1", SIGMA_STAR), list(pg.provers.values()))
    elapsed = time.perf_counter() - start
    ok = (abs(rep.completeness_error) <= 1e-9 and abs(rep.soundness_error - 5 / 8) <= 1e-9
          and rep.valid and elapsed < 1.0)
    criterion(1, "counterexample validity", ok,
              f"eps_c={rep.completeness_error:.3g} eps_s={rep.soundness_error:.12g} valid={rep.valid} {elapsed:.2f}s")
    assert ok


def test_criterion_02_deviation_incentive(criterion):
    start = time.perf_counter()
    pg = parity_game(A)
    l1 = agent_expected_loss(pg.game, pg.profile("dp1", SIGMA_STAR), "p").value
    l2 = agent_expected_loss(pg.game, pg.profile("dp2", SIGMA_STAR), "p").value
    elapsed = time.perf_counter() - start
    ok = (abs(l1 - A * math.log(64 / 9)) <= 1e-9 and abs(l2 - A * math.log(64 / 15)) <= 1e-9
          and l2 < l1 and elapsed < 1.0)
    criterion(2, "deviation incentive", ok, f"L(dp1)={l1:.12g} L(dp2)={l2:.12g} {elapsed:.2f}s")
    assert ok


def test_criterion_03_se_structure(criterion):
    start = time.perf_counter()
    pg = parity_game(A)
    se = parity_se(pg)
    b_se = float(np.mean([0.5 * (w[0] + w[1]) for _, w in se]))
    b_ref = b_oracle(pg)
    elapsed = time.perf_counter() - start
    provers = sorted({p for p, _ in se})
    w3 = min(w[2] for _, w in se)
    ok = provers == ["dp3"] and w3 > 0 and abs(b_se - b_ref) <= 1e-4 and elapsed < 10.0
    criterion(3, "SE structure", ok,
              f"provers={provers} min w(dv3)={w3:.4g} b={b_se:.6g} oracle b={b_ref:.6g} {elapsed:.2f}s")
    assert ok


def test_criterion_04_validity_equivalence(criterion, suite):
    suite, build_time = suite
    start = time.perf_counter() - build_time
    violations = 0
    for case in suite:
        rep = classify_validity_equivalence(case.game, case.grids, case.tensor, strict=True)
        violations += len(rep.violations)
    elapsed = time.perf_counter() - start
    ok = len(suite) >= 100 and violations == 0 and elapsed < 300
    criterion(4, "validity equivalence", ok, f"{len(suite)} games, {violations} violations {elapsed:.1f}s")
    assert ok


def test_criterion_05_adversarial_correspondence(criterion, suite):
    suite, build_time = suite
    start = time.perf_counter() - build_time
    mismatches = 0
    for case in suite:
        rep = classify_validity_equivalence(case.game, case.grids, case.tensor, strict=True)
        tol = {"p": rep.e_p, "v": rep.e_v}
        mismatches += len(check_se_adversarial_correspondence(case.game, case.grids, tol, True, False,
                                                              case.tensor).counterexamples)
    control = 0
    for case in suite:
        rep = classify_validity_equivalence(case.game, case.grids, case.tensor, strict=True)
        tol = {"p": rep.e_p, "v": rep.e_v}
        control += len(check_se_adversarial_correspondence(case.game, case.grids, tol, True, True,
                                                           case.tensor).counterexamples)
    elapsed = time.perf_counter() - start
    ok = mismatches == 0 and control > 0 and elapsed < 300
    criterion(5, "adversarial correspondence", ok,
              f"{mismatches} counterexamples, negative control {control} {elapsed:.1f}s")
    assert ok
    assert build_adversarial_game(suite[0].game).agent_names == ("p", "v", "a")


def _zk_fixture(real, sim):
    problem = make_problem({0: 0, 1: 1})
    zk = build_zk_nip(problem, 1, 1.0, prover_messages=(0, 1), verifier_view=lambda x: 0)
    accept = FunctionStrategy(lambda o: ACCEPT)
    sim_v = FunctionStrategy(lambda o: sim if not o.histories[0][1] else ACCEPT)
    return zk_statistical_distance(zk, Profile({"p": FunctionStrategy(lambda o: real), "v1": accept,
                                                "v2": accept, "v3": sim_v}))


def test_criterion_06_zk_metric_and_sweep(criterion):
    fixtures = [_zk_fixture({0: 1.0}, {0: 1.0}), _zk_fixture({0: 1.0}, {1: 1.0}),
                _zk_fixture({0: 0.75, 1: 0.25}, {0: 0.5, 1: 0.5})]
    fixtures_ok = all(abs(got - want) <= 1e-12 for got, want in zip(fixtures, (0.0, 1.0, 0.25)))
    means = [v for _, v in sweep_means(zk_sweep((0.0, 0.5, 1.0, 2.0)))]
    rises = [b - a for a, b in zip(means, means[1:]) if b > a]
    trend_ok = len(rises) == 0 or (len(rises) == 1 and rises[0] <= 0.02)
    ok = fixtures_ok and trend_ok
    criterion(6, "zk metric and sweep", ok,
              f"fixtures={[round(f, 12) for f in fixtures]} mean tv={[round(m, 4) for m in means]}")
    assert ok


def test_criterion_07_wl_correctness(criterion, dataset_run):
    out, code, _ = dataset_run
    start = time.perf_counter()
    pairs = read_dataset_jsonl(out / "dataset.jsonl")
    false_splits = sum(1 for p, _ in pairs if p.label == 1 and wl_round_of(p.left, p.right) is not None)
    c6 = adjacency_from_edges(6, [(i, (i + 1) % 6) for i in range(6)])
    two_k3 = adjacency_from_edges(6, [(0, 1), (1, 2), (2, 0), (3, 4), (4, 5), (5, 3)])
    k3 = adjacency_from_edges(3, [(0, 1), (1, 2), (2, 0)])
    p3 = adjacency_from_edges(3, [(0, 1), (1, 2)])
    c6_ok = (not brute_force_isomorphic(c6, two_k3) and not is_isomorphic(c6, two_k3)
             and wl_round_of(c6, two_k3) is None)
    k3_ok = wl_round_of(k3, p3) == 1
    elapsed = time.perf_counter() - start
    ok = code == 0 and len(pairs) == 1000 and false_splits == 0 and c6_ok and k3_ok and elapsed < 30
    criterion(7, "WL correctness", ok,
              f"{len(pairs)} pairs, {false_splits} isomorphic split, C6/2K3 ok={c6_ok} K3/P3 ok={k3_ok} {elapsed:.1f}s")
    assert ok


def test_criterion_08_dataset_proportions(criterion, dataset_run):
    out, code, elapsed = dataset_run
    obs = json.loads((out / "report.json").read_text())["observed"]
    got = (obs["non_isomorphic"], obs["wl1"], obs["wl2"], obs["train"], obs["test"])
    ok = code == 0 and got == (500, 50, 100, 800, 200) and elapsed < 120
    criterion(8, "dataset proportions", ok, f"non-iso/wl1/wl2/train/test={got} {elapsed:.1f}s")
    assert ok


def _gradient_draw(i):
    rng = np.random.default_rng(1000 + i)
    n = int(rng.integers(2, 5))
    labels = {x: int(rng.integers(0, 2)) for x in range(n)}
    if len(set(labels.values())) == 1:
        labels[0] = 1 - labels[0]
    prior = rng.dirichlet(np.ones(n))
    problem = make_problem(labels, {x: float(prior[x]) for x in range(n)})
    builders = (lambda: build_nip(problem, int(rng.integers(1, 3)), prover_messages=(0, 1)),
                lambda: build_adp(problem, prover_messages=(0, 1)),
                lambda: build_mnip(problem, prover_messages=(0, 1)),
                lambda: build_solo(problem),
                lambda: build_debate(problem),
                lambda: build_mac(problem))
    game = builders[i % len(builders)]()
    prof = Profile({a: make_tabular_softmax(game, a, "gaussian", 1.0, 7 * i + j)
                    for j, a in enumerate(game.agent_names)})
    agent = game.agent_names[int(rng.integers(len(game.agent_names)))]
    wrt = game.agent_names[int(rng.integers(len(game.agent_names)))]
    return game, prof, agent, wrt


def test_criterion_09_gradient_fidelity(criterion):
    start = time.perf_counter()
    worst = 0.0
    draws = 60
    for i in range(draws):
        game, prof, agent, wrt = _gradient_draw(i)
        _, grad = exact_gradient(game, prof, agent, wrt)
        fd = finite_difference_gradient(game, prof, agent, wrt)
        worst = max(worst, float(np.linalg.norm(grad - fd) / max(np.linalg.norm(fd), 1e-8)))
    elapsed = time.perf_counter() - start
    ok = worst <= 1e-4 and elapsed < 60
    criterion(9, "gradient fidelity", ok, f"{draws} draws, max rel err {worst:.2e} {elapsed:.1f}s")
    assert ok


def test_criterion_10_dynamics_fixture(criterion):
    from oracles import quadratic_lola_oracle

    q = QuadraticGame()
    rate_p = 0.1
    p, v = np.array([0.8]), np.array([-0.6])
    steps = 0
    while steps < 10_000 and max(abs(p[0]), abs(v[0])) >= 1e-3:
        p, v = stackelberg_implicit_update(q, p, v, rate_p, 0.01 * rate_p)
        steps += 1
    converged = max(abs(p[0]), abs(v[0])) < 1e-3
    got = lola_update(q, np.array([0.3]), np.array([-0.7]), 0.1, 0.001, 0.09)
    want = quadratic_lola_oracle(0.3, -0.7, 0.1, 0.001, 0.09)
    lola_err = max(abs(got[0][0] - want[0]), abs(got[1][0] - want[1]))
    ok = converged and lola_err <= 1e-10
    criterion(10, "dynamics fixture", ok, f"converged in {steps} steps, LOLA err {lola_err:.1e}")
    assert ok


def test_criterion_11_expert_iteration(criterion):
    game, prof = expert_iteration_toy()
    base = game.problem.base_rate()
    vanilla = run_training(game, TrainConfig("expert-iteration", steps=4, rollouts=4000, seed=0), prof)
    rates = vanilla.column("acceptance_rate")
    gaps = [abs(r - base) for r in rates]
    monotone = len(gaps) >= 4 and all(b > a for a, b in zip(gaps, gaps[1:]))
    stab = run_training(game, TrainConfig("stabilised-expert-iteration", steps=5, rollouts=4000, seed=0), prof)
    srates = stab.column("acceptance_rate")
    anchored = len(srates) >= 5 and all(abs(r - base) <= 0.15 for r in srates[1:])
    ok = monotone and anchored
    criterion(11, "expert iteration", ok,
              f"base {base:.3g} vanilla {[round(r, 4) for r in rates]} stabilised {[round(r, 4) for r in srates]}")
    assert ok


def _runs(tmp_path):
    configs = {
        "gen-data": {"seed": 0, "dataset": {"total_count": 40}},
        "solve": {"seed": 0, "protocol": "adp"},
        "solve-random": {"seed": 0, "source": "random", "suite_count": 3},
        "train": {"seed": 0, "source": "toy", "protocol": "zk-nip", "steps": 5, "rate_p": 0.3, "rate_v": 1.0},
        "train-ei": {"seed": 0, "source": "toy", "protocol": "solo", "method": "expert-iteration",
                     "steps": 2, "rollouts": 300},
        "reproduce-counterexample": {"seed": 0},
        "zk-sweep": {"seed": 0, "steps": 5, "sweep_seeds": 1},
    }
    for name, doc in configs.items():
        cfg = tmp_path / f"{name}.json"
        cfg.write_text(json.dumps(doc))
        command = name.split("-random")[0].split("-ei")[0]
        yield name, [command, "--config", str(cfg)]


def test_criterion_12_cli_determinism(criterion, tmp_path):
    differing = []
    for tag in ("a", "b"):
        for name, argv in _runs(tmp_path):
            main(argv + ["--out", str(tmp_path / tag / name)])
        main(["report", "--seed", "0", "--out", str(tmp_path / tag / "report"), str(tmp_path / tag)])
    names = [n for n, _ in _runs(tmp_path)]
    for name in names:
        a, b = (tmp_path / tag / name / "metrics.csv" for tag in ("a", "b"))
        if a.read_bytes() != b.read_bytes():
            differing.append(name)
    a_rep = json.loads((tmp_path / "a" / "report" / "report.json").read_text())["protocols"]
    b_rep = json.loads((tmp_path / "b" / "report" / "report.json").read_text())["protocols"]
    if a_rep != b_rep:
        differing.append("report")
    ok = not differing
    criterion(12, "CLI determinism", ok, f"{len(names) + 1} runs compared, differing={differing}")
    assert ok
