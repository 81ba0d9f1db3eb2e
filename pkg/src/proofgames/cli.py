"""Command-line entry point: ``proofgames <command> [flags]``.

Exit codes: 0 success, 1 failed reproduction check, 2 configuration error, 3 budget or I/O error.
"""
from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import math
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from .conditions import accuracy
from .dynamics import TrainConfig, exact_acceptance_rate, run_training
from .equilibrium import (check_se_adversarial_correspondence, classify_validity_equivalence, random_nip_suite)
from .errors import BudgetExceeded, GenerationError, ProofGamesError
from .experiments import (expert_iteration_toy, parity_game, parity_se, precision_recall, reproduce_counterexample,
                          sweep_means, worst_case_fail_rate, zk_sweep, zk_toy)
from .graphs import (GraphDatasetConfig, bucket_counts, generate_graph_pair_dataset, read_dataset_jsonl,
                     write_dataset_jsonl)
from .losses import validity_report
from .problems import make_parity_problem, problem_from_sequence
from .protocols import ZKNipGame, build_protocol
from .strategies import Profile, make_tabular_softmax, strategy_snapshot

COMMANDS = ("gen-data", "solve", "train", "reproduce-counterexample", "zk-sweep", "report")
METRICS = ("accuracy", "eps_c", "eps_s", "zk_tv", "acceptance_rate", "worst_case_fail_rate", "precision", "recall")
SOURCES = ("parity", "graph", "random", "toy")
METRIC_FIELDS = ("run_id", "protocol", "metric", "value", "step", "seed")
FAIL_ROLLOUTS = 10


class ConfigError(ProofGamesError):
    """Invalid or inconsistent run configuration."""


@dataclass(frozen=True)
class MetricsRow:
    run_id: str
    protocol: str
    metric: str
    value: float
    step: int
    seed: int

    def __post_init__(self):
        if self.metric not in METRICS:
            raise ConfigError(f"metric {self.metric!r} is not in the registry {list(METRICS)}")


def write_metrics(rows, path) -> None:
    """Append ``rows`` to a CSV file, writing the header only when the file is new or empty."""
    path = Path(path)
    rows = list(rows)
    fresh = not path.exists() or path.stat().st_size == 0
    with open(path, "a", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        if fresh:
            w.writerow(METRIC_FIELDS)
        for r in rows:
            w.writerow([r.run_id, r.protocol, r.metric, repr(float(r.value)), r.step, r.seed])


def read_metrics(path) -> list[MetricsRow]:
    with open(path, newline="", encoding="utf-8") as fh:
        return [MetricsRow(r["run_id"], r["protocol"], r["metric"], float(r["value"]), int(r["step"]), int(r["seed"]))
                for r in csv.DictReader(fh)]


@dataclass
class RunConfig:
    command: str
    seed: Optional[int] = None
    out: str = "runs"
    protocol: str = "adp"
    source: str = "parity"
    a: float = 0.2
    dataset_path: Optional[str] = None
    max_instances: int = 6
    rounds: int = 1
    zk_coefficient: float = 1.0
    method: str = "simultaneous"
    steps: int = 100
    rate_p: float = 0.5
    rate_v: float = 0.05
    checkpoint_every: int = 0
    rollouts: int = 2000
    init_std: float = 1.0
    coefficients: list = field(default_factory=lambda: [0.0, 0.5, 1.0, 2.0])
    sweep_seeds: int = 3
    suite_count: int = 100
    inputs: list = field(default_factory=list)
    dataset: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.command not in COMMANDS:
            raise ConfigError(f"unknown command {self.command!r}")
        if self.seed is None:
            raise ConfigError("a seed is required (--seed or config 'seed')")
        if self.source not in SOURCES:
            raise ConfigError(f"unknown source {self.source!r}; choose from {list(SOURCES)}")
        if self.source == "graph" and self.command in ("train", "solve"):
            if not self.dataset_path or not Path(self.dataset_path).is_file():
                raise ConfigError(f"dataset_path {self.dataset_path!r} does not exist")
        for p in self.inputs:
            if not Path(p).exists():
                raise ConfigError(f"input {p!r} does not exist")

    @classmethod
    def build(cls, command: str, doc: dict, overrides: dict) -> "RunConfig":
        known = {f.name for f in dataclasses.fields(cls)}
        merged = {**doc, **{k: v for k, v in overrides.items() if v is not None}}
        unknown = set(merged) - known
        if unknown:
            raise ConfigError(f"unknown config fields: {sorted(unknown)}")
        merged["command"] = command
        return cls(**merged)


def _parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="proofgames", description="Prover-verifier game experiments.")
    sub = ap.add_subparsers(dest="command", required=True, metavar="{" + ",".join(COMMANDS) + "}")
    for name in COMMANDS:
        sp = sub.add_parser(name)
        sp.add_argument("--config", help="JSON run configuration; flags override its fields")
        sp.add_argument("--seed", type=int)
        sp.add_argument("--out")
        sp.add_argument("--protocol")
        sp.add_argument("--a", type=float)
        sp.add_argument("--rounds", type=int)
        sp.add_argument("--zk-coefficient", dest="zk_coefficient", type=float)
        sp.add_argument("--method")
        sp.add_argument("--steps", type=int)
        if name == "report":
            sp.add_argument("inputs", nargs="*", default=None, help="metrics.csv files or run directories")
    return ap


# -- problem sources ---------------------------------------------------------------------


def _degree_signature(adj) -> tuple:
    return tuple(sorted(len(r) for r in adj))


def _graph_problem(cfg: RunConfig):
    pairs = [p for p, s in read_dataset_jsonl(cfg.dataset_path) if s in (None, "train")][: cfg.max_instances]
    if not pairs:
        raise ConfigError("dataset has no training pairs")
    problem = problem_from_sequence(list(range(len(pairs))), [p.label for p in pairs], name="graph-pairs")
    view = {i: _degree_signature(p.left) == _degree_signature(p.right) for i, p in enumerate(pairs)}
    return problem, view


def _build_game(cfg: RunConfig):
    if cfg.source == "toy":
        if cfg.protocol == "zk-nip":
            return zk_toy(cfg.zk_coefficient, cfg.rounds)
        if cfg.protocol != "solo":
            raise ConfigError("the toy source supports protocols solo and zk-nip")
        return expert_iteration_toy()[0]
    kwargs: dict = {}
    if cfg.protocol in ("nip", "mnip", "debate", "zk-nip"):
        kwargs["rounds"] = cfg.rounds
    if cfg.protocol == "zk-nip":
        kwargs["zk_coefficient"] = cfg.zk_coefficient
    if cfg.source == "parity":
        problem, _ = make_parity_problem(cfg.a)
    elif cfg.source == "graph":
        problem, view = _graph_problem(cfg)
        kwargs["prover_messages"] = (0, 1)
        if cfg.protocol in ("nip", "mnip", "zk-nip", "solo"):
            kwargs["verifier_view"] = view.__getitem__
    else:
        raise ConfigError("source 'random' is only available to solve")
    if cfg.protocol in ("debate", "mac"):
        kwargs.pop("prover_messages", None)
    return build_protocol(cfg.protocol, problem, **kwargs)


def _run_id(cfg: RunConfig) -> str:
    return f"{cfg.command}-{cfg.protocol}-{cfg.source}-s{cfg.seed}"


def _write_json(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, indent=2, sort_keys=True, default=_json_default) + "\n", encoding="utf-8")


def _json_default(obj):
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, (set, frozenset, tuple)):
        return list(obj)
    return str(obj)


def _fresh_metrics(out: Path) -> Path:
    path = out / "metrics.csv"
    if path.exists():
        path.unlink()
    return path


# -- commands ----------------------------------------------------------------------------


def cmd_gen_data(cfg: RunConfig, out: Path) -> int:
    dcfg = GraphDatasetConfig.from_dict({**cfg.dataset, "seed": cfg.seed})
    ds = generate_graph_pair_dataset(dcfg)
    write_dataset_jsonl(ds, out / "dataset.jsonl")
    counts = dataclasses.asdict(bucket_counts(dcfg))
    observed = {
        "non_isomorphic": sum(p.label == 0 for p in ds.pairs),
        "wl1": sum(p.wl_round == 1 for p in ds.pairs),
        "wl2": sum(p.wl_round == 2 for p in ds.pairs),
        "train": sum(s == "train" for s in ds.splits),
        "test": sum(s == "test" for s in ds.splits),
    }
    _write_json(out / "report.json", {"config": json.loads(dcfg.to_json()), "targets": counts, "observed": observed})
    write_metrics([], _fresh_metrics(out))
    print(f"wrote {len(ds)} pairs to {out / 'dataset.jsonl'}  " + "  ".join(f"{k}={v}" for k, v in observed.items()))
    return 0


def _solve_random(cfg: RunConfig, out: Path) -> int:
    suite = random_nip_suite(cfg.suite_count, cfg.seed)
    violations = mismatches = 0
    cases = []
    for case in suite:
        rep = classify_validity_equivalence(case.game, case.grids, case.tensor, strict=True)
        prover, verifier = case.game.agents_with_role("prover")[0], case.game.decision_agent
        tol = {prover: rep.e_p, verifier: rep.e_v}
        corr = check_se_adversarial_correspondence(case.game, case.grids, tol, True, False, case.tensor)
        violations += len(rep.violations)
        mismatches += len(corr.counterexamples)
        cases.append({"seed": case.seed, "violations": len(rep.violations),
                      "mismatches": len(corr.counterexamples), "equilibria": len(rep.equilibria)})
    write_metrics([], _fresh_metrics(out))
    _write_json(out / "report.json", {"cases": cases, "violations": violations, "mismatches": mismatches})
    print(f"{len(suite)} games: {violations} equivalence violations, {mismatches} correspondence mismatches")
    return 0


def cmd_solve(cfg: RunConfig, out: Path) -> int:
    if cfg.source == "random":
        return _solve_random(cfg, out)
    if cfg.source != "parity":
        raise ConfigError("solve supports the parity and random sources")
    pg = parity_game(cfg.a, cfg.protocol)
    zoom = (0.005, 0.0005) if cfg.protocol == "adp" else ()
    se = parity_se(pg, zoom_steps=zoom)
    rows, eqs = [], []
    for i, (prover, weights) in enumerate(se):
        rep = validity_report(pg.game, pg.profile(prover, weights), list(pg.provers.values()))
        eqs.append({"prover": prover, "verifier_weights": list(weights), "eps_c": rep.completeness_error,
                    "eps_s": rep.soundness_error, "valid": rep.valid})
        rows += [MetricsRow(_run_id(cfg), cfg.protocol, "eps_c", rep.completeness_error, i, cfg.seed),
                 MetricsRow(_run_id(cfg), cfg.protocol, "eps_s", rep.soundness_error, i, cfg.seed)]
        print(f"SE {i}: prover {prover}  verifier {tuple(round(w, 6) for w in weights)}  "
              f"eps_c={rep.completeness_error:.6g} eps_s={rep.soundness_error:.6g}")
    write_metrics(rows, _fresh_metrics(out))
    _write_json(out / "report.json", {"protocol": cfg.protocol, "a": cfg.a, "equilibria": eqs})
    return 0


def _initial_profile(game, cfg: RunConfig) -> Profile:
    if cfg.source == "toy" and cfg.protocol == "solo":
        return expert_iteration_toy()[1]
    return Profile({a: make_tabular_softmax(game, a, "gaussian", cfg.init_std, 100 * cfg.seed + i)
                    for i, a in enumerate(game.agent_names)})


def _final_metrics(game, profile: Profile, cfg: RunConfig, step: int) -> list[MetricsRow]:
    rid, proto, seed = _run_id(cfg), cfg.protocol, cfg.seed
    main = game.main if isinstance(game, ZKNipGame) else game
    prec, rec = precision_recall(main, profile)
    rows = [
        MetricsRow(rid, proto, "accuracy", accuracy(game, profile), step, seed),
        MetricsRow(rid, proto, "acceptance_rate", exact_acceptance_rate(main, profile), step, seed),
        MetricsRow(rid, proto, "precision", prec, step, seed),
        MetricsRow(rid, proto, "recall", rec, step, seed),
        MetricsRow(rid, proto, "worst_case_fail_rate",
                   worst_case_fail_rate(main, profile, main.problem.instances, FAIL_ROLLOUTS,
                                        np.random.default_rng(cfg.seed)), step, seed),
    ]
    if main.agents_with_role("prover"):
        rep = validity_report(game, profile, zk=isinstance(game, ZKNipGame))
        rows += [MetricsRow(rid, proto, "eps_c", rep.completeness_error, step, seed),
                 MetricsRow(rid, proto, "eps_s", rep.soundness_error, step, seed)]
        if rep.zk_distance is not None:
            rows.append(MetricsRow(rid, proto, "zk_tv", rep.zk_distance, step, seed))
    return rows


def cmd_train(cfg: RunConfig, out: Path) -> int:
    game = _build_game(cfg)
    tcfg = TrainConfig(cfg.method, cfg.rate_p, cfg.rate_v, cfg.steps, rollouts=cfg.rollouts,
                       checkpoint_every=cfg.checkpoint_every, seed=cfg.seed)
    trace = run_training(game, tcfg, _initial_profile(game, cfg))
    rid, rows = _run_id(cfg), []
    for r in trace.rows:
        for m in METRICS:
            if m in r and not (isinstance(r[m], float) and math.isnan(r[m])):
                rows.append(MetricsRow(rid, cfg.protocol, m, r[m], r["step"], cfg.seed))
    seen = {(r.metric, r.step) for r in rows}
    rows += [r for r in _final_metrics(game, trace.final, cfg, cfg.steps) if (r.metric, r.step) not in seen]
    write_metrics(rows, _fresh_metrics(out))
    snaps = out / "snapshots"
    snaps.mkdir(exist_ok=True)
    final = {a: strategy_snapshot(s) for a, s in trace.final.strategies.items()}
    for step, snap in {**trace.snapshots, "final": final}.items():
        (snaps / f"{step}.json").write_text(json.dumps(snap, sort_keys=True, default=_json_default) + "\n",
                                            encoding="utf-8")
    (out / "trace.csv").write_text(trace.to_csv(), encoding="utf-8")
    _write_json(out / "report.json", {"config": dataclasses.asdict(cfg), "train": tcfg.to_json(),
                                      "final": {r.metric: r.value for r in rows if r.step == cfg.steps}})
    for r in rows:
        if r.step == cfg.steps:
            print(f"{r.metric:<22} {r.value:.6g}")
    return 0


def cmd_reproduce(cfg: RunConfig, out: Path) -> int:
    checks = reproduce_counterexample(cfg.a)
    width = max(len(c.name) for c in checks)
    print(f"{'check':<{width}}  {'value':<24}  {'expected':<24}  result")
    for c in checks:
        status = "PASS" if c.passed else "FAIL"
        note = f"  ({c.note})" if c.note else ""
        print(f"{c.name:<{width}}  {_fmt(c.value):<24}  {_fmt(c.expected):<24}  {status}{note}")
    rid = _run_id(cfg)
    by_name = {c.name: c for c in checks}
    write_metrics([MetricsRow(rid, "adp", "eps_c", by_name["eps_c"].value, 0, cfg.seed),
                   MetricsRow(rid, "adp", "eps_s", by_name["eps_s"].value, 0, cfg.seed)], _fresh_metrics(out))
    _write_json(out / "report.json", {"a": cfg.a, "checks": [dataclasses.asdict(c) for c in checks]})
    return 0 if all(c.passed for c in checks) else 1


def _fmt(v) -> str:
    return f"{v:.10g}" if isinstance(v, float) else str(v)


def cmd_zk_sweep(cfg: RunConfig, out: Path) -> int:
    rows = zk_sweep([float(c) for c in cfg.coefficients], cfg.steps, cfg.sweep_seeds, cfg.seed)
    write_metrics([MetricsRow(f"zk-sweep-c{r['coefficient']:g}", "zk-nip", "zk_tv", r["zk_tv"], cfg.steps, r["seed"])
                   for r in rows], _fresh_metrics(out))
    means = sweep_means(rows)
    _write_json(out / "report.json", {"runs": rows, "mean_zk_tv": [{"coefficient": c, "zk_tv": v} for c, v in means]})
    for c, v in means:
        print(f"coefficient {c:<6g} mean final zk_tv {v:.6g}")
    return 0


def _metric_files(inputs) -> list[Path]:
    files = []
    for p in map(Path, inputs):
        files += sorted(p.rglob("metrics.csv")) if p.is_dir() else [p]
    return files


def cmd_report(cfg: RunConfig, out: Path) -> int:
    files = [f for f in _metric_files(cfg.inputs or [out]) if f.resolve() != (out / "metrics.csv").resolve()]
    last: dict = {}
    for f in files:
        for r in read_metrics(f):
            key = (r.protocol, r.metric, r.run_id, r.seed)
            if key not in last or r.step >= last[key].step:
                last[key] = r
    table: dict = {}
    for (proto, metric, _, _), r in sorted(last.items()):
        table.setdefault(proto, {}).setdefault(metric, []).append(r.value)
    summary = {proto: {m: {"mean": float(np.mean(v)), "runs": len(v)} for m, v in ms.items()}
               for proto, ms in table.items()}
    _write_json(out / "report.json", {"inputs": [str(f) for f in files], "protocols": summary})
    for proto, ms in summary.items():
        print(proto)
        for m in METRICS:
            if m in ms:
                print(f"  {m:<22} {ms[m]['mean']:.6g}  (runs={ms[m]['runs']})")
    return 0


HANDLERS = {"gen-data": cmd_gen_data, "solve": cmd_solve, "train": cmd_train,
            "reproduce-counterexample": cmd_reproduce, "zk-sweep": cmd_zk_sweep, "report": cmd_report}


def run_command(argv) -> int:
    args = _parser().parse_args(argv)
    try:
        doc = {}
        if args.config:
            try:
                doc = json.loads(Path(args.config).read_text(encoding="utf-8"))
            except (OSError, json.JSONDecodeError) as exc:
                raise ConfigError(f"cannot read config {args.config!r}: {exc}") from exc
            if not isinstance(doc, dict):
                raise ConfigError("config must be a JSON object")
        overrides = {k: getattr(args, k, None) for k in
                     ("seed", "out", "protocol", "a", "rounds", "zk_coefficient", "method", "steps", "inputs")}
        if overrides["inputs"] == []:
            overrides["inputs"] = None
        cfg = RunConfig.build(args.command, doc, overrides)
        out = Path(cfg.out)
        out.mkdir(parents=True, exist_ok=True)
        return HANDLERS[cfg.command](cfg, out)
    except (BudgetExceeded, GenerationError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except (ProofGamesError, ValueError, TypeError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2


def main(argv=None) -> int:
    try:
        return run_command(sys.argv[1:] if argv is None else argv)
    except SystemExit as exc:
        return int(exc.code or 0)


if __name__ == "__main__":
    sys.exit(main())
