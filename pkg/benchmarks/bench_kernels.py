"""Compare the compiled and pure-Python kernels on WL refinement and Stackelberg response layers.

Usage: python3 benchmarks/bench_kernels.py [--repeat N] [--seed S]
"""
import argparse
import timeit

import numpy as np

from proofgames.graphs import GraphDatasetConfig, _csr, generate_graph_pair_dataset
from proofgames.kernels import backends


def wl_workload(seed: int):
    ds = generate_graph_pair_dataset(GraphDatasetConfig(total_count=200, seed=seed))
    return [(*_csr(p.left), *_csr(p.right)) for p in ds.pairs]


def response_workload(seed: int, shape=(400, 400)):
    rng = np.random.default_rng(seed)
    follower = rng.integers(0, 20, shape).astype(float) / 20
    leader = rng.normal(size=shape)
    allowed = (rng.random(shape) < 0.9).astype(np.uint8)
    return follower, leader, allowed


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    pairs = wl_workload(args.seed)
    layer = response_workload(args.seed)
    found = backends()
    if "cython" not in found:
        print("compiled kernels not built; timing the pure-Python backend only")

    print(f"{'kernel':<16} {'backend':<8} {'best of ' + str(args.repeat):>12}  speedup")
    for kernel, run in (
        ("wl (200 pairs)", lambda mod: [mod.wl_distinguishing_round(*p, 64) for p in pairs]),
        ("response_layer", lambda mod: mod.response_layer(*layer, 0.05, False, True)),
    ):
        results = {name: run(mod) for name, mod in found.items()}
        baseline = results["python"]
        for name, res in results.items():
            same = (res == baseline) if kernel.startswith("wl") else all(np.array_equal(a, b)
                                                                          for a, b in zip(res, baseline))
            if not same:
                raise SystemExit(f"{name} disagrees with the pure-Python kernel on {kernel}")
        times = {name: min(timeit.repeat(lambda m=mod: run(m), number=1, repeat=args.repeat))
                 for name, mod in found.items()}
        for name, t in times.items():
            print(f"{kernel:<16} {name:<8} {t * 1e3:>10.2f}ms  {times['python'] / t:6.1f}x")


if __name__ == "__main__":
    main()
