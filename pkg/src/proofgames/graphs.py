"""Graph-isomorphism pairs, 1-WL calibration and the bucketed Erdős–Rényi dataset."""
from __future__ import annotations

import dataclasses
import itertools
import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Optional, Sequence

import networkx as nx
import numpy as np

from . import kernels
from .errors import DomainError, GenerationError

Adjacency = tuple  # tuple of sorted neighbour tuples, vertices 0..n-1

MAX_ATTEMPTS = 10**5
_FLOOR_EPS = 1e-9


def _check_adjacency(adj: Sequence[Sequence[int]]) -> Adjacency:
    n = len(adj)
    out = []
    for v, nbrs in enumerate(adj):
        row = tuple(sorted(int(u) for u in nbrs))
        if len(set(row)) != len(row):
            raise DomainError(f"repeated neighbour at vertex {v}")
        for u in row:
            if u == v:
                raise DomainError(f"self-loop at vertex {v}")
            if not 0 <= u < n:
                raise DomainError(f"neighbour {u} of vertex {v} out of range")
        out.append(row)
    for v, row in enumerate(out):
        for u in row:
            if v not in out[u]:
                raise DomainError(f"adjacency not symmetric on edge ({v}, {u})")
    return tuple(out)


def adjacency_from_edges(n: int, edges: Iterable[Sequence[int]]) -> Adjacency:
    rows: list[set] = [set() for _ in range(n)]
    for u, v in edges:
        rows[u].add(v)
        rows[v].add(u)
    return _check_adjacency([sorted(r) for r in rows])


def edges_of(adj: Adjacency) -> list[list[int]]:
    return [[v, u] for v, row in enumerate(adj) for u in row if v < u]


def _csr(adj: Adjacency) -> tuple[np.ndarray, np.ndarray]:
    indptr = np.zeros(len(adj) + 1, dtype=np.int64)
    indptr[1:] = np.cumsum([len(r) for r in adj])
    indices = np.fromiter(itertools.chain.from_iterable(adj), dtype=np.int64, count=int(indptr[-1]))
    return indptr, indices


@dataclass(frozen=True)
class GraphPair:
    """Two undirected graphs; ``label`` 1 means isomorphic."""

    left: Adjacency
    right: Adjacency
    label: int
    wl_round: Optional[int] = None

    def __post_init__(self):
        object.__setattr__(self, "left", _check_adjacency(self.left))
        object.__setattr__(self, "right", _check_adjacency(self.right))
        if self.label not in (0, 1):
            raise DomainError("label must be 0 or 1")
        if self.label == 1 and self.wl_round is not None:
            raise DomainError("isomorphic pairs carry no distinguishing round")
        if self.wl_round is not None and self.wl_round < 1:
            raise DomainError("wl_round must be a positive integer")

    def to_json(self, split: Optional[str] = None) -> dict:
        return {
            "left": {"n": len(self.left), "edges": edges_of(self.left)},
            "right": {"n": len(self.right), "edges": edges_of(self.right)},
            "label": self.label,
            "wl_round": self.wl_round,
            "split": split,
        }

    @classmethod
    def from_json(cls, obj: dict) -> "GraphPair":
        return cls(
            adjacency_from_edges(obj["left"]["n"], obj["left"]["edges"]),
            adjacency_from_edges(obj["right"]["n"], obj["right"]["edges"]),
            int(obj["label"]),
            obj.get("wl_round"),
        )


def wl_round_of(left: Adjacency, right: Adjacency, max_rounds: Optional[int] = None) -> Optional[int]:
    """First 1-WL round separating the colour histograms, ``None`` if never.

    Both graphs are refined together from one uniform colour.  Without ``max_rounds``
    refinement runs until the joint partition is stable.
    """
    if max_rounds is None:
        max_rounds = len(left) + len(right) + 1
    if max_rounds < 1:
        raise DomainError("max_rounds must be at least 1")
    r = kernels.wl_distinguishing_round(*_csr(left), *_csr(right), int(max_rounds))
    return int(r) or None


def wl_distinguishing_round(pair: GraphPair, max_rounds: Optional[int] = None) -> Optional[int]:
    return wl_round_of(pair.left, pair.right, max_rounds)


def is_isomorphic(left: Adjacency, right: Adjacency) -> bool:
    if len(left) != len(right):
        return False
    return nx.is_isomorphic(_to_nx(left), _to_nx(right))


def _to_nx(adj: Adjacency) -> nx.Graph:
    g = nx.Graph()
    g.add_nodes_from(range(len(adj)))
    g.add_edges_from(edges_of(adj))
    return g


# -- dataset generation ---------------------------------------------------------------


@dataclass(frozen=True)
class GraphDatasetConfig:
    total_count: int = 10000
    min_vertices: int = 7
    max_vertices: int = 11
    min_edge_prob: float = 0.2
    max_edge_prob: float = 0.8
    edge_prob_steps: int = 4
    alpha_bot: float = 0.5
    alpha1_bot: float = 0.1
    alpha2_bot: float = 0.2
    alpha_bot_to_top: float = 0.5
    train_fraction: float = 0.8
    seed: int = 0
    max_attempts: int = MAX_ATTEMPTS

    def __post_init__(self):
        if self.total_count < 1:
            raise DomainError("total_count must be at least 1")
        if not 2 <= self.min_vertices <= self.max_vertices <= 32:
            raise DomainError("vertex range must lie within [2, 32]")
        for name in ("alpha_bot", "alpha1_bot", "alpha2_bot", "alpha_bot_to_top", "train_fraction",
                     "min_edge_prob", "max_edge_prob"):
            value = getattr(self, name)
            if not 0.0 <= value <= 1.0:
                raise DomainError(f"{name} must lie in [0, 1], got {value!r}")
        if self.min_edge_prob > self.max_edge_prob:
            raise DomainError("edge-probability range is reversed")
        if self.alpha1_bot + self.alpha2_bot > 1.0 + 1e-12:
            raise DomainError("alpha1_bot + alpha2_bot exceeds 1")
        if self.edge_prob_steps < 1 or self.max_attempts < 1:
            raise DomainError("edge_prob_steps and max_attempts must be positive")

    def cells(self) -> list[tuple[int, float]]:
        """(vertex count, edge probability) grid in lexicographic order."""
        sizes = range(self.min_vertices, self.max_vertices + 1)
        if self.edge_prob_steps == 1:
            probs = [self.min_edge_prob]
        else:
            probs = np.linspace(self.min_edge_prob, self.max_edge_prob, self.edge_prob_steps).tolist()
        return [(n, round(p, 12)) for n, p in itertools.product(sizes, probs)]

    def to_json(self) -> str:
        return json.dumps(dataclasses.asdict(self), indent=2, sort_keys=True)

    @classmethod
    def from_dict(cls, obj: dict) -> "GraphDatasetConfig":
        fields = {f.name for f in dataclasses.fields(cls)}
        unknown = set(obj) - fields
        if unknown:
            raise DomainError(f"unknown dataset config fields: {sorted(unknown)}")
        return cls(**obj)


@dataclass(frozen=True)
class BucketCounts:
    non_isomorphic: int
    wl1: int
    wl2: int
    wl_later: int
    shuffled: int
    fresh: int
    train: int


def bucket_counts(config: GraphDatasetConfig) -> BucketCounts:
    """Rounded bucket targets: floors everywhere, leftovers to the later-round bucket."""
    k = config.total_count
    non = math.floor(k * config.alpha_bot + _FLOOR_EPS)
    wl1 = math.floor(non * config.alpha1_bot + _FLOOR_EPS)
    wl2 = math.floor(non * config.alpha2_bot + _FLOOR_EPS)
    shuffled = math.floor(k * (1.0 - config.alpha_bot) * config.alpha_bot_to_top + _FLOOR_EPS)
    shuffled = min(shuffled, k - non)
    train = math.floor(k * config.train_fraction + _FLOOR_EPS)
    return BucketCounts(non, wl1, wl2, non - wl1 - wl2, shuffled, k - non - shuffled, train)


@dataclass(frozen=True)
class GraphDataset:
    pairs: tuple
    splits: tuple
    config: GraphDatasetConfig

    def __len__(self) -> int:
        return len(self.pairs)

    def subset(self, split: str) -> list[GraphPair]:
        return [p for p, s in zip(self.pairs, self.splits) if s == split]


def _er_graph(n: int, p: float, rng: np.random.Generator) -> Adjacency:
    upper = np.triu(rng.random((n, n)) < p, k=1)
    rows = [[] for _ in range(n)]
    for u, v in zip(*np.nonzero(upper)):
        rows[u].append(int(v))
        rows[v].append(int(u))
    return tuple(tuple(sorted(r)) for r in rows)


def _rewire(adj: Adjacency, swaps: int, rng: np.random.Generator) -> Adjacency:
    """Degree-preserving double-edge swaps (fewer if the graph is too rigid)."""
    nbrs = [set(r) for r in adj]
    edges = edges_of(adj)
    done = 0
    for _ in range(100 * swaps):
        if done == swaps or len(edges) < 2:
            break
        i, j = rng.choice(len(edges), size=2, replace=False)
        a, b = edges[i]
        c, d = edges[j]
        if rng.random() < 0.5:
            c, d = d, c
        if len({a, b, c, d}) < 4 or d in nbrs[a] or b in nbrs[c]:
            continue
        nbrs[a].discard(b); nbrs[b].discard(a); nbrs[c].discard(d); nbrs[d].discard(c)
        nbrs[a].add(d); nbrs[d].add(a); nbrs[c].add(b); nbrs[b].add(c)
        edges[i] = sorted((a, d))
        edges[j] = sorted((c, b))
        done += 1
    return tuple(tuple(sorted(r)) for r in nbrs)


def _permute(adj: Adjacency, rng: np.random.Generator) -> Adjacency:
    perm = rng.permutation(len(adj))
    rows: list[list[int]] = [[] for _ in adj]
    for v, row in enumerate(adj):
        rows[perm[v]] = [int(perm[u]) for u in row]
    return tuple(tuple(sorted(r)) for r in rows)


def _sample_non_isomorphic(bucket: str, n: int, p: float, rng: np.random.Generator,
                           max_attempts: int) -> GraphPair:
    for _ in range(max_attempts):
        left = _er_graph(n, p, rng)
        if bucket == "wl1":
            right = _er_graph(n, p, rng)
        else:
            right = _permute(_rewire(left, int(rng.integers(1, 5)), rng), rng)
        r = wl_round_of(left, right)
        if bucket == "wl1":
            hit = r == 1
        elif bucket == "wl2":
            hit = r == 2
        else:
            hit = (r is not None and r > 2) or (r is None and not is_isomorphic(left, right))
        if hit:
            return GraphPair(left, right, 0, r)
    raise GenerationError(
        f"bucket {bucket!r} not hit within {max_attempts} attempts at n={n}, p={p}"
    )


def generate_graph_pair_dataset(config: GraphDatasetConfig) -> GraphDataset:
    """Bucketed dataset: non-isomorphic pairs by WL round, then shuffled and fresh isomorphic pairs."""
    counts = bucket_counts(config)
    if counts.shuffled > 0 and counts.non_isomorphic == 0:
        raise GenerationError("bucket 'shuffled' needs non-isomorphic pairs to shuffle, but there are none")
    rng = np.random.default_rng(config.seed)
    cells = config.cells()
    pairs: list[GraphPair] = []
    for bucket, target in (("wl1", counts.wl1), ("wl2", counts.wl2), ("wl_later", counts.wl_later)):
        for j in range(target):
            n, p = cells[j % len(cells)]
            pairs.append(_sample_non_isomorphic(bucket, n, p, rng, config.max_attempts))
    non_iso = list(pairs)
    for _ in range(counts.shuffled):
        source = non_iso[int(rng.integers(len(non_iso)))]
        g = source.left if rng.random() < 0.5 else source.right
        pairs.append(GraphPair(g, _permute(g, rng), 1))
    for j in range(counts.fresh):
        n, p = cells[j % len(cells)]
        g = _er_graph(n, p, rng)
        pairs.append(GraphPair(g, _permute(g, rng), 1))
    order = rng.permutation(len(pairs))
    shuffled = tuple(pairs[i] for i in order)
    splits = tuple("train" if i < counts.train else "test" for i in range(len(shuffled)))
    return GraphDataset(shuffled, splits, config)


def write_dataset_jsonl(dataset: GraphDataset, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for pair, split in zip(dataset.pairs, dataset.splits):
            fh.write(json.dumps(pair.to_json(split), sort_keys=True) + "\n")


def read_dataset_jsonl(path) -> list[tuple[GraphPair, str]]:
    out = []
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        if line.strip():
            obj = json.loads(line)
            out.append((GraphPair.from_json(obj), obj.get("split")))
    return out
