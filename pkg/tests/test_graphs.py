import itertools
import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from proofgames.errors import DomainError
from proofgames.graphs import (GraphDatasetConfig, GraphPair, _csr, adjacency_from_edges, bucket_counts,
                               generate_graph_pair_dataset, is_isomorphic, read_dataset_jsonl, wl_round_of,
                               write_dataset_jsonl)
from proofgames.kernels import backends

from oracles import brute_force_isomorphic

K3 = adjacency_from_edges(3, [(0, 1), (1, 2), (0, 2)])
P3 = adjacency_from_edges(3, [(0, 1), (1, 2)])
C6 = adjacency_from_edges(6, [(i, (i + 1) % 6) for i in range(6)])
TWO_TRIANGLES = adjacency_from_edges(6, [(0, 1), (1, 2), (0, 2), (3, 4), (4, 5), (3, 5)])


@st.composite
def graphs(draw, max_n=6):
    n = draw(st.integers(1, max_n))
    pairs = list(itertools.combinations(range(n), 2))
    mask = draw(st.lists(st.booleans(), min_size=len(pairs), max_size=len(pairs)))
    return adjacency_from_edges(n, [e for e, keep in zip(pairs, mask) if keep])


def test_k3_vs_p3_round_one():
    assert wl_round_of(K3, P3) == 1


def test_c6_vs_two_triangles():
    assert not brute_force_isomorphic(C6, TWO_TRIANGLES)
    assert not is_isomorphic(C6, TWO_TRIANGLES)
    assert wl_round_of(C6, TWO_TRIANGLES) is None


def test_vertex_count_mismatch_is_round_one():
    assert wl_round_of(K3, C6) == 1


def test_isomorphic_pair_rejects_round():
    with pytest.raises(DomainError):
        GraphPair(K3, K3, 1, 2)


@settings(max_examples=60, deadline=None)
@given(g=graphs(), seed=st.integers(0, 10**6))
def test_permuted_copy_never_distinguished(g, seed):
    perm = np.random.default_rng(seed).permutation(len(g))
    edges = [(int(perm[u]), int(perm[v])) for u in range(len(g)) for v in g[u] if u < v]
    h = adjacency_from_edges(len(g), edges)
    assert wl_round_of(g, h) is None
    assert is_isomorphic(g, h)


@settings(max_examples=60, deadline=None)
@given(a=graphs(), b=graphs())
def test_isomorphism_agrees_with_permutation_oracle(a, b):
    assert is_isomorphic(a, b) == brute_force_isomorphic(a, b)
    if wl_round_of(a, b) is not None:
        assert not brute_force_isomorphic(a, b)


@settings(max_examples=60, deadline=None)
@given(a=graphs(), b=graphs(), cap=st.integers(1, 8))
def test_backends_agree_on_wl(a, b, cap):
    args = (*_csr(a), *_csr(b), cap)
    results = {name: mod.wl_distinguishing_round(*args) for name, mod in backends().items()}
    assert len(set(results.values())) == 1, results


def test_bucket_counts_default_rounding():
    c = bucket_counts(GraphDatasetConfig(total_count=1000))
    assert (c.non_isomorphic, c.wl1, c.wl2, c.train) == (500, 50, 100, 800)
    assert c.wl1 + c.wl2 + c.wl_later == c.non_isomorphic
    assert c.shuffled + c.fresh + c.non_isomorphic == 1000


def test_config_validation():
    with pytest.raises(DomainError):
        GraphDatasetConfig(alpha_bot=1.5)
    with pytest.raises(DomainError):
        GraphDatasetConfig(min_vertices=9, max_vertices=8)
    with pytest.raises(DomainError):
        GraphDatasetConfig.from_dict({"nope": 1})


def test_small_dataset_labels_and_roundtrip(tmp_path):
    cfg = GraphDatasetConfig(total_count=60, seed=3)
    ds = generate_graph_pair_dataset(cfg)
    counts = bucket_counts(cfg)
    assert len(ds) == 60
    assert sum(p.label == 0 for p in ds.pairs) == counts.non_isomorphic
    assert sum(s == "train" for s in ds.splits) == counts.train
    for p in ds.pairs:
        assert (p.label == 1) == is_isomorphic(p.left, p.right)
        if p.label == 1:
            assert wl_round_of(p.left, p.right) is None
        elif p.wl_round is not None:
            assert wl_round_of(p.left, p.right) == p.wl_round
    path = tmp_path / "d.jsonl"
    write_dataset_jsonl(ds, path)
    back = read_dataset_jsonl(path)
    assert [p for p, _ in back] == list(ds.pairs)
    assert [s for _, s in back] == list(ds.splits)
    assert all(json.loads(line)["split"] in ("train", "test") for line in path.read_text().splitlines())


def test_generation_is_seeded():
    cfg = GraphDatasetConfig(total_count=40, seed=11)
    assert generate_graph_pair_dataset(cfg).pairs == generate_graph_pair_dataset(cfg).pairs
