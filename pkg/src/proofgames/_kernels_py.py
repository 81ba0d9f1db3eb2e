"""Pure-Python twins of the compiled kernels (same signatures, same results)."""
from __future__ import annotations

import math

import numpy as np


def wl_distinguishing_round(indptr_a, indices_a, indptr_b, indices_b, max_rounds: int) -> int:
    na = len(indptr_a) - 1
    nb = len(indptr_b) - 1
    if na != nb:
        return 1
    n = na + nb
    if n == 0:
        return 0
    adj = [list(indices_a[indptr_a[v]:indptr_a[v + 1]]) for v in range(na)]
    adj += [[na + int(u) for u in indices_b[indptr_b[v]:indptr_b[v + 1]]] for v in range(nb)]
    col = [0] * n
    ncol = 1
    for r in range(1, int(max_rounds) + 1):
        sigs = [(col[v],) + tuple(sorted(col[u] for u in adj[v])) for v in range(n)]
        palette = {s: i for i, s in enumerate(sorted(set(sigs)))}
        new = [palette[s] for s in sigs]
        if sorted(new[:na]) != sorted(new[na:]):
            return r
        if len(palette) == ncol:
            return 0
        col, ncol = new, len(palette)
    return 0


def response_layer(follower, leader, allowed, tol: float, strict: bool, pessimistic: bool,
                   atol: float = 1e-12):
    follower = np.asarray(follower, dtype=float)
    leader = np.asarray(leader, dtype=float)
    allowed = np.asarray(allowed, dtype=bool)
    na, nb = follower.shape
    mask = np.zeros((na, nb), dtype=np.uint8)
    values = np.full(na, math.inf)
    for a in range(na):
        cols = [b for b in range(nb) if allowed[a, b]]
        if not cols:
            continue
        m = min(follower[a, b] for b in cols)
        chosen = []
        for b in cols:
            f = follower[a, b]
            if f == m:
                ok = True
            else:
                gain = f - m
                if math.isnan(gain):
                    ok = False
                elif strict:
                    ok = gain < tol - atol
                else:
                    ok = gain <= tol + atol
            if ok:
                mask[a, b] = 1
                chosen.append(leader[a, b])
        if pessimistic:
            values[a] = math.nan if any(math.isnan(v) for v in chosen) else max(chosen)
        else:
            values[a] = min(chosen)
    return mask, values
