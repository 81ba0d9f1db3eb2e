"""Independent reference implementations used as test oracles.

Nothing here imports the package's solvers: each function recomputes its quantity
from first principles so that tests compare two routes.
"""
import itertools
import math


def brute_force_isomorphic(left, right):
    """Try every vertex bijection; adjacency given as sequences of neighbour lists."""
    n = len(left)
    if n != len(right):
        return False
    el = {frozenset((u, v)) for u in range(n) for v in left[u]}
    er = {frozenset((u, v)) for u in range(n) for v in right[u]}
    if len(el) != len(er):
        return False
    for perm in itertools.permutations(range(n)):
        if all(frozenset((perm[u], perm[v])) in er for u, v in (tuple(e) for e in el)):
            return True
    return False


def one_round_accept(prior, labels, send, accept):
    """Acceptance probability per instance for prover message law ``send(x) -> {m: p}``
    and verifier law ``accept(x, m) -> prob``."""
    return {x: sum(p * accept(x, m) for m, p in send(x).items()) for x in prior}


def nip_losses(prior, labels, acc):
    """(prover, verifier) nip losses from per-instance acceptance probabilities."""
    pos = [x for x in prior if labels[x] == 1]
    neg = [x for x in prior if labels[x] == 0]
    wc1 = max(1.0 - acc[x] for x in pos)
    wc0 = max(acc[x] for x in neg)
    return wc1 - wc0, wc1 + wc0


def tv(p, q):
    keys = set(p) | set(q)
    return 0.5 * sum(abs(p.get(k, 0.0) - q.get(k, 0.0)) for k in keys)


def simplex_count(k, r):
    return math.comb(r + k - 1, k - 1)


def quadratic_lola_oracle(p0, v0, rate_p, rate_v, rate_next):
    """One LOLA step on L^v = v^2 + v p, L^p = (p + v)^2 by symbolic differentiation."""
    import sympy as sp

    p, v = sp.symbols("p v")
    lv = v**2 + v * p
    lp = (p + v) ** 2
    subs = {p: p0, v: v0}
    gp = sp.diff(lp, p)
    gv = sp.diff(lv, v)
    shaping = sp.diff(lv, p) * sp.diff(lp, p, v)
    p1 = p - rate_p * gp
    v1 = v - rate_v * gv - rate_next * shaping
    return float(p1.subs(subs)), float(v1.subs(subs))
