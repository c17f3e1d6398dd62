"""Brute-force exact solver and random instance generator."""

from __future__ import annotations

import math

import numpy as np

from .assignment import nearest_assignment_cost, optimal_assignment
from .instance import (MEDIAN, InfeasibleError, Instance, Solution, WorkCapExceeded,
                       greedy_feasible, validate_instance)
from .metric import close_graph, from_matrix, tree_metric

DEFAULT_WORK_CAP = 2_000_000


def _subset_count(nf: int, k: int, at_most: bool) -> int:
    if at_most:
        return sum(math.comb(nf, j) for j in range(1, k + 1))
    return math.comb(nf, k)


def feasible_center_sets(inst: Instance, at_most: bool = False, work_cap: int = DEFAULT_WORK_CAP):
    """Yield every fair-range feasible center set (as facility index tuples).

    Depth-first over facilities in instance order, including before
    excluding, so sets of a fixed size come out lexicographically. Branches
    that would break an upper bound, or can no longer reach a lower bound or
    the required size, are cut. Raises WorkCapExceeded once more than
    ``work_cap`` search nodes have been visited.
    """
    M = inst.membership
    nf, k, t = len(inst.facilities), inst.k, inst.t
    alpha = np.array(inst.alpha, dtype=np.int64)
    beta = np.array(inst.beta, dtype=np.int64)
    # suffix[j, i] = facilities of group i at positions >= j
    suffix = np.zeros((nf + 1, t), dtype=np.int64)
    for j in range(nf - 1, -1, -1):
        suffix[j] = suffix[j + 1] + M[j]
    counts = np.zeros(t, dtype=np.int64)
    chosen: list = []
    visited = 0

    def rec(j):
        nonlocal visited, counts
        visited += 1
        if visited > work_cap:
            raise WorkCapExceeded(f"search exceeded the work cap of {work_cap} nodes")
        size = len(chosen)
        need = np.maximum(alpha - counts, 0)
        if np.any(need > suffix[j]) or (t and need.max(initial=0) > k - size):
            return
        if size == k or j == nf:
            if np.all(need == 0) and (size == k or (at_most and size > 0)):
                yield tuple(chosen)
            return
        if not at_most and size + (nf - j) < k:
            return
        if np.all(counts + M[j] <= beta):
            chosen.append(j)
            counts += M[j]
            yield from rec(j + 1)
            counts -= M[j]
            chosen.pop()
        yield from rec(j + 1)

    yield from rec(0)


def brute_force_solve(inst: Instance, at_most: bool = False, work_cap: int = DEFAULT_WORK_CAP) -> Solution:
    """Exact optimum over every fair-range feasible set of exactly k centers
    (or 1..k with ``at_most``).

    Ties go to the first set in the search order of feasible_center_sets.
    Exceeding ``work_cap`` search nodes raises WorkCapExceeded; there is no
    partial answer.
    """
    best: Solution | None = None
    n_fair = 0
    W = inst.total_weight
    F = inst.facilities
    for idx in feasible_center_sets(inst, at_most, work_cap):
        n_fair += 1
        combo = [F[j] for j in idx]
        if sum(inst.capacities[f] for f in combo) < W:
            continue
        if best is not None and nearest_assignment_cost(inst, combo) >= best.cost:
            continue
        try:
            sol = optimal_assignment(inst, combo)
        except InfeasibleError:
            continue
        if best is None or sol.cost < best.cost:
            best = sol
    if best is None:
        reason = "fair-range" if n_fair == 0 else "capacity"
        raise InfeasibleError(f"no center set satisfies the {reason} constraints", reason=reason)
    best.meta["feasible_sets"] = n_fair
    return best


def _random_tree_edges(rng, ids, wmax):
    order = list(rng.permutation(len(ids)))
    edges = []
    for pos in range(1, len(order)):
        parent = order[int(rng.integers(0, pos))]
        edges.append((ids[parent], ids[order[pos]], int(rng.integers(1, wmax + 1))))
    return ids[order[0]], edges


def random_metric(rng, ids, kind="graph", wmax=10, extra_edges=None):
    """Random integer-weight metric over ``ids``.

    ``tree`` gives a random rooted tree; ``graph`` a random connected graph
    closed under shortest paths; ``matrix`` the same closure stored densely.
    """
    ids = list(ids)
    root, edges = _random_tree_edges(rng, ids, wmax)
    if kind == "tree":
        return tree_metric(edges, root, ids)
    n = len(ids)
    if extra_edges is None:
        extra_edges = n
    for _ in range(extra_edges):
        a, b = rng.choice(n, size=2, replace=False)
        edges.append((ids[a], ids[b], int(rng.integers(1, wmax + 1))))
    g = close_graph(edges, ids)
    if kind == "graph":
        return g
    if kind == "matrix":
        return from_matrix(g.ids, g.matrix)
    raise ValueError(f"unknown metric kind {kind!r}")


def gen_random_instance(n: int, k: int, t: int, cap_range=(1, 4), metric_kind="graph", seed=0,
                        objective=MEDIAN, n_facilities=None, wmax=10, max_tries=200) -> Instance:
    """Reproducible random instance over ``n`` points.

    Group bounds are drawn around a hidden center set S0 whose capacity covers
    every client, so each returned instance is feasible. Draws where the
    greedy heuristic fails are rejected with probability 1/2, which keeps
    greedy success above half without making every instance greedy-easy.
    """
    if n < k + 1:
        raise ValueError("need n >= k + 1 points")
    rng = np.random.default_rng(seed)
    ids = [f"p{i}" for i in range(n)]
    lo, hi = cap_range
    # at least n - k*hi facilities, or no k of them could cover the clients
    nf_min = max(k, n - k * hi)
    if nf_min > n - 1:
        raise ValueError("capacities too small for any client set; raise cap_range or k")
    nf = n_facilities if n_facilities is not None else int(rng.integers(nf_min, max(nf_min, n // 2) + 1))
    nf = max(nf_min, min(nf, n - 1))
    perm = rng.permutation(n)
    facilities = [ids[i] for i in sorted(perm[:nf])]
    clients = [ids[i] for i in sorted(perm[nf:])]
    metric = random_metric(rng, ids, metric_kind, wmax)

    for _ in range(max_tries):
        caps = {f: int(rng.integers(lo, hi + 1)) for f in facilities}
        groups = []
        for _ in range(t):
            g = [f for f in facilities if rng.random() < 0.5]
            if not g:
                g = [facilities[int(rng.integers(0, nf))]]
            groups.append(g)
        s0 = [facilities[i] for i in rng.choice(nf, size=k, replace=False)]
        if sum(caps[f] for f in s0) < len(clients):
            continue
        counts = [len(set(s0) & set(g)) for g in groups]
        alpha = [int(rng.integers(0, c + 1)) for c in counts]
        beta = [int(rng.integers(c, k + 1)) for c in counts]
        inst = Instance.build(k, clients, facilities, groups, alpha, beta, caps, metric, objective,
                              name=f"random-n{n}-k{k}-t{t}-s{seed}")
        if greedy_feasible(inst) is None and rng.random() < 0.5:
            continue
        problems = validate_instance(inst)
        if problems:
            raise AssertionError(f"generator produced an invalid instance: {problems}")
        return inst
    raise ValueError(f"no feasible draw after {max_tries} tries; widen cap_range or bounds")
