"""Metric transformations feeding the tree DP: a k-median baseline, the
clique-star embedding around its centers, and randomized tree embeddings."""

from __future__ import annotations

import itertools
import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .assignment import optimal_assignment
from .instance import MEDIAN, InfeasibleError, Instance, Solution
from .metric import MetricSpace, from_matrix, tree_metric
from .tree_dp import dp_solve

log = logging.getLogger(__name__)

BETA_GRID = 1024  # random radius scale is rounded down to a multiple of 1/BETA_GRID


def _median_cost(D: np.ndarray, w: np.ndarray, cols) -> float:
    return float(w @ D[:, list(cols)].min(axis=1))


def kmedian_baseline(inst: Instance, p: int = 1, max_iter: int | None = None, rel_eps: float = 1e-6) -> tuple:
    """Uncapacitated k-median centers by p-swap local search.

    Ignores fairness and capacities and always uses plain distances. Starts
    from a greedy solution and applies the best improving swap of up to ``p``
    centers while it lowers the cost by more than ``rel_eps`` relative.
    """
    D = inst.dist_cf
    w = np.array([float(x) for x in inst.weights])
    nf, k = len(inst.facilities), inst.k
    if k >= nf:
        return tuple(inst.facilities)

    cur: list = []
    for _ in range(k):
        best_j, best_c = None, math.inf
        for j in range(nf):
            if j in cur:
                continue
            c = _median_cost(D, w, cur + [j])
            if c < best_c:
                best_j, best_c = j, c
        cur.append(best_j)
    cur_cost = _median_cost(D, w, cur)

    if max_iter is None:
        max_iter = 10 * (len(inst.clients) + nf) * k
    for _ in range(max_iter):
        best_swap, best_c = None, cur_cost * (1 - rel_eps)
        outside = [j for j in range(nf) if j not in cur]
        for q in range(1, p + 1):
            for out in itertools.combinations(cur, q):
                keep = [j for j in cur if j not in out]
                for inn in itertools.combinations(outside, q):
                    c = _median_cost(D, w, keep + list(inn))
                    if c < best_c:
                        best_swap, best_c = keep + list(inn), c
        if best_swap is None:
            break
        cur, cur_cost = best_swap, best_c
    return tuple(inst.facilities[j] for j in sorted(cur))


@dataclass
class CliqueStarMetric:
    hubs: tuple
    hub_of: dict  # point -> hub it hangs from (hubs map to themselves)
    pendant: dict  # point -> pendant edge length
    metric: MetricSpace

    def hub_distances(self) -> np.ndarray:
        return self.metric.submatrix(self.hubs, self.hubs)

    def to_data(self) -> dict:
        return self.metric.to_data()


def clique_star_embed(inst: Instance, hubs) -> tuple:
    """Re-embed the instance around ``hubs``: the hubs form a clique with their
    original distances and every other point hangs off its closest hub.

    Returns ``(instance with the new metric, CliqueStarMetric)``.
    """
    hubs = tuple(hubs)
    if not hubs:
        raise ValueError("at least one hub required")
    points = list(dict.fromkeys((*inst.clients, *inst.facilities)))
    m = inst.metric
    Dph = m.submatrix(points, hubs)
    nearest = Dph.argmin(axis=1)
    hset = {h: i for i, h in enumerate(hubs)}
    hub_idx = np.array([hset.get(p, nearest[i]) for i, p in enumerate(points)])
    pend = np.where([p in hset for p in points], 0.0, Dph[np.arange(len(points)), hub_idx])
    H = m.submatrix(hubs, hubs)
    Dp = pend[:, None] + H[np.ix_(hub_idx, hub_idx)] + pend[None, :]
    np.fill_diagonal(Dp, 0.0)
    metric = from_matrix(points, Dp)
    csm = CliqueStarMetric(hubs, {p: hubs[hub_idx[i]] for i, p in enumerate(points)},
                           {p: float(pend[i]) for i, p in enumerate(points)}, metric)
    return inst.with_metric(metric), csm


@dataclass
class EmbeddedTree:
    metric: MetricSpace  # tree variant; leaves include every embedded point
    points: tuple
    beta: float
    seed: object = None
    levels: int = 0
    meta: dict = field(default_factory=dict)

    def distances(self) -> np.ndarray:
        return self.metric.submatrix(self.points, self.points)


def _draw_beta(rng) -> float:
    # 2^U with U ~ U[0, 1), rounded down to a dyadic grid so tree lengths stay exact
    b = 2.0 ** rng.random()
    return math.floor(b * BETA_GRID) / BETA_GRID


def frt_tree_embed(points, dists, seed=None, prefix="~") -> EmbeddedTree:
    """Random hierarchical decomposition of a finite metric into a dominating tree.

    Level i clusters are balls of radius beta * 2^(i-1) * d_min around points
    taken in a random order; the edge from a level i+1 cluster to a level i
    child has length beta * 2^i * d_min. Every embedded point ends up at a
    leaf (co-located points share a parent via 0-length edges).
    """
    pts = tuple(points)
    D = np.asarray(dists, dtype=float)
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    n = len(pts)
    if n == 1:
        return EmbeddedTree(tree_metric([], pts[0], pts), pts, 1.0, seed)
    nz = D[D > 0]
    if nz.size == 0:
        root = f"{prefix}root"
        edges = [(root, p, 0.0) for p in pts]
        return EmbeddedTree(tree_metric(edges, root, [root, *pts]), pts, 1.0, seed)
    dmin = float(nz.min())
    diam = float(D.max()) / dmin
    top = max(0, math.ceil(math.log2(diam)) - 1)
    beta = _draw_beta(rng)
    perm = rng.permutation(n)
    rank = np.empty(n, dtype=np.int64)
    rank[perm] = np.arange(n)

    # cluster label per point, refined level by level
    labels = [()] * n
    edges = []
    names = {(): f"{prefix}root"}
    for lvl in range(top, -1, -1):
        r = beta * 2.0 ** (lvl - 1) * dmin
        w = beta * 2.0 ** lvl * dmin
        new = []
        for i in range(n):
            within = np.flatnonzero(D[:, i] <= r)
            c = int(within[np.argmin(rank[within])])
            new.append(labels[i] + (c,))
        for lab in sorted(set(new)):
            names[lab] = f"{prefix}{lvl}:{'.'.join(map(str, lab))}"
            edges.append((names[lab[:-1]], names[lab], w))
        labels = new

    # leaves: singletons take the point id, co-located groups get 0-length edges
    by_label: dict = {}
    for i, lab in enumerate(labels):
        by_label.setdefault(lab, []).append(i)
    rename = {}
    for lab, members in by_label.items():
        if len(members) == 1:
            rename[names[lab]] = pts[members[0]]
        else:
            for i in members:
                edges.append((names[lab], pts[i], 0.0))
    edges = [(rename.get(a, a), rename.get(b, b), w) for a, b, w in edges]
    metric = tree_metric(edges, names[()])
    return EmbeddedTree(metric, pts, beta, seed, top + 1)


def clique_star_to_tree(inst_cs: Instance, csm: CliqueStarMetric, seed=None) -> Instance:
    """Replace the hub clique by a random dominating tree and re-hang every
    pendant point from its hub's leaf."""
    et = frt_tree_embed(csm.hubs, csm.hub_distances(), seed)
    hubset = set(csm.hubs)
    edges = list(et.metric.edges)
    for p, h in csm.hub_of.items():
        if p not in hubset:
            edges.append((h, p, csm.pendant[p]))
    metric = tree_metric(edges, et.metric.root)
    out = inst_cs.with_metric(metric)
    return out


def full_tree_embed(inst: Instance, seed=None) -> Instance:
    """Tree-embed all clients and facilities directly (comparison mode)."""
    points = list(dict.fromkeys((*inst.clients, *inst.facilities)))
    et = frt_tree_embed(points, inst.metric.submatrix(points, points), seed)
    return inst.with_metric(et.metric)


def poly_approx_solve(inst: Instance, trials: int = 32, p: int = 1, seed: int = 0,
                      mode: str = "clique-star", exact_k: bool = True) -> Solution:
    """Polynomial-time approximation: embed into a tree, solve exactly there,
    and pay for the opened centers under the original metric.

    Each of ``trials`` independent tree embeddings is solved; the cheapest
    result under the original distances is returned.
    """
    if mode == "clique-star":
        hubs = kmedian_baseline(inst, p)
        inst_cs, csm = clique_star_embed(inst, hubs)
    elif mode == "full":
        hubs = ()
    else:
        raise ValueError(f"unknown mode {mode!r}")
    median_inst = inst.with_objective(MEDIAN)
    best = None
    costs = []
    seen: dict = {}
    for r in range(trials):
        rng = np.random.default_rng([seed, r])
        if mode == "clique-star":
            tinst = clique_star_to_tree(median_inst.with_metric(inst_cs.metric), csm, rng)
        else:
            tinst = full_tree_embed(median_inst, rng)
        # InfeasibleError here is final: feasibility does not depend on the metric
        opened = dp_solve(tinst, exact_k=exact_k, reassign=False).centers
        if opened not in seen:
            seen[opened] = optimal_assignment(inst, opened)
        sol = seen[opened]
        costs.append(sol.cost)
        if best is None or sol.cost < best.cost:
            best, best_trial = sol, r
    out = Solution(best.centers, dict(best.mu), best.cost, dict(best.meta))
    out.meta.update({"trials": trials, "best_trial": best_trial, "trial_costs": costs,
                     "baseline": hubs, "mode": mode})
    return out
