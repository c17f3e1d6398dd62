"""Capacity-respecting assignment of weighted clients to a fixed center set."""

from __future__ import annotations

import heapq
import math
from fractions import Fraction
from typing import Iterable

import numpy as np

from .instance import MEANS, InfeasibleError, Instance, Solution

MAX_DENOMINATOR = 10**6


class MinCostFlow:
    """Successive shortest paths with Johnson potentials.

    Edge costs must be nonnegative on construction, so zero initial
    potentials are valid and every Dijkstra pass sees nonnegative reduced costs.
    """

    def __init__(self, n: int):
        self.n = n
        self.adj: list = [[] for _ in range(n)]
        self.to: list = []
        self.cap: list = []
        self.cost: list = []

    def add_edge(self, u: int, v: int, cap: int, cost: float) -> int:
        if cost < 0:
            raise ValueError("negative edge cost")
        e = len(self.to)
        self.to += [v, u]
        self.cap += [cap, 0]
        self.cost += [cost, -cost]
        self.adj[u].append(e)
        self.adj[v].append(e + 1)
        return e

    def flow_on(self, e: int) -> int:
        return self.cap[e ^ 1]

    def run(self, s: int, t: int, maxflow: int) -> tuple:
        """Push up to ``maxflow`` units from s to t; returns (flow, cost)."""
        n = self.n
        pot = [0.0] * n
        flow, total = 0, 0.0
        to, cap, cost, adj = self.to, self.cap, self.cost, self.adj
        while flow < maxflow:
            dist = [math.inf] * n
            prev = [-1] * n
            dist[s] = 0.0
            heap = [(0.0, s)]
            while heap:
                du, u = heapq.heappop(heap)
                if du > dist[u]:
                    continue
                for e in adj[u]:
                    if cap[e] <= 0:
                        continue
                    v = to[e]
                    # reduced costs are >= 0 up to rounding
                    nd = du + max(0.0, cost[e] + pot[u] - pot[v])
                    if nd < dist[v]:
                        dist[v] = nd
                        prev[v] = e
                        heapq.heappush(heap, (nd, v))
            if dist[t] == math.inf:
                break
            for v in range(n):
                if dist[v] < math.inf:
                    pot[v] += dist[v]
            push = maxflow - flow
            v = t
            while v != s:
                e = prev[v]
                push = min(push, cap[e])
                v = to[e ^ 1]
            v = t
            while v != s:
                e = prev[v]
                cap[e] -= push
                cap[e ^ 1] += push
                total += push * cost[e]
                v = to[e ^ 1]
            flow += push
        return flow, total


def scale_weights(weights: Iterable) -> tuple:
    """Integer supplies and the common scale so that supply/scale ~ weight.

    Exact when the common denominator is at most MAX_DENOMINATOR; otherwise
    weights are rounded to multiples of 1/MAX_DENOMINATOR.
    """
    ws = [Fraction(w) for w in weights]
    scale = 1
    for w in ws:
        scale = scale * w.denominator // math.gcd(scale, w.denominator)
        if scale > MAX_DENOMINATOR:
            scale = MAX_DENOMINATOR
            return [round(w * scale) for w in ws], scale, False
    return [int(w * scale) for w in ws], scale, True


def optimal_assignment(inst: Instance, centers: Iterable, cost_matrix: np.ndarray | None = None) -> Solution:
    """Minimum-cost assignment of every client's weight to ``centers``.

    Raises InfeasibleError(reason="capacity") when the centers cannot absorb
    the total client weight. ``cost_matrix`` (clients x centers) overrides the
    per-unit costs derived from the instance metric and objective.
    """
    centers = tuple(dict.fromkeys(centers))
    supplies, scale, exact = scale_weights(inst.weights)
    caps = [inst.capacities[f] * scale for f in centers]
    demand = sum(supplies)
    if sum(caps) < demand:
        raise InfeasibleError(
            f"total capacity {sum(caps) / scale} below client weight {inst.total_weight}")

    if cost_matrix is None:
        cols = [inst.facility_index[f] for f in centers]
        cost_matrix = inst.cost_cf[:, cols]
    nc, nf = len(inst.clients), len(centers)
    src, snk = nc + nf, nc + nf + 1
    g = MinCostFlow(nc + nf + 2)
    for i, q in enumerate(supplies):
        if q > 0:
            g.add_edge(src, i, q, 0.0)
    arcs = {}
    for i in range(nc):
        if supplies[i] == 0:
            continue
        for j in range(nf):
            arcs[i, j] = g.add_edge(i, nc + j, supplies[i], float(cost_matrix[i, j]))
    for j, cj in enumerate(caps):
        if cj > 0:
            g.add_edge(nc + j, snk, cj, 0.0)
    flow, _ = g.run(src, snk, demand)
    if flow < demand:
        raise InfeasibleError("capacity-respecting assignment does not exist")

    mu = {}
    total = 0.0
    for (i, j), e in arcs.items():
        x = g.flow_on(e)
        if x:
            q = Fraction(x, scale)
            mu[(inst.clients[i], centers[j])] = q
            total += x * float(cost_matrix[i, j])
    meta = {"weight_scale": scale, "weights_exact": exact}
    return Solution(centers, mu, total / scale, meta)


def nearest_assignment_cost(inst: Instance, centers: Iterable) -> float:
    """Uncapacitated cost: every client goes to its closest center."""
    cols = [inst.facility_index[f] for f in centers]
    if not cols:
        return math.inf
    C = inst.cost_cf[:, cols]
    w = np.array([float(x) for x in inst.weights])
    return float(w @ C.min(axis=1))


def per_unit_costs(inst: Instance, dist: np.ndarray) -> np.ndarray:
    return dist * dist if inst.objective == MEANS else dist
