"""Finite metric spaces given as dense matrices, weighted graphs or rooted trees."""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Hashable, Iterable, Sequence

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components

TOL = 1e-9

PointId = Hashable
Edge = tuple  # (u, v, weight)


class MetricError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class MetricSpace:
    """Distances over a fixed list of node ids.

    ``kind`` is one of ``"matrix"``, ``"graph"`` or ``"tree"``. Graph and tree
    variants keep their edge lists (``edges``) so they can be written back out;
    ``root`` is set for trees. All variants expose the closed dense matrix.
    """

    ids: tuple
    matrix: np.ndarray
    kind: str = "matrix"
    edges: tuple = ()
    root: PointId | None = None
    index: dict = field(init=False, repr=False)

    def __post_init__(self):
        object.__setattr__(self, "index", {p: i for i, p in enumerate(self.ids)})
        if len(self.index) != len(self.ids):
            raise MetricError("duplicate point ids in metric")
        if self.matrix.shape != (len(self.ids), len(self.ids)):
            raise MetricError("matrix shape does not match id count")

    def __contains__(self, p) -> bool:
        return p in self.index

    def __len__(self) -> int:
        return len(self.ids)

    def d(self, u, v) -> float:
        return float(self.matrix[self.index[u], self.index[v]])

    def submatrix(self, rows: Sequence, cols: Sequence) -> np.ndarray:
        ri = [self.index[r] for r in rows]
        ci = [self.index[c] for c in cols]
        return self.matrix[np.ix_(ri, ci)]

    def restrict(self, points: Sequence) -> "MetricSpace":
        pts = tuple(points)
        return MetricSpace(pts, self.submatrix(pts, pts).copy())

    @cached_property
    def aspect_ratio(self) -> float:
        return aspect_ratio(self)

    # tree helpers -------------------------------------------------------
    @cached_property
    def tree_children(self) -> dict:
        if self.kind != "tree":
            raise MetricError("tree metric required")
        ch: dict = {p: [] for p in self.ids}
        for parent, child, w in self.edges:
            ch[parent].append((child, w))
        return ch

    def to_data(self) -> dict:
        """Serializable form used by the instance file format."""
        if self.kind == "matrix":
            return {"type": "matrix", "data": {"ids": list(self.ids),
                                               "matrix": self.matrix.tolist()}}
        if self.kind == "graph":
            return {"type": "graph", "data": {"nodes": list(self.ids),
                                              "edges": [list(e) for e in self.edges]}}
        return {"type": "tree", "data": {"root": self.root,
                                         "nodes": list(self.ids),
                                         "edges": [list(e) for e in self.edges]}}


def from_matrix(ids: Iterable, matrix) -> MetricSpace:
    m = np.array(matrix, dtype=float)
    return MetricSpace(tuple(ids), m)


def _node_order(edges, nodes=None) -> list:
    order = list(nodes) if nodes is not None else []
    seen = set(order)
    for u, v, _ in edges:
        for p in (u, v):
            if p not in seen:
                seen.add(p)
                order.append(p)
    return order


def close_graph(edges: Iterable[Edge], nodes: Iterable | None = None) -> MetricSpace:
    """All-pairs shortest paths of an undirected nonnegative-weight graph.

    Raises MetricError naming the components when the graph is disconnected.
    """
    edges = [(u, v, float(w)) for u, v, w in edges]
    ids = _node_order(edges, nodes)
    n = len(ids)
    if n == 0:
        raise MetricError("empty graph")
    idx = {p: i for i, p in enumerate(ids)}
    dist = np.full((n, n), np.inf)
    np.fill_diagonal(dist, 0.0)
    rows, cols = [], []
    for u, v, w in edges:
        if w < 0:
            raise MetricError(f"negative edge weight on ({u}, {v})")
        i, j = idx[u], idx[v]
        if w < dist[i, j]:
            dist[i, j] = dist[j, i] = w
        rows += [i, j]
        cols += [j, i]

    adj = coo_matrix((np.ones(len(rows)), (rows, cols)), shape=(n, n))
    ncomp, labels = connected_components(adj, directed=False)
    if ncomp > 1:
        comps = [[ids[i] for i in range(n) if labels[i] == c] for c in range(ncomp)]
        raise MetricError(f"graph is disconnected; components: {comps}")

    # Floyd-Warshall; zero-weight edges are legal so sparse csgraph routines
    # (which drop explicit zeros) are not used here.
    for k in range(n):
        np.minimum(dist, dist[:, k, None] + dist[None, k, :], out=dist)
    return MetricSpace(tuple(ids), dist, kind="graph", edges=tuple(edges))


def tree_metric(edges: Iterable[Edge], root, nodes: Iterable | None = None) -> MetricSpace:
    """Metric of a rooted weighted tree given as ``(parent, child, weight)`` triples."""
    edges = [(p, c, float(w)) for p, c, w in edges]
    ids = _node_order(edges, [root] + [x for x in (nodes or []) if x != root])
    n = len(ids)
    idx = {p: i for i, p in enumerate(ids)}
    parent: dict = {}
    children: dict = {p: [] for p in ids}
    for p, c, w in edges:
        if w < 0:
            raise MetricError(f"negative edge weight on ({p}, {c})")
        if c in parent or c == root:
            raise MetricError(f"node {c!r} has more than one parent")
        parent[c] = (p, w)
        children[p].append((c, w))

    order = [root]
    depth = {root: 0.0}
    for u in order:
        for c, w in children[u]:
            depth[c] = depth[u] + w
            order.append(c)
    if len(order) != n:
        missing = [p for p in ids if p not in depth]
        raise MetricError(f"tree is disconnected from root; unreachable: {missing}")

    # distances by walking down from every node's ancestors: d(u, v) via
    # a DFS from each node over the undirected tree
    adj: dict = {p: [] for p in ids}
    for p, c, w in edges:
        adj[p].append((c, w))
        adj[c].append((p, w))
    dist = np.zeros((n, n))
    for s in ids:
        si = idx[s]
        stack = [(s, None, 0.0)]
        while stack:
            u, prev, du = stack.pop()
            dist[si, idx[u]] = du
            for v, w in adj[u]:
                if v != prev:
                    stack.append((v, u, du + w))
    return MetricSpace(tuple(ids), dist, kind="tree", edges=tuple(edges), root=root)


def tree_lca_distance(m: MetricSpace, u, v) -> float:
    """depth(u) + depth(v) - 2 depth(lca(u, v)), computed from parent pointers."""
    parent = {c: (p, w) for p, c, w in m.edges}

    def chain(x):
        out = [(x, 0.0)]
        acc = 0.0
        while x in parent:
            x, w = parent[x][0], parent[x][1]
            acc += w
            out.append((x, acc))
        return out

    cu = chain(u)
    cv = dict(chain(v))
    for node, du in cu:
        if node in cv:
            return du + cv[node]
    raise MetricError("nodes are in different trees")


def aspect_ratio(m: MetricSpace) -> float:
    """Max over min of the nonzero pairwise distances."""
    if len(m) < 2:
        raise MetricError("aspect ratio needs at least two points")
    iu = np.triu_indices(len(m), 1)
    vals = m.matrix[iu]
    nz = vals[vals > TOL]
    if nz.size == 0:
        raise MetricError("all pairwise distances are zero")
    return float(nz.max() / nz.min())


def verify_metric(m: MetricSpace, tol: float = TOL) -> list:
    """Violated triples ``(u, v, w)`` with d(u, w) > d(u, v) + d(v, w) + tol.

    Asymmetric pairs are reported as ``(u, v, u)`` and a nonzero diagonal
    entry as ``(u, u, u)``.
    """
    D = m.matrix
    n = len(m)
    bad = []
    for i in range(n):
        if abs(D[i, i]) > tol:
            bad.append((m.ids[i],) * 3)
    for i, j in zip(*np.nonzero(np.abs(D - D.T) > tol)):
        if i < j:
            bad.append((m.ids[i], m.ids[j], m.ids[i]))
    if np.any(D < -tol):
        for i, j in zip(*np.nonzero(D < -tol)):
            bad.append((m.ids[i], m.ids[j], m.ids[i]))
    scale = max(1.0, float(np.abs(D).max(initial=0.0)))
    for v in range(n):
        # via[u, w] = d(u, v) + d(v, w)
        via = D[:, v, None] + D[None, v, :]
        viol = D > via + tol * scale
        for u, w in zip(*np.nonzero(viol)):
            if u < w:
                bad.append((m.ids[u], m.ids[v], m.ids[w]))
    return bad


def metric_from_data(obj: dict) -> MetricSpace:
    kind = obj["type"]
    data = obj["data"]
    if kind == "matrix":
        return from_matrix(data["ids"], data["matrix"])
    if kind == "graph":
        return close_graph([tuple(e) for e in data["edges"]], data.get("nodes"))
    if kind == "tree":
        return tree_metric([tuple(e) for e in data["edges"]], data["root"], data.get("nodes"))
    raise MetricError(f"unknown metric type {kind!r}")
