"""Exact capacitated fair-range k-median on tree metrics by dynamic programming.

The tree is rearranged so that every client and facility sits at a leaf and
every internal node has exactly two children. For the edge above each node we
tabulate

    T[kappa_1, ..., kappa_t, b, opened]

the cheapest routing cost inside the subtree (including the edge itself) when
``kappa_i`` facilities of group i and ``opened`` facilities in total are open
below, and ``b`` units of client weight flow down through the edge (negative
``b`` means weight leaves the subtree).
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .assignment import optimal_assignment, scale_weights
from .instance import MEANS, InfeasibleError, Instance, Solution
from .metric import TOL, MetricError

log = logging.getLogger(__name__)

MAX_B_RANGE = 20000


@dataclass
class BinarizedTree:
    kind: list = field(default_factory=list)  # "client" | "facility" | "internal"
    point: list = field(default_factory=list)
    children: list = field(default_factory=list)
    length: list = field(default_factory=list)  # length of the edge above the node
    parent: list = field(default_factory=list)
    root: int = -1

    def add(self, kind, point=None) -> int:
        self.kind.append(kind)
        self.point.append(point)
        self.children.append([])
        self.length.append(0.0)
        self.parent.append(-1)
        return len(self.kind) - 1

    def attach(self, parent: int, child: int, length: float):
        self.children[parent].append(child)
        self.parent[child] = parent
        self.length[child] = float(length)

    def __len__(self):
        return len(self.kind)

    def postorder(self) -> list:
        out, stack = [], [(self.root, False)]
        while stack:
            v, done = stack.pop()
            if done:
                out.append(v)
                continue
            stack.append((v, True))
            for c in reversed(self.children[v]):
                stack.append((c, False))
        return out

    def leaves(self, kind: str) -> dict:
        return {self.point[i]: i for i in range(len(self)) if self.kind[i] == kind}

    def depth(self) -> list:
        dep = [0.0] * len(self)
        for v in reversed(self.postorder()):
            if self.parent[v] >= 0:
                dep[v] = dep[self.parent[v]] + self.length[v]
        return dep

    def leaf_distance(self, a: int, b: int) -> float:
        dep = self.depth()
        anc = set()
        x = a
        while x >= 0:
            anc.add(x)
            x = self.parent[x]
        y = b
        while y not in anc:
            y = self.parent[y]
        return dep[a] + dep[b] - 2 * dep[y]


def binarize(inst: Instance) -> BinarizedTree:
    """Leaf-only, full binary version of the instance's tree metric.

    Unused Steiner branches are dropped, unary nodes are spliced out (their
    edge lengths add up) and high-degree nodes are split with 0-length edges.
    """
    m = inst.metric
    if m.kind != "tree":
        raise MetricError("tree metric required")
    clients, facilities = set(inst.clients), set(inst.facilities)
    kids = m.tree_children
    bt = BinarizedTree()

    # iterative post-order over the original tree
    result: dict = {}
    stack = [(m.root, False)]
    while stack:
        v, done = stack.pop()
        if not done:
            stack.append((v, True))
            for c, _ in kids[v]:
                stack.append((c, False))
            continue
        items = []
        if v in clients:
            items.append((bt.add("client", v), 0.0))
        if v in facilities:
            items.append((bt.add("facility", v), 0.0))
        for c, w in kids[v]:
            sub = result.pop(c)
            if sub is not None:
                items.append((sub[0], sub[1] + w))
        if not items:
            result[v] = None
        elif len(items) == 1:
            result[v] = items[0]
        else:
            while len(items) > 2:
                (a, la), (b, lb) = items[-2], items[-1]
                dummy = bt.add("internal")
                bt.attach(dummy, a, la)
                bt.attach(dummy, b, lb)
                items[-2:] = [(dummy, 0.0)]
            node = bt.add("internal", v)
            for c, w in items:
                bt.attach(node, c, w)
            result[v] = (node, 0.0)
    top = result[m.root]
    if top is None:
        raise InfeasibleError("tree holds no clients or facilities")
    bt.root = top[0]
    bt.length[bt.root] = 0.0  # pseudo-root edge
    return bt


@dataclass
class _Table:
    T: np.ndarray
    bp: Optional[np.ndarray]
    kcap: tuple
    ocap: int
    blo: int
    bhi: int


def dp_solve(inst: Instance, bt: BinarizedTree | None = None, exact_k: bool = True,
             dump=None, reassign: bool = True) -> Solution:
    """Optimal capacitated fair-range k-median on the instance's tree metric.

    With ``exact_k`` the root requires exactly k open facilities, otherwise at
    most k. For the means objective the tables still hold tree-path (median)
    costs; the opened set is then reassigned under squared distances, so the
    result is no longer guaranteed optimal. ``dump`` is an optional text
    stream receiving every finite table entry as ``node,kappa,b,opened,cost``.
    """
    if bt is None:
        bt = binarize(inst)
    t, k = inst.t, inst.k
    supplies, scale, _ = scale_weights(inst.weights)
    supply = dict(zip(inst.clients, supplies))
    W = sum(supplies)
    M = inst.membership
    beta = np.minimum(np.array(inst.beta, dtype=np.int64), k)

    order = bt.postorder()
    # per-node aggregates
    wbelow, capbelow, fbelow = {}, {}, {}
    gbelow = {}
    for v in order:
        kind = bt.kind[v]
        if kind == "client":
            wbelow[v], capbelow[v], fbelow[v] = supply[bt.point[v]], 0, 0
            gbelow[v] = np.zeros(t, dtype=np.int64)
        elif kind == "facility":
            f = bt.point[v]
            wbelow[v], capbelow[v], fbelow[v] = 0, inst.capacities[f] * scale, 1
            gbelow[v] = M[inst.facility_index[f]].copy()
        else:
            cs = bt.children[v]
            wbelow[v] = sum(wbelow[c] for c in cs)
            capbelow[v] = sum(capbelow[c] for c in cs)
            fbelow[v] = sum(fbelow[c] for c in cs)
            gbelow[v] = sum(gbelow[c] for c in cs)

    def frame(v):
        kcap = tuple(int(x) for x in np.minimum(beta, gbelow[v]))
        ocap = min(k, fbelow[v])
        blo = -wbelow[v]
        bhi = min(capbelow[v], W - wbelow[v])
        if bhi - blo > MAX_B_RANGE:
            raise ValueError("flow range too large; client weights need a coarser scale")
        return kcap, ocap, blo, bhi

    def empty(kcap, ocap, blo, bhi):
        return np.full(tuple(c + 1 for c in kcap) + (bhi - blo + 1, ocap + 1), np.inf)

    tables: dict = {}
    for v in order:
        kcap, ocap, blo, bhi = frame(v)
        T = empty(kcap, ocap, blo, bhi)
        L = bt.length[v]
        bp = None
        kind = bt.kind[v]
        if kind == "client":
            w = supply[bt.point[v]]
            T[(0,) * t + (-w - blo, 0)] = L * w
        elif kind == "facility":
            f = bt.point[v]
            T[(0,) * t + (0 - blo, 0)] = 0.0
            chi = tuple(int(x) for x in M[inst.facility_index[f]])
            if ocap >= 1 and all(c <= kc for c, kc in zip(chi, kcap)):
                top = min(inst.capacities[f] * scale, bhi)
                bs = np.arange(0, top + 1)
                T[chi + (slice(0 - blo, top - blo + 1), 1)] = L * bs
        else:
            a, b = bt.children[v]
            T, bp = _merge(tables[a], tables[b], kcap, ocap, blo, bhi, T)
            if L:
                bvals = np.arange(blo, bhi + 1, dtype=float)
                T += np.abs(bvals)[(None,) * t + (slice(None), None)] * L
        tables[v] = _Table(T, bp, kcap, ocap, blo, bhi)
        if dump is not None:
            _dump(dump, v, tables[v], t)

    root = tables[bt.root]
    state = _best_root_state(root, inst, exact_k)
    if state is None:
        raise InfeasibleError("no fair-range feasible opening fits the capacities", reason="infeasible")
    dp_cost = float(root.T[state]) / scale

    opened = []
    stack = [(bt.root, state)]
    while stack:
        v, st = stack.pop()
        kind = bt.kind[v]
        if kind == "facility":
            if st[-1] == 1:
                opened.append(bt.point[v])
            continue
        if kind == "client":
            continue
        tv = tables[v]
        a, b = bt.children[v]
        ta, tb = tables[a], tables[b]
        lstate = np.unravel_index(int(tv.bp[st]), ta.T.shape)
        kv = np.array(st[:t], dtype=np.int64)
        ka = np.array(lstate[:t], dtype=np.int64)
        bv = st[t] + tv.blo
        ba = lstate[t] + ta.blo
        rstate = tuple(int(x) for x in kv - ka) + (bv - ba - tb.blo, st[t + 1] - lstate[t + 1])
        stack.append((a, tuple(int(x) for x in lstate)))
        stack.append((b, rstate))

    order_f = {f: i for i, f in enumerate(inst.facilities)}
    opened.sort(key=order_f.__getitem__)
    meta = {"dp_cost": dp_cost, "weight_scale": scale}
    if not reassign:
        return Solution(tuple(opened), {}, dp_cost, meta)
    sol = optimal_assignment(inst, opened)
    if inst.objective != MEANS:
        if abs(sol.cost - dp_cost) > TOL * max(1.0, dp_cost):
            raise AssertionError(f"DP cost {dp_cost} disagrees with assignment cost {sol.cost}")
    sol.meta.update(meta)
    return sol


def _merge(TA: _Table, TB: _Table, kcap, ocap, blo, bhi, P):
    t = len(kcap)
    if np.isfinite(TB.T).sum() < np.isfinite(TA.T).sum():
        iter_left = False
        X, Y = TB, TA
    else:
        iter_left = True
        X, Y = TA, TB
    BP = np.full(P.shape, -1, dtype=np.int64)
    Yidx = None if iter_left else np.arange(Y.T.size).reshape(Y.T.shape)
    for flat in np.flatnonzero(np.isfinite(X.T)):
        st = np.unravel_index(flat, X.T.shape)
        vx = X.T[st]
        kx = st[:t]
        bx = st[t] + X.blo
        ox = st[t + 1]
        ks = []
        ok = True
        for i in range(t):
            hi = min(Y.kcap[i], kcap[i] - kx[i])
            if hi < 0:
                ok = False
                break
            ks.append(hi)
        ohi = min(Y.ocap, ocap - ox)
        brlo = max(Y.blo, blo - bx)
        brhi = min(Y.bhi, bhi - bx)
        if not ok or ohi < 0 or brlo > brhi:
            continue
        ys = tuple(slice(0, h + 1) for h in ks) + (slice(brlo - Y.blo, brhi - Y.blo + 1), slice(0, ohi + 1))
        ps = tuple(slice(kx[i], kx[i] + ks[i] + 1) for i in range(t)) + \
            (slice(bx + brlo - blo, bx + brhi - blo + 1), slice(ox, ox + ohi + 1))
        cand = vx + Y.T[ys]
        cur = P[ps]
        cbp = BP[ps]
        if iter_left:
            upd = cand < cur
            cur[upd] = cand[upd]
            cbp[upd] = flat
        else:
            lidx = Yidx[ys]
            upd = (cand < cur) | ((cand == cur) & (lidx < cbp))
            cur[upd] = cand[upd]
            cbp[upd] = lidx[upd]
    return P, BP


def _best_root_state(root: _Table, inst: Instance, exact_k: bool):
    t = inst.t
    b0 = 0 - root.blo
    if not (0 <= b0 < root.T.shape[t]):
        return None
    best, best_state = np.inf, None
    alpha = inst.alpha
    sub = root.T[(slice(None),) * t + (b0, slice(None))]
    for st in np.ndindex(sub.shape):
        v = sub[st]
        if not np.isfinite(v):
            continue
        kap, opened = st[:t], st[t]
        if exact_k and opened != inst.k:
            continue
        if any(kap[i] < alpha[i] for i in range(t)):
            continue
        if v < best:
            best, best_state = v, kap + (b0, opened)
    return best_state


def _dump(stream, v, tab: _Table, t):
    for st in zip(*np.nonzero(np.isfinite(tab.T))):
        kap = " ".join(str(int(x)) for x in st[:t])
        stream.write(f"{v},{kap},{int(st[t]) + tab.blo},{int(st[t + 1])},{tab.T[st]:.12g}\n")
