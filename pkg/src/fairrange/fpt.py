"""Leader-guessing approximation, parameterized by k and the number of groups.

Fair-range constraints are reduced to "one center from each of k disjoint
groups" by guessing which characteristic vectors the optimum uses; each such
disjoint-group instance is then solved by guessing, for every optimal center,
its closest client (the leader) and a rounded leader-to-center distance.
"""

from __future__ import annotations

import itertools
import logging
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Optional

import numpy as np

from .assignment import optimal_assignment
from .instance import MEANS, MEDIAN, InfeasibleError, Instance, Solution

log = logging.getLogger(__name__)


def characteristic_partition(inst: Instance) -> dict:
    """Map each membership vector to the facilities carrying exactly it."""
    cells: dict = {}
    for f in inst.facilities:
        cells.setdefault(inst.chi(f), []).append(f)
    return {g: tuple(cells[g]) for g in sorted(cells)}


@dataclass(frozen=True)
class ConstraintPattern:
    vectors: tuple  # sorted k-multiset of membership vectors
    feasible: bool = True

    @property
    def total(self) -> tuple:
        if not self.vectors:
            return ()
        return tuple(int(x) for x in np.sum(np.array(self.vectors, dtype=np.int64), axis=0))

    def multiplicity(self) -> dict:
        out: dict = {}
        for g in self.vectors:
            out[g] = out.get(g, 0) + 1
        return out


def enumerate_feasible_patterns(partition: dict, k: int, alpha, beta) -> list:
    """Every k-multiset of cells whose summed vector lies within [alpha, beta]
    and which uses no cell more often than it has facilities."""
    keys = sorted(partition)
    alpha = np.array(alpha, dtype=np.int64)
    beta = np.array(beta, dtype=np.int64)
    out = []
    for combo in itertools.combinations_with_replacement(keys, k):
        counts: dict = {}
        for g in combo:
            counts[g] = counts.get(g, 0) + 1
        if any(m > len(partition[g]) for g, m in counts.items()):
            continue
        s = np.sum(np.array(combo, dtype=np.int64).reshape(k, -1), axis=0)
        if np.all(s >= alpha) and np.all(s <= beta):
            out.append(ConstraintPattern(tuple(combo)))
    return out


@dataclass
class OpgInstance:
    """k disjoint facility groups; exactly one center must come from each.

    Extra copies of a cell are aliases ``(original, copy_index)`` that sit at
    distance 0 from their original; ``M`` maps each alias to its original.
    """

    k: int
    clients: tuple
    weights: dict
    groups: tuple
    capacities: dict
    M: dict
    base: Instance  # supplies the metric, objective and original facility ids
    pattern: Optional[ConstraintPattern] = None

    def original(self, x):
        return self.M.get(x, x)

    def as_instance(self) -> Instance:
        """Instance over the coreset clients and the original facilities."""
        return Instance.build(self.base.k, self.clients, self.base.facilities, self.base.groups,
                              self.base.alpha, self.base.beta, self.base.capacities, self.base.metric,
                              self.base.objective, self.weights, self.base.name)


def build_coreset(inst: Instance, eps1: float = 0.0, mode: str = "identity", size: int | None = None,
                  seed=0) -> tuple:
    """Weighted client subset ``(W, weights)``.

    ``identity`` returns every client with its own weight (exact). ``sample``
    draws ``size`` clients uniformly without replacement and gives each an
    equal share of the total weight; this is a heuristic with no guarantee.
    """
    if mode == "identity":
        return tuple(inst.clients), {c: inst.weight(c) for c in inst.clients}
    if mode != "sample":
        raise ValueError(f"unknown coreset mode {mode!r}")
    n = len(inst.clients)
    if size is None:
        e = max(eps1, 1e-3)
        size = math.ceil(inst.k ** 2 * e ** -3 * math.log(max(n, 2)) ** 2)
    if size >= n:
        return build_coreset(inst, mode="identity")
    rng = np.random.default_rng(seed)
    pick = sorted(rng.choice(n, size=size, replace=False))
    W = tuple(inst.clients[i] for i in pick)
    share = Fraction(inst.total_weight) / size
    return W, {c: share for c in W}


def build_opg_instance(inst: Instance, pattern: ConstraintPattern, coreset=None) -> OpgInstance:
    part = characteristic_partition(inst)
    W, wts = coreset if coreset is not None else build_coreset(inst)
    groups, M = [], {}
    used: dict = {}
    caps = dict(inst.capacities)
    for g in pattern.vectors:
        cell = part.get(g)
        if not cell:
            raise InfeasibleError(f"pattern uses empty cell {g}", reason="fair-range")
        j = used.get(g, 0)
        if j >= len(cell):
            raise InfeasibleError(f"cell {g} has {len(cell)} facilities, pattern needs {j + 1}",
                                  reason="fair-range")
        used[g] = j + 1
        if j == 0:
            groups.append(tuple(cell))
        else:
            aliases = tuple((f, j) for f in cell)
            for a, f in zip(aliases, cell):
                M[a] = f
                caps[a] = inst.capacities[f]
            groups.append(aliases)
    return OpgInstance(inst.k, tuple(W), dict(wts), tuple(groups), caps, M, inst, pattern)


def radius_ladder(dmin: float, dmax: float, eps3: float) -> list:
    """0, then dmin * (1+eps3)^j up to and including the first value >= dmax."""
    out = [0.0]
    if dmax <= 0:
        return out
    r = dmin
    while True:
        out.append(r)
        if r >= dmax:
            return out
        r *= 1 + eps3


@dataclass
class GuessStats:
    guesses: int = 0
    failed: int = 0
    pruned: int = 0
    evaluated: int = 0
    patterns: int = 0

    def line(self) -> str:
        return (f"patterns={self.patterns} guesses={self.guesses} failed={self.failed} "
                f"pruned={self.pruned} evaluated={self.evaluated}")


def select_for_guess(opg: OpgInstance, balls, order, cap_of) -> Optional[tuple]:
    """Pick one facility per group, in group order.

    ``balls[g]`` lists the group-g facilities inside the radius of the leader
    assigned to group g; groups are visited in ``order``. Each pick is the
    largest-capacity candidate whose original has not been taken yet (ties
    keep group order). Returns the picked ids or None.
    """
    taken = set()
    picks = []
    for g in order:
        best, best_cap = None, -1
        for x in balls[g]:
            o = opg.original(x)
            if o in taken:
                continue
            if cap_of[x] > best_cap:
                best, best_cap = x, cap_of[x]
        if best is None:
            return None
        taken.add(opg.original(best))
        picks.append(best)
    return tuple(picks)


def leader_guess_solve(opg: OpgInstance, eps3: float, objective: str | None = None,
                       stats: GuessStats | None = None, upper: float = math.inf,
                       cache: dict | None = None) -> Optional[Solution]:
    """Best selection over all leader multisets, radius tuples and
    group-to-leader bijections; None if every guess fails or is pruned by
    ``upper``. Costs are measured on the coreset clients."""
    base = opg.as_instance()
    if objective is not None and objective != base.objective:
        base = base.with_objective(objective)
    stats = stats if stats is not None else GuessStats()
    cache = cache if cache is not None else {}
    W = opg.clients
    k = opg.k
    fidx = base.facility_index
    D = base.dist_cf  # coreset clients x original facilities, plain distances
    cost = base.cost_cf
    w = np.array([float(x) for x in base.weights])
    total_w = base.total_weight
    nz = D[D > 0]
    dmin = float(nz.min()) if nz.size else 0.0
    dmax = float(D.max()) if D.size else 0.0
    ladder = radius_ladder(dmin, dmax, eps3)

    group_cols = [np.array([fidx[opg.original(x)] for x in g]) for g in opg.groups]
    # per leader: distinct balls (as per-group candidate tuples) over the ladder
    options = []
    for li in range(len(W)):
        seen, opts = set(), []
        for r in ladder:
            ball = tuple(tuple(x for x, c in zip(g, cols) if D[li, c] <= r)
                         for g, cols in zip(opg.groups, group_cols))
            key = tuple(len(b) for b in ball)
            if key in seen:
                continue
            seen.add(key)
            opts.append(ball)
        options.append(opts)

    best_sol, best_cost = None, upper
    order = range(k)
    for leaders in itertools.combinations_with_replacement(range(len(W)), k):
        for radii in itertools.product(*(range(len(options[li])) for li in leaders)):
            balls_by_pos = [options[li][ri] for li, ri in zip(leaders, radii)]
            for perm in itertools.permutations(range(k)):
                # group g is served by leader position perm[g]
                balls = [balls_by_pos[perm[g]][g] for g in order]
                stats.guesses += 1
                picks = select_for_guess(opg, balls, order, opg.capacities)
                if picks is None:
                    stats.failed += 1
                    continue
                originals = frozenset(opg.original(x) for x in picks)
                if originals in cache:
                    c = cache[originals]
                else:
                    cols = sorted(fidx[f] for f in originals)
                    if sum(base.capacities[base.facilities[j]] for j in cols) < total_w:
                        c = math.inf
                    elif float(w @ cost[:, cols].min(axis=1)) >= best_cost:
                        stats.pruned += 1
                        continue
                    else:
                        stats.evaluated += 1
                        try:
                            c = optimal_assignment(base, [base.facilities[j] for j in cols]).cost
                        except InfeasibleError:
                            c = math.inf
                    cache[originals] = c
                if c < best_cost:
                    best_cost = c
                    best_sol = tuple(sorted(originals, key=fidx.__getitem__))
    if best_sol is None:
        return None
    sol = optimal_assignment(base, best_sol)
    sol.meta["pattern"] = opg.pattern.vectors if opg.pattern else None
    return sol


def eps3_for(eps: float, objective: str) -> float:
    """Ladder precision so that the per-client factor meets 3+eps (median)
    or 9+eps (means, where the factor (3 + 2*eps3) gets squared)."""
    if objective == MEANS:
        return (math.sqrt(9 + eps) - 3) / 2
    return eps / 2


def fpt_solve(inst: Instance, eps: float = 0.2, coreset: str = "identity", coreset_size=None,
              seed=0, progress: Callable[[str], None] | None = None) -> Solution:
    """Approximate optimum with exactly k centers: (3+eps) for median and
    (9+eps) for means when the coreset is exact."""
    part = characteristic_partition(inst)
    patterns = enumerate_feasible_patterns(part, inst.k, inst.alpha, inst.beta)
    if not patterns:
        raise InfeasibleError("no constraint pattern satisfies the group bounds", reason="fair-range")
    cs = build_coreset(inst, mode=coreset, size=coreset_size, seed=seed)
    eps3 = eps3_for(eps, inst.objective)
    stats = GuessStats()
    cache: dict = {}
    best, best_cost = None, math.inf
    for i, pat in enumerate(patterns):
        stats.patterns += 1
        opg = build_opg_instance(inst, pat, cs)
        sol = leader_guess_solve(opg, eps3, stats=stats, upper=best_cost, cache=cache)
        if sol is not None and sol.cost < best_cost:
            best, best_cost = sol, sol.cost
        if progress is not None:
            progress(f"pattern {i + 1}/{len(patterns)} {stats.line()} best={best_cost:.6g}")
    if best is None:
        raise InfeasibleError("no guessed center set can serve all clients", reason="capacity")
    out = optimal_assignment(inst, best.centers)
    out.meta.update({"eps": eps, "eps3": eps3, "coreset": coreset, "patterns": len(patterns),
                     "pattern": best.meta.get("pattern"), "stats": stats.line()})
    return out
