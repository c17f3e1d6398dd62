"""Problem instances, solutions, feasibility and cost evaluation."""

from __future__ import annotations

import hashlib
import json
import logging
from dataclasses import dataclass, field, replace
from fractions import Fraction
from functools import cached_property
from typing import Hashable, Iterable, Mapping, Optional

import numpy as np

from .metric import TOL, MetricSpace, metric_from_data

log = logging.getLogger(__name__)

MEDIAN = "median"
MEANS = "means"


class InfeasibleError(Exception):
    """No solution satisfies the constraints (capacity or fair-range)."""

    def __init__(self, message, reason="capacity"):
        super().__init__(message)
        self.reason = reason


class WorkCapExceeded(Exception):
    """A brute-force routine refused to run past its configured work cap."""


class InstanceError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class Instance:
    k: int
    clients: tuple
    facilities: tuple
    groups: tuple  # tuple of frozensets of facility ids
    alpha: tuple
    beta: tuple
    capacities: Mapping[Hashable, int]
    metric: MetricSpace
    objective: str = MEDIAN
    client_weights: Optional[Mapping[Hashable, Fraction]] = None
    name: str = ""

    @staticmethod
    def build(k, clients, facilities, groups=(), alpha=(), beta=(), capacities=None,
              metric=None, objective=MEDIAN, client_weights=None, name="") -> "Instance":
        facilities = tuple(facilities)
        if capacities is None:
            capacities = {f: len(tuple(clients)) for f in facilities}
        elif not isinstance(capacities, Mapping):
            capacities = dict(zip(facilities, capacities))
        if client_weights is not None and not isinstance(client_weights, Mapping):
            client_weights = dict(zip(clients, client_weights))
        return Instance(int(k), tuple(clients), facilities,
                        tuple(frozenset(g) for g in groups), tuple(alpha), tuple(beta),
                        dict(capacities), metric, objective,
                        None if client_weights is None else dict(client_weights), name)

    @property
    def t(self) -> int:
        return len(self.groups)

    def weight(self, c) -> Fraction:
        if self.client_weights is None:
            return Fraction(1)
        return Fraction(self.client_weights.get(c, 1))

    @cached_property
    def weights(self) -> tuple:
        return tuple(self.weight(c) for c in self.clients)

    @cached_property
    def total_weight(self) -> Fraction:
        return sum(self.weights, Fraction(0))

    @cached_property
    def unit_weights(self) -> bool:
        return all(w == 1 for w in self.weights)

    @cached_property
    def facility_index(self) -> dict:
        return {f: i for i, f in enumerate(self.facilities)}

    @cached_property
    def dist_cf(self) -> np.ndarray:
        """Client x facility distance matrix, in instance order."""
        return self.metric.submatrix(self.clients, self.facilities)

    @cached_property
    def cost_cf(self) -> np.ndarray:
        """Client x facility per-unit cost under the objective."""
        D = self.dist_cf
        return D * D if self.objective == MEANS else D

    @cached_property
    def membership(self) -> np.ndarray:
        """(|F|, t) 0/1 matrix of group membership."""
        M = np.zeros((len(self.facilities), self.t), dtype=np.int64)
        for j, g in enumerate(self.groups):
            for f in g:
                if f in self.facility_index:
                    M[self.facility_index[f], j] = 1
        return M

    def chi(self, f) -> tuple:
        return tuple(int(x) for x in self.membership[self.facility_index[f]])

    def with_metric(self, metric: MetricSpace, name: str | None = None) -> "Instance":
        return replace(self, metric=metric, name=self.name if name is None else name)

    def with_objective(self, objective: str) -> "Instance":
        return replace(self, objective=objective)

    def digest(self) -> str:
        blob = json.dumps(instance_to_dict(self), sort_keys=True, default=str)
        return hashlib.sha256(blob.encode()).hexdigest()[:16]


@dataclass
class Solution:
    """Selected centers with a (possibly fractional) assignment.

    ``mu`` maps ``(client, center)`` to the amount of the client's weight sent
    to that center; an integral assignment has exactly one entry per client.
    """

    centers: tuple
    mu: dict
    cost: float
    meta: dict = field(default_factory=dict)

    @property
    def rho(self) -> Optional[dict]:
        out = {}
        for (c, f), q in self.mu.items():
            if q == 0:
                continue
            if c in out:
                return None
            out[c] = f
        return out

    @staticmethod
    def from_rho(inst: Instance, centers, rho: Mapping) -> "Solution":
        mu = {(c, rho[c]): inst.weight(c) for c in inst.clients}
        sol = Solution(tuple(centers), mu, 0.0)
        sol.cost = evaluate_cost(inst, sol)
        return sol


@dataclass
class FeasibilityReport:
    counts: tuple
    fair_range_ok: tuple
    size_ok: bool
    capacity_ok: bool
    assignment_ok: bool

    @property
    def fair(self) -> bool:
        return all(self.fair_range_ok)

    @property
    def ok(self) -> bool:
        return self.fair and self.size_ok and self.capacity_ok and self.assignment_ok


def validate_instance(inst: Instance, warnings: list | None = None) -> list:
    """List of violated invariants; empty when the instance is well formed.

    Soft issues (an upper bound larger than its group) go to ``warnings``.
    """
    out = []
    fset = set(inst.facilities)
    if inst.k < 1:
        out.append("k must be a positive integer")
    if inst.k > len(inst.facilities):
        out.append("k > |facilities|")
    if len(fset) != len(inst.facilities):
        out.append("duplicate facility ids")
    if len(set(inst.clients)) != len(inst.clients):
        out.append("duplicate client ids")
    if len(inst.alpha) != inst.t or len(inst.beta) != inst.t:
        out.append("alpha/beta length differs from number of groups")
    for i, (a, b) in enumerate(zip(inst.alpha, inst.beta)):
        if a < 0:
            out.append(f"alpha[{i}] < 0")
        if b < 0:
            out.append(f"beta[{i}] < 0")
        if a > b:
            out.append(f"alpha[{i}] > beta[{i}]")
    for i, g in enumerate(inst.groups):
        if any(f not in fset for f in g):
            out.append("group member not a facility")
        if i < len(inst.beta) and inst.beta[i] > len(g) and warnings is not None:
            warnings.append(f"beta[{i}] > |G[{i}]|")
    for f in inst.facilities:
        cap = inst.capacities.get(f)
        if cap is None:
            out.append(f"capacity missing for facility {f!r}")
        elif cap < 0:
            out.append(f"capacity of {f!r} < 0")
    if inst.client_weights is not None:
        for c, w in inst.client_weights.items():
            if w < 0:
                out.append(f"weight of client {c!r} < 0")
    if inst.objective not in (MEDIAN, MEANS):
        out.append(f"unknown objective {inst.objective!r}")
    missing = [p for p in (*inst.clients, *inst.facilities) if p not in inst.metric]
    if missing:
        out.append(f"metric does not cover points {missing}")
    return out


def group_counts(inst: Instance, centers: Iterable) -> tuple:
    cs = set(centers)
    return tuple(len(cs & g) for g in inst.groups)


def fair_range_ok(inst: Instance, centers: Iterable) -> bool:
    counts = group_counts(inst, centers)
    return all(a <= c <= b for a, c, b in zip(inst.alpha, counts, inst.beta))


def check_feasibility(inst: Instance, centers: Iterable, at_most: bool = True) -> FeasibilityReport:
    from .assignment import optimal_assignment

    centers = tuple(centers)
    counts = group_counts(inst, centers)
    fair = tuple(a <= c <= b for a, c, b in zip(inst.alpha, counts, inst.beta))
    n_sel = len(set(centers))
    size_ok = n_sel <= inst.k if at_most else n_sel == inst.k
    cap = sum(inst.capacities[f] for f in set(centers))
    capacity_ok = cap >= inst.total_weight
    assignment_ok = False
    if capacity_ok and centers:
        try:
            optimal_assignment(inst, centers)
            assignment_ok = True
        except InfeasibleError:
            assignment_ok = False
    return FeasibilityReport(counts, fair, size_ok, capacity_ok, assignment_ok)


def evaluate_cost(inst: Instance, sol: Solution) -> float:
    """Sum of mu(c, f) * d(c, f) (squared for means); checks the assignment."""
    centers = set(sol.centers)
    served: dict = {}
    total = 0.0
    for (c, f), q in sol.mu.items():
        if f not in centers:
            raise InstanceError(f"assignment references non-selected center {f!r}")
        d = inst.metric.d(c, f)
        total += float(q) * (d * d if inst.objective == MEANS else d)
        served[c] = served.get(c, 0) + q
    for c in inst.clients:
        if abs(float(served.get(c, 0)) - float(inst.weight(c))) > TOL:
            raise InstanceError(f"client {c!r} served {served.get(c, 0)} of {inst.weight(c)}")
    return total


def greedy_feasible(inst: Instance) -> Optional[tuple]:
    """Best-effort fair-range-feasible center set of size k, or None.

    Repeatedly opens the facility advancing the most unmet lower bounds
    without breaching an upper bound, then pads with facilities that breach
    nothing. None does not mean the instance is infeasible.
    """
    M = inst.membership
    alpha = np.array(inst.alpha, dtype=np.int64)
    beta = np.array(inst.beta, dtype=np.int64)
    counts = np.zeros(inst.t, dtype=np.int64)
    chosen: list = []
    free = list(range(len(inst.facilities)))

    def fits(i):
        return bool(np.all(counts + M[i] <= beta))

    while len(chosen) < inst.k:
        unmet = counts < alpha
        if not unmet.any():
            break
        best, best_gain = None, 0
        for i in free:
            if not fits(i):
                continue
            gain = int((M[i] * unmet).sum())
            if gain > best_gain:
                best, best_gain = i, gain
        if best is None:
            break
        chosen.append(best)
        free.remove(best)
        counts += M[best]

    for i in list(free):
        if len(chosen) >= inst.k:
            break
        if fits(i):
            chosen.append(i)
            free.remove(i)
            counts += M[i]

    if len(chosen) != inst.k or np.any(counts < alpha) or np.any(counts > beta):
        return None
    return tuple(inst.facilities[i] for i in sorted(chosen))


# --------------------------------------------------------------------------
# file format

def _num_out(x):
    if isinstance(x, Fraction):
        return x.numerator if x.denominator == 1 else f"{x.numerator}/{x.denominator}"
    return x


def _num_in(x):
    if isinstance(x, str):
        return Fraction(x)
    if isinstance(x, float) and not x.is_integer():
        return Fraction(x)
    return int(x)


def instance_to_dict(inst: Instance) -> dict:
    points = []
    cset, fset = set(inst.clients), set(inst.facilities)
    seen = set()
    for p in (*inst.clients, *inst.facilities):
        if p in seen:
            continue
        seen.add(p)
        kind = "both" if (p in cset and p in fset) else ("client" if p in cset else "facility")
        rec = {"id": p, "kind": kind}
        if p in cset and inst.client_weights is not None and p in inst.client_weights:
            rec["weight"] = _num_out(Fraction(inst.client_weights[p]))
        if p in fset:
            rec["capacity"] = inst.capacities[p]
        points.append(rec)
    groups = []
    for g, a, b in zip(inst.groups, inst.alpha, inst.beta):
        order = [f for f in inst.facilities if f in g] + sorted((x for x in g if x not in fset), key=str)
        groups.append({"members": order, "lower": a, "upper": b})
    out = {"k": inst.k, "objective": inst.objective, "points": points,
           "groups": groups, "metric": inst.metric.to_data()}
    if inst.name:
        out["name"] = inst.name
    return out


def instance_from_dict(doc: dict) -> Instance:
    clients, facilities, caps, weights = [], [], {}, {}
    for rec in doc["points"]:
        p, kind = rec["id"], rec["kind"]
        if kind not in ("client", "facility", "both"):
            raise InstanceError(f"unknown point kind {kind!r}")
        if kind in ("client", "both"):
            clients.append(p)
            if "weight" in rec:
                weights[p] = Fraction(_num_in(rec["weight"]))
        if kind in ("facility", "both"):
            facilities.append(p)
            caps[p] = int(rec.get("capacity", 0))
    groups = [g["members"] for g in doc.get("groups", [])]
    alpha = [int(g.get("lower", 0)) for g in doc.get("groups", [])]
    beta = [int(g.get("upper", doc["k"])) for g in doc.get("groups", [])]
    metric = metric_from_data(doc["metric"])
    return Instance.build(doc["k"], clients, facilities, groups, alpha, beta, caps, metric,
                          doc.get("objective", MEDIAN), weights or None, doc.get("name", ""))


def dump_instance(inst: Instance, path) -> None:
    with open(path, "w") as fh:
        json.dump(instance_to_dict(inst), fh, indent=1)


def load_instance(path) -> Instance:
    with open(path) as fh:
        return instance_from_dict(json.load(fh))


def solution_to_dict(sol: Solution) -> dict:
    return {"centers": list(sol.centers),
            "assignment": [[c, f, _num_out(Fraction(q))] for (c, f), q in sol.mu.items()],
            "cost": sol.cost}


def solution_from_dict(doc: dict) -> Solution:
    mu = {}
    for c, f, q in doc["assignment"]:
        mu[(c, f)] = Fraction(_num_in(q))
    return Solution(tuple(doc["centers"]), mu, float(doc["cost"]))
