import itertools
from fractions import Fraction

import numpy as np
import pytest
from scipy.optimize import linprog

from conftest import line_instance
from fairrange.assignment import MinCostFlow, nearest_assignment_cost, optimal_assignment, scale_weights
from fairrange.instance import InfeasibleError, Instance, evaluate_cost
from fairrange.metric import from_matrix


def matrix_instance(D, caps, weights=None, objective="median"):
    D = np.asarray(D, dtype=float)
    nc, nf = D.shape
    clients = [f"c{i}" for i in range(nc)]
    facs = [f"f{j}" for j in range(nf)]
    full = np.zeros((nc + nf, nc + nf))
    full[:nc, nc:] = D
    full[nc:, :nc] = D.T
    # not a metric on client-client pairs; only client-facility entries are read
    metric = from_matrix(clients + facs, full)
    return Instance.build(nf, clients, facs, capacities=dict(zip(facs, caps)), metric=metric,
                          objective=objective, client_weights=weights)


def enumerate_best(D, caps):
    nc, nf = D.shape
    best = np.inf
    for a in itertools.product(range(nf), repeat=nc):
        if all(a.count(j) <= caps[j] for j in range(nf)):
            best = min(best, sum(D[i, a[i]] for i in range(nc)))
    return best


def test_single_center_forced():
    inst = line_instance({"a": 1, "b": -3}, {"f": 0}, caps={"f": 2})
    assert optimal_assignment(inst, ["f"]).cost == 4


def test_zero_cost_matching():
    inst = line_instance({"a": 0, "b": 5}, {"f": 0, "g": 5}, k=2, caps={"f": 1, "g": 1})
    sol = optimal_assignment(inst, ["f", "g"])
    assert sol.cost == 0
    assert sol.rho == {"a": "f", "b": "g"}


def test_five_clients_two_centers_frozen():
    # rng(42) integers(1, 20); enumeration over all 2^5 assignments gives 24
    D = np.array([[2, 15], [13, 9], [9, 17], [2, 14], [4, 2]])
    inst = matrix_instance(D, [3, 2])
    assert optimal_assignment(inst, inst.facilities).cost == 24
    assert enumerate_best(D, [3, 2]) == 24


def test_insufficient_capacity():
    inst = line_instance({"a": 0, "b": 1, "c": 2}, {"f": 0, "g": 2}, k=2, caps={"f": 1, "g": 1})
    with pytest.raises(InfeasibleError) as e:
        optimal_assignment(inst, ["f", "g"])
    assert e.value.reason == "capacity"


def test_random_against_enumeration():
    rng = np.random.default_rng(3)
    for _ in range(60):
        nc, nf = rng.integers(1, 7), rng.integers(1, 4)
        D = rng.integers(0, 30, size=(nc, nf))
        caps = list(rng.integers(0, nc + 1, size=nf))
        if sum(caps) < nc:
            caps[0] += nc - sum(caps)
        inst = matrix_instance(D, caps)
        sol = optimal_assignment(inst, inst.facilities)
        assert sol.cost == enumerate_best(D, caps)


def test_beats_random_feasible_assignments():
    rng = np.random.default_rng(5)
    for _ in range(10):
        D = rng.integers(1, 50, size=(6, 3))
        caps = [3, 2, 2]
        inst = matrix_instance(D, caps)
        opt = optimal_assignment(inst, inst.facilities).cost
        tried = 0
        while tried < 100:
            a = rng.integers(0, 3, size=6)
            if all((a == j).sum() <= caps[j] for j in range(3)):
                tried += 1
                assert opt <= D[np.arange(6), a].sum()


def test_uncapacitated_equals_nearest():
    rng = np.random.default_rng(9)
    for _ in range(20):
        D = rng.integers(0, 40, size=(7, 3))
        inst = matrix_instance(D, [7, 7, 7])
        assert optimal_assignment(inst, inst.facilities).cost == nearest_assignment_cost(inst, inst.facilities)


def test_integral_for_unit_weights():
    rng = np.random.default_rng(11)
    for _ in range(20):
        D = rng.integers(0, 40, size=(6, 3))
        inst = matrix_instance(D, [2, 2, 3])
        sol = optimal_assignment(inst, inst.facilities)
        assert all(q == 1 for q in sol.mu.values())
        assert sol.rho is not None and len(sol.rho) == 6


def test_fractional_weights_match_lp():
    rng = np.random.default_rng(13)
    for _ in range(15):
        nc, nf = 5, 3
        D = rng.integers(0, 20, size=(nc, nf)).astype(float)
        w = [Fraction(int(rng.integers(1, 7)), int(rng.integers(1, 5))) for _ in range(nc)]
        caps = [int(rng.integers(1, 4)) for _ in range(nf)]
        if sum(caps) < sum(w):
            caps[0] += int(np.ceil(sum(w) - sum(caps)))
        inst = matrix_instance(D, caps, weights=dict(zip([f"c{i}" for i in range(nc)], w)))
        sol = optimal_assignment(inst, inst.facilities)
        # transportation LP: x[i, j] >= 0, rows sum to w_i, columns at most caps_j
        A_eq = np.kron(np.eye(nc), np.ones(nf))
        A_ub = np.kron(np.ones(nc), np.eye(nf))
        lp = linprog(D.ravel(), A_ub=A_ub, b_ub=caps, A_eq=A_eq, b_eq=[float(x) for x in w])
        assert sol.cost == pytest.approx(lp.fun, abs=1e-9)
        assert evaluate_cost(inst, sol) == pytest.approx(sol.cost)
        assert sol.meta["weights_exact"]


def test_scale_weights_caps_denominator():
    q, scale, exact = scale_weights([Fraction(1, 3), Fraction(1, 7)])
    assert (q, scale, exact) == ([7, 3], 21, True)
    q, scale, exact = scale_weights([Fraction(1, 999_983), Fraction(1, 1_000_003)])
    assert scale == 10**6 and not exact


def test_means_uses_squared_costs():
    inst = line_instance({"a": 0, "b": 4}, {"f": 1, "g": 4}, k=2, caps={"f": 1, "g": 1}, objective="means")
    # a->f costs 1, b->g costs 0
    assert optimal_assignment(inst, ["f", "g"]).cost == 1
    inst2 = line_instance({"a": 0, "b": 2}, {"f": 1}, k=1, caps={"f": 2}, objective="means")
    assert optimal_assignment(inst2, ["f"]).cost == 2


def test_min_cost_flow_small_network():
    g = MinCostFlow(4)
    g.add_edge(0, 1, 2, 1.0)
    g.add_edge(0, 2, 2, 2.0)
    g.add_edge(1, 3, 1, 1.0)
    g.add_edge(1, 2, 1, 0.0)
    g.add_edge(2, 3, 3, 1.0)
    # routes: 0-1-3 (2), 0-1-2-3 (2), 0-2-3 (3)
    assert g.run(0, 3, 3) == (3, 7.0)
