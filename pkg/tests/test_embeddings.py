import itertools
import math

import numpy as np
import pytest

from conftest import line_instance
from fairrange.assignment import optimal_assignment
from fairrange.embeddings import (clique_star_embed, clique_star_to_tree, frt_tree_embed, full_tree_embed,
                                  kmedian_baseline, poly_approx_solve)
from fairrange.instance import check_feasibility
from fairrange.metric import verify_metric
from fairrange.oracle import brute_force_solve, gen_random_instance, random_metric


def kmedian_opt(inst):
    D = inst.dist_cf
    return min(D[:, list(S)].min(axis=1).sum()
               for S in itertools.combinations(range(len(inst.facilities)), inst.k))


def kmedian_cost(inst, centers):
    cols = [inst.facility_index[f] for f in centers]
    return inst.dist_cf[:, cols].min(axis=1).sum()


def test_baseline_colocated():
    inst = line_instance({"a": 0, "b": 10, "c": 20}, {"x": 0, "y": 10, "z": 20, "w": 5}, k=3)
    S = kmedian_baseline(inst)
    assert set(S) == {"x", "y", "z"}
    assert kmedian_cost(inst, S) == 0


def test_baseline_single_facility():
    inst = line_instance({"a": 0}, {"x": 3}, k=1)
    assert kmedian_baseline(inst) == ("x",)


def test_baseline_within_five_of_optimum():
    for s in range(40):
        inst = gen_random_instance(8, int(s % 3) + 1, 0, (8, 8), "graph", seed=s)
        assert kmedian_cost(inst, kmedian_baseline(inst, p=1)) <= 5 * kmedian_opt(inst)


def test_two_swap_not_worse_than_local_optimum_bound():
    for s in range(10):
        inst = gen_random_instance(10, 3, 0, (10, 10), "graph", seed=s)
        assert kmedian_cost(inst, kmedian_baseline(inst, p=2)) <= (3 + 2 / 2) * kmedian_opt(inst)


def test_clique_star_identity_case():
    inst = gen_random_instance(10, 3, 0, (10, 10), "graph", seed=1)
    cs, csm = clique_star_embed(inst, inst.facilities)
    for c in inst.clients:
        h = csm.hub_of[c]
        assert cs.metric.d(c, h) == inst.metric.d(c, h)
        assert h == min(inst.facilities, key=lambda f: inst.metric.d(c, f))


def test_clique_star_path_bound():
    for s in range(20):
        inst = gen_random_instance(12, 3, 0, (12, 12), "graph", seed=s)
        hubs = kmedian_baseline(inst)
        cs, csm = clique_star_embed(inst, hubs)
        d, dp = inst.metric.d, cs.metric.d
        for c in inst.clients:
            sc = csm.hub_of[c]
            for o in inst.facilities:
                so = csm.hub_of[o]
                assert dp(c, o) == d(c, sc) + d(sc, so) + d(so, o)
                assert dp(c, o) <= 4 * d(c, sc) + 3 * d(c, o)


def test_clique_star_is_dominating_metric():
    for s in range(20):
        inst = gen_random_instance(14, 3, 1, (1, 6), "graph", seed=s)
        cs, csm = clique_star_embed(inst, kmedian_baseline(inst))
        assert verify_metric(cs.metric) == []
        pts = list(cs.metric.ids)
        assert np.all(cs.metric.matrix >= inst.metric.submatrix(pts, pts))
        non_hubs = [p for p in pts if p not in csm.hubs]
        assert all(csm.hub_of[p] in csm.hubs for p in non_hubs)


def test_clique_star_cost_of_optimum_bounded():
    for s in range(20):
        inst = gen_random_instance(10, 2, 1, (2, 5), "graph", seed=s)
        opt = brute_force_solve(inst)
        cs, _ = clique_star_embed(inst, kmedian_baseline(inst))
        assert optimal_assignment(cs, opt.centers).cost <= 23 * opt.cost


def test_frt_single_point():
    et = frt_tree_embed(["a"], np.zeros((1, 1)), seed=0)
    assert len(et.metric) == 1


def test_frt_two_points_within_four():
    D = np.array([[0, 7.0], [7.0, 0]])
    for seed in range(1000):
        d = frt_tree_embed(["a", "b"], D, seed).metric.d("a", "b")
        assert 7 <= d <= 28


def test_frt_domination_and_hard_cap():
    rng = np.random.default_rng(0)
    for s in range(40):
        pts = [f"h{i}" for i in range(int(rng.integers(2, 9)))]
        m = random_metric(rng, pts, "graph")
        D = m.submatrix(pts, pts)
        et = frt_tree_embed(pts, D, s)
        T = et.distances()
        assert np.all(T >= D)
        assert T.max() <= 8 * D.max()


def test_frt_colocated_points():
    D = np.array([[0, 0, 3], [0, 0, 3], [3, 3, 0]], dtype=float)
    et = frt_tree_embed(["a", "b", "c"], D, 1)
    assert et.metric.d("a", "b") == 0
    assert et.metric.d("a", "c") >= 3


def test_frt_expected_stretch_k8():
    rng = np.random.default_rng(8)
    pts = [f"h{i}" for i in range(8)]
    m = random_metric(rng, pts, "graph")
    D = m.submatrix(pts, pts)
    acc = np.zeros_like(D)
    for seed in range(200):
        acc += frt_tree_embed(pts, D, seed).distances()
    off = ~np.eye(8, dtype=bool)
    mean_stretch = (acc / 200)[off] / D[off]
    assert mean_stretch.max() <= 8 * math.log(8)


def test_tree_of_single_hub_is_the_star():
    inst = gen_random_instance(9, 1, 0, (9, 9), "graph", seed=2)
    cs, csm = clique_star_embed(inst, kmedian_baseline(inst))
    tr = clique_star_to_tree(cs, csm, 0)
    pts = list(cs.metric.ids)
    assert np.array_equal(tr.metric.submatrix(pts, pts), cs.metric.matrix)


def test_tree_pendant_decomposition_and_domination():
    for s in range(20):
        inst = gen_random_instance(12, 3, 1, (1, 5), "graph", seed=s)
        cs, csm = clique_star_embed(inst, kmedian_baseline(inst))
        for seed in range(5):
            tr = clique_star_to_tree(cs, csm, seed)
            for c in inst.clients:
                qc = csm.hub_of[c]
                for f in inst.facilities:
                    qf = csm.hub_of[f]
                    want = cs.metric.d(c, qc) + tr.metric.d(qc, qf) + cs.metric.d(qf, f)
                    assert tr.metric.d(c, f) == want
            pts = list(cs.metric.ids)
            assert np.all(tr.metric.submatrix(pts, pts) >= cs.metric.matrix)


def test_cost_monotone_along_embeddings():
    rng = np.random.default_rng(3)
    for s in range(15):
        inst = gen_random_instance(12, 3, 0, (2, 6), "graph", seed=s)
        cs, csm = clique_star_embed(inst, kmedian_baseline(inst))
        tr = clique_star_to_tree(cs, csm, s)
        for _ in range(5):
            S = list(rng.choice(inst.facilities, 3, replace=False))
            if sum(inst.capacities[f] for f in S) < len(inst.clients):
                continue
            a = optimal_assignment(inst, S).cost
            b = optimal_assignment(cs, S).cost
            c = optimal_assignment(tr, S).cost
            assert a <= b <= c


def test_poly_approx_feasible_and_above_optimum():
    for s in range(15):
        for obj in ("median", "means"):
            inst = gen_random_instance(11, 2, 2, (1, 5), "graph", seed=s, objective=obj)
            sol = poly_approx_solve(inst, trials=8, seed=s)
            assert check_feasibility(inst, sol.centers).ok
            assert sol.cost >= brute_force_solve(inst).cost - 1e-9
            assert sol.cost == min(sol.meta["trial_costs"])


def test_poly_approx_reproducible():
    inst = gen_random_instance(14, 3, 1, (1, 5), "graph", seed=21)
    a = poly_approx_solve(inst, trials=6, seed=4)
    b = poly_approx_solve(inst, trials=6, seed=4)
    assert a.centers == b.centers and a.meta["trial_costs"] == b.meta["trial_costs"]


def test_full_mode_embeds_everything():
    inst = gen_random_instance(10, 2, 1, (1, 5), "graph", seed=5)
    tr = full_tree_embed(inst, 0)
    pts = list(dict.fromkeys((*inst.clients, *inst.facilities)))
    assert np.all(tr.metric.submatrix(pts, pts) >= inst.metric.submatrix(pts, pts))
    sol = poly_approx_solve(inst, trials=4, mode="full")
    assert check_feasibility(inst, sol.centers).ok
