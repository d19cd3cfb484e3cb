import math

import numpy as np
import pytest
from scipy.optimize import linprog

from cnlcap.choice import nest_weights_batch, objective_batch
from cnlcap.cuts import CutPool, lin
from cnlcap.drivers import separate
from cnlcap.exceptions import PreconditionError, ResourceLimitError
from cnlcap.master import (MasterNode, argmax_subsets, cardinality_bnb, check_enumerable,
                           evaluate_pool, evaluate_pool_batch, iter_subsets, node_bound,
                           solve_master)
from cnlcap.reformulation import lift

from conftest import random_instance, subsets


def seeded_pool(inst, n_anchors, seed=0, aggregation="per-type"):
    X = subsets(inst.m, inst.r)
    rng = np.random.default_rng(seed)
    pool = CutPool(inst, aggregation)
    for k in rng.choice(len(X), min(n_anchors, len(X)), replace=False):
        pool.add_all_at(X[k])
    return pool


def lp_master_value(inst, pool, x):
    """Master optimum at fixed x by a generic LP over (y, z, theta, phi)."""
    T, N = inst.T, inst.N
    W = nest_weights_batch(inst, x[None])[0]
    act = inst.Uc > 0
    iy = {tn: k for k, tn in enumerate(zip(*np.nonzero(act)))}
    ny = len(iy)
    iz = lambda t: ny + t
    ith = lambda t, n: ny + T + t * N + n
    iphi = lambda t: ny + T + T * N + t
    nv = ny + T + T * N + T
    lo = np.full(nv, -np.inf)
    hi = np.full(nv, np.inf)
    lo[ny + T: ny + T + T * N] = 0.0
    for t in range(T):
        lo[iphi(t)], hi[iphi(t)] = 0.0, inst.q[t]
    rows, rhs = [], []
    for c in pool.cuts:
        if c.kind == "OA1":
            t, n = c.scope
            lo[iy[(t, n)]] = max(lo[iy[(t, n)]], c.const + float(lin(c.coef[("W", t, n)], W[t, n])))
        elif c.kind == "OA2":
            (t,) = c.scope
            g = np.array([c.coef[("W", t, n)] for n in range(N)])
            hi[iz(t)] = min(hi[iz(t)], c.const + float(lin(g, W[t]).sum()))
        elif c.kind == "OA3":
            t, n = c.scope
            row = np.zeros(nv)
            row[ith(t, n)] = -1.0
            row[iy[(t, n)]] = c.coef[("y", t, n)]
            row[iz(t)] = c.coef[("z", t)]
            rows.append(row)
            rhs.append(-c.const)
        else:
            row = np.zeros(nv)
            for t in c.scope:
                row[iphi(t)] = 1.0
            rows.append(row)
            rhs.append(c.const + sum(v * x[k[1]] for k, v in c.coef.items()))
    for t in range(T):
        row = np.zeros(nv)
        row[iphi(t)] = 1.0
        for n in range(N):
            row[ith(t, n)] = inst.q[t]
        rows.append(row)
        rhs.append(inst.q[t])
    cost = np.zeros(nv)
    cost[[iphi(t) for t in range(T)]] = -1.0
    res = linprog(cost, A_ub=np.array(rows), b_ub=np.array(rhs), bounds=list(zip(lo, hi)),
                  method="highs")
    assert res.status == 0, res.message
    return -res.fun


def test_structural_pool_gives_total_demand():
    inst = random_instance(0)
    pool = CutPool(inst)
    X = subsets(inst.m, inst.r)
    assert np.allclose(evaluate_pool_batch(inst, pool, X), inst.total_demand)
    x, ub = solve_master(inst, pool, "exhaustive")
    assert ub == pytest.approx(inst.total_demand)
    assert x.indices == list(range(inst.r))
    assert node_bound(inst, pool, MasterNode.root(inst.m, inst.r)) == pytest.approx(inst.total_demand)


@pytest.mark.parametrize("seed", range(6))
def test_evaluate_pool_matches_lp_oracle(seed):
    inst = random_instance(seed, m=8, r=3, T=2, N=3)
    pool = seeded_pool(inst, 3, seed)
    for x in subsets(8, 3)[::9]:
        assert evaluate_pool(inst, pool, x)[0] == pytest.approx(lp_master_value(inst, pool, x),
                                                                abs=1e-7)


def test_evaluate_pool_matches_lp_with_single_aggregation():
    inst = random_instance(11, m=7, r=2, T=3)
    pool = seeded_pool(inst, 4, 1, aggregation="single")
    for x in subsets(7, 2)[::4]:
        assert evaluate_pool(inst, pool, x)[0] == pytest.approx(lp_master_value(inst, pool, x),
                                                                abs=1e-7)


def test_anchor_reproduced_and_relaxation_holds():
    inst = random_instance(3, m=8, r=3)
    X = subsets(8, 3)
    xbar = X[17]
    pool = CutPool(inst)
    pool.add_all_at(xbar)
    value, point = evaluate_pool(inst, pool, xbar)
    exact = lift(inst, xbar)
    assert value >= objective_batch(inst, xbar)[0] - 1e-9
    assert np.allclose(point.theta, exact.theta, atol=1e-9)
    assert value == pytest.approx(exact.value, abs=1e-9)
    assert np.all(evaluate_pool_batch(inst, pool, X) >= objective_batch(inst, X) - 1e-8)


def test_master_value_shrinks_as_cuts_are_added():
    inst = random_instance(4, m=8, r=3)
    X = subsets(8, 3)
    pool = CutPool(inst)
    prev = evaluate_pool_batch(inst, pool, X)
    F = objective_batch(inst, X)
    for x in X[::7]:
        separate(inst, pool, x)
        cur = evaluate_pool_batch(inst, pool, X)
        assert np.all(cur <= prev + 1e-12)
        assert np.all(cur >= F - 1e-8)
        prev = cur


def random_node(rng, m, r):
    status = np.full(m, -1, dtype=np.int8)
    order = rng.permutation(m)
    n_open = rng.integers(0, r + 1)
    n_closed = rng.integers(0, m - r + 1)
    status[order[:n_open]] = 1
    status[order[n_open: n_open + n_closed]] = 0
    return MasterNode(status, r)


@pytest.mark.parametrize("seed", range(5))
def test_node_bound_dominates_completions(seed):
    inst = random_instance(seed, m=8, r=3)
    pool = seeded_pool(inst, 4, seed)
    rng = np.random.default_rng(seed)
    for _ in range(30):
        node = random_node(rng, 8, 3)
        comps = np.array(list(node.completions()), dtype=float)
        b = node_bound(inst, pool, node)
        if len(comps) == 0:
            assert b == -np.inf
            continue
        assert b >= evaluate_pool_batch(inst, pool, comps).max() - 1e-10
        for i in node.free:
            for val in (1, 0):
                assert node_bound(inst, pool, node.child(i, val)) <= b + 1e-12


def test_node_bound_exact_on_leaves():
    inst = random_instance(7)
    pool = seeded_pool(inst, 3)
    for x in subsets(inst.m, inst.r)[::5]:
        node = MasterNode(x.astype(np.int8), inst.r)
        assert node_bound(inst, pool, node) == pytest.approx(evaluate_pool(inst, pool, x)[0],
                                                             abs=1e-12)


def test_bnb_and_exhaustive_agree_on_200_pairs():
    for k in range(200):
        rng = np.random.default_rng(k)
        m = int(rng.integers(5, 10))
        r = int(rng.integers(1, 4))
        inst = random_instance(k, m=m, r=r, T=int(rng.integers(1, 4)), N=int(rng.integers(2, 4)))
        pool = seeded_pool(inst, int(rng.integers(0, 5)), k)
        _, ub_e = solve_master(inst, pool, "exhaustive")
        x_b, ub_b = solve_master(inst, pool, "branch-and-bound")
        assert ub_b == pytest.approx(ub_e, abs=1e-9)
        assert evaluate_pool(inst, pool, x_b.x)[0] == pytest.approx(ub_b, abs=1e-12)
        assert node_bound(inst, pool, MasterNode.root(m, r)) >= ub_e - 1e-12


def test_master_node_bookkeeping():
    node = MasterNode.root(5, 2).child(0, 1).child(3, 0)
    assert node.fixed_open == [0] and node.fixed_closed == [3]
    assert node.free == [1, 2, 4]
    assert node.remaining == 1
    assert not set(node.fixed_open) & set(node.fixed_closed)
    assert len(list(node.completions())) == 3


def test_cardinality_bnb_on_modular_bound():
    w = np.array([0.3, 2.0, -1.0, 1.5, 0.7, 1.5])

    def bound(status):
        k = 2 - int((status == 1).sum())
        free = w[status == -1]
        return w[status == 1].sum() + np.sort(free)[::-1][:k].sum()

    res = cardinality_bnb(6, 2, bound)
    assert res.complete and res.termination == "converged"
    assert list(np.flatnonzero(res.x)) == [1, 3]
    assert res.value == pytest.approx(3.5)
    capped = cardinality_bnb(6, 2, bound, node_cap=0)
    assert capped.termination == "iteration-cap"
    assert capped.upper_bound >= 3.5


def test_iter_subsets_chunks_in_lexicographic_order():
    whole = np.vstack(list(iter_subsets(7, 3)))
    assert np.array_equal(whole, subsets(7, 3).astype(np.int8))
    parts = list(iter_subsets(30, 5, chunk=50_000))
    assert sum(len(p) for p in parts) == math.comb(30, 5) and len(parts) > 1


def test_enumeration_ceiling():
    assert check_enumerable(10, 3) == 120
    with pytest.raises(ResourceLimitError):
        check_enumerable(40, 10)
    with pytest.raises(ResourceLimitError):
        argmax_subsets(10, 3, lambda X: X.sum(axis=1), ceiling=100)
    inst = random_instance(0)
    with pytest.raises(ResourceLimitError):
        solve_master(inst, CutPool(inst), "exhaustive", ceiling=10)
    with pytest.raises(PreconditionError):
        solve_master(inst, CutPool(inst), "simplex")
