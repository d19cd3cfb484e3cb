"""End-to-end solvers: cutting plane, branch-and-cut, direct OA and greedy baselines."""

from __future__ import annotations

import itertools
import math
import time
from dataclasses import asdict, dataclass, field

import numpy as np

from .choice import objective_batch, objective_value
from .cuts import CutPool, check_violations, lin
from .exceptions import PreconditionError
from .instance import CnlInstance, SolutionVector
from .master import (
    _topk_sum,
    argmax_subsets,
    branching_scores,
    cardinality_bnb,
    evaluate_pool,
    evaluate_pool_batch,
    node_bound,
    solve_master,
    AUTO_EXHAUSTIVE_LIMIT,
)
from .reformulation import lift, objective_gradient
from .special_cases import mnl_t1_solve, nl_t1_search

ITER_CAP = 10_000
TIME_CAP = 3600.0
VIOLATION_TOL = 1e-9
EXCHANGE_PASSES = 50
ENUM_SUBTREE = 64


@dataclass
class SolveReport:
    method: str
    incumbent: SolutionVector
    lb: float
    ub: float
    eps: float
    optimal: bool
    iterations: int
    cuts: dict = field(default_factory=dict)
    time_s: float = 0.0
    termination: str = "converged"
    history: list = field(default_factory=list)
    candidates: list = field(default_factory=list)

    @property
    def gap(self) -> float:
        return self.ub - self.lb

    @property
    def cuts_oa(self) -> int:
        return sum(v for k, v in self.cuts.items() if k.startswith("OA"))

    @property
    def cuts_sc(self) -> int:
        return sum(v for k, v in self.cuts.items() if k.startswith("SC"))

    def to_dict(self) -> dict:
        d = asdict(self)
        d["incumbent"] = self.incumbent.indices
        d["value"] = self.incumbent.value
        d["ub"] = None if math.isinf(self.ub) else self.ub
        d["gap"] = None if math.isinf(self.gap) else self.gap
        d["history"] = [dict(h, ub=None if math.isinf(h["ub"]) else h["ub"]) for h in self.history]
        return d


def default_eps(inst: CnlInstance) -> float:
    return 1e-6 * inst.total_demand


def _finish(method, inst, x, lb, ub, eps, iterations, cuts, t0, termination,
            history=(), candidates=(), exact=True) -> SolveReport:
    x = np.asarray(x, dtype=np.int8)
    value = objective_value(inst, x)
    lb = value
    ub = max(ub, lb)
    optimal = bool(exact and ub - lb <= eps)
    return SolveReport(method, SolutionVector(x, value), lb, ub, eps, optimal, iterations,
                       dict(cuts), round(time.monotonic() - t0, 3), termination,
                       list(history), list(candidates))


def greedy_solve(inst: CnlInstance, exchange: bool = True) -> SolveReport:
    """Greedy additions up to ``r`` sites, then first-improvement swaps."""
    t0 = time.monotonic()
    m = inst.m
    x = np.zeros(m)
    for _ in range(inst.r):
        cand = np.flatnonzero(x == 0)
        X = np.repeat(x[None], len(cand), axis=0)
        X[np.arange(len(cand)), cand] = 1.0
        x[cand[int(np.argmax(objective_batch(inst, X)))]] = 1.0
    current = float(objective_batch(inst, x)[0])
    passes = 0
    while exchange and passes < EXCHANGE_PASSES:
        passes += 1
        inside, outside = np.flatnonzero(x == 1), np.flatnonzero(x == 0)
        if len(outside) == 0:
            break
        pairs = [(i, j) for i in inside for j in outside]
        X = np.repeat(x[None], len(pairs), axis=0)
        for k, (i, j) in enumerate(pairs):
            X[k, i], X[k, j] = 0.0, 1.0
        vals = objective_batch(inst, X)
        better = np.flatnonzero(vals > current + 1e-12)
        if len(better) == 0:
            break
        i, j = pairs[better[0]]
        x[i], x[j] = 0.0, 1.0
        current = float(vals[better[0]])
    return _finish("greedy", inst, x, current, np.inf, 0.0, passes, {}, t0, "converged",
                   exact=False)


def exhaustive_solve(inst: CnlInstance, ceiling=None) -> SolveReport:
    """Enumerate every r-subset; the reference optimum for small markets."""
    t0 = time.monotonic()
    kwargs = {} if ceiling is None else {"ceiling": ceiling}
    x, v = argmax_subsets(inst.m, inst.r, lambda X: objective_batch(inst, X), **kwargs)
    return _finish("exhaustive", inst, x, v, v, 0.0, math.comb(inst.m, inst.r), {}, t0,
                   "converged")


def separate(inst: CnlInstance, pool: CutPool, x, tol: float = VIOLATION_TOL) -> int:
    """Add OA/SC cuts at the lift of ``x`` for every violated constraint.

    Repeats until the master point at ``x`` satisfies all nonlinear constraints,
    so that the master value at ``x`` collapses to the true objective.
    """
    added = 0
    exact = None
    for _ in range(4):
        _, point = evaluate_pool(inst, pool, x)
        viol = check_violations(inst, x, point, tol, pool.groups)
        if not viol:
            break
        exact = exact or lift(inst, x)
        oa = [v for v in viol if v[0] != "phi"]
        groups = {tuple(v[1:]) for v in viol if v[0] == "phi"}
        new = (pool.add_oa(exact, which=oa) if oa else 0)
        new += (pool.add_sc(x, which_groups=groups) if groups else 0)
        added += new
        if not new:
            break
    return added


def _seed_pool(inst, aggregation, pool=None):
    pool = CutPool(inst, aggregation) if pool is None else pool
    seed = greedy_solve(inst, exchange=True)
    pool.add_all_at(seed.incumbent.x)
    return pool, seed


def cp_solve(inst: CnlInstance, eps=None, iter_cap: int = ITER_CAP, time_cap: float = TIME_CAP,
             aggregation: str = "per-type", master_mode: str = "auto",
             pool: CutPool | None = None) -> SolveReport:
    """Cutting-plane method on the lifted convex program.

    A caller-supplied ``pool`` is used in place and keeps every generated cut.
    """
    t0 = time.monotonic()
    deadline = t0 + time_cap
    eps = default_eps(inst) if eps is None else eps
    pool, seed = _seed_pool(inst, aggregation, pool)
    incumbent, lb, ub = seed.incumbent.x, seed.lb, np.inf
    history, candidates, seen = [], [], set()
    it = 0
    termination = "converged"
    while ub - lb > eps:
        if it >= iter_cap:
            termination = "iteration-cap"
            break
        if time.monotonic() >= deadline:
            termination = "time-cap"
            break
        sol, master_ub = solve_master(inst, pool, master_mode)
        it += 1
        ub = min(ub, master_ub)
        xbar = sol.x
        fx = objective_value(inst, xbar)
        if fx > lb:
            lb, incumbent = fx, xbar
        history.append({"iter": it, "lb": lb, "ub": ub})
        key = xbar.tobytes()
        if key in seen:
            break
        seen.add(key)
        candidates.append(tuple(int(i) for i in np.flatnonzero(xbar)))
        if ub - lb <= eps:
            break
        separate(inst, pool, xbar)
    return _finish("cp", inst, incumbent, lb, ub, eps, it, pool.counts(), t0, termination,
                   history, candidates)


def bc_solve(inst: CnlInstance, eps=None, node_cap=None, time_cap: float = TIME_CAP,
             aggregation: str = "per-type", pool: CutPool | None = None) -> SolveReport:
    """Single search tree; complete assignments trigger lazy cut separation."""
    t0 = time.monotonic()
    eps = default_eps(inst) if eps is None else eps
    pool, seed = _seed_pool(inst, aggregation, pool)

    def on_leaf(x, value):
        fx = objective_value(inst, x)
        separate(inst, pool, x)
        return fx, evaluate_pool(inst, pool, x)[0]

    def bound(status):
        k = inst.r - int((status == 1).sum())
        free = np.flatnonzero(status == -1)
        if 0 <= k <= len(free) and math.comb(len(free), k) <= ENUM_SUBTREE:
            # small subtree: the exact master maximum over its completions
            X = np.repeat((status == 1)[None].astype(float), math.comb(len(free), k), axis=0)
            for row, extra in zip(X, itertools.combinations(free, k)):
                row[list(extra)] = 1.0
            return float(evaluate_pool_batch(inst, pool, X).max())
        return node_bound(inst, pool, status)

    res = cardinality_bnb(
        inst.m, inst.r,
        bound,
        on_leaf=on_leaf,
        scores=lambda: branching_scores(pool),
        gap=eps,
        version=lambda: pool.version,
        incumbent=(seed.incumbent.x, seed.lb),
        node_cap=node_cap,
        deadline=t0 + time_cap,
    )
    termination = res.termination if not res.complete else "converged"
    return _finish("bc", inst, res.x, res.value, res.upper_bound, eps, res.nodes, pool.counts(),
                   t0, termination)


class _TangentPool:
    """Cuts ``theta <= c_k + d_k . x`` on the objective itself."""

    def __init__(self, inst):
        self.inst = inst
        self.c, self.d = [], []

    def add(self, x):
        x = np.asarray(x, dtype=float)
        g = objective_gradient(self.inst, x)
        fx = float(objective_batch(self.inst, x)[0])
        self.c.append(fx - float(lin(g, x).sum()))
        self.d.append(g)

    def values(self, X):
        cap = self.inst.total_demand
        X = np.atleast_2d(np.asarray(X, dtype=float))
        if not self.c:
            return np.full(X.shape[0], cap)
        D = np.array(self.d)
        vals = np.array(self.c)[None] + lin(D[None], X[:, None, :]).sum(axis=2)
        return np.minimum(vals.min(axis=1), cap)

    def bound(self, status):
        cap = self.inst.total_demand
        if not self.c:
            return cap
        k = self.inst.r - int((status == 1).sum())
        free = np.flatnonzero(status == -1)
        D = np.array(self.d)
        xf = (status == 1).astype(float)
        vals = np.array(self.c) + lin(D, xf[None]).sum(axis=1) + _topk_sum(D[:, free], k)
        return float(min(vals.min(), cap))

    def scores(self):
        if not self.d:
            return np.zeros(self.inst.m)
        D = np.array(self.d)
        return np.where(np.isinf(D), 1e300, np.abs(D)).sum(axis=0)


def doa_solve(inst: CnlInstance, eps=None, iter_cap: int = ITER_CAP, time_cap: float = TIME_CAP,
              master_mode: str = "auto") -> SolveReport:
    """Outer approximation applied directly to the objective (heuristic unless concave)."""
    t0 = time.monotonic()
    deadline = t0 + time_cap
    eps = default_eps(inst) if eps is None else eps
    tp = _TangentPool(inst)
    incumbent, lb, ub = None, -np.inf, np.inf
    history, seen = [], set()
    it = 0
    termination = "converged"
    if master_mode == "auto":
        master_mode = "exhaustive" if math.comb(inst.m, inst.r) <= AUTO_EXHAUSTIVE_LIMIT else "bnb"
    while True:
        if it >= iter_cap:
            termination = "iteration-cap"
            break
        if time.monotonic() >= deadline and incumbent is not None:
            termination = "time-cap"
            break
        if master_mode == "exhaustive":
            xbar, master_ub = argmax_subsets(inst.m, inst.r, tp.values)
        else:
            res = cardinality_bnb(inst.m, inst.r, tp.bound, scores=tp.scores)
            xbar, master_ub = res.x, res.value
        it += 1
        ub = min(ub, master_ub)
        fx = objective_value(inst, xbar)
        if fx > lb:
            lb, incumbent = fx, xbar
        history.append({"iter": it, "lb": lb, "ub": ub})
        key = xbar.tobytes()
        if ub - lb <= eps or key in seen:
            break
        seen.add(key)
        tp.add(xbar)
    return _finish("doa", inst, incumbent, lb, np.inf, eps, it, {"OA": len(tp.c)}, t0,
                   termination, history, exact=False)


METHOD_NAMES = ("cp", "bc", "doa", "greedy", "exhaustive", "mnl-t1", "nl-t1")


def run_method(inst: CnlInstance, method: str = "cp", eps=None, iter_limit: int = ITER_CAP,
               time_limit: float = TIME_CAP, aggregation: str = "per-type") -> SolveReport:
    """Dispatch by method name; single-type solvers are wrapped into a report too."""
    t0 = time.monotonic()
    if method == "cp":
        return cp_solve(inst, eps, iter_limit, time_limit, aggregation)
    if method == "bc":
        return bc_solve(inst, eps, node_cap=iter_limit, time_cap=time_limit,
                        aggregation=aggregation)
    if method == "doa":
        return doa_solve(inst, eps, iter_limit, time_limit)
    if method == "greedy":
        return greedy_solve(inst, exchange=True)
    if method == "exhaustive":
        return exhaustive_solve(inst)
    if method == "mnl-t1":
        sol = mnl_t1_solve(inst)
        return _finish(method, inst, sol.x, sol.value, sol.value, 0.0, 0, {}, t0, "converged")
    if method == "nl-t1":
        res = nl_t1_search(inst, eps)
        tol = 1e-9 * float(inst.q[0]) if eps is None else eps
        sol = res.solution
        # bisection certifies the value only up to its tolerance
        return _finish(method, inst, sol.x, sol.value, sol.value + tol, tol, res.iterations, {},
                       t0, "converged")
    raise PreconditionError(f"unknown method {method!r}; choose from {', '.join(METHOD_NAMES)}")
