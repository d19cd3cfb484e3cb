"""Exact solution of the cut-pool master problem without an LP/MILP solver.

For fixed binary ``x`` every continuous block of the master has a closed-form
optimum: ``y`` sits on the highest OA1 cut, ``z`` on the lowest OA2 cut,
``theta`` on the highest OA3 cut at that ``(y, z)``, and ``phi`` on the lowest
of its upper bounds.  Maximising over ``x`` with ``sum(x) == r`` is done either
by enumeration or by best-first branch-and-bound with per-cut sorting bounds.
"""

from __future__ import annotations

import heapq
import itertools
import math
import time
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .choice import as_vector, nest_weights_batch
from .cuts import CutPool, lin
from .exceptions import PreconditionError, ResourceLimitError
from .instance import CnlInstance, SolutionVector
from .reformulation import ReformPoint, active_blocks

EXHAUSTIVE_CEILING = 2_000_000
AUTO_EXHAUSTIVE_LIMIT = 20_000
_CHUNK = 20_000


def _mul(c, v):
    # 0 * inf read as 0
    with np.errstate(invalid="ignore"):
        out = c * v
    return np.where(c == 0, 0.0, out)


def _group_reduce(vals, seg, size, ufunc, fill):
    """Reduce columns of ``vals`` (K, C), already sorted by bucket, into ``size`` buckets."""
    K = vals.shape[0]
    out = np.full((K, size), fill, dtype=float)
    if vals.shape[1] == 0:
        return out
    starts, buckets = seg
    out[:, buckets] = ufunc.reduceat(vals, starts, axis=1)
    return out


def _continuous_blocks(inst: CnlInstance, pool: CutPool, W, sc_vals):
    """Closed-form (y, z, theta, phi) given W (K, T, N) and SC right-hand sides (K, C4)."""
    C = pool.compiled()
    K = W.shape[0]
    T, N = inst.T, inst.N
    y = _group_reduce(C["oa1_a"][None] + C["oa1_b"][None] * W[:, C["oa1_t"], C["oa1_n"]],
                      C["oa1_seg"], T * N, np.maximum, -np.inf).reshape(K, T, N)
    if len(C["oa2_t"]):
        z_vals = C["oa2_c"][None] + lin(C["oa2_g"][None], W[:, C["oa2_t"], :]).sum(axis=2)
    else:
        z_vals = np.zeros((K, 0))
    z = _group_reduce(z_vals, C["oa2_seg"], T, np.minimum, np.inf)
    t3, n3 = C["oa3_t"], C["oa3_n"]
    th_vals = C["oa3_c"][None] + _mul(C["oa3_cy"][None], y[:, t3, n3]) + _mul(C["oa3_cz"][None], z[:, t3])
    theta = np.maximum(_group_reduce(th_vals, C["oa3_seg"], T * N, np.maximum, -np.inf), 0.0)
    theta = theta.reshape(K, T, N)
    q = inst.q[None]
    u = np.clip(np.minimum(q * (1.0 - theta.sum(axis=2)), q), 0.0, None)
    G = len(pool.groups)
    u_group = np.zeros((K, G))
    np.add.at(u_group, (slice(None), pool.group_of), u)
    sc_min = _group_reduce(sc_vals, C["sc_seg"], G, np.minimum, np.inf)
    total = np.maximum(np.minimum(u_group, sc_min), 0.0)
    with np.errstate(invalid="ignore", divide="ignore"):
        scale = np.where(u_group > 0, total / np.where(u_group > 0, u_group, 1.0), 0.0)
    phi = u * scale[:, pool.group_of]
    return y, z, theta, phi, total.sum(axis=1)


def evaluate_pool_batch(inst: CnlInstance, pool: CutPool, X, return_point: bool = False):
    """Master value (and optionally the optimal continuous point) for each row of X."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    W = nest_weights_batch(inst, X)
    C = pool.compiled()
    sc_vals = C["sc_c"][None] + X @ C["sc_d"].T
    y, z, theta, phi, value = _continuous_blocks(inst, pool, W, sc_vals)
    if return_point:
        return value, (W, y, z, theta, phi)
    return value


def evaluate_pool(inst: CnlInstance, pool: CutPool, x):
    """Optimal master value with ``x`` fixed, and the maximising continuous point."""
    x = as_vector(x, inst.m)
    value, (W, y, z, theta, phi) = evaluate_pool_batch(inst, pool, x, return_point=True)
    point = ReformPoint(W[0], y[0], z[0], theta[0], phi[0], active_blocks(inst))
    return float(value[0]), point


@dataclass
class MasterNode:
    """Partial assignment: ``status[i]`` is 1 (open), 0 (closed) or -1 (free)."""

    status: np.ndarray
    r: int

    @classmethod
    def root(cls, m: int, r: int) -> "MasterNode":
        return cls(np.full(m, -1, dtype=np.int8), r)

    @property
    def fixed_open(self) -> list[int]:
        return [int(i) for i in np.flatnonzero(self.status == 1)]

    @property
    def fixed_closed(self) -> list[int]:
        return [int(i) for i in np.flatnonzero(self.status == 0)]

    @property
    def free(self) -> list[int]:
        return [int(i) for i in np.flatnonzero(self.status == -1)]

    @property
    def remaining(self) -> int:
        return self.r - int((self.status == 1).sum())

    def child(self, i: int, value: int) -> "MasterNode":
        s = self.status.copy()
        s[i] = value
        return MasterNode(s, self.r)

    def completions(self):
        free = self.free
        for extra in itertools.combinations(free, self.remaining):
            x = (self.status == 1).astype(np.int8)
            x[list(extra)] = 1
            yield x


def _topk_sum(vals, k):
    """Sum of the k largest entries along the last axis."""
    if k <= 0 or vals.shape[-1] == 0:
        return np.zeros(vals.shape[:-1])
    if k >= vals.shape[-1]:
        return vals.sum(axis=-1)
    part = -np.partition(-vals, k - 1, axis=-1)[..., :k]
    return part.sum(axis=-1)


def node_bound(inst: CnlInstance, pool: CutPool, node) -> float:
    """Upper bound on the master value over every completion of ``node``."""
    status = node.status if isinstance(node, MasterNode) else np.asarray(node)
    k = inst.r - int((status == 1).sum())
    free = np.flatnonzero(status == -1)
    if k < 0 or k > len(free):
        return -np.inf
    xf = (status == 1).astype(float)
    C = pool.compiled()
    W_fix = np.einsum("m,tmn->tn", xf, inst.A) + inst.Uc
    Af = inst.A[:, free, :]
    W_max = W_fix + _topk_sum(np.moveaxis(Af, 1, 2), k)

    # OA2 caps on z: each cut is nondecreasing in x, take its best completion
    if len(C["oa2_t"]):
        g = C["oa2_g"]
        t2 = C["oa2_t"]
        base = C["oa2_c"] + lin(g, W_fix[t2]).sum(axis=1)
        h = lin(g[:, None, :], Af[t2]).sum(axis=2)            # (C2, F)
        z_vals = (base + _topk_sum(h, k))[None]
    else:
        z_vals = np.zeros((1, 0))
    z_ub = _group_reduce(z_vals, C["oa2_seg"], inst.T, np.minimum, np.inf)

    sc_d = C["sc_d"]
    sc_vals = (C["sc_c"] + sc_d @ xf + _topk_sum(sc_d[:, free], k))[None]

    # y from OA1 is nonincreasing in W, so its floor sits at W_max
    W = W_max[None]
    T, N = inst.T, inst.N
    y = _group_reduce(C["oa1_a"][None] + C["oa1_b"][None] * W[:, C["oa1_t"], C["oa1_n"]],
                      C["oa1_seg"], T * N, np.maximum, -np.inf).reshape(1, T, N)
    t3, n3 = C["oa3_t"], C["oa3_n"]
    th_vals = C["oa3_c"][None] + _mul(C["oa3_cy"][None], y[:, t3, n3]) + _mul(C["oa3_cz"][None], z_ub[:, t3])
    theta = np.maximum(_group_reduce(th_vals, C["oa3_seg"], T * N, np.maximum, -np.inf), 0.0)
    theta = theta.reshape(1, T, N)
    q = inst.q[None]
    u = np.clip(np.minimum(q * (1.0 - theta.sum(axis=2)), q), 0.0, None)
    G = len(pool.groups)
    u_group = np.zeros((1, G))
    np.add.at(u_group, (slice(None), pool.group_of), u)
    sc_min = _group_reduce(sc_vals, C["sc_seg"], G, np.minimum, np.inf)
    return float(np.maximum(np.minimum(u_group, sc_min), 0.0).sum())


@dataclass
class BnbResult:
    x: np.ndarray | None
    value: float
    upper_bound: float
    nodes: int
    complete: bool
    termination: str


def cardinality_bnb(m: int, r: int, bound, on_leaf=None, scores=None, gap: float = 0.0,
                    version=None, incumbent=None, node_cap=None, deadline=None) -> BnbResult:
    """Best-first branch-and-bound over ``{x in {0,1}^m : sum(x) == r}``.

    ``bound(status)`` must upper-bound every completion and be exact on complete
    assignments.  ``on_leaf(x, value)`` returns ``(incumbent_value, residual_bound)``
    and may tighten ``bound`` (lazy cuts); ``version()`` signals such changes so
    stale node bounds are recomputed when popped.
    """
    best_x, best = (None, -np.inf) if incumbent is None else incumbent
    ver = version or (lambda: 0)
    heap = []
    seq = itertools.count()
    residual = -np.inf
    nodes = 0
    termination = "converged"

    def visit_leaf(status):
        nonlocal best_x, best, residual
        x = (status == 1).astype(np.int8)
        v = bound(status)
        inc, res = (v, v) if on_leaf is None else on_leaf(x, v)
        residual = max(residual, res)
        if inc > best:
            best, best_x = inc, x

    def consider(status, depth):
        nonlocal residual
        k = r - int((status == 1).sum())
        nfree = int((status == -1).sum())
        if k < 0 or k > nfree:
            return
        if k == 0 or k == nfree:
            leaf = status.copy()
            leaf[leaf == -1] = 1 if k else 0
            visit_leaf(leaf)
            return
        b = bound(status)
        if b <= best + gap:
            residual = max(residual, b)
            return
        heapq.heappush(heap, (-b, -depth, next(seq), status, ver()))

    consider(np.full(m, -1, dtype=np.int8), 0)
    while heap:
        if node_cap is not None and nodes >= node_cap:
            termination = "iteration-cap"
            break
        if deadline is not None and time.monotonic() >= deadline:
            termination = "time-cap"
            break
        negb, negd, _, status, v = heapq.heappop(heap)
        b = -negb
        if v != ver():
            b = min(b, bound(status))
        if b <= best + gap:
            residual = max(residual, b)
            continue
        nodes += 1
        free = np.flatnonzero(status == -1)
        sc = scores() if scores is not None else None
        j = int(free[np.argmax(sc[free])]) if sc is not None else int(free[0])
        for val in (1, 0):
            child = status.copy()
            child[j] = val
            consider(child, -negd + 1)
    pending = max((-h[0] for h in heap), default=-np.inf)
    ub = max(best, residual, pending)
    return BnbResult(best_x, float(best), float(ub), nodes, not heap, termination)


@lru_cache(maxsize=8)
def _subset_matrix(m: int, r: int) -> np.ndarray:
    combos = np.array(list(itertools.combinations(range(m), r)), dtype=np.intp)
    X = np.zeros((len(combos), m), dtype=np.int8)
    X[np.arange(len(combos))[:, None], combos] = 1
    X.setflags(write=False)
    return X


def iter_subsets(m: int, r: int, chunk: int = _CHUNK):
    """Yield all r-subsets as 0/1 matrices in lexicographic order of index tuples."""
    total = math.comb(m, r)
    if total * m <= 4_000_000:
        yield _subset_matrix(m, r)
        return
    it = itertools.combinations(range(m), r)
    while True:
        block = list(itertools.islice(it, chunk))
        if not block:
            return
        idx = np.array(block, dtype=np.intp)
        X = np.zeros((len(idx), m), dtype=np.int8)
        X[np.arange(len(idx))[:, None], idx] = 1
        yield X


def check_enumerable(m: int, r: int, ceiling: int = EXHAUSTIVE_CEILING):
    total = math.comb(m, r)
    if total > ceiling:
        raise ResourceLimitError(f"C({m},{r}) = {total} exceeds the enumeration ceiling {ceiling}")
    return total


def argmax_subsets(m: int, r: int, values_fn, ceiling: int = EXHAUSTIVE_CEILING):
    """First maximiser of ``values_fn`` over all r-subsets (lexicographic tie-break)."""
    check_enumerable(m, r, ceiling)
    best_v, best_x = -np.inf, None
    for X in iter_subsets(m, r):
        vals = values_fn(X)
        k = int(np.argmax(vals))
        if vals[k] > best_v:
            best_v, best_x = float(vals[k]), X[k].copy()
    return best_x, best_v


def branching_scores(pool: CutPool) -> np.ndarray:
    d = pool.compiled()["sc_d"]
    if d.shape[0] == 0:
        return np.zeros(pool.inst.m)
    return np.abs(d).sum(axis=0)


def solve_master(inst: CnlInstance, pool: CutPool, mode: str = "auto",
                 ceiling: int = EXHAUSTIVE_CEILING):
    """Maximise the master over binary ``x`` with ``sum(x) == r``.

    ``mode`` is ``exhaustive``, ``branch-and-bound`` or ``auto`` (enumerate when
    at most ``AUTO_EXHAUSTIVE_LIMIT`` subsets exist).  Returns ``(x, ub)``.
    """
    if mode == "auto":
        mode = "exhaustive" if math.comb(inst.m, inst.r) <= AUTO_EXHAUSTIVE_LIMIT else "branch-and-bound"
    if mode == "exhaustive":
        x, ub = argmax_subsets(inst.m, inst.r, lambda X: evaluate_pool_batch(inst, pool, X), ceiling)
    elif mode in ("branch-and-bound", "bnb"):
        res = cardinality_bnb(inst.m, inst.r, lambda s: node_bound(inst, pool, s),
                              scores=lambda: branching_scores(pool))
        x, ub = res.x, res.value
    else:
        raise PreconditionError(f"unknown master mode {mode!r}")
    return SolutionVector(x, None), float(ub)
