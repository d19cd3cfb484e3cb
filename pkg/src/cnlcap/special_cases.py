"""Polynomial solvers for one customer type under MNL and NL choice."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .choice import objective_value
from .exceptions import PreconditionError
from .instance import CnlInstance, SolutionVector

MAX_BISECTIONS = 200


def _first_r(inst: CnlInstance) -> SolutionVector:
    return SolutionVector.from_indices(inst.m, range(inst.r))


def mnl_t1_solve(inst: CnlInstance) -> SolutionVector:
    """Open the ``r`` candidates with the largest utility (ties to the lower index)."""
    if inst.T != 1:
        raise PreconditionError("MNL solver needs exactly one customer type")
    if inst.N != 1 and not np.all(inst.sigma == 1.0):
        raise PreconditionError("instance is not MNL (needs one nest or all sigma = 1)")
    order = np.lexsort((np.arange(inst.m), -inst.v[0, : inst.m]))
    idx = np.sort(order[: inst.r])
    x = SolutionVector.from_indices(inst.m, idx)
    return SolutionVector(x.x, objective_value(inst, x))


@dataclass
class NestTable:
    """Per-nest best weights: ``W[n][u]`` uses the ``u`` largest members of nest ``n``."""

    nest_of: np.ndarray
    members: list
    W: list
    uc: np.ndarray
    sigma: np.ndarray

    @classmethod
    def build(cls, inst: CnlInstance) -> "NestTable":
        if inst.T != 1:
            raise PreconditionError("NL solver needs exactly one customer type")
        A = inst.alpha[0, : inst.m]
        if not np.all((A > 0).sum(axis=1) == 1):
            raise PreconditionError("NL solver needs one nest per candidate location")
        nest_of = np.argmax(A, axis=1)
        members, W = [], []
        for n in range(inst.N):
            idx = np.flatnonzero(nest_of == n)
            Vn = inst.V[0, idx, n]
            order = np.lexsort((idx, -Vn))
            idx, Vn = idx[order], Vn[order]
            members.append(idx)
            W.append(np.concatenate([[0.0], np.cumsum(Vn)])[: inst.r + 1] + inst.Uc[0, n])
        return cls(nest_of, members, W, inst.Uc[0].copy(), inst.sigma[0].copy())

    def costs(self, n: int, delta: float) -> np.ndarray:
        """G contribution of nest ``n`` for ``u = 0, 1, ...`` open sites."""
        W, s, uc = self.W[n], self.sigma[n], self.uc[n]
        out = np.zeros_like(W)
        pos = W > 0
        out[pos] = W[pos] ** (s - 1.0) * uc - delta * W[pos] ** s
        return out


def nl_dp(inst: CnlInstance, delta: float, table: NestTable | None = None):
    """Minimise ``sum_n W_n^(s-1) Uc_n - delta W_n^s`` over exactly ``r`` open sites.

    Returns ``(value, x, ops)`` where ``ops`` counts inner DP transitions.
    """
    table = table or NestTable.build(inst)
    r, N = inst.r, inst.N
    inf = np.inf
    # best[w] = min cost over nests n.. with w sites still to place
    best = np.full(r + 1, inf)
    best[0] = 0.0
    choice = np.zeros((N, r + 1), dtype=int)
    ops = 0
    for n in range(N - 1, -1, -1):
        g = table.costs(n, delta)
        cap = len(g) - 1
        new = np.full(r + 1, inf)
        for w in range(r + 1):
            for u in range(min(cap, w) + 1):
                ops += 1
                val = g[u] + best[w - u]
                if val < new[w]:
                    new[w], choice[n, w] = val, u
        best = new
    if not np.isfinite(best[r]):
        raise PreconditionError("cannot place r sites")
    x = np.zeros(inst.m, dtype=np.int8)
    w = r
    for n in range(N):
        u = choice[n, w]
        x[table.members[n][:u]] = 1
        w -= u
    return float(best[r]), x, ops


@dataclass
class NLSearchResult:
    solution: SolutionVector
    iterations: int
    dp_ops: int
    bracket: tuple


def nl_t1_search(inst: CnlInstance, eps: float | None = None) -> NLSearchResult:
    """Bisection on the lost-share ratio with a nest DP at each step."""
    q = float(inst.q[0]) if inst.T == 1 else 0.0
    table = NestTable.build(inst)
    if not np.any(table.uc > 0) or q <= 0:
        x = _first_r(inst)
        return NLSearchResult(SolutionVector(x.x, objective_value(inst, x)), 0, 0, (0.0, 0.0))
    eps = 1e-9 * q if eps is None else eps
    lo, hi = 0.0, 2.0
    best_x, best_f = None, -np.inf
    ops_total = it = 0

    def consider(x):
        nonlocal best_x, best_f
        f = objective_value(inst, x)
        if f > best_f:
            best_x, best_f = x, f

    _, x, ops = nl_dp(inst, hi, table)
    ops_total += ops
    consider(x)
    while hi - lo > eps / (2.0 * q) and it < MAX_BISECTIONS:
        it += 1
        mid = 0.5 * (lo + hi)
        g, x, ops = nl_dp(inst, mid, table)
        ops_total += ops
        consider(x)
        if g <= 0:
            hi = mid
        else:
            lo = mid
    return NLSearchResult(SolutionVector(best_x, best_f), it, ops_total, (lo, hi))


def nl_t1_solve(inst: CnlInstance, eps: float | None = None) -> SolutionVector:
    """eps-optimal location set for a single customer type under nested logit."""
    return nl_t1_search(inst, eps).solution
