"""Outer-approximation and submodular cuts for the lifted program.

Cut senses (all valid for every exactly-lifted binary point)::

    OA1   y[t,n]   >= a + b * W[t,n]                 b = (sigma - 1) / Wbar <= 0
    OA2   z[t]     <= c + sum_n g_n * W[t,n]         g = grad log sum W**sigma >= 0
    OA3   theta    >= e * (1 + (y - ybar) - (z - zbar))
    SC1,2 sum_{t in group} phi[t] <= c + d . x

together with the structural bounds ``theta >= 0`` and ``0 <= phi[t] <= q[t]``
and the link ``phi[t] <= q[t] (1 - sum_n theta[t,n])``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .choice import as_vector
from .exceptions import ConfigurationError
from .instance import CnlInstance
from .reformulation import (
    ReformPoint,
    active_blocks,
    lift,
    phi_batch,
    psi_theta,
    psi_y,
    psi_z,
    psi_z_grad,
)

OA_KINDS = ("OA1", "OA2", "OA3")
SC_KINDS = ("SC1", "SC2")
ANCHOR_DIGITS = 12


def lin(coef, val):
    """``coef * val`` where an infinite slope on a zero value contributes 0."""
    coef = np.asarray(coef, dtype=float)
    val = np.asarray(val, dtype=float)
    inf = np.isinf(coef)
    if not inf.any():
        return coef * val
    with np.errstate(invalid="ignore"):
        out = np.where(inf, 0.0, coef) * val
    hit = inf & (val > 0)
    return np.where(hit, np.inf, out)


def type_groups(T: int, aggregation: str = "per-type") -> list[tuple[int, ...]]:
    """Partition of customer types used to aggregate submodular cuts.

    ``per-type`` keeps one group per type, ``single`` sums all types and
    ``group:K`` splits the types into ``K`` contiguous blocks.
    """
    if aggregation in (None, "per-type"):
        return [(t,) for t in range(T)]
    if aggregation == "single":
        return [tuple(range(T))]
    if isinstance(aggregation, str) and aggregation.startswith("group:"):
        try:
            k = int(aggregation.split(":", 1)[1])
        except ValueError:
            raise ConfigurationError(f"bad aggregation {aggregation!r}") from None
        if k < 1:
            raise ConfigurationError("group count must be positive")
        return [tuple(int(t) for t in block) for block in np.array_split(np.arange(T), min(k, T))]
    raise ConfigurationError(f"unknown aggregation {aggregation!r}")


@dataclass
class LinearCut:
    """One linear inequality ``target (sense) const + sum coef[var] * var``.

    Variable keys are tuples: ``("W", t, n)``, ``("x", i)``, ``("y", t, n)``,
    ``("z", t)``, ``("theta", t, n)`` and ``("phi", t1, t2, ...)`` for a sum of
    per-type captured demands.
    """

    kind: str
    scope: tuple
    target: tuple
    sense: str
    const: float
    coef: dict = field(default_factory=dict)

    def rhs(self, point: ReformPoint, x) -> float:
        total = self.const
        for key, c in self.coef.items():
            total += float(lin(c, _lookup(key, point, x)))
        return total

    def slack(self, point: ReformPoint, x) -> float:
        """Nonnegative when the cut holds at ``(point, x)``."""
        lhs = _lookup(self.target, point, x)
        rhs = self.rhs(point, x)
        return float(lhs - rhs) if self.sense == ">=" else float(rhs - lhs)


def _lookup(key, point: ReformPoint, x):
    name = key[0]
    if name == "x":
        return float(x[key[1]])
    if name == "phi":
        return float(sum(point.phi[t] for t in key[1:]))
    if name == "z":
        return float(point.z[key[1]])
    arr = {"W": point.W, "y": point.y, "theta": point.theta}[name]
    return float(arr[key[1], key[2]])


def structural_cuts(inst: CnlInstance) -> list[LinearCut]:
    cuts = []
    for t in range(inst.T):
        for n in range(inst.N):
            cuts.append(LinearCut("Structural", (t, n), ("theta", t, n), ">=", 0.0))
        cuts.append(LinearCut("Structural", (t,), ("phi", t), ">=", 0.0))
        cuts.append(LinearCut("Structural", (t,), ("phi", t), "<=", float(inst.q[t])))
    return cuts


def make_oa_cuts(inst: CnlInstance, at: ReformPoint, which=None) -> list[LinearCut]:
    """Tangent cuts of the three nonlinear constraints at ``at``.

    ``which`` optionally restricts generation to violation ids as returned by
    :func:`check_violations` (``("y", t, n)``, ``("z", t)``, ``("theta", t, n)``).
    """
    act = active_blocks(inst)
    want = None if which is None else set(which)
    cuts = []
    for t in range(inst.T):
        for n in range(inst.N):
            if not act[t, n] or (want is not None and ("y", t, n) not in want):
                continue
            Wb = float(at.W[t, n])
            b = (inst.sigma[t, n] - 1.0) / Wb
            a = psi_y(inst, Wb, t, n) - b * Wb
            cuts.append(LinearCut("OA1", (t, n), ("y", t, n), ">=", a, {("W", t, n): b}))
        if want is None or ("z", t) in want:
            Wt = np.asarray(at.W[t], dtype=float)
            g = psi_z_grad(inst, Wt, t)
            c = psi_z(inst, Wt, t) - float(lin(g, Wt).sum())
            cuts.append(LinearCut("OA2", (t,), ("z", t), "<=", c,
                                  {("W", t, n): float(g[n]) for n in range(inst.N)}))
        for n in range(inst.N):
            if not act[t, n] or (want is not None and ("theta", t, n) not in want):
                continue
            yb, zb = float(at.y[t, n]), float(at.z[t])
            e = psi_theta(yb, zb)
            cuts.append(LinearCut("OA3", (t, n), ("theta", t, n), ">=", e * (1.0 - yb + zb),
                                  {("y", t, n): e, ("z", t): -e}))
    return cuts


def _sc_terms(inst: CnlInstance, xbar: np.ndarray):
    """Per-type SC1/SC2 constants and coefficient rows at binary ``xbar``."""
    m = inst.m
    eye = np.eye(m)
    ones = np.ones(m)
    rows = np.vstack([
        xbar[None],                       # Phi(xbar)
        np.maximum(xbar[None], eye),      # Phi(xbar + e_i)
        xbar[None] * (1 - eye),           # Phi(xbar - e_i)
        ones[None],                       # Phi(e)
        ones[None] - eye,                 # Phi(e - e_i)
        eye,                              # Phi(e_i)
    ])
    vals = phi_batch(inst, rows)
    base = vals[0]
    plus = vals[1 : 1 + m]
    minus = vals[1 + m : 1 + 2 * m]
    full = vals[1 + 2 * m]
    all_but = vals[2 + 2 * m : 2 + 3 * m]
    single = vals[2 + 3 * m :]

    inside = xbar > 0.5
    rho_x = (plus - base).T                # rho_i(xbar), zero for i in xbar
    rho_rest = (full - all_but).T          # rho_i(e - e_i)
    rho_0 = single.T                       # rho_i(0); Phi(0) = 0
    rho_drop = (base - minus).T            # rho_i(xbar - e_i)

    d1 = np.where(inside, rho_rest, rho_x)
    c1 = base - (rho_rest * inside).sum(axis=1)
    d2 = np.where(inside, rho_drop, rho_0)
    c2 = base - (rho_drop * inside).sum(axis=1)
    return base, (c1, d1), (c2, d2)


def make_sc_cuts(inst: CnlInstance, xbar, groups=None) -> list[LinearCut]:
    """Submodular upper bounds on captured demand, tight at binary ``xbar``."""
    xbar = as_vector(xbar, inst.m)
    groups = type_groups(inst.T) if groups is None else groups
    _, sc1, sc2 = _sc_terms(inst, xbar)
    cuts = []
    for kind, (c, d) in (("SC1", sc1), ("SC2", sc2)):
        for g in groups:
            idx = list(g)
            row = d[idx].sum(axis=0)
            cuts.append(LinearCut(kind, tuple(g), ("phi",) + tuple(g), "<=", float(c[idx].sum()),
                                  {("x", i): float(row[i]) for i in range(inst.m)}))
    return cuts


def check_violations(inst: CnlInstance, x, point: ReformPoint, tol: float = 1e-9,
                     groups=None) -> list[tuple]:
    """Nonlinear constraints the candidate ``(x, point)`` violates by more than ``tol``.

    Ids are ``("theta", t, n)``, ``("y", t, n)``, ``("z", t)`` and ``("phi",) + group``.
    """
    x = as_vector(x, inst.m)
    exact = lift(inst, x)
    act = active_blocks(inst)
    groups = type_groups(inst.T) if groups is None else groups
    out = []
    for t in range(inst.T):
        for n in range(inst.N):
            if not act[t, n]:
                continue
            y, z = point.y[t, n], point.z[t]
            bound = 0.0 if (y == -np.inf or z == np.inf) else np.exp(min(y - z, 700.0))
            if point.theta[t, n] < bound - tol:
                out.append(("theta", t, n))
        for n in range(inst.N):
            if act[t, n] and point.y[t, n] < exact.y[t, n] - tol:
                out.append(("y", t, n))
        if point.z[t] > exact.z[t] + tol:
            out.append(("z", t))
    for g in groups:
        idx = list(g)
        if point.phi[idx].sum() > exact.phi[idx].sum() + tol:
            out.append(("phi",) + tuple(g))
    return out


_FAMILIES = {
    "oa1": (("t", int, lambda N, m: ()), ("n", int, lambda N, m: ()),
            ("a", float, lambda N, m: ()), ("b", float, lambda N, m: ())),
    "oa2": (("t", int, lambda N, m: ()), ("c", float, lambda N, m: ()),
            ("g", float, lambda N, m: (N,))),
    "oa3": (("t", int, lambda N, m: ()), ("n", int, lambda N, m: ()),
            ("c", float, lambda N, m: ()), ("cy", float, lambda N, m: ()),
            ("cz", float, lambda N, m: ())),
    "sc": (("g", int, lambda N, m: ()), ("c", float, lambda N, m: ()),
           ("d", float, lambda N, m: (m,))),
}


def _bucket_key(fam, arrs, N):
    if fam in ("oa1", "oa3"):
        return arrs["t"] * N + arrs["n"]
    return arrs["t"] if fam == "oa2" else arrs["g"]


def _segments(key):
    """(starts, bucket ids) of runs in a sorted key array."""
    if len(key) == 0:
        return np.zeros(0, dtype=int), np.zeros(0, dtype=int)
    starts = np.flatnonzero(np.r_[True, key[1:] != key[:-1]])
    return starts, key[starts]


class CutPool:
    """Growing store of cuts with compiled arrays for vectorised evaluation."""

    def __init__(self, inst: CnlInstance, aggregation: str = "per-type"):
        self.inst = inst
        self.aggregation = aggregation
        self.groups = type_groups(inst.T, aggregation)
        self.group_of = np.empty(inst.T, dtype=int)
        for k, g in enumerate(self.groups):
            self.group_of[list(g)] = k
        self.cuts: list[LinearCut] = []
        self.version = 0
        self._anchors: dict = {}
        T, N, m = inst.T, inst.N, inst.m
        self._pending = {f: [] for f in _FAMILIES}
        self._arrays = {
            f: {c: np.zeros((0, *shape(N, m)), dtype=dt) for c, dt, shape in cols}
            for f, cols in _FAMILIES.items()
        }
        self._compiled = None
        self.structural = structural_cuts(inst)
        self._shape = (T, N, m)

    def __len__(self):
        return len(self.cuts)

    def counts(self) -> dict[str, int]:
        out = {k: 0 for k in OA_KINDS + SC_KINDS}
        for c in self.cuts:
            out[c.kind] += 1
        return out

    def _is_duplicate(self, key, anchor) -> bool:
        seen = self._anchors.setdefault(key, set())
        anchor = np.atleast_1d(np.asarray(anchor, dtype=float))
        digest = np.round(anchor, ANCHOR_DIGITS).tobytes()
        if digest in seen:
            return True
        seen.add(digest)
        return False

    def add(self, cut: LinearCut, anchor=None) -> bool:
        """Append ``cut`` unless a cut of the same kind and scope shares its anchor."""
        if anchor is not None and self._is_duplicate((cut.kind, cut.scope), anchor):
            return False
        self.cuts.append(cut)
        T, N, m = self._shape
        if cut.kind == "OA1":
            t, n = cut.scope
            self._pending["oa1"].append((t, n, cut.const, cut.coef[("W", t, n)]))
        elif cut.kind == "OA2":
            (t,) = cut.scope
            row = np.array([cut.coef.get(("W", t, n), 0.0) for n in range(N)])
            self._pending["oa2"].append((t, cut.const, row))
        elif cut.kind == "OA3":
            t, n = cut.scope
            self._pending["oa3"].append((t, n, cut.const, cut.coef[("y", t, n)], cut.coef[("z", t)]))
        elif cut.kind in SC_KINDS:
            g = self.groups.index(tuple(cut.scope))
            row = np.array([cut.coef.get(("x", i), 0.0) for i in range(m)])
            self._pending["sc"].append((g, cut.const, row))
        else:
            raise ValueError(f"cannot store cut kind {cut.kind}")
        self.version += 1
        self._compiled = None
        return True

    def add_oa(self, at: ReformPoint, which=None) -> int:
        added = 0
        for cut in make_oa_cuts(self.inst, at, which):
            if cut.kind == "OA1":
                anchor = at.W[cut.scope]
            elif cut.kind == "OA2":
                anchor = at.W[cut.scope[0]]
            else:
                t, n = cut.scope
                anchor = (at.y[t, n], at.z[t])
            added += self.add(cut, anchor)
        return added

    def add_sc(self, xbar, which_groups=None) -> int:
        xbar = as_vector(xbar, self.inst.m)
        added = 0
        for cut in make_sc_cuts(self.inst, xbar, self.groups):
            if which_groups is not None and tuple(cut.scope) not in which_groups:
                continue
            added += self.add(cut, xbar)
        return added

    def add_all_at(self, x) -> int:
        """Every OA and SC cut anchored at the exact lift of ``x``."""
        return self.add_oa(lift(self.inst, x)) + self.add_sc(x)

    def compiled(self):
        """Cut data as arrays sorted by bucket, with ``*_seg`` reduceat segments."""
        if self._compiled is None:
            T, N, m = self._shape
            out = {}
            for fam, cols in _FAMILIES.items():
                arrs = self._arrays[fam]
                rows = self._pending[fam]
                if rows:
                    for j, (c, dt, _) in enumerate(cols):
                        new = np.array([row[j] for row in rows], dtype=dt)
                        arrs[c] = np.concatenate([arrs[c], new])
                    key = _bucket_key(fam, arrs, N)
                    order = np.argsort(key, kind="stable")
                    for c in arrs:
                        arrs[c] = arrs[c][order]
                    rows.clear()
                for c, a in arrs.items():
                    out[f"{fam}_{c}"] = a
                out[f"{fam}_seg"] = _segments(_bucket_key(fam, arrs, N))
            self._compiled = out
        return self._compiled
