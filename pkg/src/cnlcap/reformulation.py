"""Convex reformulation: lifted variables, constraint functions and the per-type set function.

With ``W = A x + Uc`` the objective of each customer type reads
``q (1 - sum_n exp(y_n - z))`` where ``y_n = (sigma_n - 1) log W_n + log Uc_n`` and
``z = log sum_n W_n**sigma_n``.  The blocks ``y_n, theta_n`` only exist for nests
with competitor mass (``Uc_n > 0``); elsewhere the term vanishes identically.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .choice import as_vector, nest_weights_batch, safe_pow, type_shares_batch
from .exceptions import DomainError, NumericRangeError
from .instance import CnlInstance, SolutionVector

EXP_LIMIT = 700.0


@dataclass
class ReformPoint:
    """Values of (W, y, z, theta, phi); ``active`` marks nests with Uc > 0."""

    W: np.ndarray
    y: np.ndarray
    z: np.ndarray
    theta: np.ndarray
    phi: np.ndarray
    active: np.ndarray

    @property
    def value(self) -> float:
        return float(self.phi.sum())

    def copy(self) -> "ReformPoint":
        return ReformPoint(*(np.array(a, copy=True) for a in
                             (self.W, self.y, self.z, self.theta, self.phi, self.active)))


def active_blocks(inst: CnlInstance) -> np.ndarray:
    return inst.Uc > 0


def lift_batch(inst: CnlInstance, X):
    """Exact lift of many binary vectors at once.

    Returns ``(W, y, z, theta, phi)`` with leading batch axis.
    """
    W = nest_weights_batch(inst, X)
    act = active_blocks(inst)[None]
    s = inst.sigma[None]
    psum = safe_pow(W, s).sum(axis=2)
    if np.any(psum <= 0):
        raise DomainError("every nest of some customer type is empty")
    z = np.log(psum)
    with np.errstate(divide="ignore"):
        y = np.where(act, (s - 1.0) * np.log(np.where(act, W, 1.0)) + np.log(np.where(act, inst.Uc, 1.0)), -np.inf)
    theta = np.where(act, np.exp(np.where(act, y, 0.0) - z[:, :, None]), 0.0)
    phi = inst.q[None] * (1.0 - theta.sum(axis=2))
    return W, y, z, theta, phi


def lift(inst: CnlInstance, x) -> ReformPoint:
    """Auxiliary point induced by a location vector; ``phi.sum()`` equals the objective."""
    x = as_vector(x, inst.m)
    W, y, z, theta, phi = (a[0] for a in lift_batch(inst, x))
    return ReformPoint(W, y, z, theta, phi, active_blocks(inst).copy())


def psi_theta(y: float, z: float) -> float:
    if y - z > EXP_LIMIT:
        raise NumericRangeError(f"exp({y - z:g}) overflows")
    return float(np.exp(y - z))


def psi_theta_grad(y: float, z: float) -> tuple[float, float]:
    e = psi_theta(y, z)
    return e, -e


def _check_y_domain(inst, W, t, n):
    uc = inst.Uc[t, n]
    if W <= 0 or uc <= 0:
        raise DomainError(f"log undefined: W={W:g}, Uc={uc:g} for (t={t}, n={n})")
    return uc


def psi_y(inst: CnlInstance, W: float, t: int, n: int) -> float:
    uc = _check_y_domain(inst, W, t, n)
    return float((inst.sigma[t, n] - 1.0) * np.log(W) + np.log(uc))


def psi_y_grad(inst: CnlInstance, W: float, t: int, n: int) -> float:
    _check_y_domain(inst, W, t, n)
    return float((inst.sigma[t, n] - 1.0) / W)


def psi_z(inst: CnlInstance, W_t, t: int) -> float:
    """log of the nest-aggregate for type ``t``; depends on the whole row ``W[t, :]``."""
    total = safe_pow(np.asarray(W_t, dtype=float), inst.sigma[t]).sum()
    if total <= 0:
        raise DomainError("all nests empty")
    return float(np.log(total))


def psi_z_grad(inst: CnlInstance, W_t, t: int) -> np.ndarray:
    """Gradient in ``W[t, :]``; an empty nest with sigma < 1 has infinite slope."""
    W_t = np.asarray(W_t, dtype=float)
    s = inst.sigma[t]
    total = safe_pow(W_t, s).sum()
    if total <= 0:
        raise DomainError("all nests empty")
    g = s * safe_pow(W_t, s - 1.0) / total
    empty = W_t < 1e-300
    g[empty & (s < 1)] = np.inf
    g[empty & (s >= 1)] = 1.0 / total
    return g


def _as_matrix(inst, S):
    # arrays are 0/1 vectors; sets, lists and tuples are index collections
    if isinstance(S, SolutionVector):
        S = S.x
    if isinstance(S, np.ndarray):
        return np.atleast_2d(S.astype(float))
    x = np.zeros(inst.m)
    x[list(S)] = 1.0
    return x[None]


def phi_batch(inst: CnlInstance, X) -> np.ndarray:
    """Per-type captured demand for every row of X, shape (K, T).

    The empty set captures nothing, even in a market without competitors.
    """
    return type_shares_batch(inst, X, empty_ok=True) * inst.q[None]


def phi_set(inst: CnlInstance, t: int, S) -> float:
    """Demand of type ``t`` captured by location set ``S`` (indices or 0/1 vector)."""
    return float(phi_batch(inst, _as_matrix(inst, S))[0, t])


def marginal_gain(inst: CnlInstance, t: int, S, i: int) -> float:
    x = _as_matrix(inst, S)[0]
    if x[i] > 0:
        return 0.0
    y = x.copy()
    y[i] = 1.0
    vals = phi_batch(inst, np.stack([y, x]))
    return float(vals[0, t] - vals[1, t])


def objective_gradient(inst: CnlInstance, x) -> np.ndarray:
    """Gradient of the objective with x treated as continuous.

    Components are ``+inf`` where a location feeds an empty nest with
    ``sigma < 1`` while competitors hold market share.
    """
    x = as_vector(x, inst.m)
    W = nest_weights_batch(inst, x)[0]
    s = inst.sigma
    Uc = inst.Uc
    den = safe_pow(W, s).sum(axis=1)
    if np.any(den <= 0):
        raise DomainError("no facility is available to some customer type")
    lost = (safe_pow(W, s - 1.0) * Uc).sum(axis=1)
    empty = W < 1e-300
    g = s * safe_pow(W, s - 1.0)
    g = np.where(empty, np.where(s < 1, np.inf, 1.0), g)
    with np.errstate(invalid="ignore"):
        h = np.where(Uc > 0, (s - 1.0) * safe_pow(W, s - 2.0) * Uc, 0.0)
        first = np.where(lost[:, None] > 0, lost[:, None] * g, 0.0)
        coef = (first - h * den[:, None]) / den[:, None] ** 2
        contrib = np.where(inst.A > 0, inst.A * coef[:, None, :], 0.0)
    return (inst.q[:, None] * contrib.sum(axis=2)).sum(axis=0)
