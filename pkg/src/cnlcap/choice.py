"""Cross-nested logit choice probabilities and the captured-demand objective.

All batch helpers take a matrix ``X`` of shape ``(K, m)`` whose rows are
(possibly fractional) location vectors and return one value per row.
"""

from __future__ import annotations

import numpy as np

from .exceptions import DomainError, PreconditionError
from .instance import CnlInstance, Config, SolutionVector

TINY_W = 1e-300


def as_vector(x, m: int | None = None) -> np.ndarray:
    if isinstance(x, SolutionVector):
        x = x.x
    x = np.asarray(x, dtype=float)
    if x.ndim != 1 or (m is not None and x.shape[0] != m):
        raise PreconditionError(f"expected a location vector of length {m}, got shape {x.shape}")
    return x


def safe_pow(W, p):
    """``W**p`` with ``0**p`` read as 0 for any exponent (empty nests carry no mass)."""
    W = np.asarray(W, dtype=float)
    p = np.broadcast_to(p, W.shape)
    out = np.zeros(np.broadcast(W, p).shape)
    pos = W >= TINY_W
    with np.errstate(over="ignore", under="ignore"):
        out[pos] = np.exp(p[pos] * np.log(W[pos]))
    return out


def nest_weights_batch(inst: CnlInstance, X) -> np.ndarray:
    """W[k, t, n] for every row of X."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    return np.einsum("km,tmn->ktn", X, inst.A) + inst.Uc[None]


def _shares(inst: CnlInstance, X):
    X = np.atleast_2d(np.asarray(X, dtype=float))
    W = nest_weights_batch(inst, X)
    own = np.einsum("km,tmn->ktn", X, inst.A)
    s = inst.sigma[None]
    num = (safe_pow(W, s - 1.0) * own).sum(axis=2)
    den = safe_pow(W, s).sum(axis=2)
    return num, den


def type_shares_batch(inst: CnlInstance, X, empty_ok: bool = False) -> np.ndarray:
    """Captured share per customer type, shape (K, T); multiply by q for demand.

    With ``empty_ok`` a type facing no facility at all captures 0 instead of
    raising; set-function code uses this for the empty set.
    """
    num, den = _shares(inst, X)
    empty = den <= 0
    if np.any(empty):
        if not empty_ok:
            raise DomainError("no facility is available to some customer type")
        return np.where(empty, 0.0, num / np.where(empty, 1.0, den))
    return num / den


def objective_batch(inst: CnlInstance, X) -> np.ndarray:
    return type_shares_batch(inst, X) @ inst.q


def nest_weight(inst: CnlInstance, t: int, n: int, x) -> float:
    """Total preference weight of nest ``n`` for customer type ``t``."""
    x = as_vector(x, inst.m)
    return float(inst.A[t, :, n] @ x + inst.Uc[t, n])


def choice_probability(inst: CnlInstance, t: int, i: int, x) -> float:
    """Probability that a type-``t`` customer patronises facility ``i``.

    ``i`` may be an open candidate (``x[i] == 1``) or any competitor index.
    """
    x = as_vector(x, inst.m)
    if i < inst.m and x[i] <= 0:
        raise PreconditionError(f"candidate {i} is not open")
    W = nest_weights_batch(inst, x)[0, t]
    s = inst.sigma[t]
    den = safe_pow(W, s).sum()
    if den <= 0:
        raise DomainError("no facility is available")
    scale = x[i] if i < inst.m else 1.0
    mass = inst.alpha[t, i] * inst.V[t, i] * scale
    return float((safe_pow(W, s - 1.0) * mass).sum() / den)


def objective_value(inst: CnlInstance, x) -> float:
    """Expected demand captured by the opened locations."""
    x = as_vector(x, inst.m)
    if x.sum() > inst.r + 1e-9:
        raise PreconditionError(f"{x.sum():g} locations opened, budget is {inst.r}")
    return float(objective_batch(inst, x)[0])


def competitor_nest_mask(inst: CnlInstance) -> np.ndarray:
    """(T, N) mask of nests that hold no candidate mass."""
    return ~(inst.A > 0).any(axis=1)


def objective_value_separated(inst: CnlInstance, x) -> float:
    """Objective in constant-numerator form, valid when competitors sit in their own nests."""
    if inst.config is not Config.SEPARATED:
        raise PreconditionError("separated form requires a separated instance")
    x = as_vector(x, inst.m)
    comp = competitor_nest_mask(inst)
    s = inst.sigma
    Wc = np.where(comp, inst.Uc, 0.0)
    Uc_t = (safe_pow(Wc, s) * comp).sum(axis=1)
    Wx = np.einsum("m,tmn->tn", x, inst.A)
    open_t = (safe_pow(Wx, s) * ~comp).sum(axis=1)
    den = Uc_t + open_t
    if np.any((den <= 0) & (inst.q > 0)):
        raise DomainError("no facility is available to some customer type")
    with np.errstate(invalid="ignore", divide="ignore"):
        lost = np.where(den > 0, Uc_t / den, 0.0)
    return float(inst.q.sum() - (inst.q * lost).sum())


def correlation_estimate(inst: CnlInstance, t: int, i: int, j: int, model: str = "cnl",
                         sigma=None) -> float:
    """Approximate utility correlation between facilities ``i`` and ``j``.

    ``model`` is one of ``cnl``, ``nl`` or ``mnl``. For ``nl`` each facility is
    read as belonging to its largest-membership nest. ``sigma`` overrides the
    dissimilarities of type ``t`` (values down to 0 are accepted here).
    """
    if i == j:
        raise PreconditionError("correlation needs two distinct facilities")
    s = inst.sigma[t] if sigma is None else np.asarray(sigma, dtype=float)
    model = model.lower()
    if model == "mnl":
        return 0.0
    ai, aj = inst.alpha[t, i], inst.alpha[t, j]
    if model == "cnl":
        return float((np.sqrt(ai * aj) * (1.0 - s**2)).sum())
    if model == "nl":
        ni, nj = int(np.argmax(ai)), int(np.argmax(aj))
        return float(1.0 - s[ni] ** 2) if ni == nj else 0.0
    raise PreconditionError(f"unknown choice model {model!r}")
