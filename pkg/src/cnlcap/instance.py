"""Problem data for the maximum capture problem under cross-nested logit demand.

Facilities are indexed ``0..m-1`` for candidate locations and ``m..m+C-1`` for
the competitor facilities already present in the market.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Any, Mapping

import numpy as np

from .exceptions import ConfigurationError

ALPHA_SUM_TOL = 1e-9
SIGMA_MIN = 1e-6


class Config(str, enum.Enum):
    SHARING = "sharing"
    SEPARATED = "separated"


def _readonly(a: np.ndarray) -> np.ndarray:
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class CnlInstance:
    """Immutable cross-nested logit market.

    Parameters
    ----------
    alpha : array (T, m + C, N)
        Nest membership degrees; each ``alpha[t, i]`` row sums to one.
    sigma : array (T, N)
        Nest dissimilarity parameters in ``(0, 1]``.
    v : array (T, m + C)
        Deterministic utilities.
    q : array (T,)
        Demand of each customer type.
    m : int
        Number of candidate locations; the remaining facilities are competitors.
    r : int
        Number of facilities to open.
    """

    alpha: np.ndarray
    sigma: np.ndarray
    v: np.ndarray
    q: np.ndarray
    m: int
    r: int
    config: Config = Config.SHARING
    meta: Mapping[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        alpha = _readonly(self.alpha)
        sigma = _readonly(self.sigma)
        v = _readonly(self.v)
        q = _readonly(np.atleast_1d(self.q))
        object.__setattr__(self, "alpha", alpha)
        object.__setattr__(self, "sigma", sigma)
        object.__setattr__(self, "v", v)
        object.__setattr__(self, "q", q)
        object.__setattr__(self, "m", int(self.m))
        object.__setattr__(self, "r", int(self.r))
        object.__setattr__(self, "config", Config(self.config))
        object.__setattr__(self, "meta", dict(self.meta))
        self._validate()

        # exp(v / sigma) per (t, i, n); underflow to 0 is harmless
        with np.errstate(under="ignore"):
            V = np.exp(v[:, :, None] / sigma[:, None, :])
        A = alpha * V
        object.__setattr__(self, "V", _readonly(V))
        object.__setattr__(self, "A", _readonly(A[:, : self.m, :]))
        object.__setattr__(self, "Uc", _readonly(A[:, self.m :, :].sum(axis=1)))
        members = tuple(
            tuple(tuple(np.flatnonzero(alpha[t, :, n] > 0)) for n in range(self.N))
            for t in range(self.T)
        )
        object.__setattr__(self, "nest_members", members)

    def _validate(self):
        a, s, v, q = self.alpha, self.sigma, self.v, self.q
        if a.ndim != 3:
            raise ConfigurationError("alpha must have shape (T, m + C, N)")
        T, F, N = a.shape
        if s.shape != (T, N):
            raise ConfigurationError(f"sigma must have shape {(T, N)}, got {s.shape}")
        if v.shape != (T, F):
            raise ConfigurationError(f"v must have shape {(T, F)}, got {v.shape}")
        if q.shape != (T,):
            raise ConfigurationError(f"q must have shape {(T,)}, got {q.shape}")
        if not 1 <= self.m <= F:
            raise ConfigurationError(f"m={self.m} outside [1, {F}]")
        if not 1 <= self.r <= self.m:
            raise ConfigurationError(f"r={self.r} outside [1, m={self.m}]")
        if np.any(q < 0) or not np.all(np.isfinite(q)):
            raise ConfigurationError("demands must be finite and nonnegative")
        if np.any(a < 0) or np.any(a > 1):
            raise ConfigurationError("memberships must lie in [0, 1]")
        if np.any(np.abs(a.sum(axis=2) - 1.0) > ALPHA_SUM_TOL):
            raise ConfigurationError("memberships of every (type, facility) must sum to 1")
        if np.any(s < SIGMA_MIN) or np.any(s > 1):
            raise ConfigurationError("dissimilarity parameters must lie in (0, 1]")
        if not np.all(np.isfinite(v)):
            raise ConfigurationError("utilities must be finite")
        if self.config is Config.SEPARATED:
            cand = (a[:, : self.m, :] > 0).any(axis=1)
            comp = (a[:, self.m :, :] > 0).any(axis=1)
            if np.any(cand & comp):
                raise ConfigurationError(
                    "separated configuration requires nests without both candidates and competitors"
                )

    @property
    def T(self) -> int:
        return self.alpha.shape[0]

    @property
    def N(self) -> int:
        return self.alpha.shape[2]

    @property
    def n_competitors(self) -> int:
        return self.alpha.shape[1] - self.m

    @property
    def competitors(self) -> list[int]:
        return list(range(self.m, self.alpha.shape[1]))

    @property
    def total_demand(self) -> float:
        return float(self.q.sum())

    def replace(self, **changes) -> "CnlInstance":
        fields = dict(
            alpha=self.alpha, sigma=self.sigma, v=self.v, q=self.q, m=self.m,
            r=self.r, config=self.config, meta=self.meta,
        )
        fields.update(changes)
        return CnlInstance(**fields)

    def __repr__(self):
        return (
            f"CnlInstance(m={self.m}, C={self.n_competitors}, T={self.T}, N={self.N}, "
            f"r={self.r}, config={self.config.value})"
        )


@dataclass
class SolutionVector:
    """Binary open/closed decision with its cached objective value."""

    x: np.ndarray
    value: float | None = None

    def __post_init__(self):
        self.x = np.asarray(self.x, dtype=np.int8)

    @classmethod
    def from_indices(cls, m: int, indices, value=None) -> "SolutionVector":
        x = np.zeros(m, dtype=np.int8)
        x[list(indices)] = 1
        return cls(x, value)

    @property
    def indices(self) -> list[int]:
        return [int(i) for i in np.flatnonzero(self.x)]

    def __len__(self):
        return len(self.x)
