"""Synthetic market generation and choice-model simplification.

Draw order for a seed (all from one ``numpy.random.default_rng(seed)``):

1. costs, ``uniform(lo, hi, (T, m + C))`` unless supplied
2. candidate nest memberships (resampled until every nest has two locations)
3. competitor spillover nests
4. membership weights ``uniform(0, 1, (T, m + C, N))``
5. dissimilarities by Box-Muller from ``random((2, ceil(T N / 2)))``
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import Callable

import numpy as np

from .exceptions import ConfigurationError
from .instance import CnlInstance, Config, SolutionVector

SIGMA_CLIP = (0.1, 1.0)
MAX_RESAMPLES = 10_000


@dataclass
class GenConfig:
    """Parameters of a random market; ``n_competitors`` defaults to ``N``."""

    m: int
    T: int
    r: int
    N: int = 5
    seed: int = 0
    beta: float = 0.05
    alpha_comp: float = 1.0
    gamma: float = 1.2
    mu: float = 0.5
    omega: float = 0.2
    config: str = "sharing"
    n_competitors: int | None = None
    cost_range: tuple = (1.0, 100.0)
    costs: np.ndarray | None = field(default=None, repr=False)
    demand: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        self.config = Config(self.config).value
        if self.n_competitors is None:
            self.n_competitors = self.N
        self.validate()

    @property
    def n_facilities(self) -> int:
        return self.m + self.n_competitors

    def validate(self):
        if self.m < 1 or self.T < 1 or self.N < 1 or self.n_competitors < 0:
            raise ConfigurationError("m, T and N must be positive")
        if not 1 <= self.r <= self.m:
            raise ConfigurationError(f"r={self.r} outside [1, m]")
        if self.gamma < 1 or self.mu < 0 or self.omega < 0:
            raise ConfigurationError("need gamma >= 1 and mu, omega >= 0")
        if self.gamma > 2:
            raise ConfigurationError("each location gains at most one extra nest, so gamma <= 2")
        cand_nests = self.N - 1 if self.config == "separated" else self.N
        if self.config == "separated":
            if self.N < 2:
                raise ConfigurationError("separated markets need a nest reserved for competitors")
            if self.n_competitors < 2:
                raise ConfigurationError("the competitor nest needs two facilities")
        if self.gamma > 1 and cand_nests < 2:
            raise ConfigurationError("overlap needs at least two candidate nests")
        if 2 * cand_nests > self.m + (self.n_competitors if self.config == "sharing" else 0):
            raise ConfigurationError("too few locations to give every nest two members")
        lo, hi = self.cost_range
        if not 0 <= lo <= hi:
            raise ConfigurationError("cost range must satisfy 0 <= lo <= hi")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["cost_range"] = list(self.cost_range)
        d["costs"] = "file" if self.costs is not None else "random-uniform"
        d["demand"] = "file" if self.demand is not None else "unit"
        return d


def box_muller(rng: np.random.Generator, size: int) -> np.ndarray:
    """Standard normal draws from pairs of uniforms."""
    half = math.ceil(size / 2)
    u1, u2 = rng.random((2, half))
    rad = np.sqrt(-2.0 * np.log1p(-u1))
    z = np.concatenate([rad * np.cos(2 * np.pi * u2), rad * np.sin(2 * np.pi * u2)])
    return z[:size]


def sample_sigma(rng, T: int, N: int, mu: float, omega: float):
    """Returns (clipped, raw) dissimilarities of shape (T, N)."""
    raw = (mu + omega * box_muller(rng, T * N)).reshape(T, N)
    return np.clip(raw, *SIGMA_CLIP), raw


def _candidate_memberships(rng, cfg: GenConfig, Nc: int, comp_counts: np.ndarray):
    m = cfg.m
    extra = math.ceil(round((cfg.gamma - 1) * m, 9))
    for _ in range(MAX_RESAMPLES):
        mask = np.zeros((m, Nc), dtype=bool)
        primary = rng.integers(0, Nc, m)
        mask[np.arange(m), primary] = True
        if extra:
            chosen = rng.choice(m, size=extra, replace=False)
            shift = rng.integers(1, Nc, extra)
            mask[chosen, (primary[chosen] + shift) % Nc] = True
        if np.all(mask.sum(axis=0) + comp_counts >= 2):
            return mask
    raise ConfigurationError("could not give every nest two locations")


def generate(cfg: GenConfig) -> CnlInstance:
    """Random market; identical seeds give identical instances."""
    rng = np.random.default_rng(cfg.seed)
    m, T, N, C = cfg.m, cfg.T, cfg.N, cfg.n_competitors
    F = m + C
    sep = cfg.config == "separated"

    if cfg.costs is None:
        costs = rng.uniform(*cfg.cost_range, (T, F))
    else:
        costs = np.asarray(cfg.costs, dtype=float)
        if costs.shape != (T, F) or np.any(costs < 0):
            raise ConfigurationError(f"cost matrix must be nonnegative with shape {(T, F)}")

    mask = np.zeros((F, N), dtype=bool)
    anchors = np.full(C, N - 1) if sep else np.arange(C) % N
    mask[m + np.arange(C), anchors] = True
    Nc = N - 1 if sep else N
    comp_counts = np.zeros(Nc, dtype=int) if sep else mask[m:].sum(axis=0)
    mask[:m, :Nc] = _candidate_memberships(rng, cfg, Nc, comp_counts)
    if not sep and cfg.gamma > 1 and C:
        spill = (anchors + rng.integers(1, N, C)) % N
        mask[m + np.arange(C), spill] = True

    # the floor keeps a sole membership from drawing an exact zero
    w = np.where(mask[None], np.maximum(rng.uniform(0.0, 1.0, (T, F, N)), 1e-12), 0.0)
    w[:, m + np.arange(C), anchors] += 1.0
    alpha = w / w.sum(axis=2, keepdims=True)

    sigma, _ = sample_sigma(rng, T, N, cfg.mu, cfg.omega)

    v = -cfg.beta * costs
    v[:, m:] *= cfg.alpha_comp
    q = np.ones(T) if cfg.demand is None else np.asarray(cfg.demand, dtype=float)
    meta = {"generator": cfg.to_dict(), "competitor_nests": [int(a) for a in anchors]}
    return CnlInstance(alpha, sigma, v, q, m, cfg.r, config=cfg.config, meta=meta)


def simplify_to_mnl(inst: CnlInstance) -> CnlInstance:
    """Same market with every dissimilarity set to one."""
    meta = dict(inst.meta, simplified="mnl")
    return inst.replace(sigma=np.ones_like(inst.sigma), meta=meta)


def simplify_to_nl(inst: CnlInstance) -> CnlInstance:
    """Each facility keeps only its largest-membership nest (lowest index on ties)."""
    hot = np.zeros_like(inst.alpha)
    T, F, _ = inst.alpha.shape
    best = np.argmax(inst.alpha, axis=2)
    hot[np.arange(T)[:, None], np.arange(F)[None], best] = 1.0
    meta = dict(inst.meta, simplified="nl")
    return inst.replace(alpha=hot, meta=meta)


def percent_loss(inst: CnlInstance, simplify: Callable[[CnlInstance], CnlInstance],
                 solver: Callable | None = None, optimum: float | None = None) -> float:
    """Relative shortfall (in %) of the simplified model's optimum under the true objective.

    ``solver`` maps an instance to a report or SolutionVector and defaults to
    exhaustive search; ``optimum`` skips re-solving the original instance.
    """
    from .choice import objective_value
    from .drivers import exhaustive_solve

    solver = solver or exhaustive_solve

    def solve(i):
        out = solver(i)
        return out if isinstance(out, SolutionVector) else out.incumbent

    best = objective_value(inst, solve(inst)) if optimum is None else optimum
    x_s = solve(simplify(inst))
    if best <= 0:
        return 0.0
    return (best - objective_value(inst, x_s)) / best * 100.0
