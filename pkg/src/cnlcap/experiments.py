"""Batch studies: choice-model comparison and parameter sweeps."""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor

import numpy as np
from scipy.stats import spearmanr

from .choice import objective_value
from .drivers import cp_solve, exhaustive_solve, run_method
from .instance import CnlInstance
from .instances import GenConfig, generate, simplify_to_mnl, simplify_to_nl
from .io import RESULT_COLUMNS, result_row
from .master import AUTO_EXHAUSTIVE_LIMIT

COMPARE_COLUMNS = ("instance", "model", "m", "T", "N", "r", "F_star", "F_simplified",
                   "loss_pct", "seed")
SWEEP_COLUMNS = RESULT_COLUMNS + ("param", "value")
SWEEP_GRIDS = {
    "mu": (0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9),
    "gamma": (1.1, 1.2, 1.3, 1.4, 1.5),
}
SIMPLIFIERS = {"mnl": simplify_to_mnl, "nl": simplify_to_nl}


def exact_solve(inst: CnlInstance):
    """Enumeration for small markets, the cutting-plane method otherwise."""
    if math.comb(inst.m, inst.r) <= AUTO_EXHAUSTIVE_LIMIT:
        return exhaustive_solve(inst)
    return cp_solve(inst)


def compare_instance(inst: CnlInstance, name: str, seed=None) -> list[dict]:
    """One %Loss row per simplified choice model."""
    best = exact_solve(inst).lb
    rows = []
    for model, simplify in SIMPLIFIERS.items():
        x = exact_solve(simplify(inst)).incumbent
        f = objective_value(inst, x)
        loss = (best - f) / best * 100.0 if best > 0 else 0.0
        rows.append({"instance": name, "model": model, "m": inst.m, "T": inst.T, "N": inst.N,
                     "r": inst.r, "F_star": best, "F_simplified": f, "loss_pct": loss,
                     "seed": seed if seed is not None else ""})
    return rows


def run_compare(named_instances) -> tuple[list[dict], dict]:
    """Rows for every ``(name, instance)`` pair and the mean loss per model."""
    rows = []
    for name, inst in named_instances:
        seed = inst.meta.get("generator", {}).get("seed")
        rows.extend(compare_instance(inst, name, seed))
    means = {model: float(np.mean([r["loss_pct"] for r in rows if r["model"] == model]))
             for model in SIMPLIFIERS} if rows else {}
    return rows, means


def _sweep_one(task):
    param, value, seed, base, method, time_limit = task
    cfg = GenConfig(**dict(base, seed=seed, **{param: value}))
    inst = generate(cfg)
    rep = run_method(inst, method, time_limit=time_limit)
    row = result_row(rep, inst, f"{param}={value:g}_s{seed}", seed)
    row.update(param=param, value=value)
    return row


def _spearman(a, b):
    if len(set(a)) < 2 or len(set(b)) < 2:
        return None
    return float(spearmanr(a, b).statistic)


def run_sweep(param: str, values=None, n_seeds: int = 10, seed0: int = 0, m: int = 20,
              T: int = 20, r: int = 3, N: int = 5, method: str = "cp",
              time_limit: float = 3600.0, jobs: int = 1, **gen) -> tuple[list[dict], dict]:
    """Solve ``n_seeds`` generated markets per grid value of ``mu`` or ``gamma``."""
    if param not in SWEEP_GRIDS:
        raise ValueError(f"sweep parameter must be one of {sorted(SWEEP_GRIDS)}")
    values = SWEEP_GRIDS[param] if values is None else tuple(values)
    base = dict(m=m, T=T, r=r, N=N, **gen)
    tasks = [(param, float(v), seed0 + s, base, method, time_limit)
             for v in values for s in range(n_seeds)]
    if jobs > 1:
        with ProcessPoolExecutor(jobs) as ex:
            rows = list(ex.map(_sweep_one, tasks))
    else:
        rows = [_sweep_one(t) for t in tasks]
    xs = [row["value"] for row in rows]
    summary = {
        "param": param,
        "points": [
            {"value": float(v),
             "mean_time_s": float(np.mean([w["time_s"] for w in rows if w["value"] == v])),
             "mean_iters": float(np.mean([w["iters"] for w in rows if w["value"] == v]))}
            for v in values
        ],
        "spearman_time": _spearman(xs, [w["time_s"] for w in rows]),
        "spearman_iters": _spearman(xs, [w["iters"] for w in rows]),
    }
    return rows, summary
