import itertools

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from cnlcap.choice import objective_batch
from cnlcap.instance import CnlInstance

settings.register_profile(
    "default", max_examples=40, deadline=None,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile("default")


def random_instance(seed, m=7, C=3, T=2, N=3, r=3, sigma_min=0.1, v_scale=1.5,
                    density=0.6, separated=False):
    """Dense random market built directly, independent of the generator."""
    rng = np.random.default_rng(seed)
    F = m + C
    a = rng.random((T, F, N)) * (rng.random((T, F, N)) < density)
    if separated:
        a[:, :m, -1] = 0.0
        a[:, m:, :-1] = 0.0
        a[:, m:, -1] += 0.5
        a[:, :m, 0] += 1e-3
    else:
        a[:, :, 0] += 1e-3
    a /= a.sum(axis=2, keepdims=True)
    return CnlInstance(
        alpha=a,
        sigma=rng.uniform(sigma_min, 1.0, (T, N)),
        v=rng.normal(0.0, v_scale, (T, F)),
        q=rng.uniform(0.5, 2.0, T),
        m=m, r=r,
        config="separated" if separated else "sharing",
    )


def subsets(m, r):
    """All 0/1 rows with exactly r ones, lexicographic by index tuple."""
    rows = []
    for c in itertools.combinations(range(m), r):
        x = np.zeros(m)
        x[list(c)] = 1.0
        rows.append(x)
    return np.array(rows)


def all_binary(m):
    return np.array(list(itertools.product((0.0, 1.0), repeat=m)))


def brute_force(inst):
    """(best value, best row) by enumeration."""
    X = subsets(inst.m, inst.r)
    vals = objective_batch(inst, X)
    k = int(np.argmax(vals))
    return float(vals[k]), X[k]


@pytest.fixture
def small_instance():
    return random_instance(0)
