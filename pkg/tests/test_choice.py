import itertools

import numpy as np
import pytest
from hypothesis import given, strategies as st

from cnlcap.choice import (choice_probability, correlation_estimate, nest_weight,
                           objective_value, objective_value_separated)
from cnlcap.exceptions import DomainError, PreconditionError
from cnlcap.instance import CnlInstance, SolutionVector

from conftest import all_binary, random_instance


def loop_objective(inst, x):
    """Straight-loop evaluator sharing no code with the library."""
    total = 0.0
    F = inst.alpha.shape[1]
    for t in range(inst.T):
        W = []
        for n in range(inst.N):
            w = 0.0
            for i in range(F):
                on = x[i] if i < inst.m else 1.0
                w += inst.alpha[t, i, n] * np.exp(inst.v[t, i] / inst.sigma[t, n]) * on
            W.append(w)
        num = den = 0.0
        for n in range(inst.N):
            if W[n] <= 0:
                continue
            s = inst.sigma[t, n]
            own = sum(inst.alpha[t, i, n] * np.exp(inst.v[t, i] / s) * x[i] for i in range(inst.m))
            num += W[n] ** (s - 1) * own
            den += W[n] ** s
        total += inst.q[t] * num / den
    return total


def one_nest(v, sigma=1.0, m=None, q=1.0, r=None):
    v = np.atleast_2d(np.asarray(v, dtype=float))
    F = v.shape[1]
    m = F if m is None else m
    return CnlInstance(np.ones((1, F, 1)), [[sigma]], v, [q], m, r or m)


def test_weight_of_lone_competitor_is_one():
    inst = CnlInstance(np.ones((1, 2, 1)), [[1.0]], [[0.3, 0.0]], [1.0], 1, 1)
    assert nest_weight(inst, 0, 0, [0]) == pytest.approx(1.0)


def test_weight_of_empty_nest_is_zero():
    a = np.zeros((1, 3, 2))
    a[0, :2, 0] = 1.0
    a[0, 2, 1] = 1.0
    inst = CnlInstance(a, [[0.5, 0.5]], np.zeros((1, 3)), [1.0], 2, 1)
    assert nest_weight(inst, 0, 0, [0, 0]) == 0.0


def test_weights_match_loop():
    inst = random_instance(3)
    x = np.ones(inst.m)
    for t in range(inst.T):
        for n in range(inst.N):
            ref = sum(inst.alpha[t, i, n] * np.exp(inst.v[t, i] / inst.sigma[t, n])
                      for i in range(inst.alpha.shape[1]))
            assert nest_weight(inst, t, n, x) == pytest.approx(ref, rel=1e-12)


def test_symmetric_pair_splits_evenly():
    inst = one_nest([0.0, 0.0])
    x = [1, 1]
    assert choice_probability(inst, 0, 0, x) == pytest.approx(0.5)
    assert choice_probability(inst, 0, 1, x) == pytest.approx(0.5)


def test_mnl_reduction_example():
    inst = one_nest([0.0, np.log(3.0)])
    assert choice_probability(inst, 0, 0, [1, 1]) == pytest.approx(0.25)
    assert choice_probability(inst, 0, 1, [1, 1]) == pytest.approx(0.75)


def test_two_stage_product_form():
    inst = random_instance(5, N=2)
    x = np.zeros(inst.m)
    x[[0, 2, 4]] = 1
    t = 1
    W = np.array([nest_weight(inst, t, n, x) for n in range(inst.N)])
    s = inst.sigma[t]
    p_nest = W**s / (W**s).sum()
    for i in [0, 2, 4] + inst.competitors:
        on = x[i] if i < inst.m else 1.0
        p_in = inst.alpha[t, i] * np.exp(inst.v[t, i] / s) * on / W
        assert choice_probability(inst, t, i, x) == pytest.approx((p_nest * p_in).sum(), rel=1e-12)


@given(st.integers(0, 10_000))
def test_probabilities_normalise(seed):
    inst = random_instance(seed)
    rng = np.random.default_rng(seed)
    x = np.zeros(inst.m)
    x[rng.choice(inst.m, size=rng.integers(0, inst.r + 1), replace=False)] = 1
    for t in range(inst.T):
        facilities = [i for i in range(inst.m) if x[i]] + inst.competitors
        total = sum(choice_probability(inst, t, i, x) for i in facilities)
        assert total == pytest.approx(1.0, abs=1e-9)


def test_closed_candidate_rejected(small_instance):
    with pytest.raises(PreconditionError):
        choice_probability(small_instance, 0, 0, np.zeros(small_instance.m))


def test_no_facility_is_a_domain_error():
    inst = one_nest([0.0, 0.0])
    with pytest.raises(DomainError):
        objective_value(inst, [0, 0])
    with pytest.raises(DomainError):
        objective_value(inst, SolutionVector(np.zeros(2)))


def test_empty_selection_captures_nothing(small_instance):
    assert objective_value(small_instance, np.zeros(small_instance.m)) == 0.0


def test_no_competitors_capture_everything():
    rng = np.random.default_rng(1)
    a = rng.random((2, 5, 3))
    a /= a.sum(axis=2, keepdims=True)
    inst = CnlInstance(a, rng.uniform(0.2, 1, (2, 3)), rng.normal(size=(2, 5)), [1.5, 2.0], 5, 5)
    assert objective_value(inst, np.ones(5)) == pytest.approx(3.5)


@pytest.mark.parametrize("seed", range(5))
def test_objective_matches_loop_and_probabilities(seed):
    inst = random_instance(seed, m=8, r=3)
    x = np.zeros(8)
    x[[1, 3, 6]] = 1
    f = objective_value(inst, x)
    assert f == pytest.approx(loop_objective(inst, x), rel=1e-12)
    via_p = sum(inst.q[t] * choice_probability(inst, t, i, x)
                for t in range(inst.T) for i in (1, 3, 6))
    assert f == pytest.approx(via_p, rel=1e-12)


def test_budget_is_enforced(small_instance):
    with pytest.raises(PreconditionError):
        objective_value(small_instance, np.ones(small_instance.m))


@pytest.mark.parametrize("seed", range(3))
def test_monotone_over_enumeration(seed):
    inst = random_instance(seed, m=7, r=7)
    X = all_binary(7)
    vals = {tuple(x): objective_value(inst, x) for x in X if x.sum() > 0}
    for x, fx in vals.items():
        for i in range(7):
            if x[i] == 0:
                y = list(x)
                y[i] = 1.0
                assert vals[tuple(y)] >= fx - 1e-12


def test_unit_sigma_is_mnl():
    inst = random_instance(2)
    inst = inst.replace(sigma=np.ones_like(inst.sigma))
    x = np.zeros(inst.m)
    x[:3] = 1
    for t in range(inst.T):
        ev = np.exp(inst.v[t])
        ev[: inst.m] *= x
        for i in [0, 1, 2] + inst.competitors:
            assert choice_probability(inst, t, i, x) == pytest.approx(ev[i] / ev.sum(), abs=1e-10)


def test_one_hot_is_nested_logit():
    inst = random_instance(4)
    hot = np.zeros_like(inst.alpha)
    T, F, N = hot.shape
    nest = np.random.default_rng(0).integers(0, N, F)
    hot[:, np.arange(F), nest] = 1.0
    inst = inst.replace(alpha=hot)
    x = np.zeros(inst.m)
    x[[0, 4, 5]] = 1
    for t in range(T):
        s = inst.sigma[t]
        on = np.r_[x, np.ones(F - inst.m)]
        e = np.exp(inst.v[t] / s[nest]) * on
        W = np.array([e[nest == n].sum() for n in range(N)])
        Ws = np.where(W > 0, W, 1.0) ** s * (W > 0)
        for i in [0, 4, 5] + inst.competitors:
            ref = Ws[nest[i]] / Ws.sum() * e[i] / W[nest[i]]
            assert choice_probability(inst, t, i, x) == pytest.approx(ref, abs=1e-10)


def test_separated_form_agrees():
    for seed in range(5):
        inst = random_instance(seed, separated=True)
        for c in itertools.combinations(range(inst.m), 2):
            x = np.zeros(inst.m)
            x[list(c)] = 1
            assert objective_value_separated(inst, x) == pytest.approx(objective_value(inst, x),
                                                                       abs=1e-9)
        assert objective_value_separated(inst, np.zeros(inst.m)) == pytest.approx(0.0, abs=1e-12)


def test_separated_form_without_competitors():
    a = np.zeros((1, 3, 2))
    a[0, :, 0] = 1.0
    inst = CnlInstance(a, [[0.5, 0.5]], np.zeros((1, 3)), [2.0], 3, 2, config="separated")
    assert objective_value_separated(inst, [1, 0, 0]) == pytest.approx(2.0)


def test_separated_form_rejects_sharing(small_instance):
    with pytest.raises(PreconditionError):
        objective_value_separated(small_instance, np.zeros(small_instance.m))


def test_separated_concavity_midpoints():
    rng = np.random.default_rng(7)
    for seed in range(10):
        inst = random_instance(seed, separated=True, r=7)
        for _ in range(100):
            x1, x2 = rng.random((2, inst.m))
            lam = rng.random()
            mid = objective_value(inst, lam * x1 + (1 - lam) * x2)
            assert mid >= lam * objective_value(inst, x1) + (1 - lam) * objective_value(inst, x2) - 1e-9


class TestCorrelation:
    def test_single_nest_zero_sigma_is_one(self):
        inst = one_nest([0.0, 0.0])
        assert correlation_estimate(inst, 0, 0, 1, sigma=[0.0]) == pytest.approx(1.0)

    def test_unit_sigma_is_zero(self):
        inst = random_instance(1)
        inst = inst.replace(sigma=np.ones_like(inst.sigma))
        assert correlation_estimate(inst, 0, 0, 1) == pytest.approx(0.0)

    def test_separated_candidate_competitor_is_zero(self):
        inst = random_instance(2, separated=True)
        assert correlation_estimate(inst, 0, 0, inst.competitors[0]) == 0.0

    def test_models(self):
        inst = random_instance(3)
        assert correlation_estimate(inst, 0, 0, 1, model="mnl") == 0.0
        c = correlation_estimate(inst, 0, 0, 1)
        assert 0.0 <= c <= 1.0
        nl = correlation_estimate(inst, 0, 0, 1, model="nl")
        assert 0.0 <= nl <= 1.0

    def test_requires_distinct(self, small_instance):
        with pytest.raises(PreconditionError):
            correlation_estimate(small_instance, 0, 1, 1)
