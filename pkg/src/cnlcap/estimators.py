"""Estimator-style wrappers so solvers and model simplifications compose in pipelines."""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from .choice import objective_value
from .drivers import ITER_CAP, METHOD_NAMES, TIME_CAP, run_method
from .exceptions import PreconditionError
from .instances import simplify_to_mnl, simplify_to_nl
from .validation import check_instance, check_solution


class CaptureSolver(BaseEstimator):
    """Chooses ``r`` locations maximising captured demand.

    ``fit`` takes an instance (object, document or path). ``score`` evaluates the
    fitted locations on another instance, e.g. the original market after fitting
    on a simplified one.
    """

    def __init__(self, method: str = "cp", eps=None, iter_limit: int = ITER_CAP,
                 time_limit: float = TIME_CAP, aggregation: str = "per-type"):
        self.method = method
        self.eps = eps
        self.iter_limit = iter_limit
        self.time_limit = time_limit
        self.aggregation = aggregation

    def fit(self, X, y=None):
        inst = check_instance(X)
        if self.method not in METHOD_NAMES:
            raise PreconditionError(f"unknown method {self.method!r}")
        self.report_ = run_method(inst, self.method, self.eps, self.iter_limit,
                                  self.time_limit, self.aggregation)
        self.x_ = self.report_.incumbent.x.copy()
        self.objective_ = float(self.report_.lb)
        self.n_iter_ = self.report_.iterations
        self.n_locations_ = inst.m
        return self

    def predict(self, X=None) -> np.ndarray:
        """Indices of the opened locations."""
        check_is_fitted(self, "x_")
        if X is not None:
            check_solution(self.x_, check_instance(X), exact_budget=False)
        return np.flatnonzero(self.x_)

    def score(self, X, y=None) -> float:
        check_is_fitted(self, "x_")
        inst = check_instance(X)
        return objective_value(inst, check_solution(self.x_, inst, exact_budget=False))


class _Simplifier(TransformerMixin, BaseEstimator):
    _fn = None

    def fit(self, X, y=None):
        check_instance(X)
        self.fitted_ = True
        return self

    def transform(self, X):
        check_is_fitted(self, "fitted_")
        return type(self)._fn(check_instance(X))


class MnlSimplifier(_Simplifier):
    """Drops nest correlation by setting every dissimilarity to one."""

    _fn = staticmethod(simplify_to_mnl)


class NlSimplifier(_Simplifier):
    """Keeps only each facility's dominant nest."""

    _fn = staticmethod(simplify_to_nl)
