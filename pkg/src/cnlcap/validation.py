"""Input checks shared by the estimators and the command line."""

from __future__ import annotations

import os
from collections.abc import Mapping

import numpy as np

from .exceptions import ConfigurationError, PreconditionError
from .instance import CnlInstance, SolutionVector


def check_instance(obj) -> CnlInstance:
    """Coerce an instance, a parsed document or a file path into a CnlInstance."""
    if isinstance(obj, CnlInstance):
        return obj
    from .io import instance_from_dict, read_instance

    if isinstance(obj, (str, os.PathLike)):
        if not os.path.exists(obj):
            raise ConfigurationError(f"no instance file at {obj}")
        return read_instance(obj)
    if isinstance(obj, Mapping):
        return instance_from_dict(obj)
    raise ConfigurationError(f"cannot interpret {type(obj).__name__} as an instance")


def check_solution(x, inst: CnlInstance, exact_budget: bool = True) -> np.ndarray:
    """Binary int8 vector of length m that opens ``r`` sites (at most ``r`` if not exact)."""
    if isinstance(x, SolutionVector):
        x = x.x
    arr = np.asarray(x)
    if arr.ndim != 1 or arr.shape[0] != inst.m:
        raise PreconditionError(f"solution must have length {inst.m}, got shape {arr.shape}")
    if not np.all((arr == 0) | (arr == 1)):
        raise PreconditionError("solution entries must be 0 or 1")
    k = int(arr.sum())
    if k > inst.r or (exact_budget and k != inst.r):
        raise PreconditionError(f"solution opens {k} sites, budget is {inst.r}")
    return arr.astype(np.int8)
