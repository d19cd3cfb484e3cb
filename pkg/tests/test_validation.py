import numpy as np
import pytest

from cnlcap.exceptions import ConfigurationError, PreconditionError
from cnlcap.instance import SolutionVector
from cnlcap.io import instance_to_dict, write_instance
from cnlcap.validation import check_instance, check_solution

from conftest import random_instance


def test_check_instance_accepts_three_forms(tmp_path):
    inst = random_instance(0)
    assert check_instance(inst) is inst
    write_instance(inst, tmp_path / "i.json")
    for obj in (tmp_path / "i.json", str(tmp_path / "i.json"), instance_to_dict(inst)):
        assert np.array_equal(check_instance(obj).alpha, inst.alpha)


def test_check_instance_rejects(tmp_path):
    with pytest.raises(ConfigurationError, match="no instance file"):
        check_instance(tmp_path / "missing.json")
    with pytest.raises(ConfigurationError):
        check_instance(3.5)


def test_check_solution():
    inst = random_instance(0)
    x = np.zeros(inst.m)
    x[:3] = 1
    out = check_solution(x, inst)
    assert out.dtype == np.int8
    assert np.array_equal(check_solution(SolutionVector(x), inst), out)
    x[0] = 0
    assert check_solution(x, inst, exact_budget=False).sum() == 2
    with pytest.raises(PreconditionError):
        check_solution(x, inst)
    with pytest.raises(PreconditionError, match="length"):
        check_solution(np.ones(3), inst)
    with pytest.raises(PreconditionError, match="0 or 1"):
        check_solution(np.full(inst.m, 0.5), inst)
    with pytest.raises(PreconditionError, match="budget"):
        check_solution(np.ones(inst.m), inst, exact_budget=False)
