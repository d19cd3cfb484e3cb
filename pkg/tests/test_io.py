import json
import math
import multiprocessing as mp

import numpy as np
import pytest

from cnlcap.drivers import cp_solve, greedy_solve
from cnlcap.exceptions import ConfigurationError
from cnlcap.instances import GenConfig, generate
from cnlcap.io import (RESULT_COLUMNS, append_rows, dumps_instance, format_csv,
                       instance_checksum, instance_from_dict, instance_to_dict, read_cost_csv,
                       read_instance, read_results, result_row, write_cost_csv, write_instance)

from conftest import random_instance


def same_instance(a, b):
    for f in ("alpha", "sigma", "v", "q"):
        assert np.array_equal(getattr(a, f), getattr(b, f))
    assert (a.m, a.r, a.config) == (b.m, b.r, b.config)


def test_roundtrip_through_file(tmp_path):
    inst = generate(GenConfig(m=8, T=2, r=3, seed=4))
    digest = write_instance(inst, tmp_path / "a.json")
    back = read_instance(tmp_path / "a.json")
    same_instance(inst, back)
    assert back.meta == json.loads(json.dumps(inst.meta))
    assert digest == instance_checksum(inst) == instance_checksum(back)
    assert dumps_instance(back) == (tmp_path / "a.json").read_text()


def test_document_fields_and_sparse_alpha():
    inst = random_instance(1, separated=True)
    d = instance_to_dict(inst)
    for key in ("m", "T", "N", "r", "config", "q", "sigma", "alpha", "v", "competitors", "meta"):
        assert key in d
    assert len(d["alpha"]) == int((inst.alpha > 0).sum())
    assert d["competitors"] == inst.competitors
    assert d["config"] == "separated"
    same_instance(inst, instance_from_dict(d))


def test_nested_logit_file_loads_for_nl_solver(tmp_path):
    from cnlcap.special_cases import nl_t1_solve
    inst = generate(GenConfig(m=8, T=1, r=2, N=3, gamma=1.0, seed=2))
    write_instance(inst, tmp_path / "nl.json")
    assert nl_t1_solve(read_instance(tmp_path / "nl.json")).value > 0


def test_malformed_documents(tmp_path):
    p = tmp_path / "bad.json"
    p.write_text("{not json")
    with pytest.raises(ConfigurationError):
        read_instance(p)
    d = instance_to_dict(random_instance(0))
    del d["sigma"]
    with pytest.raises(ConfigurationError):
        instance_from_dict(d)
    d = instance_to_dict(random_instance(0))
    d["r"] = 99
    with pytest.raises(ConfigurationError, match="r="):
        instance_from_dict(d)


def test_cost_csv_roundtrip(tmp_path):
    costs = np.random.default_rng(0).uniform(1, 100, (3, 7))
    write_cost_csv(costs, tmp_path / "c.csv")
    assert np.array_equal(read_cost_csv(tmp_path / "c.csv"), costs)
    assert (tmp_path / "c.csv").read_text().splitlines()[0] == "type," + ",".join(
        f"site_{j}" for j in range(1, 8))


@pytest.mark.parametrize("text", ["", "kind,site_1\n0,1\n", "type,site_1,site_3\n0,1,2\n",
                                  "type,site_1\n0,-1\n", "type,site_1\n0,abc\n"])
def test_cost_csv_rejects(tmp_path, text):
    p = tmp_path / "c.csv"
    p.write_text(text)
    with pytest.raises(ConfigurationError):
        read_cost_csv(p)


def test_result_rows_csv_and_json(tmp_path):
    inst = random_instance(2)
    reps = [greedy_solve(inst), cp_solve(inst)]
    rows = [result_row(r, inst, "inst2", seed=7) for r in reps]
    assert tuple(rows[0]) == RESULT_COLUMNS
    append_rows(tmp_path / "r.csv", rows[:1])
    append_rows(tmp_path / "r.csv", rows[1:])
    text = (tmp_path / "r.csv").read_text()
    assert text.count("instance,method") == 1
    back = read_results(tmp_path / "r.csv")
    assert back[0]["UB"] == math.inf and back[0]["optimal"] is False
    assert back[1]["LB"] == reps[1].lb and back[1]["optimal"] is True
    assert back[1]["seed"] == 7
    append_rows(tmp_path / "r.jsonl", rows, "json-lines")
    lines = (tmp_path / "r.jsonl").read_text().splitlines()
    assert json.loads(lines[0])["UB"] is None
    assert read_results(tmp_path / "r.jsonl", "json-lines")[0]["UB"] == math.inf
    with pytest.raises(ValueError):
        append_rows(tmp_path / "r.x", rows, "xml")


def test_format_csv_header_toggle():
    rows = [{"a": 1, "b": True}, {"a": 2.5, "b": None}]
    assert format_csv(rows, ("a", "b")) == "a,b\n1,true\n2.5,\n"
    assert format_csv(rows, ("a", "b"), header=False) == "1,true\n2.5,\n"


def _append_worker(args):
    path, k = args
    rows = [{c: (k if c == "iters" else "") for c in RESULT_COLUMNS} for _ in range(20)]
    append_rows(path, rows)


def test_concurrent_appends_keep_rows_whole(tmp_path):
    path = str(tmp_path / "shared.csv")
    with mp.get_context("fork").Pool(4) as pool:
        pool.map(_append_worker, [(path, k) for k in range(8)])
    rows = read_results(path)
    assert len(rows) == 160
    assert sorted({r["iters"] for r in rows}) == list(range(8))
    assert (tmp_path / "shared.csv").read_text().count("instance,method") == 1
