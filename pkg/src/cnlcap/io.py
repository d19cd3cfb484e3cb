"""Instance files, cost matrices and result tables."""

from __future__ import annotations

import contextlib
import csv
import fcntl
import hashlib
import io
import json
import math
from pathlib import Path

import numpy as np

from .exceptions import ConfigurationError
from .instance import CnlInstance

FORMAT = "cnlcap-instance/1"
RESULT_COLUMNS = ("instance", "method", "m", "T", "N", "r", "config", "LB", "UB", "gap",
                  "optimal", "iters", "cuts_oa", "cuts_sc", "time_s", "seed", "termination")


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, float) and not math.isfinite(obj):
        return None
    return obj


def instance_to_dict(inst: CnlInstance) -> dict:
    t, i, n = np.nonzero(inst.alpha)
    triplets = [[int(a), int(b), int(c), float(inst.alpha[a, b, c])] for a, b, c in zip(t, i, n)]
    return {
        "format": FORMAT,
        "m": inst.m,
        "T": inst.T,
        "N": inst.N,
        "r": inst.r,
        "config": inst.config.value,
        "q": inst.q.tolist(),
        "sigma": inst.sigma.tolist(),
        "alpha": triplets,
        "v": inst.v.tolist(),
        "competitors": inst.competitors,
        "meta": _jsonable(inst.meta),
    }


def instance_from_dict(d: dict) -> CnlInstance:
    try:
        m, T, N = int(d["m"]), int(d["T"]), int(d["N"])
        F = m + len(d["competitors"])
        alpha = np.zeros((T, F, N))
        for t, i, n, val in d["alpha"]:
            alpha[int(t), int(i), int(n)] = float(val)
        return CnlInstance(alpha=alpha, sigma=np.array(d["sigma"], dtype=float),
                           v=np.array(d["v"], dtype=float), q=np.array(d["q"], dtype=float),
                           m=m, r=int(d["r"]), config=d.get("config", "sharing"),
                           meta=d.get("meta", {}))
    except (KeyError, TypeError, ValueError, IndexError) as exc:
        if isinstance(exc, ConfigurationError):
            raise
        raise ConfigurationError(f"malformed instance document: {exc!r}") from exc


def dumps_instance(inst: CnlInstance) -> str:
    return json.dumps(instance_to_dict(inst), sort_keys=True, separators=(",", ":")) + "\n"


def instance_checksum(inst: CnlInstance) -> str:
    return hashlib.sha256(dumps_instance(inst).encode()).hexdigest()


def write_instance(inst: CnlInstance, path) -> str:
    """Write the canonical JSON document; returns its sha256."""
    text = dumps_instance(inst)
    Path(path).write_text(text)
    return hashlib.sha256(text.encode()).hexdigest()


def read_instance(path) -> CnlInstance:
    try:
        d = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ConfigurationError(f"{path}: not a JSON document ({exc})") from exc
    return instance_from_dict(d)


def read_cost_csv(path) -> np.ndarray:
    """Cost matrix with header ``type,site_1,...,site_k``; one row per customer type."""
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise ConfigurationError(f"{path}: empty cost file")
    header = [h.strip() for h in rows[0]]
    k = len(header) - 1
    if header[0] != "type" or header[1:] != [f"site_{j}" for j in range(1, k + 1)]:
        raise ConfigurationError(f"{path}: header must be type,site_1..site_{k}")
    try:
        body = sorted(((int(r[0]), [float(v) for v in r[1:]]) for r in rows[1:] if r),
                      key=lambda p: p[0])
    except ValueError as exc:
        raise ConfigurationError(f"{path}: {exc}") from exc
    costs = np.array([vals for _, vals in body], dtype=float)
    if costs.ndim != 2 or costs.shape[1] != k or np.any(costs < 0):
        raise ConfigurationError(f"{path}: expected nonnegative rows of {k} values")
    return costs


def write_cost_csv(costs, path):
    costs = np.asarray(costs, dtype=float)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["type"] + [f"site_{j}" for j in range(1, costs.shape[1] + 1)])
        for t, row in enumerate(costs):
            w.writerow([t] + [repr(float(v)) for v in row])


def _fmt(value):
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return "inf" if math.isinf(value) and value > 0 else repr(value)
    return "" if value is None else str(value)


def result_row(report, inst: CnlInstance, name: str, seed=None) -> dict:
    if seed is None:
        seed = inst.meta.get("generator", {}).get("seed", "")
    return {
        "instance": name, "method": report.method, "m": inst.m, "T": inst.T, "N": inst.N,
        "r": inst.r, "config": inst.config.value, "LB": report.lb, "UB": report.ub,
        "gap": report.gap, "optimal": report.optimal, "iters": report.iterations,
        "cuts_oa": report.cuts_oa, "cuts_sc": report.cuts_sc, "time_s": report.time_s,
        "seed": seed, "termination": report.termination,
    }


def format_csv(rows, columns=RESULT_COLUMNS, header: bool = True) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    if header:
        w.writerow(columns)
    for row in rows:
        w.writerow([_fmt(row.get(c)) for c in columns])
    return buf.getvalue()


def format_json_lines(rows) -> str:
    return "".join(json.dumps(_jsonable(dict(r)), sort_keys=True) + "\n" for r in rows)


@contextlib.contextmanager
def _locked(path):
    with open(path, "a+") as fh:
        fcntl.flock(fh, fcntl.LOCK_EX)
        try:
            yield fh
        finally:
            fcntl.flock(fh, fcntl.LOCK_UN)


def append_rows(path, rows, fmt: str = "csv", columns=RESULT_COLUMNS):
    """Append rows under an exclusive lock; a new CSV file gets a header first."""
    path = Path(path)
    with _locked(path) as fh:
        fh.seek(0, io.SEEK_END)
        if fmt == "csv":
            fh.write(format_csv(rows, columns, header=fh.tell() == 0))
        elif fmt == "json-lines":
            fh.write(format_json_lines(rows))
        else:
            raise ValueError(f"unknown format {fmt!r}")


def _parse(value: str):
    if value in ("true", "false"):
        return value == "true"
    if value == "inf":
        return math.inf
    for cast in (int, float):
        try:
            return cast(value)
        except ValueError:
            pass
    return value


def read_results(path, fmt: str = "csv") -> list[dict]:
    text = Path(path).read_text()
    if fmt == "json-lines":
        rows = [json.loads(line) for line in text.splitlines() if line.strip()]
        for row in rows:
            for key in ("UB", "gap"):
                if key in row and row[key] is None:
                    row[key] = math.inf
        return rows
    reader = csv.DictReader(io.StringIO(text))
    return [{k: _parse(v) for k, v in row.items()} for row in reader]
