"""Instance JSON, trace JSON and results CSV."""
from __future__ import annotations

import csv
import io
import json
import math

import numpy as np

from ..core import Instance, Job, ScheduleTrace, validate_instance
from ..envs import env_from_dict
from ..verify import TABLE_COLUMNS

JOB_FIELDS = {"id", "release", "size", "weight"}
TOP_FIELDS = {"environment", "jobs"}


class InstanceFormatError(ValueError):
    """Malformed instance file; the message starts with the location."""


def _num(v, where):
    if isinstance(v, bool) or not isinstance(v, (int, float)) or not math.isfinite(v):
        raise InstanceFormatError(f"{where}: expected a finite number, got {v!r}")
    return float(v)


def instance_to_dict(inst: Instance):
    return {"environment": inst.env.to_dict(),
            "jobs": [{"id": j.id, "release": j.release, "size": j.size, "weight": j.weight}
                     for j in inst.jobs]}


def instance_from_dict(d, source="<instance>"):
    if not isinstance(d, dict):
        raise InstanceFormatError(f"{source}: top level must be an object")
    extra = set(d) - TOP_FIELDS
    if extra:
        raise InstanceFormatError(f"{source}: unknown fields {sorted(extra)}")
    missing = TOP_FIELDS - set(d)
    if missing:
        raise InstanceFormatError(f"{source}: missing fields {sorted(missing)}")
    if not isinstance(d["jobs"], list):
        raise InstanceFormatError(f"{source}: jobs must be a list")
    jobs = []
    for k, jd in enumerate(d["jobs"]):
        where = f"{source}: jobs[{k}]"
        if not isinstance(jd, dict):
            raise InstanceFormatError(f"{where}: job must be an object")
        extra = set(jd) - JOB_FIELDS
        if extra:
            raise InstanceFormatError(f"{where}: unknown fields {sorted(extra)}")
        for key in ("id", "release", "size"):
            if key not in jd:
                raise InstanceFormatError(f"{where}: missing field {key!r}")
        jobs.append(Job(jd["id"], _num(jd["release"], f"{where}.release"), _num(jd["size"], f"{where}.size"),
                        _num(jd.get("weight", 1.0), f"{where}.weight")))
    envd = d["environment"]
    if not isinstance(envd, dict) or "kind" not in envd:
        raise InstanceFormatError(f"{source}: environment must be an object with a kind")
    try:
        env = env_from_dict(envd)
    except (KeyError, TypeError, ValueError) as exc:
        raise InstanceFormatError(f"{source}: environment: {exc}") from exc
    inst = Instance(jobs, env)
    errs = validate_instance(inst)
    if errs:
        raise InstanceFormatError(f"{source}: " + "; ".join(errs))
    return inst


def loads_instance(text, source="<instance>"):
    try:
        d = json.loads(text)
    except json.JSONDecodeError as exc:
        raise InstanceFormatError(f"{source}:{exc.lineno}:{exc.colno}: {exc.msg}") from exc
    return instance_from_dict(d, source)


def dumps_instance(inst: Instance):
    return json.dumps(instance_to_dict(inst), indent=1, allow_nan=False)


def save_instance(inst: Instance, path):
    with open(path, "w") as fh:
        fh.write(dumps_instance(inst) + "\n")


def load_instance(path):
    with open(path) as fh:
        return loads_instance(fh.read(), str(path))


def trace_to_dict(trace: ScheduleTrace):
    return {"speed": trace.speed, "starts": trace.starts.tolist(), "ends": trace.ends.tolist(),
            "rates": np.asarray(trace.rates).tolist(),
            "completions": [None if np.isnan(c) else float(c) for c in trace.completions],
            "meta": {k: v for k, v in trace.meta.items() if isinstance(v, (str, int, float))}}


def save_trace(trace, path):
    with open(path, "w") as fh:
        json.dump(trace_to_dict(trace), fh, indent=1)
        fh.write("\n")


def _cell(v):
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(float(v))
    return str(v)


def results_csv(rows, stamp=None):
    """CSV text; an optional first line '# generated <stamp>' is the only varying part."""
    buf = io.StringIO()
    if stamp is not None:
        buf.write(f"# generated {stamp}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(TABLE_COLUMNS)
    for r in rows:
        w.writerow([_cell(r[c]) for c in TABLE_COLUMNS])
    return buf.getvalue()


def read_results_csv(path):
    with open(path) as fh:
        lines = [ln for ln in fh if not ln.startswith("#")]
    return list(csv.DictReader(lines))
