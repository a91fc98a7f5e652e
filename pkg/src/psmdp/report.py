"""Deterministic JSON/CSV serialization of search results and policies."""

from __future__ import annotations

import csv
import io
import json
import math
from typing import Any, Iterable, Sequence

import numpy as np

from .model import macro_steps
from .pareto import ScheduleFront, build_front
from .search import SearchReport
from .solver import SolvedSchedule

FRONT_COLUMNS = ("schedule", "policy_kind", "alpha", "distribution_id", "exec_cost",
                 "checkin_cost", "on_final_front")
SWEEP_COLUMNS = ("margin", "distributions", "alphas", "length", "runtime_s", "f", "quality")


def fmt(x: float) -> str:
    return format(float(x), ".12g")


def _round(x: float) -> float:
    return float(fmt(x)) if math.isfinite(x) else x


def jsonable(obj: Any) -> Any:
    """Recursively convert to JSON types, rounding floats to 12 significant digits."""
    if isinstance(obj, dict):
        return {str(k): jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return jsonable(obj.tolist())
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        return _round(float(obj))
    return obj


def dumps(obj: Any) -> str:
    return json.dumps(jsonable(obj), indent=2, sort_keys=True) + "\n"


def _front_json(front: ScheduleFront) -> dict:
    fr = front.at(0)
    return {
        "schedule": front.key,
        "points": [{"policy": lab, "exec": p.exec, "checkin": p.checkin} for lab, p in fr.points],
        "realizable": [lab for lab, _ in fr.realizable],
        "optimistic": [[v.exec, v.checkin] for v in fr.optimistic],
    }


def report_json(report: SearchReport) -> dict:
    """Everything except wall-clock timings, which go to :func:`timing_json`."""
    cfg = report.config
    return {
        "config": cfg.echo(),
        "visited": report.visited,
        "unfiltered_total": cfg.unfiltered_total,
        "filtered_fraction": report.filtered_fraction,
        "drop_ratio": report.drop_ratio,
        "stages": [
            {k: v for k, v in vars(s).items() if k != "wall_s"} for s in report.stages
        ],
        "survivors": list(report.survivors),
        "final_front": [_front_json(report.fronts[k]) for k in report.final],
    }


def timing_json(report: SearchReport) -> dict:
    return {"runtime_s": report.runtime_s, "stage_wall_s": [s.wall_s for s in report.stages]}


def _csv(rows: Iterable[Sequence], columns: Sequence[str]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for r in rows:
        w.writerow(r)
    return buf.getvalue()


def front_rows(report: SearchReport, distributions: Sequence[tuple[str, np.ndarray]] = ()) -> list[list[str]]:
    """One row per (survivor, policy, distribution); ``initial`` always comes first."""
    final = set(report.final)
    rows = []
    for key in report.survivors:
        fronts = [("initial", report.fronts[key])]
        for name, d in distributions:
            fronts.append((name, build_front(report.solved[key], [d])))
        for dist_id, front in fronts:
            for lab, p in front.at(0).points:
                rec = report.solved[key].policies[lab]
                kind = "alpha" if rec.kind == "alpha" else rec.kind
                alpha = fmt(rec.alpha) if rec.alpha is not None else ""
                rows.append([key, kind, alpha, dist_id, fmt(p.exec), fmt(p.checkin),
                             "true" if key in final else "false"])
    return rows


def front_csv(report: SearchReport, distributions: Sequence[tuple[str, np.ndarray]] = ()) -> str:
    return _csv(front_rows(report, distributions), FRONT_COLUMNS)


def sweep_csv(rows: Iterable[dict]) -> str:
    out = []
    for r in rows:
        out.append([
            "" if r["margin"] is None else fmt(r["margin"]),
            r["distributions"],
            r["alphas"],
            str(r["length"]),
            fmt(r["runtime_s"]),
            fmt(r["f"]),
            fmt(r["quality"]),
        ])
    return _csv(out, SWEEP_COLUMNS)


def policy_dump(solved: SolvedSchedule, n_actions: int) -> dict:
    """Per-layer macro step lists indexed by state, plus head values."""
    out = {"schedule": solved.key, "policies": []}
    for lab, rec in solved.policies.items():
        layers = []
        for layer, stride in zip(rec.layers, rec.strides):
            layers.append({"stride": stride,
                           "macros": [list(macro_steps(int(m), stride, n_actions)) for m in layer]})
        out["policies"].append({
            "policy": lab,
            "layers": layers,
            "v_exec": rec.values.v_exec,
            "v_checkin": rec.values.v_checkin,
        })
    return out
