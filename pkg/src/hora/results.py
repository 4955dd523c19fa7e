"""CSV and JSON result files.

Floats are written in shortest round-trip form (``repr``), NaN as ``nan`` in
CSV and ``null`` in JSON; JSON keys are sorted.  Identical inputs therefore
give byte-identical files.
"""
from __future__ import annotations

import json
import math
from pathlib import Path

from . import __version__
from .experiments import SlopeFit, SweepResult

RECORD_HEADER = ("n", "trial", "loss", "l2_error", "objective", "iters", "seconds")


def fmt(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, int):
        return str(v)
    if isinstance(v, float):
        return "nan" if math.isnan(v) else repr(v)
    return str(v)


def _jsonable(v):
    if isinstance(v, float) and not math.isfinite(v):
        return None
    if isinstance(v, dict):
        return {str(k): _jsonable(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_jsonable(x) for x in v]
    return v


def dumps(obj) -> str:
    return json.dumps(_jsonable(obj), sort_keys=True, indent=2, allow_nan=False) + "\n"


def write_table(path: Path, header, rows) -> Path:
    lines = [",".join(header)] + [",".join(fmt(v) for v in row) for row in rows]
    path.write_text("\n".join(lines) + "\n")
    return path


def write_records(result: SweepResult, path: Path) -> Path:
    rows = [(r.n, r.trial, r.loss, r.l2_error, r.objective, r.iters, r.seconds) for r in result.records]
    return write_table(path, RECORD_HEADER, rows)


def _fit_dict(fit: SlopeFit | None) -> dict | None:
    return None if fit is None else {"slope": fit.slope, "intercept": fit.intercept, "stderr": fit.stderr}


def sweep_summary(result: SweepResult) -> dict:
    return {
        "kind": result.config.kind,
        "loss": "D2" if result.config.kind == "shared" else "D1_rho",
        "loss_fit": _fit_dict(result.loss_fit),
        "l2_fit": _fit_dict(result.l2_fit),
        "medians": [{"n": n, "loss": lo, "l2_error": l2, "completed": c} for n, lo, l2, c in result.medians],
        "incomplete": sum(not r.completed for r in result.records),
    }


def base_summary(command: str, values: dict) -> dict:
    return {"artifact": "hora", "version": __version__, "command": command,
            "master_seed": values["master_seed"], "config": values}


def write_summary(path: Path, summary: dict) -> Path:
    path.write_text(dumps(summary))
    return path


def write_results(result: SweepResult, out_dir, values: dict, command: str = "rate-sweep",
                  comparison: SweepResult | None = None) -> list:
    """Write ``records.csv`` and ``summary.json`` for a sweep.

    With ``comparison`` (the other family on matched dims) its records go to
    ``records_<kind>.csv`` and both families' slopes land in the summary.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    files = [write_records(result, out / "records.csv")]
    summary = base_summary(command, values)
    main = sweep_summary(result)
    summary.update(main)
    summary["slope"] = main["loss_fit"]["slope"] if main["loss_fit"] else None
    summary["stderr"] = main["loss_fit"]["stderr"] if main["loss_fit"] else None
    slopes = {result.config.kind: {"loss_fit": main["loss_fit"], "l2_fit": main["l2_fit"]}}
    if comparison is not None:
        files.append(write_records(comparison, out / f"records_{comparison.config.kind}.csv"))
        other = sweep_summary(comparison)
        summary["comparison"] = other
        slopes[comparison.config.kind] = {"loss_fit": other["loss_fit"], "l2_fit": other["l2_fit"]}
    summary["slopes"] = slopes
    files.append(write_summary(out / "summary.json", summary))
    return files
