"""Writing result records as CSV, JSON or plot data."""

from __future__ import annotations

import csv
import io
import json
import math
from pathlib import Path

from .experiments import REGISTRY, ResultRecord, series

FORMATS = ("csv", "json", "plotdata")


class ReportError(OSError):
    pass


def _cell(v) -> str:
    if v is None:
        return ""
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v) if math.isfinite(v) else ("inf" if v > 0 else "-inf" if v < 0 else "nan")
    return str(v)


def rows_csv(record: ResultRecord) -> str:
    """Per-replica rows; the bytes depend only on the configuration."""
    cols = list(REGISTRY[record.experiment].columns)
    for r in record.rows:
        cols += [k for k in r if k not in cols]
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\r\n")
    w.writerow(cols)
    for r in record.rows:
        w.writerow([_cell(r.get(c)) for c in cols])
    return buf.getvalue()


def _flatten(d: dict, prefix: str = "") -> list[tuple[str, object]]:
    out = []
    for k in sorted(d):
        v = d[k]
        if isinstance(v, dict):
            out += _flatten(v, f"{prefix}{k}.")
        else:
            out.append((f"{prefix}{k}", v))
    return out


def aggregate_csv(record: ResultRecord) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\r\n")
    w.writerow(["key", "value"])
    for k, v in _flatten(record.aggregate):
        w.writerow([k, _cell(v)])
    return buf.getvalue()


def record_json(record: ResultRecord) -> str:
    return json.dumps(record.to_dict(), sort_keys=True, indent=2, allow_nan=True) + "\n"


def load_record(path) -> ResultRecord:
    return ResultRecord.from_dict(json.loads(Path(path).read_text()))


def plot_series(record: ResultRecord) -> dict[str, str]:
    out = {}
    for name, (xs, ys) in series(record).items():
        lines = [f"# {record.experiment} {name}", "# x y"]
        lines += [f"{_cell(float(x))} {_cell(float(y))}" for x, y in zip(xs, ys)]
        out[name] = "\n".join(lines) + "\n"
    return out


def emit_report(record: ResultRecord, fmt: str, out_dir) -> list[Path]:
    """Write the record into ``out_dir``; returns the files written."""
    if fmt not in FORMATS:
        raise ValueError(f"format must be one of {FORMATS}")
    d = Path(out_dir)
    stem = record.experiment
    if fmt == "csv":
        files = {f"{stem}.csv": rows_csv(record), f"{stem}_aggregate.csv": aggregate_csv(record)}
    elif fmt == "json":
        files = {f"{stem}.json": record_json(record)}
    else:
        files = {f"{stem}_{k}.dat": v for k, v in plot_series(record).items()}
    written = []
    try:
        d.mkdir(parents=True, exist_ok=True)
        for name, text in files.items():
            p = d / name
            with open(p, "w", newline="") as fh:
                fh.write(text)
            written.append(p)
    except OSError as e:
        raise ReportError(f"cannot write to {d}: {e}") from e
    return written
