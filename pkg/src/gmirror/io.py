"""CSV ingestion and deterministic serialization of results."""
from __future__ import annotations

import csv
import io as _io
import json
import math
from pathlib import Path

import numpy as np

from .errors import ParseError
from .fd import FdInterval
from .linalg import RegressionProblem, standardize
from .selection import SelectionReport
from .sim import ROW_FIELDS, ExperimentTable


def _is_number(cell: str) -> bool:
    try:
        float(cell)
    except ValueError:
        return False
    return True


def read_matrix(path) -> tuple[np.ndarray, list[str] | None]:
    """Parse a rectangular numeric CSV; the first row is a header if any cell is non-numeric.

    Blank lines are skipped.  Errors carry the 1-based line number.
    """
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ParseError(f"cannot read file: {exc.strerror or exc}", path=path) from exc
    header = None
    rows: list[list[float]] = []
    width = None
    for lineno, cells in enumerate(csv.reader(_io.StringIO(text)), start=1):
        if not cells or all(not c.strip() for c in cells):
            continue
        cells = [c.strip() for c in cells]
        if header is None and not rows and not all(_is_number(c) for c in cells):
            header = cells
            width = len(cells)
            continue
        if width is None:
            width = len(cells)
        if len(cells) != width:
            raise ParseError(f"expected {width} columns, found {len(cells)}", line=lineno, path=path)
        values = []
        for col, cell in enumerate(cells, start=1):
            try:
                v = float(cell)
            except ValueError:
                raise ParseError(f"non-numeric cell {cell!r} in column {col}", line=lineno,
                                 path=path) from None
            if not math.isfinite(v):
                raise ParseError(f"non-finite cell {cell!r} in column {col}", line=lineno, path=path)
            values.append(v)
        rows.append(values)
    if not rows:
        raise ParseError("no data rows", path=path)
    return np.array(rows, dtype=float), header


def _column_index(target, header, width, path):
    if header is not None and target in header:
        return header.index(target)
    try:
        idx = int(target)
    except (TypeError, ValueError):
        raise ParseError(f"target column {target!r} not found", path=path) from None
    if not -width <= idx < width:
        raise ParseError(f"target column {idx} out of range for {width} columns", path=path)
    return idx % width


def ingest_csv(design_path, response_path=None, target=None, standardize_design: bool = True
               ) -> RegressionProblem:
    """Build a problem from a design CSV plus a response CSV, or one file with a target column.

    ``target`` is a header name or a 0-based column index.  Unless
    ``standardize_design`` is false the result is centered and scaled.
    """
    X, header = read_matrix(design_path)
    if response_path is not None:
        if target is not None:
            raise ValueError("give either a response file or a target column, not both")
        Y, _ = read_matrix(response_path)
        if Y.shape[1] != 1:
            raise ParseError(f"response must have one column, found {Y.shape[1]}", path=response_path)
        if Y.shape[0] != X.shape[0]:
            raise ParseError(f"response has {Y.shape[0]} rows but design has {X.shape[0]}",
                             path=response_path)
        y = Y[:, 0]
    elif target is not None:
        idx = _column_index(target, header, X.shape[1], design_path)
        y = X[:, idx]
        X = np.delete(X, idx, axis=1)
        if header is not None:
            header = header[:idx] + header[idx + 1:]
    else:
        raise ValueError("a response file or a target column is required")
    if X.shape[0] <= 1:
        raise ParseError(f"need at least two observations, found {X.shape[0]}", path=design_path)
    if X.shape[1] == 0:
        raise ParseError("design has no feature columns", path=design_path)
    problem = RegressionProblem(X, y, feature_names=tuple(header) if header else None)
    return standardize(problem) if standardize_design else problem


def _num(x):
    """JSON-safe float: ``None`` for nan and infinities."""
    if x is None:
        return None
    x = float(x)
    return x if math.isfinite(x) else None


def report_to_dict(report: SelectionReport) -> dict:
    out = {
        "kind": "selection",
        "method": report.method,
        "q": report.target_fdr,
        "seed": report.seed,
        "tau": _num(report.threshold),
        "selected": [int(j) for j in report.selected],
        "fdp_hat": _num(report.fdp_estimate),
        "sigma": _num(report.sigma),
        "lambda": _num(report.penalty),
        "statistics": [_num(m) for m in np.asarray(report.statistics, dtype=float)],
    }
    if report.active_set is not None:
        out["active_set"] = [int(j) for j in report.active_set]
    names = report.diagnostics.get("feature_names")
    if names:
        out["feature_names"] = list(names)
        out["selected_names"] = [names[j] for j in report.selected]
    diag = {k: v for k, v in report.diagnostics.items() if k != "feature_names"}
    if diag:
        out["diagnostics"] = {k: (_num(v) if isinstance(v, float) else v) for k, v in diag.items()}
    return out


def interval_to_dict(iv: FdInterval) -> dict:
    return {
        "kind": "fd_interval",
        "method": iv.method,
        "base": iv.base,
        "k": iv.k,
        "point_estimate": iv.point_estimate,
        "ci_low": iv.ci_low,
        "ci_high": iv.ci_high,
        "upper_bound": iv.upper_bound,
        "alpha": iv.alpha,
        "bootstrap_samples": iv.bootstrap_samples,
        "failed_replicates": iv.failed,
        "seed": iv.seed,
        "bootstrap_fd": [_num(v) for v in iv.replicates],
    }


def table_to_dict(table: ExperimentTable) -> dict:
    d, t = table.design, table.truth
    return {
        "kind": "experiment",
        "design": {"kind": d.kind, "n": d.n, "p": d.p, "param": d.param},
        "truth": {"p1": t.p1, "amplitude_sd": t.amplitude_sd, "noise_sd": t.noise_sd},
        "q": table.q,
        "seed": table.master_seed,
        "methods": list(table.methods),
        "summary": table.summary,
        "rows": [{k: (_num(r[k]) if isinstance(r[k], float) else r[k]) for k in ROW_FIELDS}
                 for r in table.rows],
    }


def to_dict(obj) -> dict:
    if isinstance(obj, SelectionReport):
        return report_to_dict(obj)
    if isinstance(obj, FdInterval):
        return interval_to_dict(obj)
    if isinstance(obj, ExperimentTable):
        return table_to_dict(obj)
    if isinstance(obj, dict):
        return obj
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def _cell(v) -> str:
    if v is None:
        return ""
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v) if math.isfinite(v) else ""
    return str(v)


def _summary_block(writer, items):
    writer.writerow([])
    writer.writerow(["key", "value"])
    for key, value in items:
        if isinstance(value, (list, tuple)):
            value = " ".join(_cell(v) for v in value)
        writer.writerow([key, _cell(value)])


def render_csv(obj) -> str:
    """CSV text: one row per feature (or replicate) followed by a key/value summary."""
    buf = _io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    data = to_dict(obj)
    kind = data.get("kind")
    if kind == "selection":
        selected = set(data["selected"])
        names = data.get("feature_names")
        writer.writerow(["feature", "name", "statistic", "selected"] if names else
                        ["feature", "statistic", "selected"])
        for j, m in enumerate(data["statistics"]):
            row = [j] + ([names[j]] if names else []) + [_cell(m), "1" if j in selected else "0"]
            writer.writerow(row)
        _summary_block(writer, [(k, data[k]) for k in
                                ("method", "q", "seed", "tau", "fdp_hat", "sigma", "lambda", "selected")])
    elif kind == "fd_interval":
        writer.writerow(["replicate", "fd_hat"])
        for b, v in enumerate(data["bootstrap_fd"]):
            writer.writerow([b, _cell(v)])
        _summary_block(writer, [(k, v) for k, v in data.items() if k not in ("kind", "bootstrap_fd")])
    elif kind == "experiment":
        writer.writerow(ROW_FIELDS)
        for r in data["rows"]:
            writer.writerow([_cell(r[k]) for k in ROW_FIELDS])
        items = []
        for method in data["methods"]:
            for stat, v in data["summary"][method].items():
                items.append((f"{method}.{stat}", v))
        _summary_block(writer, items)
    else:
        raise TypeError(f"no CSV layout for {kind!r}")
    return buf.getvalue()


def render_json(obj) -> str:
    return json.dumps(to_dict(obj), indent=2, sort_keys=True, allow_nan=False) + "\n"


def emit_report(obj, path=None, fmt: str = "json") -> str:
    """Serialize ``obj`` as JSON or CSV; write to ``path`` unless it is None or ``-``."""
    if fmt == "json":
        text = render_json(obj)
    elif fmt == "csv":
        text = render_csv(obj)
    else:
        raise ValueError(f"unknown format {fmt!r}")
    if path is not None and str(path) != "-":
        Path(path).write_text(text)
    return text


def read_report_csv(path) -> dict:
    """Parse a selection report written by :func:`render_csv`.

    Returns the statistics (``nan`` where absent), the selected indices and
    the summary values as strings.
    """
    lines = Path(path).read_text().split("\n")
    split = lines.index("")
    rows = list(csv.reader(lines[1:split]))
    stat_col = 2 if lines[0].startswith("feature,name") else 1
    stats = np.array([float(r[stat_col]) if r[stat_col] else math.nan for r in rows])
    summary = {r[0]: r[1] for r in csv.reader(lines[split + 2:]) if r}
    selected = [int(j) for j in summary.get("selected", "").split()]
    return {"statistics": stats, "selected": selected, "summary": summary}


PLOT_FIELDS = ("method", "design_param", "metric", "mean", "sd", "count")


def plot_rows(tables) -> list[dict]:
    """Mean and sd of FDP and power per (method, design parameter).

    ``tables`` is one experiment (table object or its dict form) or a list
    of them, e.g. a parameter sweep.
    """
    if isinstance(tables, (ExperimentTable, dict)):
        tables = [tables]
    groups: dict[tuple[str, float], dict[str, list[float]]] = {}
    for table in tables:
        data = to_dict(table)
        for r in data["rows"]:
            if r.get("error") is not None or r.get("fdp") is None:
                continue
            key = (r["method"], float(r["design_param"]))
            g = groups.setdefault(key, {"fdr": [], "power": []})
            g["fdr"].append(float(r["fdp"]))
            g["power"].append(float(r["power"]))
    out = []
    for (method, param), g in sorted(groups.items()):
        for metric in ("fdr", "power"):
            vals = np.array(g[metric])
            sd = float(np.std(vals, ddof=1)) if vals.size > 1 else 0.0
            out.append({"method": method, "design_param": param, "metric": metric,
                        "mean": float(np.mean(vals)), "sd": sd, "count": int(vals.size)})
    return out


def plot_data(tables, path=None) -> str:
    """Long-format CSV keyed by (method, design_param, metric)."""
    buf = _io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(PLOT_FIELDS)
    for row in plot_rows(tables):
        writer.writerow([_cell(row[k]) if isinstance(row[k], float) else row[k] for k in PLOT_FIELDS])
    text = buf.getvalue()
    if path is not None and str(path) != "-":
        Path(path).write_text(text)
    return text


def read_table(path) -> dict:
    """Load an experiment table from its JSON or CSV serialization."""
    text = Path(path).read_text()
    if text.lstrip().startswith("{"):
        return json.loads(text)
    lines = text.split("\n")
    split = lines.index("") if "" in lines else len(lines)
    reader = csv.DictReader(lines[:split])
    rows = []
    for r in reader:
        rows.append({
            "method": r["method"], "design_param": float(r["design_param"]),
            "fdp": float(r["fdp"]) if r["fdp"] else None,
            "power": float(r["power"]) if r["power"] else None,
            "error": r["error"] or None,
        })
    return {"kind": "experiment", "rows": rows}
