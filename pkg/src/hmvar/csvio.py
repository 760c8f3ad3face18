"""Long-format panel CSV ingestion, report formatting, and atomic file output."""
from __future__ import annotations

import csv
import io
import json
import os
import platform
import tempfile
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import scipy

from . import __version__
from .panel import PanelIndex, build_panel
from .regression import Design


class DataError(ValueError):
    """Malformed input data (reported with its source line)."""


@dataclass
class PanelData:
    panel: PanelIndex
    g_labels: list[str]
    t_values: np.ndarray
    y: np.ndarray | None
    X: np.ndarray | None
    x_names: list[str]

    def design(self) -> Design:
        if self.y is None or self.X is None or not self.x_names:
            raise DataError("estimation needs a 'y' column and at least one regressor column")
        return Design(self.y, self.X, self.panel, list(self.x_names))


def _parse_float(text: str, line: int, col: str) -> float:
    try:
        val = float(text)
    except ValueError:
        raise DataError(f"line {line}: column {col!r}: {text!r} is not a number") from None
    if not np.isfinite(val):
        raise DataError(f"line {line}: column {col!r}: non-finite value {text!r}")
    return val


def read_panel_csv(path, require_outcome: bool = True) -> PanelData:
    """Read columns ``g, t[, y, x1..xk]``; every row must parse."""
    with open(path, newline="", encoding="utf-8") as fh:
        return parse_panel_csv(fh, require_outcome)


def parse_panel_csv(fh, require_outcome: bool = True) -> PanelData:
    reader = csv.reader(fh)
    try:
        header = [h.strip() for h in next(reader)]
    except StopIteration:
        raise DataError("empty file (a header row is required)") from None
    for col in ("g", "t"):
        if col not in header:
            raise DataError(f"line 1: header must contain {col!r} (got {header})")
    if len(set(header)) != len(header):
        raise DataError("line 1: duplicate column names")
    has_y = "y" in header
    if require_outcome and not has_y:
        raise DataError("line 1: header must contain 'y'")
    x_names = [h for h in header if h not in ("g", "t", "y")]
    gi, ti = header.index("g"), header.index("t")
    yi = header.index("y") if has_y else None
    xi = [header.index(h) for h in x_names]
    g_raw, t_raw, ys, xs = [], [], [], []
    for line, row in enumerate(reader, start=2):
        if not row or all(not c.strip() for c in row):
            continue
        if len(row) != len(header):
            raise DataError(f"line {line}: expected {len(header)} fields, found {len(row)}")
        g = row[gi].strip()
        if not g:
            raise DataError(f"line {line}: empty cluster id")
        t_txt = row[ti].strip()
        try:
            t = int(t_txt)
        except ValueError:
            raise DataError(f"line {line}: period {t_txt!r} is not an integer") from None
        g_raw.append(g)
        t_raw.append(t)
        if has_y:
            ys.append(_parse_float(row[yi], line, "y"))
        xs.append([_parse_float(row[j], line, header[j]) for j in xi])
    if not g_raw:
        raise DataError("no data rows")
    labels = sorted(set(g_raw), key=_label_key)
    code = {lab: k + 1 for k, lab in enumerate(labels)}
    t_arr = np.array(t_raw, dtype=np.int64)
    t0 = int(t_arr.min())
    panel = build_panel(zip([code[g] for g in g_raw], (t_arr - t0 + 1).tolist()))
    X = np.array(xs, dtype=float).reshape(len(g_raw), len(x_names))
    return PanelData(panel, labels, t_arr, np.array(ys) if has_y else None,
                     X if x_names else None, x_names)


def _label_key(label: str):
    try:
        return (0, int(label), label)
    except ValueError:
        return (1, 0, label)


def dump_panel_csv(data: PanelData) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    cols = ["g", "t"] + (["y"] if data.y is not None else []) + list(data.x_names)
    w.writerow(cols)
    for i in range(data.panel.n):
        row = [data.g_labels[data.panel.g[i]], int(data.t_values[i])]
        if data.y is not None:
            row.append(repr(float(data.y[i])))
        if data.X is not None:
            row.extend(repr(float(v)) for v in data.X[i])
        w.writerow(row)
    return buf.getvalue()


def design_to_panel_data(d: Design) -> PanelData:
    p = d.panel
    return PanelData(p, [str(lab) for lab in p.cluster_labels], p.t + 1, d.y, d.X, list(d.names))


def atomic_write(path, text: str) -> None:
    """Write to a temporary file beside ``path`` and rename it into place."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def provenance() -> dict:
    return {"hmvar": __version__, "numpy": np.__version__, "scipy": scipy.__version__,
            "python": platform.python_version()}


def to_json(doc: dict) -> str:
    return json.dumps(doc, indent=2, sort_keys=True, default=_json_default) + "\n"


def _json_default(obj):
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def format_table(header: list[str], rows: list[list[str]]) -> str:
    """Right-aligned text table with the first column left-aligned."""
    widths = [max(len(str(r[j])) for r in [header, *rows]) for j in range(len(header))]
    lines = []
    for r in [header, *rows]:
        cells = [str(r[0]).ljust(widths[0])] + [str(c).rjust(w) for c, w in zip(r[1:], widths[1:])]
        lines.append("  ".join(cells))
    lines.insert(1, "-" * len(lines[0]))
    return "\n".join(lines) + "\n"


def rejection_rows(reports) -> tuple[list[str], list[list[str]]]:
    """Rows = configurations, columns = methods."""
    methods = list(reports[0].config.methods)
    header = ["row", "N", "T", "rho", *methods]
    rows = []
    for r in reports:
        c = r.config
        rows.append([c.name or "-", str(c.G), str(c.T), f"{c.rho:.2f}",
                     *[f"{r.rates[m]:.3f}" for m in methods]])
    return header, rows


def rejection_csv(reports) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    methods = list(reports[0].config.methods)
    w.writerow(["row", "N", "T", "rho", "replications", "method", "rate", "mc_se", "failures",
                "mean_variance"])
    for r in reports:
        c = r.config
        for m in methods:
            w.writerow([c.name, c.G, c.T, c.rho, r.replications, m, repr(r.rates[m]),
                        repr(r.mc_se[m]), r.failures[m], repr(r.mean_variance[m])])
    return buf.getvalue()
