"""Serialise analysis reports as JSON, markdown tables or one CSV per block."""

from __future__ import annotations

import csv
import io
import json
import math
import os
from pathlib import Path
from typing import Any, Mapping

import numpy as np

from .stats.descriptive import stars

FORMATS = ("json", "markdown", "csv")


def _num(v: float | None, digits: int = 2) -> str:
    if v is None:
        return ""
    if isinstance(v, float) and not math.isfinite(v):
        return "inf" if v > 0 else "nan"
    if isinstance(v, int) and not isinstance(v, bool):
        return str(v)
    if v != 0 and abs(v) < 10 ** (-digits):
        return f"{v:.{digits}g}" if abs(v) >= 1e-4 else f"{v:.2e}"
    return f"{v:.{digits}f}"


def format_cell(cell: Any, precise: bool = False) -> str:
    """Human-readable text for one table cell; ``precise`` keeps full float precision."""
    if cell is None:
        return ""
    if isinstance(cell, bool):
        return "yes" if cell else ""
    if isinstance(cell, float):
        return repr(cell) if precise else _num(cell, 3)
    if isinstance(cell, int):
        return str(cell)
    if isinstance(cell, str):
        return cell
    if isinstance(cell, list) and len(cell) == 2:
        lo, hi = (format_cell(c, precise) for c in cell)
        return f"[{lo}, {hi}]"
    if isinstance(cell, Mapping):
        if "r" in cell:
            r = repr(cell["r"]) if precise else _num(cell["r"], 2)
            return f"{r}{stars(cell['p'])}"
        if "mean" in cell:
            return f"{format_cell(cell['mean'], precise)} ({format_cell(cell['sd'], precise)})"
        if "delta_r2" in cell:
            eta = cell.get("partial_eta_sq")
            eta_txt = f", partial eta2={format_cell(eta, precise)}" if eta is not None else ""
            return (
                f"dR2={format_cell(cell['delta_r2'], precise)}, F({cell['df1']},{cell['df2']})="
                f"{format_cell(cell['f'], precise)}, p={format_cell(cell['p'], precise)}{eta_txt}"
            )
        if "df1" in cell and "f" in cell:
            return f"F({cell['df1']},{cell['df2']}) = {format_cell(cell['f'], precise)}"
    return json.dumps(cell, sort_keys=True)


def clean(obj: Any) -> Any:
    """JSON-safe copy: numpy values become Python ones, non-finite floats None."""
    if isinstance(obj, Mapping):
        return {str(k): clean(v) for k, v in obj.items()}
    if isinstance(obj, np.ndarray):
        obj = obj.tolist()
    if isinstance(obj, (list, tuple)):
        return [clean(v) for v in obj]
    if hasattr(obj, "item") and not isinstance(obj, (str, bytes)):
        obj = obj.item()
    if isinstance(obj, float) and not math.isfinite(obj):
        return None
    return obj


def to_json(report: Mapping[str, Any]) -> str:
    return json.dumps(clean(report), indent=2, allow_nan=False) + "\n"


def to_markdown(report: Mapping[str, Any]) -> str:
    out = io.StringIO()
    title = str(report.get("analysis", "report")).upper()
    out.write(f"# {title} (n = {report.get('n')})\n\n")
    attrition = report.get("attrition")
    if attrition:
        out.write(f"Join: {json.dumps(attrition, sort_keys=True)}\n\n")
    for block in report["blocks"]:
        out.write(f"## {block['title']}\n\n")
        cols = block["columns"]
        if cols and block["rows"]:
            out.write("| " + " | ".join(cols) + " |\n")
            out.write("|" + "|".join("---" for _ in cols) + "|\n")
            for row in block["rows"]:
                out.write("| " + " | ".join(format_cell(c) for c in row) + " |\n")
            out.write("\n")
        for note in block.get("notes", []):
            out.write(f"- {note}\n")
        out.write("\n")
    return out.getvalue()


def block_csv(block: Mapping[str, Any]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(block["columns"])
    for row in block["rows"]:
        w.writerow([format_cell(c, precise=True) for c in row])
    return buf.getvalue()


def emit_report(report: Mapping[str, Any], format: str, out: str | os.PathLike) -> list[Path]:
    """Write ``report`` under ``out``; returns the files written.

    ``json`` and ``markdown`` write ``out`` as a single file; ``csv`` treats
    ``out`` as a directory and writes one file per table block.
    """
    path = Path(out)
    if format == "json":
        path.write_text(to_json(report), encoding="utf-8")
        return [path]
    if format == "markdown":
        path.write_text(to_markdown(report), encoding="utf-8")
        return [path]
    if format == "csv":
        path.mkdir(parents=True, exist_ok=True)
        written = []
        for i, block in enumerate(report["blocks"]):
            if not block["columns"]:
                continue
            f = path / f"{i:02d}_{block['name']}.csv"
            f.write_text(block_csv(block), encoding="utf-8")
            written.append(f)
        return written
    raise ValueError(f"unknown report format {format!r}; expected one of {FORMATS}")
