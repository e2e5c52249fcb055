"""Report formatting: metrics CSVs, summary tables and SVG scatter plots.

All numbers are written with 6 significant digits so that reruns diff
cleanly. An undefined uncertainty ratio is spelled ``undefined``.
"""

from __future__ import annotations

import csv
import io
import json
import math
from pathlib import Path
from xml.sax.saxutils import escape

import numpy as np

from .metrics import UNDEFINED_UR, CaseMetrics
from .volume import VoxelCounts

METRICS_COLUMNS = ("case_id", "split", "dsc", "ur", "certain0", "certain1",
                   "uncertain", "category", "ref_dsc")
UNDEFINED = "undefined"


def fmt(x) -> str:
    if x is None:
        return ""
    if isinstance(x, (int, np.integer)) and not isinstance(x, bool):
        return str(x)
    if math.isinf(x):
        return UNDEFINED
    return f"{x:.6g}"


def num(x):
    """JSON-safe number rounded to 6 significant digits."""
    if x is None:
        return None
    if math.isinf(x):
        return UNDEFINED
    return float(f"{x:.6g}")


def rounded(obj):
    """Recursively round every float in a JSON-like structure."""
    if isinstance(obj, float):
        return num(obj)
    if isinstance(obj, dict):
        return {k: rounded(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [rounded(v) for v in obj]
    return obj


def dump_json(obj, path) -> None:
    Path(path).write_text(json.dumps(rounded(obj), indent=2, sort_keys=True, ensure_ascii=False) + "\n",
                          encoding="utf-8")


def write_rows(path, header, rows) -> None:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([v if isinstance(v, str) else fmt(v) for v in r])
    Path(path).write_text(buf.getvalue(), encoding="utf-8")


def write_metrics_csv(path, metrics) -> None:
    rows = []
    for m in metrics:
        c = m.counts
        rows.append([m.case_id, m.split, m.dsc, m.ur, str(c.certain0), str(c.certain1),
                     str(c.uncertain), m.category or "", m.ref_dsc])
    write_rows(path, METRICS_COLUMNS, rows)


def _opt_float(s):
    if s == "":
        return None
    if s == UNDEFINED:
        return UNDEFINED_UR
    return float(s)


def read_metrics_csv(path) -> list:
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"metrics file not found: {path}")
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        missing = set(METRICS_COLUMNS[:8]) - set(reader.fieldnames or ())
        if missing:
            raise ValueError(f"{path}: missing column(s) {sorted(missing)}")
        out = []
        for row in reader:
            counts = VoxelCounts(int(row["certain0"]), int(row["certain1"]),
                                 int(row["uncertain"]))
            out.append(CaseMetrics(
                row["case_id"], _opt_float(row["dsc"]), _opt_float(row["ur"]), counts,
                category=row["category"] or None, split=row["split"],
                ref_dsc=_opt_float(row.get("ref_dsc", "")),
            ))
    return out


def scatter_svg(xs, ys, *, title="", xlabel="", ylabel="", width=480, height=360,
                vline=None) -> str:
    """A bare static scatter plot; ``vline`` draws a dashed threshold."""
    pad_l, pad_r, pad_t, pad_b = 60, 20, 30, 45
    pw, ph = width - pad_l - pad_r, height - pad_t - pad_b
    xs = [float(x) for x in xs]
    ys = [float(y) for y in ys]
    xmin, xmax = _span(xs + ([vline] if vline is not None else []))
    ymin, ymax = _span(ys)

    def sx(x):
        return pad_l + (x - xmin) / (xmax - xmin) * pw

    def sy(y):
        return pad_t + ph - (y - ymin) / (ymax - ymin) * ph

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}">',
        '<rect width="100%" height="100%" fill="white"/>',
        f'<line x1="{pad_l}" y1="{pad_t + ph}" x2="{pad_l + pw}" y2="{pad_t + ph}" stroke="black"/>',
        f'<line x1="{pad_l}" y1="{pad_t}" x2="{pad_l}" y2="{pad_t + ph}" stroke="black"/>',
        f'<text x="{width / 2:.1f}" y="18" text-anchor="middle" font-size="13">{escape(title)}</text>',
        f'<text x="{pad_l + pw / 2:.1f}" y="{height - 8}" text-anchor="middle" font-size="12">'
        f'{escape(xlabel)}</text>',
        f'<text x="14" y="{pad_t + ph / 2:.1f}" text-anchor="middle" font-size="12" '
        f'transform="rotate(-90 14 {pad_t + ph / 2:.1f})">{escape(ylabel)}</text>',
    ]
    for v, anchor in ((xmin, "start"), (xmax, "end")):
        parts.append(f'<text x="{sx(v):.1f}" y="{pad_t + ph + 15}" text-anchor="{anchor}" '
                     f'font-size="10">{fmt(v)}</text>')
    for v in (ymin, ymax):
        parts.append(f'<text x="{pad_l - 4}" y="{sy(v) + 4:.1f}" text-anchor="end" '
                     f'font-size="10">{fmt(v)}</text>')
    if vline is not None:
        parts.append(f'<line x1="{sx(vline):.2f}" y1="{pad_t}" x2="{sx(vline):.2f}" '
                     f'y2="{pad_t + ph}" stroke="gray" stroke-dasharray="4 3"/>')
    for x, y in zip(xs, ys):
        parts.append(f'<circle cx="{sx(x):.2f}" cy="{sy(y):.2f}" r="3" fill="steelblue"/>')
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def _span(vals):
    if not vals:
        return 0.0, 1.0
    lo, hi = min(vals), max(vals)
    if lo == hi:
        lo, hi = lo - 0.5, hi + 0.5
    return lo, hi
