"""Result files: trace CSV, JSON documents and log-scale SVG line charts.

Every file is written to a temporary sibling first and moved into place with
``os.replace``, so readers never see a partial file.
"""

from __future__ import annotations

import json
import math
import os
import tempfile
from html import escape

import numpy as np

CSV_HEADER = ("k", "f", "h", "grad_h_sq", "delta_sq", "lambda", "kkt_stationarity",
              "oracle_grad_f", "oracle_grad_g", "oracle_hvp")


def atomic_write(path, text):
    path = os.fspath(path)
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    fd, tmp = tempfile.mkstemp(prefix=".tmp-", dir=directory)
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def fmt_float(v) -> str:
    # 17 significant digits: round-trips every double
    return f"{float(v):.16e}"


def trace_csv(records) -> str:
    lines = [",".join(CSV_HEADER)]
    for r in records:
        calls = r.oracle_calls or {}
        lines.append(",".join([
            str(r.k), fmt_float(r.f_val), fmt_float(r.h_val), fmt_float(r.grad_h_sq),
            fmt_float(r.delta_sq), fmt_float(r.lam), fmt_float(r.kkt_stationarity),
            str(calls.get("grad_f", 0)), str(calls.get("grad_g", 0)), str(calls.get("hvp", 0)),
        ]))
    return "\n".join(lines) + "\n"


def write_trace_csv(path, records):
    atomic_write(path, trace_csv(records))


def _json_default(obj):
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.floating):
        return float(obj)
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if hasattr(obj, "value"):   # enums
        return obj.value
    raise TypeError(f"not JSON serializable: {type(obj).__name__}")


def to_json(doc) -> str:
    return json.dumps(doc, indent=2, sort_keys=True, default=_json_default) + "\n"


def write_json(path, doc):
    atomic_write(path, to_json(doc))


_COLORS = ("#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b")


def svg_line_chart(series, title="", xlabel="k", ylabel="", width=640, height=400) -> str:
    """Line chart with a log10 y axis. ``series`` maps a label to ``(xs, ys)``;
    nonpositive or non-finite y values are dropped."""
    clean = {}
    for label, (xs, ys) in series.items():
        xs = np.asarray(xs, dtype=float)
        ys = np.asarray(ys, dtype=float)
        keep = np.isfinite(ys) & (ys > 0) & np.isfinite(xs)
        if keep.any():
            clean[label] = (xs[keep], np.log10(ys[keep]))
    left, right, top, bottom = 70, 20, 30, 50
    pw, ph = width - left - right, height - top - bottom
    parts = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
             f'font-family="sans-serif" font-size="11">',
             f'<rect width="{width}" height="{height}" fill="white"/>',
             f'<text x="{width / 2}" y="18" text-anchor="middle" font-size="13">{escape(title)}</text>']
    if clean:
        x_lo = min(v[0].min() for v in clean.values())
        x_hi = max(v[0].max() for v in clean.values())
        y_lo = math.floor(min(v[1].min() for v in clean.values()))
        y_hi = math.ceil(max(v[1].max() for v in clean.values()))
        if x_hi == x_lo:
            x_hi = x_lo + 1
        if y_hi == y_lo:
            y_hi = y_lo + 1

        def px(x):
            return left + (x - x_lo) / (x_hi - x_lo) * pw

        def py(ly):
            return top + (y_hi - ly) / (y_hi - y_lo) * ph

        step = max(1, (y_hi - y_lo) // 8)
        for e in range(y_lo, y_hi + 1, step):
            y = py(e)
            parts.append(f'<line x1="{left}" y1="{y:.2f}" x2="{left + pw}" y2="{y:.2f}" stroke="#ddd"/>')
            parts.append(f'<text x="{left - 6}" y="{y + 4:.2f}" text-anchor="end">1e{e}</text>')
        for frac in (0.0, 0.5, 1.0):
            xv = x_lo + frac * (x_hi - x_lo)
            parts.append(f'<text x="{px(xv):.2f}" y="{top + ph + 16}" text-anchor="middle">{xv:.4g}</text>')
        for i, (label, (xs, lys)) in enumerate(clean.items()):
            color = _COLORS[i % len(_COLORS)]
            pts = " ".join(f"{px(a):.2f},{py(b):.2f}" for a, b in zip(xs, lys))
            parts.append(f'<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{pts}"/>')
            parts.append(f'<text x="{left + pw - 4}" y="{top + 14 + 14 * i}" text-anchor="end" '
                         f'fill="{color}">{escape(label)}</text>')
    parts.append(f'<rect x="{left}" y="{top}" width="{pw}" height="{ph}" fill="none" stroke="black"/>')
    parts.append(f'<text x="{left + pw / 2}" y="{height - 10}" text-anchor="middle">{escape(xlabel)}</text>')
    parts.append(f'<text x="16" y="{top + ph / 2}" text-anchor="middle" '
                 f'transform="rotate(-90 16 {top + ph / 2})">{escape(ylabel)}</text>')
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def write_svg(path, series, **kw):
    atomic_write(path, svg_line_chart(series, **kw))
