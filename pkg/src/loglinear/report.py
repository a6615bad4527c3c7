"""
Text renderings (markdown / CSV / JSON) of fits and tables, and static
SVG bar charts written without a plotting library.
"""

import csv
import io
import json
from html import escape

import numpy as np

from .contingency import ContingencyTable, Factor, margin
from .inference import wald_tests

__all__ = [
    "format_estimate",
    "format_p",
    "coefficient_rows",
    "render_coefficients",
    "render_margins",
    "grouped_bar_chart",
    "table_charts",
]


def format_estimate(value, digits=4):
    return f"{value:.{digits}f}"


def format_p(p, digits=4):
    """Fixed-precision p-value with the ``<.0001`` sentinel."""
    if p < 10.0**-digits:
        return "<." + "0" * (digits - 1) + "1"
    return f"{p:.{digits}f}"


def coefficient_rows(result):
    """``(term, levels, estimate, se, p)`` per coefficient, in design order."""
    rows = []
    for col, test in zip(result.design.columns, wald_tests(result)):
        term = "*".join(col.term) if col.term else "Intercept"
        rows.append((term, col.levels, test.estimate, test.std_error, test.p_value))
    return rows


def render_coefficients(result, fmt="markdown", digits=4):
    """Coefficient table: term, levels, estimate, SE, p-value."""
    rows = coefficient_rows(result)
    if fmt == "json":
        return json.dumps(
            {
                "model": result.model,
                "coefficients": [
                    {"term": t, "levels": list(lv), "estimate": e, "std_error": s, "p_value": p}
                    for t, lv, e, s, p in rows
                ],
                "deviance": result.deviance,
                "df_resid": result.df_resid,
                "bic": result.bic,
            },
            ensure_ascii=False,
            indent=2,
        )
    width = max(len(lv) for _, lv, *_ in rows)
    header = ["參數"] + [""] * width + ["估計值", "標準差", "p.value"]
    body = []
    for term, levels, est, se, p in rows:
        cells = list(levels) + [""] * (width - len(levels))
        body.append([term, *cells, format_estimate(est, digits), format_estimate(se, digits), format_p(p, digits)])
    if fmt == "csv":
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(header)
        writer.writerows(body)
        return buf.getvalue()
    if fmt != "markdown":
        raise ValueError(f"unknown format {fmt!r}")
    lines = ["| " + " | ".join(header) + " |", "|" + "---|" * (width + 1) + "---:|" * 3]
    lines += ["| " + " | ".join(r) + " |" for r in body]
    return "\n".join(lines) + "\n"


def render_margins(table: ContingencyTable, digits=1):
    """Total plus per-factor counts and percentages, one line per level."""
    total = table.total
    lines = [f"total: {total}"]
    for f in table.factors:
        m = margin(table, [f.name])
        parts = []
        for (level,), n in m.cells():
            pct = 100.0 * n / total if total else 0.0
            parts.append(f"{level} {n} ({pct:.{digits}f}%)")
        lines.append(f"{f.name}: " + ", ".join(parts))
    return "\n".join(lines) + "\n"


_PALETTE = ("#4c72b0", "#dd8452", "#55a868", "#c44e52", "#8172b3", "#937860")


def grouped_bar_chart(categories, series, title="", width=720, height=400):
    """SVG text for a grouped bar chart.

    Parameters
    ----------
    categories : sequence of str
        x-axis groups, drawn in the given order.
    series : dict
        Series name -> one value per category.  One bar per series inside
        each group; a single series gives a plain bar chart.
    """
    categories = list(categories)
    names = list(series)
    values = np.array([list(series[n]) for n in names], dtype=float).reshape(len(names), len(categories))
    top = float(values.max()) if values.size else 0.0
    left, right, upper, lower = 60, 20, 40, 60
    plot_w = width - left - right
    plot_h = height - upper - lower
    group_w = plot_w / max(len(categories), 1)
    bar_w = group_w * 0.8 / max(len(names), 1)

    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}" font-family="sans-serif" font-size="12">',
        f'<rect width="{width}" height="{height}" fill="white"/>',
        f'<text x="{width / 2:.1f}" y="20" text-anchor="middle" font-size="14">{escape(title)}</text>',
        f'<line x1="{left}" y1="{upper + plot_h}" x2="{left + plot_w}" y2="{upper + plot_h}" stroke="black"/>',
        f'<line x1="{left}" y1="{upper}" x2="{left}" y2="{upper + plot_h}" stroke="black"/>',
    ]
    for k in range(5):
        v = top * k / 4
        y = upper + plot_h - (plot_h * k / 4)
        out.append(f'<text x="{left - 6}" y="{y + 4:.1f}" text-anchor="end">{v:.0f}</text>')
    for i, cat in enumerate(categories):
        x0 = left + i * group_w + group_w * 0.1
        for j, name in enumerate(names):
            v = values[j, i]
            h = plot_h * v / top if top > 0 else 0.0
            x = x0 + j * bar_w
            y = upper + plot_h - h
            out.append(
                f'<rect x="{x:.1f}" y="{y:.1f}" width="{bar_w:.1f}" height="{h:.1f}" '
                f'fill="{_PALETTE[j % len(_PALETTE)]}" data-series="{escape(str(name))}" '
                f'data-category="{escape(str(cat))}" data-value="{v:g}"/>'
            )
        cx = left + (i + 0.5) * group_w
        out.append(
            f'<text x="{cx:.1f}" y="{upper + plot_h + 16}" text-anchor="middle">{escape(str(cat))}</text>'
        )
    if len(names) > 1:
        for j, name in enumerate(names):
            x = left + 10 + j * 90
            y = height - 18
            out.append(f'<rect x="{x}" y="{y - 10}" width="10" height="10" fill="{_PALETTE[j % len(_PALETTE)]}"/>')
            out.append(f'<text x="{x + 14}" y="{y}">{escape(str(name))}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def _by(table, x_name, series_name=None):
    fx = table.factor(x_name)
    if series_name is None:
        m = margin(table, [x_name])
        return fx.levels, {"count": m.counts.tolist()}
    m = margin(table, [x_name, series_name])
    vals = m.values if m.names == (x_name, series_name) else m.values.T
    fs = table.factor(series_name)
    return fx.levels, {lv: vals[:, j].tolist() for j, lv in enumerate(fs.levels)}


def table_charts(table: ContingencyTable, region="縣市", age="年齡", gender="性別", levels=None):
    """The standard chart set for a gender x age x region table.

    Returns a dict of file stem -> SVG text: counts by region, region by
    gender, age by gender, and region by age.  ``levels`` optionally
    restricts the region axis (e.g. to the split counties).
    """
    sub = table
    if levels is not None:
        f = table.factor(region)
        idx = [f.index(lv) for lv in levels]
        axis = table.axis(region)
        factors = list(table.factors)
        factors[axis] = Factor(region, tuple(levels))
        sub = ContingencyTable(factors, np.take(table.values, idx, axis=axis))
    charts = {}
    cats, series = _by(sub, region)
    charts["region"] = grouped_bar_chart(cats, series, f"{region}: counts")
    cats, series = _by(sub, region, gender)
    charts["region_gender"] = grouped_bar_chart(cats, series, f"{region} x {gender}")
    cats, series = _by(table, age, gender)
    charts["age_gender"] = grouped_bar_chart(cats, series, f"{age} x {gender}")
    cats, series = _by(sub, region, age)
    charts["region_age"] = grouped_bar_chart(cats, series, f"{region} x {age}")
    return charts
