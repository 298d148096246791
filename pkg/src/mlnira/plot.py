"""Bar chart of mean total scores per scenario, written as plain SVG markup."""

from __future__ import annotations

import csv
import io
import math
from xml.sax.saxutils import escape

from .nira import BASELINE, ComparisonReport

WIDTH, HEIGHT = 640, 360
MARGIN = dict(left=60, right=20, top=40, bottom=60)
BAR_COLOR = "#6b8fb5"
BASELINE_COLOR = "#d9822b"


def _nice_max(v: float) -> float:
    if v <= 0:
        return 1.0
    exp = 10 ** math.floor(math.log10(v))
    for step in (1, 2, 2.5, 5, 10):
        if step * exp >= v:
            return step * exp
    return 10 * exp


def chart_data(report: ComparisonReport) -> list[tuple[str, float, bool]]:
    bars = [(BASELINE, report.baseline_mean, False)]
    bars += [(r.target, r.mean_total, r.significant) for r in report.rows]
    return bars


def chart_csv(report: ComparisonReport) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["scenario", "mean_total", "significant"])
    for label, value, sig in chart_data(report):
        w.writerow([label, repr(value), str(sig).lower()])
    return buf.getvalue()


def render_svg(report: ComparisonReport, title: str | None = None) -> str:
    bars = chart_data(report)
    plot_w = WIDTH - MARGIN["left"] - MARGIN["right"]
    plot_h = HEIGHT - MARGIN["top"] - MARGIN["bottom"]
    top = _nice_max(max(v for _, v, _ in bars) * 1.1)
    slot = plot_w / len(bars)
    bar_w = slot * 0.7
    x0, y0 = MARGIN["left"], MARGIN["top"] + plot_h
    title = title or f"Mean total score, {report.direction} (level: {report.level})"

    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" '
        f'viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="11">',
        f'<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>',
        f'<text x="{WIDTH / 2:.1f}" y="22" text-anchor="middle" font-size="14">{escape(title)}</text>',
        f'<line x1="{x0}" y1="{y0}" x2="{x0 + plot_w}" y2="{y0}" stroke="black"/>',
        f'<line x1="{x0}" y1="{MARGIN["top"]}" x2="{x0}" y2="{y0}" stroke="black"/>',
    ]
    for i in range(6):
        v = top * i / 5
        y = y0 - plot_h * i / 5
        out.append(f'<line x1="{x0 - 4}" y1="{y:.1f}" x2="{x0}" y2="{y:.1f}" stroke="black"/>')
        out.append(f'<text x="{x0 - 7}" y="{y + 4:.1f}" text-anchor="end">{v:.3g}</text>')
    base_y = y0 - plot_h * report.baseline_mean / top
    for i, (label, value, sig) in enumerate(bars):
        h = plot_h * value / top
        x = x0 + i * slot + (slot - bar_w) / 2
        color = BASELINE_COLOR if label == BASELINE else BAR_COLOR
        out.append(
            f'<rect x="{x:.1f}" y="{y0 - h:.1f}" width="{bar_w:.1f}" height="{h:.1f}" fill="{color}">'
            f"<title>{escape(label)}: {value:.4f}</title></rect>"
        )
        cx = x + bar_w / 2
        out.append(
            f'<text x="{cx:.1f}" y="{y0 + 14}" text-anchor="end" '
            f'transform="rotate(-35 {cx:.1f} {y0 + 14})">{escape(label)}</text>'
        )
        if sig:
            out.append(f'<text x="{cx:.1f}" y="{y0 - h - 4:.1f}" text-anchor="middle">*</text>')
    out.append(
        f'<line x1="{x0}" y1="{base_y:.1f}" x2="{x0 + plot_w}" y2="{base_y:.1f}" '
        f'stroke="{BASELINE_COLOR}" stroke-dasharray="4 3"/>'
    )
    out.append("</svg>")
    return "\n".join(out) + "\n"
