"""Minimal dependency-free SVG learning curves (success rate and alpha against iteration)."""

from __future__ import annotations

from xml.sax.saxutils import escape

_COLORS = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#e377c2", "#7f7f7f",
           "#bcbd22", "#17becf"]


def write_learning_curve_svg(path, curves: dict, width: int = 640, height: int = 360) -> None:
    """One solid success-rate line and one dashed alpha line per run in ``curves`` (label -> RunMetrics)."""
    pad = 40
    n_max = max((len(m.rows) for m in curves.values()), default=1) or 1

    def xy(i, v):
        x = pad + (width - 2 * pad) * (i / max(1, n_max - 1))
        y = height - pad - (height - 2 * pad) * min(max(v, 0.0), 1.0)
        return f"{x:.1f},{y:.1f}"

    parts = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}">',
             f'<rect width="{width}" height="{height}" fill="white"/>',
             f'<line x1="{pad}" y1="{height - pad}" x2="{width - pad}" y2="{height - pad}" stroke="black"/>',
             f'<line x1="{pad}" y1="{pad}" x2="{pad}" y2="{height - pad}" stroke="black"/>',
             f'<text x="{width / 2}" y="{height - 8}" text-anchor="middle" font-size="12">iteration</text>',
             f'<text x="12" y="{pad - 10}" font-size="12">success (solid), alpha (dashed)</text>']
    for k, (label, m) in enumerate(curves.items()):
        c = _COLORS[k % len(_COLORS)]
        succ = " ".join(xy(i, r.success_rate) for i, r in enumerate(m.rows))
        alpha = " ".join(xy(i, r.alpha) for i, r in enumerate(m.rows))
        parts.append(f'<polyline fill="none" stroke="{c}" points="{succ}"/>')
        parts.append(f'<polyline fill="none" stroke="{c}" stroke-dasharray="4 3" points="{alpha}"/>')
        parts.append(f'<text x="{width - pad + 2}" y="{pad + 14 * k}" font-size="10" fill="{c}">'
                     f'{escape(label)}</text>')
    parts.append("</svg>")
    with open(path, "w") as fh:
        fh.write("\n".join(parts) + "\n")
