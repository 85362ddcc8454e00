"""CSV report writing and minimal SVG plots.

Floats are written with 17 significant digits ('.17g'), which round-trips
64-bit values exactly, so identical runs produce byte-identical files.  A
generation timestamp comment is prepended unless deterministic mode is on.
"""

from __future__ import annotations

import math
from datetime import datetime, timezone
from pathlib import Path
from typing import Optional, Sequence

__all__ = ["format_value", "write_csv", "svg_loglog"]


def format_value(v) -> str:
    if isinstance(v, bool):
        return "1" if v else "0"
    if isinstance(v, (int,)):
        return str(v)
    if isinstance(v, float):
        return format(v, ".17g")
    try:
        import numpy as np

        if isinstance(v, np.integer):
            return str(int(v))
        if isinstance(v, np.floating):
            return format(float(v), ".17g")
    except ImportError:  # pragma: no cover
        pass
    return str(v)


def write_csv(
    path,
    header: Sequence[str],
    rows: Sequence[Sequence],
    deterministic: bool = False,
    meta: Optional[dict] = None,
) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    lines = []
    if not deterministic:
        stamp = datetime.now(timezone.utc).isoformat()
        lines.append(f"# generated {stamp}")
    if meta:
        pairs = " ".join(f"{k}={format_value(meta[k])}" for k in sorted(meta))
        lines.append(f"# {pairs}")
    lines.append(",".join(header))
    for row in rows:
        lines.append(",".join(format_value(v) for v in row))
    path.write_text("\n".join(lines) + "\n")
    return path


def svg_loglog(
    path,
    xs: Sequence[float],
    ys: Sequence[float],
    fit: Optional[tuple[float, float]] = None,
    title: str = "",
    width: int = 480,
    height: int = 360,
) -> Path:
    """Decorative log-log scatter with an optional fitted line (slope,
    intercept in natural-log coordinates).  No external dependencies."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    pts = [(math.log10(x), math.log10(y)) for x, y in zip(xs, ys) if x > 0 and y > 0]
    if not pts:
        raise ValueError("nothing positive to plot")
    margin = 50
    lx = [p[0] for p in pts]
    ly = [p[1] for p in pts]
    x0, x1 = min(lx), max(lx)
    y0, y1 = min(ly), max(ly)
    dx = (x1 - x0) or 1.0
    dy = (y1 - y0) or 1.0

    def sx(v):
        return margin + (v - x0) / dx * (width - 2 * margin)

    def sy(v):
        return height - margin - (v - y0) / dy * (height - 2 * margin)

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}">',
        f'<rect width="{width}" height="{height}" fill="white"/>',
        f'<text x="{width / 2}" y="20" text-anchor="middle" font-size="13">{title}</text>',
        f'<line x1="{margin}" y1="{height - margin}" x2="{width - margin}" '
        f'y2="{height - margin}" stroke="black"/>',
        f'<line x1="{margin}" y1="{margin}" x2="{margin}" y2="{height - margin}" '
        f'stroke="black"/>',
    ]
    if fit is not None:
        slope, intercept = fit
        # fitted line in log10 coordinates
        fy0 = (slope * (x0 * math.log(10)) + intercept) / math.log(10)
        fy1 = (slope * (x1 * math.log(10)) + intercept) / math.log(10)
        parts.append(
            f'<line x1="{sx(x0):.1f}" y1="{sy(fy0):.1f}" x2="{sx(x1):.1f}" '
            f'y2="{sy(fy1):.1f}" stroke="#888" stroke-dasharray="4 3"/>'
        )
        parts.append(
            f'<text x="{width - margin}" y="{margin}" text-anchor="end" '
            f'font-size="12">slope {slope:.3f}</text>'
        )
    for px, py in pts:
        parts.append(
            f'<circle cx="{sx(px):.1f}" cy="{sy(py):.1f}" r="3.5" fill="#1f3d7a"/>'
        )
    parts.append("</svg>")
    path.write_text("\n".join(parts) + "\n")
    return path
