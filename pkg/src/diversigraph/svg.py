"""Minimal deterministic SVG scatter plots (one circle element per point)."""
from __future__ import annotations

from pathlib import Path
from typing import Sequence
from xml.sax.saxutils import escape

import numpy as np

COLORS = {"liberal": "#2b6cb0", "conservative": "#c53030", "mainstream": "#718096",
          "pruned": "#cbd5e0", "": "#2d3748"}


def _fmt(v: float) -> str:
    return f"{v:.3f}".rstrip("0").rstrip(".")


def scatter(path: str | Path, x: np.ndarray, y: np.ndarray, *, title: str = "", xlabel: str = "",
            ylabel: str = "", classes: Sequence[str] | None = None, invert_y: bool = False,
            xlim: tuple[float, float] | None = None, ylim: tuple[float, float] | None = None,
            size: int = 480, radius: float = 1.5) -> None:
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape:
        raise ValueError("x and y differ in length")
    margin = 48
    inner = size - 2 * margin

    def lims(v, given):
        if given is not None:
            return given
        if v.size == 0:
            return 0.0, 1.0
        lo, hi = float(v.min()), float(v.max())
        if lo == hi:
            lo, hi = lo - 0.5, hi + 0.5
        return lo, hi

    x0, x1 = lims(x, xlim)
    y0, y1 = lims(y, ylim)
    px = margin + (x - x0) / (x1 - x0) * inner
    py = (y - y0) / (y1 - y0) * inner
    py = margin + (py if invert_y else inner - py)
    out = [
        '<?xml version="1.0" encoding="UTF-8"?>',
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{size}" height="{size}" '
        f'viewBox="0 0 {size} {size}">',
        f'<rect x="{margin}" y="{margin}" width="{inner}" height="{inner}" fill="none" stroke="#a0aec0"/>',
    ]
    if title:
        out.append(f'<text x="{size / 2:g}" y="{margin / 2:g}" text-anchor="middle" '
                   f'font-size="14">{escape(title)}</text>')
    if xlabel:
        out.append(f'<text x="{size / 2:g}" y="{size - 12}" text-anchor="middle" '
                   f'font-size="12">{escape(xlabel)}</text>')
    if ylabel:
        out.append(f'<text x="14" y="{size / 2:g}" text-anchor="middle" font-size="12" '
                   f'transform="rotate(-90 14 {size / 2:g})">{escape(ylabel)}</text>')
    for lab, v in (("x", (x0, x1)), ("y", (y0, y1))):
        out.append(f'<desc>{lab}-range {_fmt(v[0])} {_fmt(v[1])}</desc>')
    for i in range(x.size):
        cls = classes[i] if classes is not None else ""
        fill = COLORS.get(cls, COLORS[""])
        attr = f' class="{escape(cls)}"' if cls else ""
        out.append(f'<circle cx="{_fmt(px[i])}" cy="{_fmt(py[i])}" r="{_fmt(radius)}" '
                   f'fill="{fill}"{attr}/>')
    out.append("</svg>")
    Path(path).write_text("\n".join(out) + "\n", encoding="utf-8")


def read_circles(path: str | Path) -> list[dict[str, str]]:
    """Attribute dicts of every circle element (used to check plots)."""
    import xml.etree.ElementTree as ET

    root = ET.parse(path).getroot()
    return [dict(c.attrib) for c in root.iter("{http://www.w3.org/2000/svg}circle")]
