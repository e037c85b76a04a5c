#!/usr/bin/env python3
"""
Output artifacts: staged atomic writes and SVG line charts

Subcommands stage every artifact in memory first. Nothing touches the output
directory until the whole run has succeeded; each file is then written to a
temporary name in the target directory and renamed into place.
"""

import io
import json
import logging
import os
import tempfile
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Dict, FrozenSet, List, Sequence, TextIO
from xml.sax.saxutils import escape

import numpy as np

logger = logging.getLogger("mottlab-artifacts")

PALETTE = ("#d62728", "#1f77b4", "#9467bd", "#2ca02c", "#ff7f0e", "#8c564b")


class ArtifactWriter:
    """Collects named artifacts by format and commits them in one go."""

    def __init__(self, out_dir: Path, formats: FrozenSet[str]):
        self.out_dir = Path(out_dir)
        self.formats = formats
        self._staged: Dict[str, str] = {}

    def wants(self, fmt: str) -> bool:
        return fmt in self.formats

    def add_text(self, name: str, fmt: str, content: str) -> None:
        if self.wants(fmt):
            self._staged[name] = content

    def add_csv(self, name: str, render: Callable[[TextIO], None]) -> None:
        if self.wants("csv"):
            buffer = io.StringIO()
            render(buffer)
            self._staged[name] = buffer.getvalue()

    def add_json(self, name: str, payload: dict) -> None:
        self.add_text(name, "json", json.dumps(payload, indent=2, sort_keys=True) + "\n")

    def commit(self) -> List[Path]:
        """Write all staged artifacts; on failure, leave neither temporaries nor a partial set."""
        self.out_dir.mkdir(parents=True, exist_ok=True)
        temporaries = []
        placed = []
        try:
            for name, content in self._staged.items():
                fd, tmp = tempfile.mkstemp(prefix=f".{name}.", dir=self.out_dir)
                temporaries.append((tmp, self.out_dir / name))
                with os.fdopen(fd, "w", encoding="utf-8", newline="") as f:
                    f.write(content)
            for tmp, final in temporaries:
                os.replace(tmp, final)
                placed.append(final)
        except OSError:
            for path in [tmp for tmp, _ in temporaries] + placed:
                if os.path.exists(path):
                    os.unlink(path)
            raise
        written = [final for _, final in temporaries]
        for path in written:
            logger.info(f"Wrote {path}")
        return written


@dataclass
class Series:
    label: str
    x: Sequence[float]
    y: Sequence[float]
    markers: bool = False


def _ticks(lo: float, hi: float, count: int = 5) -> np.ndarray:
    if hi <= lo:
        hi = lo + 1.0
    raw = (hi - lo) / count
    magnitude = 10 ** np.floor(np.log10(raw))
    step = min((m * magnitude for m in (1, 2, 5, 10) if m * magnitude >= raw), default=raw)
    return np.arange(np.ceil(lo / step) * step, hi + step * 1e-9, step)


def line_chart_svg(
    series: Sequence[Series],
    x_label: str,
    y_label: str,
    title: str = "",
    width: int = 640,
    height: int = 420,
) -> str:
    """
    Render series as an SVG 1.1 chart: one polyline per line series, circles
    for marker series, with ticks and axis labels.
    """
    left, right, top, bottom = 70, 20, 40, 55
    xs = np.concatenate([np.asarray(s.x, dtype=float) for s in series])
    ys = np.concatenate([np.asarray(s.y, dtype=float) for s in series])
    finite = np.isfinite(xs) & np.isfinite(ys)
    x_lo, x_hi = float(np.min(xs[finite])), float(np.max(xs[finite]))
    y_lo, y_hi = min(0.0, float(np.min(ys[finite]))), float(np.max(ys[finite]))
    if x_hi <= x_lo:
        x_hi = x_lo + 1.0
    if y_hi <= y_lo:
        y_hi = y_lo + 1.0
    plot_w = width - left - right
    plot_h = height - top - bottom

    def px(x):
        return left + (x - x_lo) / (x_hi - x_lo) * plot_w

    def py(y):
        return top + plot_h - (y - y_lo) / (y_hi - y_lo) * plot_h

    out = [
        '<?xml version="1.0" encoding="UTF-8"?>',
        f'<svg xmlns="http://www.w3.org/2000/svg" version="1.1" '
        f'width="{width}" height="{height}" viewBox="0 0 {width} {height}">',
        f'<rect x="0" y="0" width="{width}" height="{height}" fill="white"/>',
    ]
    if title:
        out.append(
            f'<text x="{width / 2:.1f}" y="22" text-anchor="middle" font-size="15">'
            f"{escape(title)}</text>"
        )
    x0, y0 = left, top + plot_h
    out.append(f'<line x1="{x0}" y1="{y0}" x2="{x0 + plot_w}" y2="{y0}" stroke="black"/>')
    out.append(f'<line x1="{x0}" y1="{top}" x2="{x0}" y2="{y0}" stroke="black"/>')
    for tick in _ticks(x_lo, x_hi):
        x = px(tick)
        out.append(f'<line x1="{x:.2f}" y1="{y0}" x2="{x:.2f}" y2="{y0 + 5}" stroke="black"/>')
        out.append(
            f'<text x="{x:.2f}" y="{y0 + 18}" text-anchor="middle" font-size="11">{tick:g}</text>'
        )
    for tick in _ticks(y_lo, y_hi):
        y = py(tick)
        out.append(f'<line x1="{x0 - 5}" y1="{y:.2f}" x2="{x0}" y2="{y:.2f}" stroke="black"/>')
        out.append(
            f'<text x="{x0 - 8}" y="{y + 4:.2f}" text-anchor="end" font-size="11">{tick:g}</text>'
        )
    out.append(
        f'<text x="{x0 + plot_w / 2:.1f}" y="{height - 12}" text-anchor="middle" '
        f'font-size="13">{escape(x_label)}</text>'
    )
    out.append(
        f'<text x="16" y="{top + plot_h / 2:.1f}" text-anchor="middle" font-size="13" '
        f'transform="rotate(-90 16 {top + plot_h / 2:.1f})">{escape(y_label)}</text>'
    )

    for i, s in enumerate(series):
        color = PALETTE[i % len(PALETTE)]
        points = [
            (px(x), py(y))
            for x, y in zip(np.asarray(s.x, dtype=float), np.asarray(s.y, dtype=float))
            if np.isfinite(x) and np.isfinite(y)
        ]
        if s.markers:
            out.append(f'<g class="series" fill="{color}"><title>{escape(s.label)}</title>')
            out.extend(f'<circle cx="{x:.2f}" cy="{y:.2f}" r="3"/>' for x, y in points)
            out.append("</g>")
        else:
            coords = " ".join(f"{x:.2f},{y:.2f}" for x, y in points)
            out.append(
                f'<polyline class="series" fill="none" stroke="{color}" stroke-width="1.5" '
                f'points="{coords}"><title>{escape(s.label)}</title></polyline>'
            )
        out.append(
            f'<text x="{x0 + plot_w - 8}" y="{top + 14 + 16 * i}" text-anchor="end" '
            f'font-size="12" fill="{color}">{escape(s.label)}</text>'
        )
    out.append("</svg>")
    return "\n".join(out) + "\n"
