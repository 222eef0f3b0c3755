"""Learning-curve comparison plots written as plain SVG text."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import List, Sequence, Tuple

import numpy as np

from .curves import LearningCurve, read_curve

COLORS = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2",
          "#7f7f7f"]
GRID_POINTS = 200


@dataclass
class PlotSpec:
    # (label, csv paths) per line
    groups: List[Tuple[str, List[Path]]]
    output: Path
    window: int = 20
    x_label: str = "environment steps"
    y_label: str = "episode return (trailing mean)"
    title: str = ""

    def __post_init__(self):
        if not self.groups or not any(paths for _, paths in self.groups):
            raise ValueError("a plot needs at least one input CSV")
        if self.window < 1:
            raise ValueError("window must be >= 1")


def smoothed(curve: LearningCurve, window: int) -> np.ndarray:
    """Trailing mean over up to ``window`` episodes, per episode."""
    r = np.asarray(curve.returns, dtype=np.float64)
    c = np.concatenate([[0.0], np.cumsum(r)])
    idx = np.arange(1, r.size + 1)
    lo = np.maximum(idx - window, 0)
    return (c[idx] - c[lo]) / (idx - lo)


def sample_on_grid(curve: LearningCurve, window: int, grid: np.ndarray) -> np.ndarray:
    """Smoothed return in effect at each grid step; NaN before the first episode ends."""
    steps = np.asarray(curve.steps)
    values = smoothed(curve, window)
    pos = np.searchsorted(steps, grid, side="right") - 1
    out = np.full(grid.shape, np.nan)
    ok = pos >= 0
    out[ok] = values[pos[ok]]
    return out


def group_band(curves: Sequence[LearningCurve], window: int, grid: np.ndarray):
    """(mean, 25th percentile, 75th percentile) across runs at each grid point."""
    samples = np.vstack([sample_on_grid(c, window, grid) for c in curves])
    valid = ~np.isnan(samples).any(axis=0)
    mean = np.full(grid.shape, np.nan)
    lo = np.full(grid.shape, np.nan)
    hi = np.full(grid.shape, np.nan)
    if valid.any():
        s = samples[:, valid]
        mean[valid] = s.mean(axis=0)
        lo[valid] = np.percentile(s, 25, axis=0)
        hi[valid] = np.percentile(s, 75, axis=0)
    return mean, lo, hi


def _esc(text: str) -> str:
    return (text.replace("&", "&amp;").replace("<", "&lt;").replace(">", "&gt;")
            .replace('"', "&quot;"))


def _nice_ticks(lo: float, hi: float, count: int = 5) -> List[float]:
    if hi <= lo:
        return [lo]
    raw = (hi - lo) / count
    mag = 10 ** np.floor(np.log10(raw))
    step = min((m * mag for m in (1, 2, 5, 10) if m * mag >= raw), default=raw)
    start = np.ceil(lo / step) * step
    ticks = []
    t = start
    while t <= hi + 1e-9 * step:
        ticks.append(float(round(t / step) * step))
        t += step
    return ticks


def _tick_label(v: float) -> str:
    if v != 0 and (abs(v) >= 1e5 or abs(v) < 1e-2):
        return f"{v:.0e}"
    if float(v).is_integer():
        return f"{int(v)}"
    return f"{v:g}"


def render_svg(groups: Sequence[Tuple[str, Sequence[LearningCurve]]], window: int = 20,
               title: str = "", x_label: str = "environment steps",
               y_label: str = "episode return (trailing mean)") -> str:
    width, height = 860, 520
    left, right, top, bottom = 80, 190, 50, 60
    pw, ph = width - left - right, height - top - bottom

    all_curves = [c for _, cs in groups for c in cs if len(c)]
    if not all_curves:
        raise ValueError("no episodes to plot")
    x_max = max(c.steps[-1] for c in all_curves)
    grid = np.linspace(0.0, float(x_max), GRID_POINTS)
    bands = [(label, group_band([c for c in cs if len(c)], window, grid)) for label, cs in groups
             if any(len(c) for c in cs)]
    ys = np.concatenate([np.concatenate([m, lo, hi]) for _, (m, lo, hi) in bands])
    ys = ys[~np.isnan(ys)]
    y_lo, y_hi = float(ys.min()), float(ys.max())
    if y_hi - y_lo < 1e-12:
        y_lo, y_hi = y_lo - 1.0, y_hi + 1.0
    pad = 0.05 * (y_hi - y_lo)
    y_lo, y_hi = y_lo - pad, y_hi + pad

    def px(x):
        return left + pw * (x / x_max if x_max else 0.0)

    def py(y):
        return top + ph * (1.0 - (y - y_lo) / (y_hi - y_lo))

    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
           f'viewBox="0 0 {width} {height}" font-family="sans-serif">',
           f'<rect x="0" y="0" width="{width}" height="{height}" fill="#ffffff"/>']
    if title:
        out.append(f'<text x="{left + pw / 2:.1f}" y="28" text-anchor="middle" '
                   f'font-size="16">{_esc(title)}</text>')
    for t in _nice_ticks(y_lo, y_hi):
        y = py(t)
        out.append(f'<line x1="{left}" y1="{y:.2f}" x2="{left + pw}" y2="{y:.2f}" '
                   f'stroke="#e5e5e5"/>')
        out.append(f'<text x="{left - 8}" y="{y + 4:.2f}" text-anchor="end" '
                   f'font-size="11">{_tick_label(t)}</text>')
    for t in _nice_ticks(0.0, float(x_max)):
        x = px(t)
        out.append(f'<line x1="{x:.2f}" y1="{top}" x2="{x:.2f}" y2="{top + ph}" '
                   f'stroke="#f0f0f0"/>')
        out.append(f'<text x="{x:.2f}" y="{top + ph + 18}" text-anchor="middle" '
                   f'font-size="11">{_tick_label(t)}</text>')
    out.append(f'<rect x="{left}" y="{top}" width="{pw}" height="{ph}" fill="none" '
               f'stroke="#333333"/>')
    out.append(f'<text x="{left + pw / 2:.1f}" y="{height - 18}" text-anchor="middle" '
               f'font-size="13">{_esc(x_label)}</text>')
    out.append(f'<text transform="translate(20 {top + ph / 2:.1f}) rotate(-90)" '
               f'text-anchor="middle" font-size="13">{_esc(y_label)}</text>')

    for i, (label, (mean, lo, hi)) in enumerate(bands):
        color = COLORS[i % len(COLORS)]
        ok = ~np.isnan(mean)
        xs = grid[ok]
        if xs.size == 0:
            continue
        upper = " ".join(f"{px(x):.2f},{py(y):.2f}" for x, y in zip(xs, hi[ok]))
        lower = " ".join(f"{px(x):.2f},{py(y):.2f}" for x, y in zip(xs[::-1], lo[ok][::-1]))
        out.append(f'<polygon points="{upper} {lower}" fill="{color}" fill-opacity="0.2" '
                   f'stroke="none"/>')
        line = " ".join(f"{px(x):.2f},{py(y):.2f}" for x, y in zip(xs, mean[ok]))
        out.append(f'<polyline points="{line}" fill="none" stroke="{color}" '
                   f'stroke-width="2"/>')
        ly = top + 16 + 20 * i
        out.append(f'<line x1="{left + pw + 14}" y1="{ly}" x2="{left + pw + 38}" y2="{ly}" '
                   f'stroke="{color}" stroke-width="3"/>')
        out.append(f'<text x="{left + pw + 44}" y="{ly + 4}" font-size="12">{_esc(label)}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def plot(spec: PlotSpec) -> Path:
    groups = [(label, [read_curve(p) for p in paths]) for label, paths in spec.groups]
    svg = render_svg(groups, spec.window, spec.title, spec.x_label, spec.y_label)
    out = Path(spec.output)
    out.write_text(svg, encoding="utf-8", newline="\n")
    return out
