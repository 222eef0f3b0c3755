"""Learning curves, the metrics computed on them, and their CSV form."""

from __future__ import annotations

import io
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import List, Optional, TextIO

import numpy as np

CSV_HEADER = "episode,steps,return,epsilon,loss_mean"


@dataclass
class LearningCurve:
    """Per-episode record of one seeded run.

    ``steps[i]`` is the cumulative environment step count when episode ``i``
    ended. ``loss_means[i]`` is None when no gradient step happened during the
    episode (always the case for tabular agents).
    """

    steps: List[int] = field(default_factory=list)
    returns: List[float] = field(default_factory=list)
    epsilons: List[float] = field(default_factory=list)
    loss_means: List[Optional[float]] = field(default_factory=list)

    def __len__(self):
        return len(self.steps)

    def append(self, steps: int, ret: float, epsilon: float = 0.0,
               loss_mean: Optional[float] = None) -> None:
        if self.steps and steps <= self.steps[-1]:
            raise ValueError(f"cumulative steps must increase: {steps} after {self.steps[-1]}")
        self.steps.append(int(steps))
        self.returns.append(float(ret))
        self.epsilons.append(float(epsilon))
        self.loss_means.append(None if loss_mean is None else float(loss_mean))


def _fmt(x: Optional[float]) -> str:
    return "" if x is None else repr(float(x))


def format_row(i: int, curve: LearningCurve) -> str:
    return (f"{i},{curve.steps[i]},{_fmt(curve.returns[i])},"
            f"{_fmt(curve.epsilons[i])},{_fmt(curve.loss_means[i])}\n")


class CurveWriter:
    """Streams a curve to CSV, flushing after every row."""

    def __init__(self, path: Path):
        self._fh: TextIO = open(path, "w", newline="\n", encoding="utf-8")
        self._fh.write(CSV_HEADER + "\n")
        self._fh.flush()

    def write_episode(self, curve: LearningCurve) -> None:
        self._fh.write(format_row(len(curve) - 1, curve))
        self._fh.flush()

    def close(self):
        self._fh.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def curve_to_csv(curve: LearningCurve) -> str:
    buf = io.StringIO(newline="\n")
    buf.write(CSV_HEADER + "\n")
    for i in range(len(curve)):
        buf.write(format_row(i, curve))
    return buf.getvalue()


def write_curve(curve: LearningCurve, path: Path) -> None:
    Path(path).write_text(curve_to_csv(curve), encoding="utf-8", newline="\n")


def parse_curve(text: str, source: str = "<csv>") -> LearningCurve:
    lines = text.split("\n")
    if not lines or lines[0].strip() != CSV_HEADER:
        raise ValueError(f"{source}: expected header {CSV_HEADER!r}")
    curve = LearningCurve()
    for lineno, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        parts = line.split(",")
        if len(parts) != 5:
            raise ValueError(f"{source}:{lineno}: expected 5 fields, got {len(parts)}")
        try:
            episode = int(parts[0])
            if episode != len(curve):
                raise ValueError(f"episode index {episode} out of sequence")
            curve.append(int(parts[1]), float(parts[2]), float(parts[3]),
                         float(parts[4]) if parts[4] else None)
        except ValueError as exc:
            raise ValueError(f"{source}:{lineno}: {exc}") from None
    return curve


def read_curve(path: Path) -> LearningCurve:
    return parse_curve(Path(path).read_text(encoding="utf-8"), str(path))


def steps_to_threshold(curve: LearningCurve, threshold: float, window: int) -> Optional[int]:
    """First cumulative step count at which the trailing ``window``-episode mean
    return reaches ``threshold``; None if it never does."""
    if window < 1:
        raise ValueError("window must be >= 1")
    r = curve.returns
    for end in range(window, len(r) + 1):
        if math.fsum(r[end - window:end]) / window >= threshold:
            return curve.steps[end - 1]
    return None


def curve_auc(curve: LearningCurve, budget: int) -> float:
    """Step-weighted mean return over ``[0, budget]``.

    Returns are piecewise constant over each episode's steps; the last
    episode's return is extended to ``budget``. NaN for an empty curve.
    """
    if budget <= 0:
        raise ValueError("budget must be positive")
    if not curve.steps:
        return float("nan")
    total = 0.0
    prev = 0
    for s, r in zip(curve.steps, curve.returns):
        end = min(s, budget)
        if end > prev:
            total += r * (end - prev)
            prev = end
        if s >= budget:
            break
    if prev < budget:
        total += curve.returns[-1] * (budget - prev)
    return total / budget


def final_mean_return(curve: LearningCurve, window: int) -> float:
    if not curve.returns:
        return float("nan")
    return float(np.mean(curve.returns[-window:]))
