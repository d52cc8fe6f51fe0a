"""Log-linear scaling fit over (VLM size, LLM size, accuracy) points.

Model:  A = beta0 + beta_v * ln(S_V) + beta_l * ln(S_L)

Natural logarithm throughout: on the shipped 3x3 size grid it reproduces the
published coefficients (73.01, 0.84, 2.66), which base-10 logs do not. Solved
by ordinary least squares via the normal equations; the system is 3x3, so a
direct Gaussian elimination with partial pivoting is exact enough and keeps
this module dependency-free.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Sequence


class ScalingError(ValueError):
    pass


@dataclass(frozen=True)
class ScalingPoint:
    s_v: float  # VLM parameter count, billions
    s_l: float  # LLM parameter count, billions
    accuracy: float  # percent

    def __post_init__(self):
        if self.s_v <= 0 or self.s_l <= 0:
            raise ScalingError(f"model sizes must be positive, got ({self.s_v}, {self.s_l})")
        if not 0 <= self.accuracy <= 100:
            raise ScalingError(f"accuracy {self.accuracy} outside [0, 100]")


@dataclass(frozen=True)
class FitResult:
    beta0: float
    beta_v: float
    beta_l: float
    r_squared: float
    residuals: tuple[float, ...]
    n: int

    def to_dict(self) -> dict:
        return {
            "beta0": self.beta0,
            "beta_v": self.beta_v,
            "beta_l": self.beta_l,
            "r_squared": self.r_squared,
            "residuals": list(self.residuals),
            "n": self.n,
            "log_base": "e",
        }


def _solve3(a: list[list[float]], b: list[float]) -> list[float]:
    """Gaussian elimination with partial pivoting for a 3x3 system."""
    m = [row[:] + [rhs] for row, rhs in zip(a, b)]
    n = 3
    for col in range(n):
        pivot = max(range(col, n), key=lambda r: abs(m[r][col]))
        if abs(m[pivot][col]) < 1e-12:
            raise ScalingError("rank-deficient design: need at least two distinct sizes per axis")
        m[col], m[pivot] = m[pivot], m[col]
        for row in range(col + 1, n):
            factor = m[row][col] / m[col][col]
            for k in range(col, n + 1):
                m[row][k] -= factor * m[col][k]
    x = [0.0] * n
    for row in range(n - 1, -1, -1):
        x[row] = (m[row][n] - sum(m[row][k] * x[k] for k in range(row + 1, n))) / m[row][row]
    return x


def fit_log_linear(points: Sequence[ScalingPoint]) -> FitResult:
    """OLS fit of accuracy on [1, ln s_v, ln s_l].

    Needs n >= 4 and a full-rank design (at least two distinct sizes on each
    axis). When all accuracies are equal the slopes are exactly zero and
    R-squared is 1 by the zero-variance convention.
    """
    n = len(points)
    if n < 4:
        raise ScalingError(f"need at least 4 points, got {n}")
    if len({p.s_v for p in points}) < 2 or len({p.s_l for p in points}) < 2:
        raise ScalingError("rank-deficient design: need at least two distinct sizes per axis")

    accuracies = [p.accuracy for p in points]
    if max(accuracies) == min(accuracies):
        return FitResult(
            beta0=accuracies[0],
            beta_v=0.0,
            beta_l=0.0,
            r_squared=1.0,
            residuals=tuple(0.0 for _ in points),
            n=n,
        )

    rows = [(1.0, math.log(p.s_v), math.log(p.s_l)) for p in points]
    # normal equations: (X^T X) beta = X^T y
    xtx = [[sum(r[i] * r[j] for r in rows) for j in range(3)] for i in range(3)]
    xty = [sum(r[i] * a for r, a in zip(rows, accuracies)) for i in range(3)]
    beta0, beta_v, beta_l = _solve3(xtx, xty)

    predicted = [beta0 + beta_v * r[1] + beta_l * r[2] for r in rows]
    residuals = tuple(a - p for a, p in zip(accuracies, predicted))
    mean = sum(accuracies) / n
    sse = sum(r * r for r in residuals)
    sst = sum((a - mean) ** 2 for a in accuracies)
    if sst == 0.0:
        r_squared = 1.0 if sse < 1e-18 else 0.0
    else:
        r_squared = 1.0 - sse / sst
    return FitResult(
        beta0=beta0,
        beta_v=beta_v,
        beta_l=beta_l,
        r_squared=r_squared,
        residuals=residuals,
        n=n,
    )


def predict(fit: FitResult, s_v: float, s_l: float) -> float:
    if s_v <= 0 or s_l <= 0:
        raise ScalingError(f"model sizes must be positive, got ({s_v}, {s_l})")
    return fit.beta0 + fit.beta_v * math.log(s_v) + fit.beta_l * math.log(s_l)


def coefficient_ratio(fit: FitResult) -> float:
    """LLM-to-VLM coefficient ratio; how much harder the LLM axis pulls."""
    if fit.beta_v == 0:
        raise ScalingError("beta_v is zero; ratio undefined")
    return fit.beta_l / fit.beta_v


def actual_vs_predicted(fit: FitResult, points: Sequence[ScalingPoint]) -> list[dict]:
    rows = []
    for p in points:
        rows.append(
            {
                "s_v": p.s_v,
                "s_l": p.s_l,
                "actual": p.accuracy,
                "predicted": round(predict(fit, p.s_v, p.s_l), 4),
            }
        )
    return rows


def load_points(path: str | Path) -> list[ScalingPoint]:
    """Read points from CSV (header s_v,s_l,accuracy) or JSON Lines."""
    path = Path(path)
    text = path.read_text(encoding="utf-8")
    points: list[ScalingPoint] = []
    if path.suffix.lower() in (".jsonl", ".json"):
        for line_no, line in enumerate(text.splitlines(), 1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
                points.append(
                    ScalingPoint(float(obj["s_v"]), float(obj["s_l"]), float(obj["accuracy"]))
                )
            except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
                raise ScalingError(f"{path}: line {line_no}: {exc}") from exc
        return points
    reader = csv.DictReader(text.splitlines())
    for row_no, row in enumerate(reader, 2):
        try:
            points.append(
                ScalingPoint(float(row["s_v"]), float(row["s_l"]), float(row["accuracy"]))
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise ScalingError(f"{path}: row {row_no}: {exc}") from exc
    return points


def builtin_grid() -> list[ScalingPoint]:
    """The checked-in 3x3 model-size grid used by the fit reproduction tests."""
    text = resources.files("talent").joinpath("data/scaling_grid.csv").read_text(encoding="utf-8")
    reader = csv.DictReader(text.splitlines())
    return [
        ScalingPoint(float(row["s_v"]), float(row["s_l"]), float(row["accuracy"]))
        for row in reader
    ]
