"""Localization-error statistics and empirical CDFs."""
from __future__ import annotations

import csv
import json
import logging
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Callable

import numpy as np

from .dataset import Dataset

log = logging.getLogger(__name__)


def localization_error(truth, estimate, planar: bool = False) -> float:
    """Euclidean distance; ``planar`` ignores z."""
    if planar:
        return math.dist(tuple(truth)[:2], tuple(estimate)[:2])
    return math.dist(truth, estimate)


@dataclass(frozen=True, eq=False)
class EvalReport:
    estimator: str
    errors: np.ndarray
    planar: bool = False

    def __post_init__(self):
        e = np.array(self.errors, dtype=float)
        if e.ndim != 1 or e.size == 0:
            raise ValueError("need a non-empty error vector")
        e.setflags(write=False)
        object.__setattr__(self, "errors", e)

    def __eq__(self, other):
        if not isinstance(other, EvalReport):
            return NotImplemented
        return (self.estimator, self.planar) == (other.estimator, other.planar) and np.array_equal(
            self.errors, other.errors
        )

    @property
    def n(self) -> int:
        return self.errors.size

    @property
    def n_failures(self) -> int:
        return int(np.sum(~np.isfinite(self.errors)))

    @property
    def mean(self) -> float:
        return float(np.mean(self.errors))

    @property
    def sd(self) -> float:
        # n - 1 divisor; a single sample has no spread
        if self.n < 2:
            return 0.0
        return float(np.std(self.errors, ddof=1))

    @property
    def max(self) -> float:
        return float(np.max(self.errors))

    @property
    def min(self) -> float:
        return float(np.min(self.errors))

    @property
    def median(self) -> float:
        return float(np.median(self.errors))

    @property
    def cdf(self) -> np.ndarray:
        """(error, k/n) rows over the sorted errors."""
        e = np.sort(self.errors)
        return np.column_stack([e, np.arange(1, e.size + 1) / e.size])

    def summary(self) -> dict:
        return {
            "estimator": self.estimator,
            "n": self.n,
            "n_failures": self.n_failures,
            "planar": self.planar,
            "mean": self.mean,
            "sd": self.sd,
            "max": self.max,
            "min": self.min,
            "median": self.median,
        }

    def to_dict(self) -> dict:
        d = self.summary()
        d["errors"] = self.errors.tolist()
        d["cdf"] = self.cdf.tolist()
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "EvalReport":
        return cls(d["estimator"], np.asarray(d["errors"], dtype=float), bool(d.get("planar", False)))


def evaluate(estimator: Callable, test: Dataset, name: str | None = None,
             planar: bool = False) -> EvalReport:
    """Run ``estimator(rss) -> position`` over every test sample.

    A sample whose estimate raises is recorded with an infinite error.
    """
    errors = np.empty(len(test))
    for k in range(len(test)):
        try:
            est = estimator(test.rss[k])
            errors[k] = localization_error(test.positions[k], est, planar)
        except (ValueError, ArithmeticError) as exc:
            log.warning("estimator failed on sample %d: %s", k, exc)
            errors[k] = math.inf
    return EvalReport(name or getattr(estimator, "name", "estimator"), errors, planar)


def save_report(report: EvalReport, path) -> None:
    Path(path).write_text(json.dumps(report.to_dict(), indent=1) + "\n")


def load_report(path) -> EvalReport:
    return EvalReport.from_dict(json.loads(Path(path).read_text()))


def save_cdf_csv(report: EvalReport, path) -> None:
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["error_m", "probability"])
        for e, p in report.cdf:
            w.writerow([repr(float(e)), repr(float(p))])


def format_table(reports) -> str:
    lines = [f"{'Estimator':<12}{'Mean LE':>11}{'SD':>11}{'Max. LE':>11}{'Min. LE':>11}"]
    for r in reports:
        lines.append(f"{r.estimator:<12}{r.mean:>9.4f} m{r.sd:>9.4f} m{r.max:>9.4f} m{r.min:>9.4f} m")
    return "\n".join(lines)
