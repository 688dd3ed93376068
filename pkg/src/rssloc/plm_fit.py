"""Least-squares fitting of the log-distance path-loss model."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .channel import pairwise_distances


class DegenerateFitError(ValueError):
    """The design matrix is rank deficient (fewer than two distinct distances)."""


@dataclass(frozen=True)
class FitInput:
    distances: np.ndarray
    rss: np.ndarray
    d0: float = 1.0

    def __post_init__(self):
        d = np.asarray(self.distances, dtype=float).ravel()
        y = np.asarray(self.rss, dtype=float).ravel()
        if d.shape != y.shape:
            raise ValueError("distances and rss must have equal length")
        if d.size < 2:
            raise ValueError("need at least two measurements")
        if np.any(d <= 0) or not self.d0 > 0:
            raise ValueError("distances and d0 must be > 0")
        object.__setattr__(self, "distances", d)
        object.__setattr__(self, "rss", y)


@dataclass(frozen=True)
class FitResult:
    p0_hat: float
    beta_hat: float
    sigma2_hat: float
    residuals: np.ndarray

    def to_dict(self) -> dict:
        return {
            "p0_hat": self.p0_hat,
            "beta_hat": self.beta_hat,
            "sigma2_hat": self.sigma2_hat,
            "n": int(self.residuals.size),
        }


def design_matrix(distances, d0: float = 1.0) -> np.ndarray:
    d = np.asarray(distances, dtype=float)
    return np.column_stack([np.ones_like(d), -10.0 * np.log10(d / d0)])


def fit_ls(data: FitInput) -> FitResult:
    """Ordinary least squares for (P0, beta) plus the shadowing variance.

    The normal equations are 2 x 2 and solved in closed form; the regressor is
    centred first so the solve stays well conditioned. The variance uses the
    1/(L - 1) divisor, not the unbiased 1/(L - 2).
    """
    y = data.rss
    g = -10.0 * np.log10(data.distances / data.d0)
    n = y.size
    g_mean = g.mean()
    y_mean = y.mean()
    gc = g - g_mean
    sxx = float(gc @ gc)
    if sxx <= 1e-12 * max(1.0, float(g @ g)):
        raise DegenerateFitError("all distances are equal; cannot separate P0 from beta")
    beta = float(gc @ (y - y_mean)) / sxx
    p0 = float(y_mean - beta * g_mean)
    resid = y - (p0 + beta * g)
    sigma2 = float(resid @ resid) / (n - 1)
    return FitResult(p0, beta, sigma2, resid)


def pool_fit_input(dataset, su_index: int | None = None) -> FitInput:
    """Flatten a dataset into (distance, RSS) rows.

    ``su_index=None`` pools every sensing unit; otherwise only that SU's column.
    """
    scenario = dataset.scenario
    if len(dataset) == 0:
        raise ValueError("dataset is empty")
    d = pairwise_distances(dataset.positions, scenario.sensing_units)
    rss = dataset.rss
    if su_index is not None:
        if not 0 <= su_index < scenario.n_su:
            raise ValueError(f"su_index {su_index} out of range for {scenario.n_su} sensing units")
        d = d[:, su_index]
        rss = rss[:, su_index]
    return FitInput(d.ravel(), rss.ravel(), scenario.d0)
