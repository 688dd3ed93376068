"""Position estimators: proximity, grid-search maximum likelihood, trained MLP."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .channel import (
    COINCIDENT_TOL,
    CovarianceMatrix,
    PlmParams,
    build_covariance,
    pairwise_distances,
)
from .mlp import MlpModel
from .scenario import Point3, Scenario


def _check_rss(rss, scenario: Scenario) -> np.ndarray:
    rss = np.asarray(rss, dtype=float)
    if rss.shape != (scenario.n_su,):
        raise ValueError(f"expected {scenario.n_su} RSS values, got shape {rss.shape}")
    return rss


def proximity_estimate(rss, scenario: Scenario) -> Point3:
    """Coordinates of the strongest sensing unit (lowest index wins ties)."""
    rss = _check_rss(rss, scenario)
    return scenario.sensing_units[int(np.argmax(rss))]


def _axis(lo: float, hi: float, step: float) -> np.ndarray:
    n = int(math.floor((hi - lo) / step + 1e-9)) + 1
    return np.minimum(lo + step * np.arange(n), hi)


@dataclass(frozen=True)
class GridSpec:
    """Search set for the ML estimator.

    ``x_bounds``/``y_bounds`` default to the scenario area. When
    ``known_params`` is false P0 and beta are searched too: P0 over
    ``p0_range`` (default: the configured P0 +/- 5 dB) and beta over
    ``beta_range``.
    """

    step: float = 0.1
    x_bounds: tuple[float, float] | None = None
    y_bounds: tuple[float, float] | None = None
    known_params: bool = True
    p0_range: tuple[float, float] | None = None
    p0_step: float = 0.5
    beta_range: tuple[float, float] = (1.0, 3.0)
    beta_step: float = 0.05

    def __post_init__(self):
        if not (self.step > 0 and self.p0_step > 0 and self.beta_step > 0):
            raise ValueError("grid steps must be > 0")

    def axes(self, scenario: Scenario, p0: float):
        lo, hi = scenario.area_min, scenario.area_max
        xb = self.x_bounds or (lo.x, hi.x)
        yb = self.y_bounds or (lo.y, hi.y)
        if xb[0] < lo.x or xb[1] > hi.x or yb[0] < lo.y or yb[1] > hi.y:
            raise ValueError("grid bounds must lie within the scenario area")
        if xb[0] > xb[1] or yb[0] > yb[1]:
            raise ValueError("empty grid bounds")
        xs = _axis(*xb, self.step)
        ys = _axis(*yb, self.step)
        if self.known_params:
            return xs, ys, None, None
        pr = self.p0_range or (p0 - 5.0, p0 + 5.0)
        if pr[0] > pr[1] or self.beta_range[0] > self.beta_range[1] or self.beta_range[0] <= 0:
            raise ValueError("empty or invalid parameter ranges")
        return xs, ys, _axis(*pr, self.p0_step), _axis(*self.beta_range, self.beta_step)


@dataclass(frozen=True)
class MleConfig:
    params: PlmParams = field(default_factory=PlmParams)
    grid: GridSpec = field(default_factory=GridSpec)
    z: float | None = None  # None: the scenario's tx_height

    @classmethod
    def from_dict(cls, d: dict) -> "MleConfig":
        params = PlmParams.from_dict(d.get("params", {}))
        g = dict(d.get("grid", {}))
        for key in ("x_bounds", "y_bounds", "p0_range", "beta_range"):
            if g.get(key) is not None:
                g[key] = tuple(float(v) for v in g[key])
        return cls(params=params, grid=GridSpec(**g), z=d.get("z"))

    def to_dict(self) -> dict:
        g = self.grid
        return {
            "params": self.params.to_dict(),
            "grid": {k: (list(v) if isinstance(v, tuple) else v) for k, v in g.__dict__.items()},
            "z": self.z,
        }


@dataclass(frozen=True)
class MleEstimate:
    position: Point3
    p0: float
    beta: float
    objective: float
    index: int


def mle_objective(position, p0: float, beta: float, measurement, scenario: Scenario,
                  cov: CovarianceMatrix) -> float:
    """Whitened squared residual ||L^-1 (m - f)||^2 for one candidate.

    A candidate within 1e-6 m of a sensing unit scores +inf.
    """
    d = pairwise_distances([position], scenario.sensing_units)[0]
    if np.any(d < COINCIDENT_TOL):
        return math.inf
    f = p0 - 10.0 * beta * np.log10(d / scenario.d0)
    t = cov.whiten(np.asarray(measurement, dtype=float) - f)
    return float(t @ t)


class MleGrid:
    """Precomputed candidate set for repeated ML grid searches.

    Candidates are enumerated row-major over (x, y, P0, beta); the linear
    index of a candidate is its position in that order and breaks ties.
    """

    def __init__(self, scenario: Scenario, config: MleConfig):
        self.scenario = scenario
        self.config = config
        self.cov = build_covariance(scenario, config.params)
        if config.params.sigma2_db == 0:
            raise ValueError("ML search needs sigma2_db > 0 (the objective scales by 1/sigma^2)")
        z = scenario.tx_height if config.z is None else float(config.z)
        xs, ys, p0s, betas = config.grid.axes(scenario, config.params.p0)
        gx, gy = np.meshgrid(xs, ys, indexing="ij")
        self.positions = np.column_stack([gx.ravel(), gy.ravel(), np.full(gx.size, z)])
        if len(self.positions) == 0:
            raise ValueError("empty grid")
        d = pairwise_distances(self.positions, scenario.sensing_units)
        self.valid = np.all(d >= COINCIDENT_TOL, axis=1)
        d = np.where(self.valid[:, None], d, 1.0)
        self.log_d = 10.0 * np.log10(d / scenario.d0)  # (n_pos, N_s)
        self.p0s = np.array([config.params.p0]) if p0s is None else p0s
        self.betas = np.array([config.params.beta]) if betas is None else betas

    @property
    def size(self) -> int:
        return len(self.positions) * len(self.p0s) * len(self.betas)

    def objectives(self, rss) -> np.ndarray:
        """Objective for every candidate, shaped (n_pos, n_p0, n_beta)."""
        m = _check_rss(rss, self.scenario)
        n_pos, n_p0, n_b = len(self.positions), len(self.p0s), len(self.betas)
        out = np.empty((n_pos, n_p0, n_b))
        ones_w = self.cov.whiten(np.ones(self.scenario.n_su))
        for k, beta in enumerate(self.betas):
            # residual without P0: (n_pos, N_s); whiten once, then subtract the whitened P0 offset
            base = m[None, :] + beta * self.log_d
            wb = self.cov.whiten(base.T).T
            if n_p0 == 1:
                t = wb - self.p0s[0] * ones_w
                out[:, 0, k] = np.einsum("ij,ij->i", t, t)
            else:
                # ||wb - p0 w1||^2 expanded over the whole P0 axis at once
                aa = np.einsum("ij,ij->i", wb, wb)
                ab = wb @ ones_w
                out[:, :, k] = (aa[:, None] - 2.0 * ab[:, None] * self.p0s[None, :]
                                + (ones_w @ ones_w) * self.p0s[None, :] ** 2)
        out[~self.valid] = math.inf
        return out

    def estimate(self, rss) -> MleEstimate:
        obj = self.objectives(rss)
        flat = int(np.argmin(obj))  # first occurrence == smallest linear index
        ip, i0, ib = np.unravel_index(flat, obj.shape)
        return MleEstimate(
            Point3(*map(float, self.positions[ip])),
            float(self.p0s[i0]),
            float(self.betas[ib]),
            float(obj.flat[flat]),
            flat,
        )


def mle_estimate(rss, scenario: Scenario, config: MleConfig = MleConfig()) -> MleEstimate:
    return MleGrid(scenario, config).estimate(rss)


def dnn_estimate(rss, scenario: Scenario, model: MlpModel) -> Point3:
    rss = _check_rss(rss, scenario)
    if model.arch.input_dim != scenario.n_su:
        raise ValueError("model input_dim does not match the scenario's sensing units")
    x, y = model.predict(rss)[:2]
    return Point3(float(x), float(y), scenario.tx_height)


class Estimator:
    """Callable ``rss -> Point3`` with a report name."""

    name = "estimator"

    def __call__(self, rss) -> Point3:
        raise NotImplementedError


class ProximityEstimator(Estimator):
    name = "proximity"

    def __init__(self, scenario: Scenario):
        self.scenario = scenario

    def __call__(self, rss) -> Point3:
        return proximity_estimate(rss, self.scenario)


class MleEstimator(Estimator):
    name = "mle"

    def __init__(self, scenario: Scenario, config: MleConfig = MleConfig()):
        self.grid = MleGrid(scenario, config)

    def __call__(self, rss) -> Point3:
        return self.grid.estimate(rss).position


class DnnEstimator(Estimator):
    name = "dnn"

    def __init__(self, scenario: Scenario, model: MlpModel):
        if model.arch.input_dim != scenario.n_su:
            raise ValueError("model input_dim does not match the scenario's sensing units")
        self.scenario = scenario
        self.model = model

    def __call__(self, rss) -> Point3:
        return dnn_estimate(rss, self.scenario, self.model)
