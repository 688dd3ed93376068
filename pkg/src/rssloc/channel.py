"""Log-normal path-loss forward model with spatially correlated shadowing.

Standard normals come from ``numpy.random.Generator.standard_normal``
(ziggurat transform of the generator's 64-bit output); every stochastic call
takes an explicit ``Generator`` so runs are reproducible from a seed.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.linalg import cholesky, solve_triangular

from .scenario import Scenario

COINCIDENT_TOL = 1e-6  # meters
JITTER = 1e-10


class SingularityError(ValueError):
    """Transmitter coincides with a sensing unit; the log-distance model diverges."""


class CholeskyError(ArithmeticError):
    pass


@dataclass(frozen=True)
class PlmParams:
    p0: float = -30.9
    beta: float = 1.82
    sigma2_db: float = 11.83
    d_cor: float = 1.0

    def __post_init__(self):
        if not self.beta > 0:
            raise ValueError("beta must be > 0")
        if not self.sigma2_db >= 0:
            raise ValueError("sigma2_db must be >= 0")
        if not self.d_cor > 0:
            raise ValueError("d_cor must be > 0")

    def to_dict(self) -> dict:
        return {"p0": self.p0, "beta": self.beta, "sigma2_db": self.sigma2_db, "d_cor": self.d_cor}

    @classmethod
    def from_dict(cls, d: dict) -> "PlmParams":
        return cls(**{k: float(d[k]) for k in ("p0", "beta", "sigma2_db", "d_cor") if k in d})


def distance(u, v) -> float:
    """Euclidean distance between two 3D points."""
    return math.dist(u, v)


def pairwise_distances(a, b) -> np.ndarray:
    """Distances between rows of ``a`` (n x 3) and rows of ``b`` (m x 3)."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    return np.sqrt(((a[:, None, :] - b[None, :, :]) ** 2).sum(axis=-1))


def path_loss_mean(p0: float, beta: float, d, d0: float = 1.0):
    """P0 - 10*beta*log10(d/d0); vectorised over ``d``."""
    d = np.asarray(d, dtype=float)
    if np.any(d < COINCIDENT_TOL):
        raise SingularityError("distance below 1e-6 m: transmitter coincides with a sensing unit")
    out = p0 - 10.0 * beta * np.log10(d / d0)
    return float(out) if out.ndim == 0 else out


def mean_rss(params: PlmParams, d0: float, u, v) -> float:
    return path_loss_mean(params.p0, params.beta, distance(u, v), d0)


def mean_rss_vector(scenario: Scenario, params: PlmParams, u) -> np.ndarray:
    d = pairwise_distances([u], scenario.sensing_units)[0]
    return path_loss_mean(params.p0, params.beta, d, scenario.d0)


@dataclass(frozen=True, eq=False)
class CovarianceMatrix:
    """Shadowing covariance ``matrix`` and its lower Cholesky factor ``chol``.

    With ``sigma2_db == 0`` the factor is the zero matrix and whitening is
    undefined (see :func:`whiten`).
    """

    matrix: np.ndarray
    chol: np.ndarray

    @property
    def n(self) -> int:
        return self.matrix.shape[0]

    def whiten(self, residuals) -> np.ndarray:
        """Solve L t = r for each column (or the single vector) ``r``."""
        return solve_triangular(self.chol, residuals, lower=True, check_finite=False)


def _lower_cholesky(c: np.ndarray) -> np.ndarray:
    try:
        return cholesky(c, lower=True)
    except np.linalg.LinAlgError:
        pass
    scale = float(np.max(np.diag(c)))
    try:
        return cholesky(c + JITTER * scale * np.eye(len(c)), lower=True)
    except np.linalg.LinAlgError as exc:
        raise CholeskyError("shadowing covariance is not positive definite") from exc


def covariance_from_positions(positions, sigma2_db: float, d_cor: float) -> CovarianceMatrix:
    dist = pairwise_distances(positions, positions)
    c = sigma2_db * np.exp(-dist / d_cor)
    c = 0.5 * (c + c.T)
    if sigma2_db == 0:
        chol = np.zeros_like(c)
    else:
        chol = _lower_cholesky(c)
    c.setflags(write=False)
    chol.setflags(write=False)
    return CovarianceMatrix(c, chol)


def build_covariance(scenario: Scenario, params: PlmParams) -> CovarianceMatrix:
    """Exponential shadowing covariance between the scenario's sensing units."""
    return covariance_from_positions(scenario.sensing_units, params.sigma2_db, params.d_cor)


def sample_shadowing(cov: CovarianceMatrix, rng: np.random.Generator, size: int | None = None):
    """Draw L z with z i.i.d. standard normal. ``size`` adds a leading batch axis."""
    if size is None:
        z = rng.standard_normal(cov.n)
        return cov.chol @ z
    z = rng.standard_normal((size, cov.n))
    return z @ cov.chol.T


def simulate_rss(scenario: Scenario, params: PlmParams, u, rng: np.random.Generator,
                 cov: CovarianceMatrix | None = None) -> np.ndarray:
    if cov is None:
        cov = build_covariance(scenario, params)
    return mean_rss_vector(scenario, params, u) + sample_shadowing(cov, rng)


def rss_from_iq(samples) -> float:
    """Average received power in dBm of a complex baseband record.

    Samples are assumed calibrated so that |y|^2 is power in watts (the 50 ohm
    load is folded into the amplitude scale); the +30 converts dBW to dBm.
    """
    y = np.asarray(samples)
    if y.size == 0:
        raise ValueError("IQ record is empty")
    power = float(np.mean(np.abs(y) ** 2))
    if power == 0:
        raise ValueError("IQ record has zero power; RSS is -inf")
    return 10.0 * math.log10(power) + 30.0


def load_iq(path) -> np.ndarray:
    """Read an IQ record: ``.csv`` with columns ``i,q``, else little-endian float32 (I, Q) pairs."""
    path = Path(path)
    if path.suffix.lower() == ".csv":
        with path.open(newline="") as fh:
            reader = csv.DictReader(fh)
            if reader.fieldnames is None or not {"i", "q"} <= set(reader.fieldnames):
                raise ValueError(f"{path}: header must contain columns i,q")
            rows = []
            for lineno, row in enumerate(reader, start=2):
                try:
                    rows.append(complex(float(row["i"]), float(row["q"])))
                except (TypeError, ValueError) as exc:
                    raise ValueError(f"{path}: line {lineno}: non-numeric sample") from exc
        return np.array(rows, dtype=complex)
    raw = np.fromfile(path, dtype="<f4")
    if raw.size % 2:
        raise ValueError(f"{path}: odd number of float32 values; expected interleaved I/Q")
    return raw[0::2].astype(float) + 1j * raw[1::2].astype(float)
