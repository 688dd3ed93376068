"""Labeled RSS datasets: synthetic generation, CSV I/O, shuffling/splitting, input normalisation."""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .channel import PlmParams, build_covariance, pairwise_distances, path_loss_mean, sample_shadowing
from .scenario import Point3, Scenario, Track

STD_FLOOR = 1e-6


class DatasetError(ValueError):
    pass


@dataclass(frozen=True)
class Sample:
    position: Point3
    rss: tuple[float, ...]
    round_id: int = 0


def _frozen(a, dtype=float) -> np.ndarray:
    a = np.array(a, dtype=dtype, copy=True)
    a.setflags(write=False)
    return a


class Dataset:
    """Columnar store of samples sharing one scenario.

    ``positions`` is (n, 3), ``rss`` is (n, N_s) dBm, ``round_ids`` is (n,).
    Arrays are read-only.
    """

    def __init__(self, scenario: Scenario, positions, rss, round_ids=None):
        positions = _frozen(positions).reshape(-1, 3)
        rss = _frozen(rss)
        if rss.ndim != 2:
            rss = rss.reshape(len(positions), -1)
        n = len(positions)
        if n == 0:
            raise DatasetError("dataset must contain at least one sample")
        if rss.shape != (n, scenario.n_su):
            raise DatasetError(f"rss must have shape ({n}, {scenario.n_su}), got {rss.shape}")
        if not (np.all(np.isfinite(positions)) and np.all(np.isfinite(rss))):
            raise DatasetError("positions and rss must be finite")
        if round_ids is None:
            round_ids = np.zeros(n, dtype=np.int64)
        round_ids = _frozen(round_ids, dtype=np.int64)
        if round_ids.shape != (n,):
            raise DatasetError("round_ids length differs from sample count")
        self.scenario = scenario
        self.positions = positions
        self.rss = rss
        self.round_ids = round_ids

    @classmethod
    def from_samples(cls, scenario: Scenario, samples) -> "Dataset":
        samples = list(samples)
        return cls(
            scenario,
            [s.position for s in samples],
            [s.rss for s in samples],
            [s.round_id for s in samples],
        )

    def __len__(self) -> int:
        return len(self.positions)

    def __getitem__(self, i: int) -> Sample:
        return Sample(Point3(*self.positions[i]), tuple(self.rss[i]), int(self.round_ids[i]))

    def __iter__(self):
        return (self[i] for i in range(len(self)))

    def take(self, index) -> "Dataset":
        index = np.asarray(index, dtype=np.intp)
        return Dataset(self.scenario, self.positions[index], self.rss[index], self.round_ids[index])

    def __eq__(self, other):
        if not isinstance(other, Dataset):
            return NotImplemented
        return (
            self.scenario == other.scenario
            and np.array_equal(self.positions, other.positions)
            and np.array_equal(self.rss, other.rss)
            and np.array_equal(self.round_ids, other.round_ids)
        )


def generate_synthetic(scenario: Scenario, params: PlmParams, track: Track,
                       rng: np.random.Generator) -> Dataset:
    """One sample per track point: mean path loss plus an independent correlated shadowing draw."""
    positions = np.asarray(track.points, dtype=float)
    d = pairwise_distances(positions, scenario.sensing_units)
    mean = path_loss_mean(params.p0, params.beta, d, scenario.d0)
    cov = build_covariance(scenario, params)
    rss = mean + sample_shadowing(cov, rng, size=len(positions))
    return Dataset(scenario, positions, rss, track.round_ids)


@dataclass(frozen=True)
class SplitSpec:
    train_fraction: float = 0.75
    shuffle_seed: int = 0

    def __post_init__(self):
        if not 0 < self.train_fraction < 1:
            raise ValueError("train_fraction must be in (0, 1)")


def split_indices(n: int, spec: SplitSpec) -> tuple[np.ndarray, np.ndarray]:
    """Seeded shuffle of range(n), cut after floor(train_fraction * n)."""
    if n < 2:
        raise DatasetError("need at least two samples to split")
    perm = np.random.default_rng(spec.shuffle_seed).permutation(n)
    n_train = math.floor(spec.train_fraction * n)
    if n_train == 0 or n_train == n:
        raise DatasetError(f"fraction {spec.train_fraction} leaves an empty side for n={n}")
    return perm[:n_train], perm[n_train:]


def split(dataset: Dataset, spec: SplitSpec) -> tuple[Dataset, Dataset]:
    train_idx, test_idx = split_indices(len(dataset), spec)
    return dataset.take(train_idx), dataset.take(test_idx)


@dataclass(frozen=True, eq=False)
class NormStats:
    mean: np.ndarray
    std: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "mean", _frozen(self.mean))
        object.__setattr__(self, "std", _frozen(np.maximum(np.asarray(self.std, dtype=float), STD_FLOOR)))

    def __eq__(self, other):
        if not isinstance(other, NormStats):
            return NotImplemented
        return np.array_equal(self.mean, other.mean) and np.array_equal(self.std, other.std)

    @classmethod
    def identity(cls, n: int) -> "NormStats":
        return cls(np.zeros(n), np.ones(n))


def compute_norm_stats(train: Dataset | np.ndarray) -> NormStats:
    """Per-feature mean and population std; std is floored at 1e-6."""
    x = train.rss if isinstance(train, Dataset) else np.asarray(train, dtype=float)
    return NormStats(x.mean(axis=0), x.std(axis=0))


def apply_norm(rss, stats: NormStats) -> np.ndarray:
    return (np.asarray(rss, dtype=float) - stats.mean) / stats.std


def invert_norm(z, stats: NormStats) -> np.ndarray:
    return np.asarray(z, dtype=float) * stats.std + stats.mean


def csv_header(n_su: int) -> list[str]:
    return ["round", "x", "y", "z"] + [f"rss_{j}" for j in range(n_su)]


def save_csv(dataset: Dataset, path) -> None:
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(csv_header(dataset.scenario.n_su))
        for pos, rss, r in zip(dataset.positions, dataset.rss, dataset.round_ids):
            # repr() of a float is the shortest string that round-trips exactly
            w.writerow([int(r)] + [repr(float(v)) for v in pos] + [repr(float(v)) for v in rss])


def load_csv(path, scenario: Scenario) -> Dataset:
    expected = csv_header(scenario.n_su)
    with Path(path).open(newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            raise DatasetError(f"{path}: empty file")
        header = [h.strip() for h in header]
        if header != expected:
            n_rss = sum(h.startswith("rss_") for h in header)
            raise DatasetError(
                f"{path}: header mismatch; expected {scenario.n_su} RSS columns "
                f"(N_s = {scenario.n_su}), found {n_rss}: {','.join(header)}"
            )
        rounds, positions, rss = [], [], []
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(expected):
                raise DatasetError(
                    f"{path}: row {lineno}: expected {len(expected)} columns, got {len(row)}"
                )
            try:
                rounds.append(int(row[0]))
                vals = [float(c) for c in row[1:]]
            except ValueError as exc:
                raise DatasetError(f"{path}: row {lineno}: non-numeric cell ({exc})") from exc
            if not all(math.isfinite(v) for v in vals):
                raise DatasetError(f"{path}: row {lineno}: non-finite value")
            positions.append(vals[:3])
            rss.append(vals[3:])
    if not positions:
        raise DatasetError(f"{path}: no data rows")
    return Dataset(scenario, positions, rss, rounds)
