import math
import struct

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rssloc.channel import (
    PlmParams,
    SingularityError,
    build_covariance,
    covariance_from_positions,
    distance,
    load_iq,
    mean_rss,
    mean_rss_vector,
    rss_from_iq,
    sample_shadowing,
    simulate_rss,
)
from rssloc.scenario import Point3, Scenario

coord = st.floats(-100, 100)
point = st.tuples(coord, coord, coord)


def test_distance_examples():
    assert distance((0, 0, 0), (3, 4, 0)) == 5.0
    assert distance((1, 2, 3), (1, 2, 3)) == 0.0
    # sqrt(0.61^2 + 0.5^2 + 2^2)
    assert distance((9, 0.8, 0.5), (8.39, 0.3, 2.5)) == pytest.approx(2.1499069747316977, rel=1e-12)


@given(point, point)
def test_distance_symmetric_nonnegative(u, v):
    assert distance(u, v) == distance(v, u) >= 0


def test_mean_rss_examples():
    p = PlmParams(p0=-30.0, beta=2.0, sigma2_db=0.0)
    assert mean_rss(p, 1.0, (0, 0, 0), (10, 0, 0)) == pytest.approx(-50.0, abs=1e-12)
    assert mean_rss(p, 2.0, (0, 0, 0), (0, 2, 0)) == -30.0
    p = PlmParams(p0=-30.0, beta=1.82, sigma2_db=0.0)
    assert mean_rss(p, 1.0, (0, 0, 0), (0, 0, 20)) == pytest.approx(-53.678745921084456, abs=1e-12)


def test_mean_rss_singular():
    with pytest.raises(SingularityError):
        mean_rss(PlmParams(), 1.0, (1, 1, 1), (1, 1, 1 + 1e-7))


@given(
    beta=st.floats(0.1, 6),
    d1=st.floats(1e-3, 1e3),
    ratio=st.floats(1.001, 100),
)
def test_mean_rss_strictly_decreasing(beta, d1, ratio):
    p = PlmParams(p0=-20.0, beta=beta, sigma2_db=1.0)
    near = mean_rss(p, 1.0, (0, 0, 0), (d1, 0, 0))
    far = mean_rss(p, 1.0, (0, 0, 0), (d1 * ratio, 0, 0))
    assert far < near


def _two_su(gap):
    return Scenario((0, 0, 0), (10, 10, 3), ((1, 1, 1), (1 + gap, 1, 1)))


def test_covariance_examples():
    cov = build_covariance(_two_su(2.0), PlmParams(sigma2_db=11.83, d_cor=1.0))
    assert cov.matrix[0, 0] == cov.matrix[1, 1] == 11.83
    assert cov.matrix[0, 1] == pytest.approx(1.6010164006891283, rel=1e-12)
    cov = build_covariance(_two_su(3.0), PlmParams(sigma2_db=4.0, d_cor=3.0))
    assert cov.matrix[0, 1] == pytest.approx(4.0 / math.e, rel=1e-12)


def test_covariance_symmetric_and_cholesky(corridor, channel_params):
    cov = build_covariance(corridor, channel_params)
    c, l = cov.matrix, cov.chol
    assert np.array_equal(c, c.T)
    assert np.allclose(np.triu(l, 1), 0)
    assert np.linalg.norm(l @ l.T - c) / np.linalg.norm(c) < 1e-10


@settings(max_examples=30)
@given(
    pts=st.lists(point, min_size=2, max_size=10, unique=True),
    d_cor=st.floats(0.1, 20),
    s2=st.floats(0.01, 50),
)
def test_covariance_cholesky_reconstruction(pts, d_cor, s2):
    pos = np.array(pts)
    dmin = min(np.linalg.norm(a - b) for i, a in enumerate(pos) for b in pos[i + 1:])
    if dmin < 1e-2:
        return
    cov = covariance_from_positions(pos, s2, d_cor)
    err = np.linalg.norm(cov.chol @ cov.chol.T - cov.matrix) / np.linalg.norm(cov.matrix)
    assert err < 1e-10


def test_shadowing_zero_variance(corridor, rng):
    cov = build_covariance(corridor, PlmParams(sigma2_db=0.0))
    assert np.array_equal(sample_shadowing(cov, rng), np.zeros(6))
    assert np.array_equal(sample_shadowing(cov, rng, size=5), np.zeros((5, 6)))


def test_shadowing_deterministic(corridor, channel_params):
    cov = build_covariance(corridor, channel_params)
    a = sample_shadowing(cov, np.random.default_rng(7))
    b = sample_shadowing(cov, np.random.default_rng(7))
    assert np.array_equal(a, b)


def test_shadowing_is_cholesky_times_normals(corridor, channel_params):
    cov = build_covariance(corridor, channel_params)
    z = np.random.default_rng(3).standard_normal(6)
    assert np.allclose(sample_shadowing(cov, np.random.default_rng(3)), cov.chol @ z, atol=1e-14)


def test_shadowing_empirical_covariance_tight_cluster():
    # SUs 0.5 m apart so the off-diagonals are far from zero
    s = Scenario((0, 0, 0), (10, 10, 3), tuple((0.5 * k, 1.0, 2.5) for k in range(6)))
    cov = build_covariance(s, PlmParams(sigma2_db=11.83, d_cor=1.0))
    x = sample_shadowing(cov, np.random.default_rng(99), size=100_000)
    emp = np.cov(x, rowvar=False, bias=True)
    assert np.max(np.abs(emp - cov.matrix)) < 0.05 * 11.83
    assert np.max(np.abs(x.mean(axis=0))) < 0.05


def test_simulate_rss_noiseless_equals_mean(corridor, rng):
    p = PlmParams(p0=-31.0, beta=2.2, sigma2_db=0.0)
    u = Point3(20.0, 1.4, 0.5)
    assert np.array_equal(simulate_rss(corridor, p, u, rng), mean_rss_vector(corridor, p, u))
    expected = [mean_rss(p, corridor.d0, u, v) for v in corridor.sensing_units]
    assert np.allclose(mean_rss_vector(corridor, p, u), expected, rtol=0, atol=1e-12)


def test_simulate_rss_moments(corridor, channel_params):
    u = Point3(30.0, 1.2, 0.5)
    rng = np.random.default_rng(2024)
    n = 10_000
    draws = np.array([simulate_rss(corridor, channel_params, u, rng) for _ in range(n)])
    mu = mean_rss_vector(corridor, channel_params, u)
    sigma = math.sqrt(channel_params.sigma2_db)
    assert np.all(np.abs(draws.mean(axis=0) - mu) < 3 * sigma / math.sqrt(n))
    assert np.all(np.abs(draws.var(axis=0, ddof=1) / channel_params.sigma2_db - 1) < 0.05)


def test_simulate_rss_singular(corridor, channel_params, rng):
    with pytest.raises(SingularityError):
        simulate_rss(corridor, channel_params, corridor.sensing_units[3], rng)


def test_rss_from_iq_examples():
    assert rss_from_iq(np.ones(5000, dtype=complex)) == pytest.approx(30.0, abs=1e-12)
    assert rss_from_iq(0.1 * np.exp(1j * np.linspace(0, 6, 64))) == pytest.approx(10.0, abs=1e-12)
    assert rss_from_iq([1, 0, 1, 0]) == pytest.approx(26.989700043360187, abs=1e-12)


def test_rss_from_iq_errors():
    with pytest.raises(ValueError):
        rss_from_iq([])
    with pytest.raises(ValueError):
        rss_from_iq(np.zeros(8, dtype=complex))


@settings(max_examples=50)
@given(
    re=st.lists(st.floats(0.01, 10), min_size=1, max_size=64),
    phase=st.floats(0, 2 * math.pi),
    seed=st.integers(0, 2**32 - 1),
)
def test_rss_from_iq_invariances(re, phase, seed):
    y = np.array(re) * (1 + 0.5j)
    if not np.any(y):
        return
    base = rss_from_iq(y)
    perm = np.random.default_rng(seed).permutation(len(y))
    assert rss_from_iq(y[perm]) == pytest.approx(base, abs=1e-9)
    assert rss_from_iq(y * np.exp(1j * phase)) == pytest.approx(base, abs=1e-9)


def test_load_iq_binary_and_csv(tmp_path):
    samples = [(1.0, 0.0), (0.0, -1.0), (0.5, 0.5)]
    b = tmp_path / "rec.iq"
    b.write_bytes(b"".join(struct.pack("<ff", i, q) for i, q in samples))
    y = load_iq(b)
    assert np.array_equal(y, np.array([1, -1j, 0.5 + 0.5j]))
    c = tmp_path / "rec.csv"
    c.write_text("i,q\n" + "\n".join(f"{i},{q}" for i, q in samples) + "\n")
    assert np.array_equal(load_iq(c), y)
    assert rss_from_iq(load_iq(c)) == pytest.approx(10 * math.log10(2.5 / 3) + 30)


def test_load_iq_rejects_odd_binary(tmp_path):
    b = tmp_path / "bad.bin"
    b.write_bytes(struct.pack("<fff", 1, 2, 3))
    with pytest.raises(ValueError):
        load_iq(b)


def test_plm_params_validation():
    with pytest.raises(ValueError):
        PlmParams(beta=0)
    with pytest.raises(ValueError):
        PlmParams(sigma2_db=-1)
    with pytest.raises(ValueError):
        PlmParams(d_cor=0)
