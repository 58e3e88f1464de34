import numpy as np
import pytest
from hypothesis import assume, given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from rfloc.metrics import (FLAT, LOCALIZED, OSCILLATORY, circular_distance, excess_kurtosis, ipr,
                           localization_verdict, metric_row, peak_index, sinusoid_fit)
from rfloc.stimulus import StimulusModel, kur_sample, sqexp_covariance

vectors = arrays(np.float64, st.integers(4, 64),
                 elements=st.floats(-100, 100, allow_nan=False, allow_infinity=False))


def test_ipr_examples():
    assert ipr(np.eye(10)[3]) == 1.0
    assert ipr(np.ones(40)) == pytest.approx(1 / 40)
    assert ipr(np.r_[1.0, 1.0, np.zeros(8)]) == pytest.approx(0.5)
    with pytest.raises(ValueError):
        ipr(np.zeros(5))


@given(vectors, st.floats(-1e3, 1e3))
def test_ipr_scale_invariance_and_bounds(w, c):
    assume(np.max(np.abs(w)) > 1e-3 and abs(c) > 1e-3)
    v = ipr(w)
    assert ipr(c * w) == pytest.approx(v, abs=1e-12)
    assert 1 / w.size - 1e-12 <= v <= 1 + 1e-12


def test_excess_kurtosis_examples():
    assert excess_kurtosis(np.array([1.0, -1.0] * 50)) == pytest.approx(-2.0, abs=1e-12)
    g = np.random.default_rng(0).standard_normal(1_000_000)
    assert excess_kurtosis(g) == pytest.approx(0.0, abs=0.02)
    x = kur_sample(40, 10.0, sqexp_covariance(40, 0.3), 50000, np.random.default_rng(1))
    assert excess_kurtosis(x.ravel()) == pytest.approx(-0.93, abs=0.15)
    with pytest.raises(ValueError):
        excess_kurtosis(np.ones(10))
    with pytest.raises(ValueError):
        excess_kurtosis(np.array([1.0, 2.0, 3.0]))


@given(arrays(np.float64, st.integers(5, 50), elements=st.floats(-10, 10)), st.floats(0.01, 100))
def test_excess_kurtosis_scale_invariance(x, c):
    assume(np.std(x) > 1e-3)
    assert excess_kurtosis(c * x) == pytest.approx(excess_kurtosis(x), abs=1e-10)


def test_sinusoid_fit_examples():
    n = 40
    i = np.arange(n)
    f = sinusoid_fit(np.cos(2 * np.pi * 3 * i / n))
    assert (f.k, round(f.a, 12), round(f.b, 12)) == (3, 1.0, 0.0) and f.rel_residual <= 1e-10
    f = sinusoid_fit(np.full(n, -0.04))
    assert f.k == 0 and f.a == pytest.approx(-0.04) and f.b == 0 and f.rel_residual <= 1e-10
    assert sinusoid_fit(np.eye(n)[5]).rel_residual >= 0.5
    w = 0.3 * np.cos(2 * np.pi * 2 * i / n) - 0.7 * np.sin(2 * np.pi * 2 * i / n)
    f = sinusoid_fit(w)
    assert (f.k, f.a, f.b) == (2, pytest.approx(0.3), pytest.approx(-0.7))
    np.testing.assert_allclose(f.evaluate(n), w, atol=1e-12)


def test_sinusoid_fit_nyquist():
    w = (-1.0) ** np.arange(10)
    f = sinusoid_fit(w)
    assert f.k == 5 and f.b == 0 and f.rel_residual < 1e-12


@given(vectors, st.integers(0, 63))
@settings(max_examples=100)
def test_sinusoid_residual_shift_invariant(w, s):
    assume(np.linalg.norm(w) > 1e-3)
    a, b = sinusoid_fit(w), sinusoid_fit(np.roll(w, s))
    assert 0 <= a.rel_residual <= 1 + 1e-12
    assert a.k <= w.size // 2
    assert b.rel_residual == pytest.approx(a.rel_residual, abs=1e-10)


def test_peak_index_examples():
    assert peak_index(np.array([0.0, 5, 1])) == 1
    assert peak_index(np.array([-7.0, 5, 1])) == 0
    assert peak_index(np.array([3.0, 3.0])) == 0


@given(vectors, st.floats(0.01, 100))
def test_peak_index_positive_scaling(w, c):
    assume(np.max(np.abs(w)) > 1e-300)              # scaling subnormals can underflow to zero
    assert peak_index(c * w) == peak_index(w)


def test_circular_distance():
    assert circular_distance(0, 39, 40) == 1
    assert circular_distance(5, 25, 40) == 20
    assert circular_distance(3, 3, 40) == 0


def test_localization_verdicts():
    n = 40
    assert localization_verdict(np.eye(n)[0]) == LOCALIZED
    assert localization_verdict(np.cos(2 * np.pi * np.arange(n) / n)) == OSCILLATORY
    assert localization_verdict(np.ones(n)) == FLAT
    noise = np.random.default_rng(0).standard_normal(n)
    assert localization_verdict(noise) == OSCILLATORY
    assert localization_verdict(np.eye(n)[0], ipr_threshold=1.01) == OSCILLATORY


def test_metric_row_columns():
    row = metric_row(np.eye(8)[2], samples=np.array([1.0, -1.0] * 4))
    assert set(row) == {"ipr", "excess_kurtosis", "fit_k", "fit_rel_residual", "peak"}
    assert row["peak"] == 2 and row["excess_kurtosis"] == pytest.approx(-2.0)
    assert np.isnan(metric_row(np.ones(8))["excess_kurtosis"])
