"""
Unit tests for the post-hoc numerics in ferrolab.analysis.
"""
import math

import numpy as np
import pytest

from ferrolab.analysis import (
    accuracy,
    confusion_matrix,
    detection_threshold,
    hysteresis_metrics,
    lyapunov_curve,
    shoelace_area,
    shrinkage_trend,
    summary_stats,
)
from ferrolab.utils import DegenerateSeries, InsufficientData, InsufficientPairs, PartialLoop

STAIRCASE = [0.0, 0.5, 1.0, 0.5, 0.0, -0.5, -1.0, -0.5, 0.0]


def logistic_series(n: int, r: float = 4.0, x0: float = 0.3) -> np.ndarray:
    x = np.empty(n)
    x[0] = x0
    for i in range(1, n):
        x[i] = r * x[i - 1] * (1 - x[i - 1])
    return x


class TestLyapunovCurve:
    """Tests for the lyapunov_curve function."""

    def test_logistic_map(self):
        """Test that the fully chaotic logistic map diverges at ln 2 per step."""
        curve = lyapunov_curve(logistic_series(4000), eps=0.001, k_max=20, fit_range=(1, 6))
        assert curve.slope == pytest.approx(math.log(2), abs=0.15)
        assert curve.n_pairs > 1000
        assert curve.min_pair_gap == 20

    def test_uniform_noise(self):
        """Test that independent noise shows no systematic divergence."""
        noise = np.random.default_rng(0).uniform(size=3000)
        curve = lyapunov_curve(noise, eps=0.01, k_max=20)
        assert abs(curve.slope) < 0.05

    def test_curve_frame(self):
        """Test the exported columns of the divergence curve."""
        curve = lyapunov_curve(logistic_series(1000), eps=0.01, k_max=8)
        frame = curve.to_frame()
        assert list(frame.columns) == ["k", "mean_ln_d", "pairs"]
        assert frame["k"].tolist() == list(range(1, 9))

    def test_constant(self):
        """Test that a constant series is rejected."""
        with pytest.raises(DegenerateSeries):
            lyapunov_curve([3.0] * 100)
        with pytest.raises(DegenerateSeries):
            lyapunov_curve([1.0, float("nan"), 2.0])

    def test_too_short(self):
        """Test that the series must outlast k_max plus the pair gap."""
        with pytest.raises(InsufficientData):
            lyapunov_curve(logistic_series(30), k_max=20)

    def test_no_pairs(self):
        """Test that an impossible radius finds no pairs."""
        with pytest.raises(InsufficientPairs):
            lyapunov_curve(np.arange(200.0), eps=1e-9, k_max=5)


class TestHysteresisMetrics:
    """Tests for loop splitting and per-loop metrics."""

    def test_shoelace(self):
        """Test the signed area of the unit square."""
        x = np.array([0.0, 1.0, 1.0, 0.0])
        y = np.array([0.0, 0.0, 1.0, 1.0])
        assert shoelace_area(x, y) == pytest.approx(1.0)
        assert shoelace_area(x[::-1], y[::-1]) == pytest.approx(-1.0)

    def test_pinched_loop(self):
        """Test the pinch of branches crossing at 0 V."""
        v = np.array(STAIRCASE)
        z = np.array([0.0, 0.5, 1.0, 1.0, 0.0, -1.0, -2.0, -0.5, 0.0])
        (metrics,) = hysteresis_metrics(v, z, loops=1)
        assert metrics.crossings == 1
        assert metrics.pinch_voltage == pytest.approx(0.0)
        assert metrics.dynamic_range == pytest.approx(3.0)

    def test_open_loop(self):
        """Test that parallel branches report no pinch."""
        v = np.array(STAIRCASE)
        down = np.diff(v, prepend=0.0) < 0
        z = v + down
        (metrics,) = hysteresis_metrics(v, z, loops=1)
        assert metrics.crossings == 0
        assert math.isnan(metrics.pinch_voltage)
        assert metrics.area != 0

    def test_loop_split(self):
        """Test that loops share their boundary sample."""
        v = STAIRCASE + STAIRCASE[1:]
        metrics = hysteresis_metrics(v, np.linspace(0, 1, len(v)), loops=2)
        assert [m.loop for m in metrics] == [0, 1]

    def test_partial(self):
        """Test series that do not split into whole loops."""
        with pytest.raises(PartialLoop):
            hysteresis_metrics(STAIRCASE + STAIRCASE[1:-1], [0.0] * 16, loops=2)
        with pytest.raises(PartialLoop):
            hysteresis_metrics(STAIRCASE, [0.0] * 8, loops=1)
        with pytest.raises(PartialLoop):
            hysteresis_metrics(STAIRCASE, [0.0] * 9, loops=0)

    def test_trend(self):
        """Test the rank correlation of shrinking loops."""
        assert shrinkage_trend([5.0, -4.0, 3.0, 2.0]) == pytest.approx(-1.0)
        with pytest.raises(InsufficientData):
            shrinkage_trend([1.0, 2.0])


class TestStatistics:
    """Tests for thresholds, summaries and classification bookkeeping."""

    def test_detection_threshold(self):
        """Test the midpoint between the two lowest values."""
        assert detection_threshold([30.0, 10.0, 20.0]) == 15.0
        assert detection_threshold([10.0, 10.0, 30.0]) == 10.0
        with pytest.raises(InsufficientData):
            detection_threshold([1.0])

    def test_summary(self):
        """Test mean, sample deviation and histogram counts."""
        stats = summary_stats([1.0, 2.0, 3.0], bins=3)
        assert stats.mu == 2.0
        assert stats.sigma == pytest.approx(1.0)
        assert stats.sigma_defined
        assert stats.counts == [1, 1, 1]
        assert len(stats.bin_edges) == 4

    def test_summary_single(self):
        """Test that one value has no sample deviation."""
        stats = summary_stats([4.2])
        assert stats.n == 1
        assert not stats.sigma_defined
        with pytest.raises(InsufficientData):
            summary_stats([])

    def test_confusion(self):
        """Test the confusion counts and accuracy."""
        true = [0, 1, 2, 3, 3]
        predicted = [0, 1, 2, 3, 2]
        matrix = confusion_matrix(true, predicted)
        assert matrix.shape == (4, 4)
        assert matrix.loc[3, 2] == 1
        assert int(np.trace(matrix.to_numpy())) == 4
        assert accuracy(true, predicted) == pytest.approx(0.8)
        assert accuracy([], []) == 0.0
