"""
Unit tests for reservoir acquisition in ferrolab.reservoir.
"""
import pytest
from pydantic import ValidationError

from ferrolab.reservoir import (
    PrcReset,
    Sample,
    acquire_digit,
    collect_dataset,
    feature_matrix,
    read_samples,
    write_samples,
)
from ferrolab.utils import InsufficientData, ShapeMismatch


class TestAcquisition:
    """Tests for digit acquisition on a bench."""

    def test_acquire_digit(self, bench, digits):
        """Test that one digit yields 64 features after a reset near star."""
        start, trace = acquire_digit(bench, digits, 1)
        assert abs(start - 16400.0) <= 5.0
        assert len(trace) == 64
        assert bench.bias == 0.0

    def test_black_pixels_lower(self, bench, digits):
        """Test that the curve ends below its reset value."""
        start, trace = acquire_digit(bench, digits, 0)
        assert trace[-1] < start

    def test_collect_one_rep(self, bench, digits):
        """Test that one repetition gives one sample per label in order."""
        samples = collect_dataset(bench, digits, reps=1)
        assert [s.label for s in samples] == [0, 1, 2, 3]
        assert all(abs(s.start - 16400.0) <= 5.0 for s in samples)
        features, labels = feature_matrix(samples)
        assert features.shape == (4, 64)
        assert labels.tolist() == [0, 1, 2, 3]

    def test_custom_reset(self, bench, digits):
        """Test acquisition with other reset endpoints."""
        start, _ = acquire_digit(bench, digits, 2, reset=PrcReset(low=15950.0, high=16050.0, star=16000.0))
        assert abs(start - 16000.0) <= 5.0


class TestSamples:
    """Tests for sample validation and sample files."""

    def test_sample_validation(self):
        """Test the feature length and label range checks."""
        with pytest.raises(ValidationError):
            Sample(features=[0.0] * 63, label=0)
        with pytest.raises(ValidationError):
            Sample(features=[0.0] * 64, label=4)
        assert Sample(features=[0.0] * 64, label=3).target == 1.0

    def test_empty_matrix(self):
        """Test that an empty sample list has no feature matrix."""
        with pytest.raises(InsufficientData):
            feature_matrix([])

    def test_write_read(self, temp_output_dir):
        """Test that a sample file reads back with labels, starts and features."""
        samples = [Sample(features=[float(i + label) for i in range(64)], label=label, start=16400.0 + label)
                   for label in range(4)]
        path = write_samples(samples, temp_output_dir / "samples.csv")
        assert read_samples(path) == samples

    def test_missing_columns(self, temp_output_dir):
        """Test that a file without feature columns is rejected."""
        path = temp_output_dir / "bad.csv"
        path.write_text("label,f00\n1,2.0\n", encoding="utf-8")
        with pytest.raises(ShapeMismatch):
            read_samples(path)
