"""
Unit tests for the S/Z conversions and sweep emulation in ferrolab.rf.
"""
import numpy as np
import pytest

from ferrolab.rf import SweepConfig, build_sweep, collapse, s_from_z, z_from_s
from ferrolab.utils import EmptySweep, SingularConversion


class TestZFromS:
    """Tests for the z_from_s function."""

    def test_matched_load(self):
        """Test that S = 0 maps to z0 on the diagonal."""
        assert z_from_s(0, 0, 0, 0, 50.0) == (50, 0, 0, 50)

    def test_reflective_port(self):
        """Test the hand-evaluated case S11 = 0.5."""
        z11, z12, z21, z22 = z_from_s(0.5, 0, 0, 0, 50.0)
        assert z11 == pytest.approx(150.0)
        assert (z12, z21) == (0, 0)
        assert z22 == pytest.approx(50.0)

    def test_singular(self):
        """Test that a full transmission matrix is not invertible."""
        with pytest.raises(SingularConversion) as info:
            z_from_s(0, 1, 1, 0)
        assert info.value.index == 0

    def test_singular_index(self):
        """Test that the first singular frequency index is reported."""
        s12 = np.array([0.1, 0.2, 1.0, 1.0])
        with pytest.raises(SingularConversion) as info:
            z_from_s(np.zeros(4), s12, s12, np.zeros(4))
        assert info.value.index == 2


class TestSFromZ:
    """Tests for the s_from_z function."""

    def test_matched_load(self):
        """Test the inverse of the matched-load identity."""
        s = s_from_z(np.array([[50, 0], [0, 50]]), 50.0)
        assert s == (0, 0, 0, 0)

    def test_singular(self):
        """Test that Z = -z0 I is rejected."""
        with pytest.raises(SingularConversion):
            s_from_z(-50.0 * np.eye(2), 50.0)

    def test_round_trip(self):
        """Test that converting random passive networks there and back is the identity."""
        rng = np.random.default_rng(0)
        n = 1000
        r = rng.uniform(1, 1e4, size=(n, 2))
        mutual = rng.uniform(0, 1, size=n) * np.sqrt(r[:, 0] * r[:, 1])
        z = np.empty((n, 2, 2), dtype=complex)
        z[:, 0, 0] = r[:, 0] + 1j * rng.normal(0, 100, n)
        z[:, 1, 1] = r[:, 1] + 1j * rng.normal(0, 100, n)
        z[:, 0, 1] = mutual
        z[:, 1, 0] = mutual
        back = np.stack(z_from_s(*s_from_z(z, 50.0), 50.0), axis=-1).reshape(n, 2, 2)
        assert np.max(np.abs(back - z) / np.abs(z).max(axis=(1, 2))[:, None, None]) < 1e-9

    def test_reciprocal_network(self):
        """Test that a symmetric impedance matrix gives S12 == S21 exactly."""
        s11, s12, s21, s22 = s_from_z(np.array([[120 + 3j, 40 - 1j], [40 - 1j, 80 + 2j]]))
        assert s12 == s21


class TestCollapse:
    """Tests for the collapse function."""

    def test_constant(self):
        """Test that 101 equal magnitudes sum exactly."""
        assert collapse(np.full(101, 100.0)) == 10100.0

    def test_single(self):
        """Test that one sample is returned unchanged."""
        assert collapse(np.array([42.5])) == 42.5

    def test_random_sum(self):
        """Test against an independent summation."""
        values = np.random.default_rng(1).uniform(0, 500, 101)
        assert collapse(values) == pytest.approx(sum(values.tolist()), rel=1e-12)

    def test_empty(self):
        """Test that an empty sweep is rejected."""
        with pytest.raises(EmptySweep):
            collapse(np.array([]))

    def test_negative(self):
        """Test that negative magnitudes are rejected."""
        with pytest.raises(ValueError):
            collapse(np.array([1.0, -1.0]))


class TestBuildSweep:
    """Tests for the build_sweep function."""

    def test_resistive_network(self):
        """Test that a frequency-flat network collapses to n_points times its magnitude."""
        cfg = SweepConfig(n_points=11)
        z = np.tile(np.array([[100.0, 20.0], [20.0, 80.0]], dtype=complex), (11, 1, 1))
        result = build_sweep(z, cfg, t=2.5)
        assert result.t == 2.5
        assert result.zc11 == pytest.approx(1100.0)
        assert result.zc22 == pytest.approx(880.0)
        assert result.zc12 == pytest.approx(220.0)
        assert result.indicator("zc22") == result.zc22
        np.testing.assert_array_equal(result.s12, result.s21)

    def test_unknown_indicator(self):
        """Test that asking for an unknown indicator fails."""
        cfg = SweepConfig(n_points=2)
        result = build_sweep(np.tile(np.eye(2, dtype=complex) * 60, (2, 1, 1)), cfg, t=0)
        with pytest.raises(KeyError):
            result.indicator("ZC33")

    def test_band_validation(self):
        """Test that an inverted band is rejected."""
        with pytest.raises(ValueError):
            SweepConfig(f_start=2e9, f_stop=1e9)
