"""
Unit tests for the device model in ferrolab.ffmodel.
"""
import numpy as np
import pytest
from pydantic import ValidationError

from ferrolab.ffmodel import (
    DeviceParams,
    DeviceState,
    device_param_keys,
    device_params_from_mapping,
    initial_state,
    load_device_params,
    network_at,
    network_matrices,
    restore,
    settle,
    step,
)
from ferrolab.rf import SweepConfig, build_sweep
from ferrolab.utils import BiasOutOfRange, InvalidDuration, ParameterFileError


def _zc22(state, params):
    cfg = SweepConfig()
    return build_sweep(network_matrices(state, params, cfg.frequencies()), cfg, state.t).zc22


class TestStep:
    """Tests for the step function."""

    def test_fixed_point(self, quiet_params):
        """Test that the rest state does not move at 0 V."""
        state = initial_state(quiet_params)
        after = step(state, quiet_params, 0.0, 100.0)
        assert after.w == pytest.approx(state.w, abs=1e-9)
        assert after.s == pytest.approx(0.0, abs=1e-9)
        assert after.a == 0.0
        assert after.t == pytest.approx(100.0)

    def test_zero_duration(self, quiet_params):
        """Test that a zero duration returns the same state."""
        state = initial_state(quiet_params, w=0.7)
        assert step(state, quiet_params, 3.3, 0.0) == state

    def test_negative_bias_lowers_impedance(self, quiet_params):
        """Test that ZC22 falls strictly under a held -3.3 V."""
        state = initial_state(quiet_params)
        values = []
        for _ in range(60):
            state = step(state, quiet_params, -3.3, 1.0)
            values.append(_zc22(state, quiet_params))
        assert all(b < a for a, b in zip(values, values[1:]))

    def test_positive_bias_raises_state(self, quiet_params):
        """Test that a positive bias drives w and s up."""
        state = step(initial_state(quiet_params), quiet_params, 10.0, 5.0)
        assert state.w > quiet_params.w_eq
        assert state.s > 0
        assert state.a > 0

    def test_bounds(self):
        """Test that w, a and s stay bounded under a random program."""
        params = DeviceParams(seed=3)
        state = initial_state(params)
        rng = np.random.default_rng(5)
        for v, dt in zip(rng.uniform(-10, 10, 200), rng.uniform(0, 3, 200)):
            state = step(state, params, float(v), float(dt))
            assert 0.0 <= state.w <= 1.0
            assert 0.0 <= state.a <= 1.0
            assert abs(state.s) <= params.s_bound
            assert all(0 < c < 1 for c in state.c)

    def test_deterministic(self):
        """Test that the same seed and program give the same state."""
        params = DeviceParams(seed=9)
        a = step(step(initial_state(params), params, 3.3, 2.0), params, -1.0, 1.5)
        b = step(step(initial_state(params), params, 3.3, 2.0), params, -1.0, 1.5)
        assert a == b

    def test_seed_changes_trace(self):
        """Test that different seeds give different chaotic traces."""
        a = step(initial_state(DeviceParams(seed=1)), DeviceParams(seed=1), 0.0, 5.0)
        b = step(initial_state(DeviceParams(seed=2)), DeviceParams(seed=2), 0.0, 5.0)
        assert a.s != b.s

    def test_fatigue_amplifies_perturbation(self):
        """Test that a fully fatigued device sees the chaotic kick scaled by 1 + gain."""
        params = DeviceParams(seed=4)
        fresh = initial_state(params)
        worn = fresh.model_copy(update={"a": 1.0})
        fresh_after = step(fresh, params, 0.0, 2.0)
        worn_after = step(worn, params, 0.0, 2.0)
        assert worn_after.a == 1.0
        assert worn_after.s == pytest.approx((1 + params.fatigue_chaos_gain) * fresh_after.s, rel=1e-6)
        assert params.trace_sigma(1.0) == pytest.approx((1 + params.fatigue_chaos_gain) * params.trace_sigma())

    def test_fatigue_gain_off(self):
        """Test that a zero gain leaves the perturbation independent of fatigue."""
        params = DeviceParams(seed=4, fatigue_chaos_gain=0.0)
        fresh = initial_state(params)
        worn = fresh.model_copy(update={"a": 1.0})
        assert step(worn, params, 0.0, 2.0).s == pytest.approx(step(fresh, params, 0.0, 2.0).s, rel=1e-12)

    def test_rejects_bad_input(self, quiet_params):
        """Test that out-of-range bias and negative durations are rejected."""
        state = initial_state(quiet_params)
        with pytest.raises(BiasOutOfRange):
            step(state, quiet_params, 12.0, 1.0)
        with pytest.raises(InvalidDuration):
            step(state, quiet_params, 0.0, -1.0)


class TestNetwork:
    """Tests for network_at and network_matrices."""

    def test_symmetric_without_asymmetry(self, quiet_params):
        """Test that Z12 equals Z21 exactly when asym is 0."""
        params = quiet_params.model_copy(update={"asym": 0.0})
        z = network_matrices(initial_state(params), params, SweepConfig().frequencies())
        np.testing.assert_array_equal(z[:, 0, 1], z[:, 1, 0])

    def test_repeatable(self, quiet_params):
        """Test that evaluating the same state twice gives identical matrices."""
        state = initial_state(quiet_params, w=0.3)
        np.testing.assert_array_equal(network_at(state, quiet_params, 1e9), network_at(state, quiet_params, 1e9))

    def test_calibrated_range(self, quiet_params):
        """Test that the rest state lands in the operating impedance range."""
        assert 14000 <= _zc22(initial_state(quiet_params), quiet_params) <= 16500

    def test_frequency_must_be_positive(self, quiet_params):
        """Test that a zero frequency is rejected."""
        with pytest.raises(ValueError):
            network_at(initial_state(quiet_params), quiet_params, 0.0)


class TestRestoreAndSettle:
    """Tests for the restore and settle functions."""

    def test_restore_keeps_zero_fatigue(self, quiet_params):
        """Test that fatigue cannot go below zero."""
        assert restore(initial_state(quiet_params), quiet_params, 30.0).a == 0.0

    def test_restore_recovers_fatigue(self, quiet_params):
        """Test that a long -10 V hold removes most fatigue."""
        state = initial_state(quiet_params).model_copy(update={"a": 0.8})
        assert restore(state, quiet_params, 100.0).a < 0.2

    def test_restore_needs_duration(self, quiet_params):
        """Test that a zero restoration time is rejected."""
        with pytest.raises(InvalidDuration):
            restore(initial_state(quiet_params), quiet_params, 0.0)

    def test_settle_decays_trace(self, quiet_params):
        """Test that s decays by e^-5 over five relaxation times."""
        state = initial_state(quiet_params).model_copy(update={"s": 0.5})
        settled = settle(state, quiet_params, 5.0 / quiet_params.s_relax)
        assert abs(settled.s) < 0.01 * 0.5

    def test_settle_zero_is_identity(self, quiet_params):
        """Test that settling for zero seconds changes nothing."""
        state = initial_state(quiet_params, w=0.8)
        assert settle(state, quiet_params, 0.0) == state

    def test_long_term_state_is_slower(self, quiet_params):
        """Test that w relaxes far slower than s."""
        state = initial_state(quiet_params, w=0.9).model_copy(update={"s": 0.5})
        settled = settle(state, quiet_params, 50.0)
        w_residual = (settled.w - quiet_params.w_eq) / (0.9 - quiet_params.w_eq)
        s_residual = settled.s / 0.5
        assert w_residual / s_residual > 10


class TestDeviceParams:
    """Tests for parameter validation and parameter files."""

    def test_rate_separation(self):
        """Test that s must relax at least ten times faster than w."""
        with pytest.raises(ValidationError):
            DeviceParams(s_relax=0.001, w_relax=0.001)

    def test_odd_oscillators(self):
        """Test that the oscillator count must be even."""
        with pytest.raises(ValidationError):
            DeviceParams(n_osc=7)

    def test_state_oscillators_inside_unit_interval(self):
        """Test that oscillator values on the boundary are rejected."""
        with pytest.raises(ValidationError):
            DeviceState(w=0.5, s=0.0, a=0.0, c=(0.0, 0.5), t=0.0)

    def test_from_mapping(self):
        """Test that flat keys fill both the device and the calibration fields."""
        params = device_params_from_mapping({"seed": "4", "chaos_eps": "0", "r_shunt": "160"})
        assert params.seed == 4
        assert params.chaos_eps == 0.0
        assert params.z_scale.r_shunt == 160.0
        assert params.w_gain == DeviceParams().w_gain

    def test_unknown_key(self):
        """Test that unknown keys are rejected."""
        with pytest.raises(ParameterFileError):
            device_params_from_mapping({"flux_capacitor": "1"})

    def test_not_numeric(self):
        """Test that non-numeric values are rejected."""
        with pytest.raises(ParameterFileError):
            device_params_from_mapping({"w_gain": "fast"})

    def test_load_file(self, tmp_path):
        """Test reading a parameter file with comments."""
        path = tmp_path / "device.params"
        path.write_text("# quiet device\nchaos_eps = 0\nkappa = 12.5  # stronger fatigue\n", encoding="utf-8")
        params = load_device_params(path)
        assert params.kappa == 12.5
        assert params.chaos_eps == 0.0
        assert "gamma_w" in device_param_keys()
