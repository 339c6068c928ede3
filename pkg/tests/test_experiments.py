"""
Unit tests for the canned experiments in ferrolab.experiments.
"""
import numpy as np
import pytest
from pydantic import ValidationError

from ferrolab.analysis import hysteresis_metrics, lyapunov_curve, shrinkage_trend
from ferrolab.experiments import (
    DigitBitmaps,
    Segment,
    StimulusSchedule,
    argmin_digit,
    chaos_probe,
    classify_inmemory,
    differentiation_run,
    dynamics_reduction_run,
    estimate_resolution,
    hysteresis_sweep,
    memory_store,
    offset_ramp,
    progressive_adaptation,
    pulse_memory,
    pulse_train,
    serialization_order,
    serialize_digit,
    settle_run,
    stream_schedule,
    sweep_restore,
    weighting_for,
)
from ferrolab.ffmodel import DeviceParams
from ferrolab.instruments import Testbench
from ferrolab.utils import BiasOutOfRange, PreconditionError


class TestDigitBitmaps:
    """Tests for the digit dataset and its serialization."""

    def test_subset_rule(self, digits):
        """Test that every black pixel of 3 is also black in 8."""
        three, eight = digits.black(3), digits.black(8)
        assert np.all(eight[three])
        assert digits.black_count(8) > digits.black_count(3)

    def test_subset_violation(self, digits):
        """Test that a dataset breaking the subset rule is rejected."""
        pixels = digits.pixels.copy()
        pixels[8] = 0
        with pytest.raises(ValidationError):
            DigitBitmaps(pixels=pixels)

    def test_wrong_shape(self, digits):
        """Test that a dataset without ten digits is rejected."""
        with pytest.raises(ValidationError):
            DigitBitmaps(pixels=digits.pixels[:9])

    def test_serialization_order(self):
        """Test that pixels run bottom row first, left to right."""
        bitmap = np.zeros((8, 8), dtype=bool)
        bitmap[7, 0] = True
        bitmap[0, 0] = True
        bitmap[6, 3] = True
        order = serialization_order(bitmap)
        assert list(np.flatnonzero(order)) == [0, 11, 56]


class TestSchedules:
    """Tests for stimulus schedule construction."""

    def test_serialize_digit(self, digits):
        """Test pixel provenance and the black/white bias mapping."""
        schedule = serialize_digit(digits, 1, weights=4.0)
        assert schedule.pixels() == list(range(64))
        black = digits.black(1)
        assert [seg.voltage for seg in schedule.segments] == [-3.3 if b else 0.0 for b in black]
        assert schedule.total_duration == pytest.approx(256.0)

    def test_weighting_for(self, digits):
        """Test that the target's black pixels get the long weight."""
        weights = weighting_for(digits, 4)
        black = digits.black(4)
        assert np.all(weights[black] == 4.5)
        assert np.all(weights[~black] == 0.25)
        assert weights.sum() == pytest.approx(4.5 * black.sum() + 0.25 * (64 - black.sum()))

    def test_offset_ramp(self):
        """Test that the offset ramp changes sign at pixel 32."""
        ramp = offset_ramp(-0.5)
        assert ramp[0] == pytest.approx(-0.5)
        assert ramp[32] == pytest.approx(0.0)
        assert ramp[33] > 0
        assert ramp[63] == pytest.approx(-0.5 * (1 - 63 / 32))

    def test_bad_inputs(self, digits):
        """Test digit range, weight length and offset clipping errors."""
        with pytest.raises(PreconditionError):
            serialize_digit(digits, 10)
        with pytest.raises(PreconditionError):
            serialize_digit(digits, 1, weights=[1.0] * 63)
        with pytest.raises(PreconditionError):
            serialize_digit(digits, 1, weights=0.0)
        with pytest.raises(BiasOutOfRange):
            serialize_digit(digits, 8, offset=-7.0)

    def test_pulse_train(self):
        """Test the duty cycle and the empty train."""
        schedule = pulse_train(4)
        assert len(schedule.segments) == 8
        assert schedule.duty_cycle() == pytest.approx(0.25)
        assert schedule.total_duration == pytest.approx(4.0)
        assert pulse_train(0).segments == []
        assert pulse_train(0).duty_cycle() == 0.0
        with pytest.raises(PreconditionError):
            pulse_train(-1)

    def test_stream_timing(self, bench, digits):
        """Test that streaming lasts exactly the schedule duration."""
        schedule = serialize_digit(digits, 7, weights=1.0)
        start = bench.clock
        assert stream_schedule(bench, schedule) == []
        assert bench.clock - start == pytest.approx(64.0)

    def test_stream_measure_each(self, bench):
        """Test that a measured stream samples once per segment within the same time."""
        schedule = pulse_train(3)
        start = bench.clock
        schedule = StimulusSchedule(segments=[Segment(voltage=seg.voltage, duration=1.0) for seg in schedule.segments])
        trace = stream_schedule(bench, schedule, measure_each=True)
        assert len(trace) == 6
        assert bench.clock - start == pytest.approx(6.0)


class TestHysteresis:
    """Tests for the hysteresis_sweep function."""

    def test_row_count(self, bench):
        """Test that one loop over n steps records 2n + 1 samples and ends at 0 V."""
        frame = hysteresis_sweep(bench, v_min=-1.0, v_max=1.0, step=0.5, loops=2)
        assert len(frame) == 2 * 4 * 2 + 1
        assert frame["bias_v"].iloc[0] == pytest.approx(0.0)
        assert frame["bias_v"].max() == pytest.approx(1.0)
        assert frame["bias_v"].min() == pytest.approx(-1.0)
        assert bench.bias == 0.0

    def test_staircase(self, bench):
        """Test the visiting order of a single loop."""
        frame = hysteresis_sweep(bench, v_min=-1.0, v_max=1.0, step=0.5, loops=1)
        assert list(frame["bias_v"].round(6)) == [0.0, 0.5, 1.0, 0.5, 0.0, -0.5, -1.0, -0.5, 0.0]

    def test_preconditions(self, bench):
        """Test the range, step, loop and dwell checks."""
        with pytest.raises(PreconditionError):
            hysteresis_sweep(bench, v_min=1.0, v_max=-1.0)
        with pytest.raises(PreconditionError):
            hysteresis_sweep(bench, v_min=-1.0, v_max=1.0, step=0.3)
        with pytest.raises(PreconditionError):
            hysteresis_sweep(bench, loops=0)
        with pytest.raises(PreconditionError):
            hysteresis_sweep(bench, dwell=0.5)
        assert bench.log == []


class TestStorage:
    """Tests for the analog and pulse storage ladders."""

    def test_memory_levels_grow(self, bench):
        """Test that longer writes store larger impedance changes."""
        setpoint = bench.sweep().zc11 + 20.0
        result = memory_store(bench, setpoint=setpoint, n=3, hold=5.0)
        deltas = result.deltas()
        assert len(result.levels) == 3
        assert deltas[0] > 0
        assert deltas[0] < deltas[1] < deltas[2]
        assert all(len(lv.hold_values) == 5 for lv in result.levels)
        assert list(result.to_frame()["write_time_s"]) == [4.0, 8.0, 12.0]

    def test_memory_preconditions(self, bench):
        """Test the level count and write-time checks."""
        with pytest.raises(PreconditionError):
            memory_store(bench, n=1)
        with pytest.raises(PreconditionError):
            memory_store(bench, n=3, write_times=[4.0, 8.0])
        with pytest.raises(PreconditionError):
            memory_store(bench, n=2, write_times=[0.05, 4.0])

    def test_pulse_counts(self, bench):
        """Test that more pulses store a larger change."""
        setpoint = bench.sweep().zc11 + 20.0
        result = pulse_memory(bench, counts=(0, 8), setpoint=setpoint, hold=3.0)
        assert [lv.count for lv in result.levels] == [0, 8]
        assert result.levels[0].duty_cycle == 0.0
        assert result.levels[1].delta > result.levels[0].delta


class TestClassification:
    """Tests for in-memory classification helpers."""

    def test_argmin_tie(self):
        """Test that ties resolve to the lowest digit."""
        assert argmin_digit([3.0, 1.0, 1.0, 2.0]) == 1
        assert argmin_digit([5.0]) == 0

    def test_classify_shape(self, bench, digits):
        """Test that one pass reports a final value and reset ticks per digit."""
        result = classify_inmemory(bench, digits, 1, w_black=1.0, w_white=0.1)
        assert len(result.finals) == 10
        assert len(result.reset_ticks) == 10
        assert result.argmin == argmin_digit(result.finals)
        assert result.correct == (result.argmin == 1)
        assert bench.bias == 0.0

    def test_decrement_follows_black_count(self, bench, digits):
        """Test that a digit with more black pixels loses more impedance."""
        assert digits.black_count(8) > digits.black_count(1)
        result = differentiation_run(bench, digits, sequence=[1, 8], w=1.0, resolution_samples=5)
        one, eight = result.decrements
        assert 0 < one < eight
        assert result.min_gap == pytest.approx(eight - one)
        assert all(len(trace) == 64 for trace in result.traces)

    def test_empty_sequence(self, bench, digits):
        """Test that differentiation needs at least one digit."""
        with pytest.raises(PreconditionError):
            differentiation_run(bench, digits, sequence=[])

    def test_resolution(self, make_bench):
        """Test that the resolution grows with the chaotic perturbation."""
        quiet = estimate_resolution(make_bench(), samples=10)
        noisy = estimate_resolution(make_bench(chaos=True), samples=10)
        assert quiet.epsilon == pytest.approx(3 * quiet.sigma)
        assert noisy.sigma > quiet.sigma
        with pytest.raises(PreconditionError):
            estimate_resolution(make_bench(), samples=2)


class TestTimeEvolution:
    """Tests for the chaos probe, fatigue recovery and settling runs."""

    def test_chaos_probe_empty(self, bench):
        """Test that zero cycles give an empty series."""
        result = chaos_probe(bench, cycles=0)
        assert result.values == []
        assert result.cycle_ticks == []

    def test_chaos_probe_series(self, bench):
        """Test that the series holds every measurement of the probe."""
        start = bench.sweep().zc22
        result = chaos_probe(bench, low=start + 20.0, high=start + 60.0, tol=10.0, pause=3.0, cycles=1)
        assert len(result.cycle_ticks) == 1
        assert result.cycle_starts == [0]
        assert len(result.values) == len(bench.log) - 1
        assert result.times == sorted(result.times)

    def test_chaos_probe_preconditions(self, bench):
        """Test the endpoint and cycle checks."""
        with pytest.raises(PreconditionError):
            chaos_probe(bench, low=16300.0, high=16250.0)
        with pytest.raises(PreconditionError):
            chaos_probe(bench, cycles=-1)

    def test_sweep_restore(self, bench):
        """Test that high-voltage sweeps recover accumulated fatigue."""
        bench.state = bench.state.model_copy(update={"a": 0.3})
        after = sweep_restore(bench)
        assert after < 0.3
        assert bench.bias == 0.0

    def test_settle_run(self, bench):
        """Test that the released trace decays monotonically."""
        bench.set_bias(10.0)
        bench.wait(10.0)
        values = settle_run(bench, duration=20.0)
        assert bench.bias == 0.0
        assert len(values) == 20
        assert all(b < a for a, b in zip(values, values[1:]))


@pytest.fixture(scope="module")
def long_sweep():
    """Fixture providing the default 50-loop sweep on a deterministic bench."""
    bench = Testbench(params=DeviceParams().without_chaos())
    return hysteresis_sweep(bench)


@pytest.fixture(scope="module")
def fatigue_run(digits):
    """Fixture providing 100 weighted passes and a restoration on the default chaotic bench."""
    return dynamics_reduction_run(Testbench(params=DeviceParams()), digits, iterations=100, restore_duration=300.0)


class TestLongRuns:
    """Tests for the full-length experiments on the default device."""

    def test_sweep_samples(self, long_sweep):
        """Test that 50 loops of 76 steps give 7601 samples."""
        assert len(long_sweep) == 2 * 76 * 50 + 1

    def test_zc11_pinch_is_stable(self, long_sweep):
        """Test that the ZC11 branches cross within 0.2 V of one positive voltage on every loop."""
        metrics = hysteresis_metrics(long_sweep["bias_v"], long_sweep["zc11"], loops=50)
        pinches = np.array([m.pinch_voltage for m in metrics])
        assert np.all(np.isfinite(pinches))
        assert pinches.max() - pinches.min() <= 0.2
        assert pinches.mean() > 0

    def test_zc22_loops_shrink(self, long_sweep):
        """Test that the ZC22 loop area falls with the loop index."""
        metrics = hysteresis_metrics(long_sweep["bias_v"], long_sweep["zc22"], loops=50)
        assert shrinkage_trend([m.area for m in metrics]) <= -0.9

    def test_sixteen_level_ladder(self, bench):
        """Test that write times of 4 to 64 s store strictly growing changes."""
        result = memory_store(bench)
        deltas = result.deltas()
        assert len(deltas) == 16
        assert list(result.to_frame()["write_time_s"]) == [4.0 * i for i in range(1, 17)]
        assert all(b > a for a, b in zip(deltas, deltas[1:]))

    @pytest.mark.parametrize("weighted_digit, detected", [(4, 4), (3, 8)])
    def test_weighted_detection(self, bench, digits, weighted_digit, detected):
        """Test the detected digit under the 4.5 s / 0.25 s weighting."""
        assert classify_inmemory(bench, digits, weighted_digit).argmin == detected

    def test_adaptation_favours_weighted_digit(self, bench, digits):
        """Test that the weighted digit spans the widest range."""
        ranges = progressive_adaptation(bench, digits, weighted_digit=1, reps=3).ranges()
        assert max(ranges, key=ranges.get) == 1

    def test_fatigue_narrows_range(self, fatigue_run):
        """Test that 100 passes leave under 30% of the initial range."""
        assert len(fatigue_run.ranges) == 100
        assert fatigue_run.fatigue[-1] > fatigue_run.fatigue[0]
        assert fatigue_run.ranges[-1] < 0.3 * fatigue_run.ranges[0]

    def test_fatigue_costs_accuracy(self, fatigue_run):
        """Test that the worn device misclassifies some passes."""
        assert fatigue_run.accuracy < 1.0

    def test_restore_recovers_range(self, fatigue_run):
        """Test that a -10 V hold brings back at least 80% of the range."""
        assert fatigue_run.recovered_fraction >= 0.8

    def test_setpoint_cycling_diverges(self):
        """Test that alternating setpoint drives on a chaotic device give a positive divergence slope."""
        result = chaos_probe(Testbench(params=DeviceParams()))
        assert lyapunov_curve(result.values).slope > 0
