"""
Canned experiments on a Testbench: hysteresis sweeps, analog and pulse
storage ladders, digit serialization, weighted in-memory classification,
progressive adaptation, dynamics reduction under fatigue and the chaos probe.
"""
import logging
from pathlib import Path
from typing import List, Optional, Sequence, Union

import numpy as np
import pandas as pd
from pydantic import BaseModel, ConfigDict, Field, model_validator

from ferrolab.analysis import detection_threshold
from ferrolab.control import Indicator, SetpointSpec, ToleranceMode, charge_reset, drive_to_setpoint
from ferrolab.experiment_result import (
    AdaptationDigit,
    AdaptationResult,
    ChaosProbeResult,
    ClassificationResult,
    DifferentiationResult,
    DynamicsReductionResult,
    MemoryLevel,
    MemoryResult,
    PulseLevel,
    PulseResult,
    ResolutionEstimate,
)
from ferrolab.instruments import Testbench
from ferrolab.utils import (
    MAX_BIAS_V,
    PreconditionError,
    check_bias,
    packaged_digits_text,
    parse_digit_bitmaps,
)

logger = logging.getLogger(__name__)

N_DIGITS = 10
N_PIXELS = 64
CLASSIFY_SETPOINT = 14338.0


class DigitBitmaps(BaseModel):
    """The ten 8x8 digit images, rows ordered top to bottom."""

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    pixels: np.ndarray

    @model_validator(mode="after")
    def _check_dataset(self) -> "DigitBitmaps":
        if self.pixels.shape != (N_DIGITS, 8, 8):
            raise ValueError(f"Expected {N_DIGITS} digits of 8x8 pixels, got shape {self.pixels.shape}")
        three, eight = self.black(3), self.black(8)
        if not (np.all(eight[three]) and eight.sum() > three.sum()):
            raise ValueError("Digit 3's black pixels must be a strict subset of digit 8's")
        return self

    def black(self, digit: int) -> np.ndarray:
        """Black-pixel mask of one digit in serialization order."""
        return serialization_order(self.pixels[digit])

    def black_count(self, digit: int) -> int:
        return int(self.pixels[digit].sum())


def serialization_order(bitmap: np.ndarray) -> np.ndarray:
    """
    Flatten an 8x8 bitmap bottom row first, left to right within a row.

    Pixel i of the result is (row_from_top = 7 - i // 8, col = i % 8).
    """
    return np.asarray(bitmap)[::-1].reshape(N_PIXELS)


def load_digits(path: Optional[Path] = None) -> DigitBitmaps:
    """
    Load the digit dataset.

    Args:
        path: Bitmap file; the packaged dataset is used when None

    Raises:
        PreconditionError: If the file is malformed
    """
    text = packaged_digits_text() if path is None else Path(path).read_text(encoding="utf-8")
    grids = parse_digit_bitmaps(text)
    if grids.shape[0] != N_DIGITS:
        raise PreconditionError(f"Dataset holds {grids.shape[0]} digits, expected {N_DIGITS}")
    return DigitBitmaps(pixels=grids)


class Segment(BaseModel):
    model_config = ConfigDict(frozen=True)

    voltage: float = Field(ge=-MAX_BIAS_V, le=MAX_BIAS_V)
    duration: float = Field(gt=0)
    pixel: Optional[int] = None


class StimulusSchedule(BaseModel):
    """Timed sequence of bias segments."""

    segments: List[Segment] = Field(default_factory=list)

    @property
    def total_duration(self) -> float:
        return float(sum(seg.duration for seg in self.segments))

    def pixels(self) -> List[Optional[int]]:
        return [seg.pixel for seg in self.segments]

    def duty_cycle(self) -> float:
        """Fraction of time spent at non-zero bias; 0 for an empty schedule."""
        total = self.total_duration
        if total == 0:
            return 0.0
        return sum(seg.duration for seg in self.segments if seg.voltage != 0) / total


def weighting_for(digits: DigitBitmaps, weighted_digit: int, w_black: float = 4.5,
                  w_white: float = 0.25) -> np.ndarray:
    """Per-pixel durations favouring one digit: its black pixels get w_black, the rest w_white."""
    _check_digit(weighted_digit)
    return np.where(digits.black(weighted_digit), w_black, w_white).astype(float)


def offset_ramp(k: float) -> np.ndarray:
    """Per-pixel voltage offset k*(1 - i/32); changes sign at pixel 32."""
    return k * (1.0 - np.arange(N_PIXELS) / 32.0)


def serialize_digit(
    digits: DigitBitmaps,
    digit: int,
    weights: Union[float, Sequence[float]] = 4.0,
    v_black: float = -3.3,
    v_white: float = 0.0,
    offset: Union[float, Sequence[float], None] = None,
) -> StimulusSchedule:
    """
    Turn one digit into a 64-segment bias schedule.

    Args:
        digits: Dataset
        digit: Digit to serialize
        weights: Segment duration in seconds, scalar or one per pixel
        v_black: Bias of a black pixel
        v_white: Bias of a white pixel
        offset: Voltage added per pixel, scalar or one per pixel

    Returns:
        StimulusSchedule with pixel provenance 0..63

    Raises:
        PreconditionError: If a weight is not positive or a vector has the wrong length
        BiasOutOfRange: If an offset pushes a segment past 10 V
    """
    _check_digit(digit)
    weights = _per_pixel(weights, "weights")
    offsets = _per_pixel(0.0 if offset is None else offset, "offset")
    if np.any(weights <= 0):
        raise PreconditionError("Pixel weights must be positive")

    black = digits.black(digit)
    segments = []
    for i in range(N_PIXELS):
        v = check_bias((v_black if black[i] else v_white) + offsets[i])
        segments.append(Segment(voltage=v, duration=float(weights[i]), pixel=i))
    return StimulusSchedule(segments=segments)


def pulse_train(count: int, t_high: float = 0.25, t_low: float = 0.75, v_high: float = 3.3) -> StimulusSchedule:
    """Rectangular pulse train of count periods; count 0 gives an empty schedule."""
    if count < 0:
        raise PreconditionError(f"Pulse count must be >= 0, got {count}")
    segments = []
    for _ in range(count):
        segments.append(Segment(voltage=check_bias(v_high), duration=t_high))
        segments.append(Segment(voltage=0.0, duration=t_low))
    return StimulusSchedule(segments=segments)


def stream_schedule(bench: Testbench, schedule: StimulusSchedule, measure_each: bool = False,
                    indicator: Indicator = "ZC22") -> List[float]:
    """
    Apply a schedule segment by segment.

    Each segment programs its bias and holds it so the segment lasts its
    duration. With measure_each a sweep closes every segment and its
    duration covers the sweep.

    Returns:
        Indicator value after each segment (empty unless measure_each)
    """
    trace = []
    overhead = bench.command_latency + (bench.sweep_duration if measure_each else 0.0)
    for seg in schedule.segments:
        bench.set_bias(seg.voltage)
        bench.wait(max(0.0, seg.duration - overhead))
        if measure_each:
            trace.append(bench.sweep().indicator(indicator))
    return trace


def argmin_digit(values: Sequence[float]) -> int:
    """Index of the smallest value; ties go to the lowest index."""
    return int(np.argmin(np.asarray(values, dtype=float)))


def _check_digit(digit: int) -> None:
    if not 0 <= digit < N_DIGITS:
        raise PreconditionError(f"Digit must be in 0..{N_DIGITS - 1}, got {digit}")


def _per_pixel(value: Union[float, Sequence[float]], name: str) -> np.ndarray:
    arr = np.asarray(value, dtype=float)
    if arr.ndim == 0:
        return np.full(N_PIXELS, float(arr))
    if arr.shape != (N_PIXELS,):
        raise PreconditionError(f"{name} must be a scalar or have {N_PIXELS} entries, got shape {arr.shape}")
    return arr


def _zero_bias(bench: Testbench) -> None:
    if bench.bias != 0:
        bench.set_bias(0.0)


def _hold_samples(bench: Testbench, duration: float, interval: float, indicator: Indicator) -> List[float]:
    if interval < bench.sweep_duration:
        raise PreconditionError(f"Sample interval {interval} s is shorter than a sweep ({bench.sweep_duration} s)")
    values = []
    for _ in range(int(round(duration / interval))):
        bench.wait(interval - bench.sweep_duration)
        values.append(bench.sweep().indicator(indicator))
    return values


def hysteresis_sweep(bench: Testbench, v_min: float = -3.8, v_max: float = 3.8, step: float = 0.1,
                     dwell: float = 1.0, loops: int = 50) -> pd.DataFrame:
    """
    Triangular staircase sweep with one measurement per dwell.

    The staircase starts at the grid point nearest the middle of the range,
    climbs to v_max, descends to v_min and climbs back to the start, so each
    loop has 2n steps for n = (v_max - v_min) / step and the series holds
    2n * loops + 1 samples.

    Args:
        bench: Bench to drive
        v_min: Lowest bias (V)
        v_max: Highest bias (V)
        step: Staircase step (V)
        dwell: Time per step including the sweep (s)
        loops: Number of loops

    Returns:
        Log rows recorded during the sweep (instrument log columns)

    Raises:
        PreconditionError: If the range is empty, step does not divide it or dwell is too short
    """
    if not v_min < v_max or step <= 0:
        raise PreconditionError(f"Need v_min < v_max and step > 0, got {v_min}, {v_max}, {step}")
    if loops < 1:
        raise PreconditionError(f"loops must be >= 1, got {loops}")
    ratio = (v_max - v_min) / step
    n = int(round(ratio))
    if n < 2 or abs(ratio - n) > 1e-9 * max(1.0, abs(ratio)):
        raise PreconditionError(f"Step {step} V does not divide the range [{v_min}, {v_max}]")
    hold = dwell - bench.command_latency - bench.sweep_duration
    if hold < 0:
        raise PreconditionError(f"Dwell {dwell} s is shorter than command latency plus sweep")

    mid = n // 2
    path = list(range(mid + 1, n + 1)) + list(range(n - 1, -1, -1)) + list(range(1, mid + 1))
    first_row = len(bench.log)

    def visit(i: int) -> None:
        bench.set_bias(v_min + i * step)
        bench.wait(hold)
        bench.sweep()

    logger.info("Hysteresis sweep %.2f..%.2f V, %d loops of %d steps", v_min, v_max, loops, 2 * n)
    visit(mid)
    for loop in range(loops):
        for i in path:
            visit(i)
        logger.debug("Loop %d done at t=%.1f s", loop + 1, bench.clock)
    _zero_bias(bench)
    return bench.log_frame().iloc[first_row:].reset_index(drop=True)


def _reset_spec(indicator: Indicator, setpoint: float, tol: float, v_reset: float) -> SetpointSpec:
    return SetpointSpec(indicator=indicator, target=setpoint, tol=tol, tol_mode=ToleranceMode.UNILATERAL,
                        v_up=v_reset, v_down=-v_reset)


def memory_store(
    bench: Testbench,
    setpoint: float = CLASSIFY_SETPOINT,
    n: int = 16,
    write_times: Optional[Sequence[float]] = None,
    v_write: float = 3.3,
    hold: float = 30.0,
    hold_interval: float = 1.0,
    tol: float = 2.5,
    v_reset: float = 3.3,
    reset_indicator: Indicator = "ZC11",
    read_indicator: Indicator = "ZC22",
) -> MemoryResult:
    """
    Reset, Write and Hold ladder of analog storage levels.

    Each level drives the reset indicator onto the setpoint, reads a
    baseline, holds v_write for the level's write time and samples the read
    indicator at 0 V for the hold period.

    Args:
        bench: Bench to drive
        setpoint: Reset target (ohm)
        n: Number of levels
        write_times: Write time per level; defaults to 4, 8, ..., 4n seconds
        v_write: Write bias (V)
        hold: Hold period (s)
        hold_interval: Time between hold samples (s)
        tol: Reset tolerance (ohm)
        v_reset: Reset drive magnitude (V)
        reset_indicator: Indicator driven by the reset
        read_indicator: Indicator sampled during the hold

    Returns:
        MemoryResult with one record per level

    Raises:
        PreconditionError: If n < 2, write times mismatch n, or a write is shorter than the command latency
        SetpointUnreachable: If a reset fails
    """
    if n < 2:
        raise PreconditionError(f"Need at least two storage levels, got {n}")
    times = [4.0 * i for i in range(1, n + 1)] if write_times is None else [float(t) for t in write_times]
    if len(times) != n:
        raise PreconditionError(f"{len(times)} write times given for {n} levels")
    for t_p in times:
        if t_p < 0 or 0 < t_p < bench.command_latency:
            raise PreconditionError(f"Write time {t_p} s must be 0 or at least the command latency")
    check_bias(v_write)

    spec = _reset_spec(reset_indicator, setpoint, tol, v_reset)
    levels = []
    for level, t_p in enumerate(times, start=1):
        ticks = drive_to_setpoint(bench, spec)
        baseline = bench.sweep().indicator(read_indicator)
        if t_p > 0:
            bench.set_bias(v_write)
            bench.wait(t_p - bench.command_latency)
            bench.set_bias(0.0)
        values = _hold_samples(bench, hold, hold_interval, read_indicator)
        mean = float(np.mean(values)) if values else baseline
        levels.append(MemoryLevel(
            level=level,
            write_time=t_p,
            reset_ticks=ticks,
            baseline=baseline,
            hold_values=values,
            hold_mean=mean,
            hold_var=float(np.var(values)) if values else 0.0,
            delta=mean - baseline,
        ))
        logger.info("Level %d: T_P=%.1f s, delta %s=%.2f", level, t_p, read_indicator, mean - baseline)
    return MemoryResult(setpoint=setpoint, reset_indicator=reset_indicator,
                        read_indicator=read_indicator, levels=levels)


def pulse_memory(
    bench: Testbench,
    counts: Sequence[int] = (0, 8, 16, 24),
    t_high: float = 0.25,
    t_low: float = 0.75,
    v_high: float = 3.3,
    setpoint: float = CLASSIFY_SETPOINT,
    hold: float = 30.0,
    hold_interval: float = 1.0,
    tol: float = 2.5,
    v_reset: float = 3.3,
    reset_indicator: Indicator = "ZC11",
    read_indicator: Indicator = "ZC22",
) -> PulseResult:
    """
    Storage ladder written with pulse trains instead of single pulses.

    Information is carried by the number of pulses; every level keeps its
    full hold trajectory so the separation during decay can be checked.

    Raises:
        PreconditionError: If t_high is shorter than the command latency or a count is negative
        SetpointUnreachable: If a reset fails
    """
    if t_high < bench.command_latency or t_low < bench.command_latency:
        raise PreconditionError("Pulse phases must be at least the command latency")
    spec = _reset_spec(reset_indicator, setpoint, tol, v_reset)
    levels = []
    for count in counts:
        schedule = pulse_train(count, t_high=t_high, t_low=t_low, v_high=v_high)
        drive_to_setpoint(bench, spec)
        baseline = bench.sweep().indicator(read_indicator)
        stream_schedule(bench, schedule)
        _zero_bias(bench)
        values = _hold_samples(bench, hold, hold_interval, read_indicator)
        final = values[-1] if values else bench.sweep().indicator(read_indicator)
        levels.append(PulseLevel(count=count, duty_cycle=schedule.duty_cycle(), baseline=baseline,
                                 hold_values=values, final=final, delta=final - baseline))
        logger.info("%d pulses: delta %s=%.2f", count, read_indicator, final - baseline)
    return PulseResult(levels=levels)


def classify_inmemory(
    bench: Testbench,
    digits: DigitBitmaps,
    weighted_digit: int,
    setpoint: float = CLASSIFY_SETPOINT,
    tol: float = 2.5,
    v_charge: float = 10.0,
    w_black: float = 4.5,
    w_white: float = 0.25,
    v_black: float = -3.3,
    weights: Optional[Sequence[float]] = None,
) -> ClassificationResult:
    """
    Weighted in-memory classification over the ten digits.

    Every digit is streamed from a fresh charge reset with the weighting of
    the target digit; the digit with the lowest final ZC22 is reported.

    Args:
        bench: Bench to drive
        digits: Dataset
        weighted_digit: Digit whose black pixels get the long weight
        setpoint: Charge reset target (ohm)
        tol: Reset tolerance (ohm)
        v_charge: Reset drive magnitude (V)
        w_black: Weight of the target's black pixels (s)
        w_white: Weight of every other pixel (s)
        v_black: Bias of a black pixel (V)
        weights: Explicit per-pixel weights overriding the target weighting

    Returns:
        ClassificationResult with the final value per digit and the argmin
    """
    pixel_weights = weighting_for(digits, weighted_digit, w_black, w_white) if weights is None else weights
    finals, ticks = [], []
    for digit in range(N_DIGITS):
        ticks.append(charge_reset(bench, target=setpoint, tol=tol, v_charge=v_charge))
        stream_schedule(bench, serialize_digit(digits, digit, pixel_weights, v_black=v_black))
        _zero_bias(bench)
        finals.append(bench.sweep().zc22)
    winner = argmin_digit(finals)
    logger.info("Weighted digit %d: lowest ZC22 for digit %d", weighted_digit, winner)
    return ClassificationResult(weighted_digit=weighted_digit, finals=finals, argmin=winner, reset_ticks=ticks)


def estimate_resolution(bench: Testbench, samples: int = 20, interval: float = 1.0,
                        indicator: Indicator = "ZC22") -> ResolutionEstimate:
    """
    Standard deviation of a held measurement with linear drift removed.

    Returns:
        ResolutionEstimate with epsilon = 3 sigma

    Raises:
        PreconditionError: With fewer than three samples
    """
    if samples < 3:
        raise PreconditionError(f"Need at least three samples, got {samples}")
    _zero_bias(bench)
    values = np.asarray(_hold_samples(bench, samples * interval, interval, indicator))
    index = np.arange(values.size)
    residual = values - np.polyval(np.polyfit(index, values, 1), index)
    sigma = float(np.std(residual, ddof=1))
    return ResolutionEstimate(sigma=sigma, epsilon=3.0 * sigma, values=values.tolist())


def differentiation_run(
    bench: Testbench,
    digits: DigitBitmaps,
    sequence: Sequence[int] = tuple(range(N_DIGITS)),
    w: float = 4.0,
    setpoint: float = CLASSIFY_SETPOINT,
    tol: float = 2.5,
    v_charge: float = 10.0,
    v_black: float = -3.3,
    resolution_samples: int = 20,
) -> DifferentiationResult:
    """
    Stream digits with a constant per-pixel weight and compare the decrements.

    The resolution is estimated first; each digit is then streamed from a
    charge reset with a sweep after every pixel.

    Raises:
        PreconditionError: If the sequence is empty
    """
    sequence = list(sequence)
    if not sequence:
        raise PreconditionError("Differentiation needs at least one digit")
    for digit in sequence:
        _check_digit(digit)

    resolution = estimate_resolution(bench, samples=resolution_samples)
    starts, finals, traces = [], [], []
    for digit in sequence:
        charge_reset(bench, target=setpoint, tol=tol, v_charge=v_charge)
        starts.append(bench.sweep().zc22)
        traces.append(stream_schedule(bench, serialize_digit(digits, digit, w, v_black=v_black), measure_each=True))
        _zero_bias(bench)
        finals.append(bench.sweep().zc22)

    decrements = [s - f for s, f in zip(starts, finals)]
    first = {}
    for digit, dec in zip(sequence, decrements):
        first.setdefault(digit, dec)
    unique = list(first.values())
    gaps = [abs(a - b) for i, a in enumerate(unique) for b in unique[i + 1:]]
    min_gap = min(gaps) if gaps else float("inf")
    if gaps and min_gap <= resolution.epsilon:
        logger.warning("Smallest decrement gap %.3f is within the resolution %.3f", min_gap, resolution.epsilon)
    return DifferentiationResult(sequence=sequence, starts=starts, finals=finals, decrements=decrements,
                                 traces=traces, epsilon=resolution.epsilon, min_gap=min_gap)


def progressive_adaptation(
    bench: Testbench,
    digits: DigitBitmaps,
    weighted_digit: int = 1,
    k: float = -0.5,
    reps: int = 20,
    setpoint: float = 15100.0,
    tol: float = 2.5,
    v_reset: float = 3.3,
    w_black: float = 4.5,
    w_white: float = 0.25,
    v_black: float = -3.3,
    indicator: Indicator = "ZC11",
    digit_order: Sequence[int] = tuple(range(N_DIGITS)),
) -> AdaptationResult:
    """
    Repeat every digit with the target weighting and a voltage offset ramp.

    Each repetition resets the indicator to the setpoint with +/-v_reset,
    streams the digit and reads the indicator; the per-digit dynamic range
    spans all readings of that digit.

    Raises:
        PreconditionError: If reps < 1
    """
    if reps < 1:
        raise PreconditionError(f"reps must be >= 1, got {reps}")
    weights = weighting_for(digits, weighted_digit, w_black, w_white)
    offset = offset_ramp(k)
    spec = _reset_spec(indicator, setpoint, tol, v_reset)

    records = []
    for digit in digit_order:
        schedule = serialize_digit(digits, digit, weights, v_black=v_black, offset=offset)
        starts, finals = [], []
        for _ in range(reps):
            drive_to_setpoint(bench, spec)
            starts.append(bench.sweep().indicator(indicator))
            stream_schedule(bench, schedule)
            _zero_bias(bench)
            finals.append(bench.sweep().indicator(indicator))
        readings = starts + finals
        records.append(AdaptationDigit(digit=digit, starts=starts, finals=finals,
                                       dynamic_range=max(readings) - min(readings)))
        logger.info("Digit %d: dynamic range %.2f over %d reps", digit, records[-1].dynamic_range, reps)
    return AdaptationResult(weighted_digit=weighted_digit, k=k, setpoint=setpoint, digits=records)


def dynamics_reduction_run(
    bench: Testbench,
    digits: DigitBitmaps,
    weighted_digit: int = 4,
    iterations: int = 100,
    restore_duration: Optional[float] = None,
    setpoint: float = CLASSIFY_SETPOINT,
) -> DynamicsReductionResult:
    """
    Repeat the weighted classification and track how fatigue narrows it.

    Args:
        bench: Bench to drive
        digits: Dataset
        weighted_digit: Target digit
        iterations: Number of classification passes
        restore_duration: When given, hold -10 V this long afterwards and classify once more
        setpoint: Charge reset target (ohm)

    Returns:
        DynamicsReductionResult with per-iteration finals, thresholds and ranges
    """
    if iterations < 1:
        raise PreconditionError(f"iterations must be >= 1, got {iterations}")
    finals, detected, thresholds, ranges, fatigue = [], [], [], [], []
    for iteration in range(iterations):
        result = classify_inmemory(bench, digits, weighted_digit, setpoint=setpoint)
        finals.append(result.finals)
        detected.append(result.argmin)
        thresholds.append(detection_threshold(result.finals))
        ranges.append(max(result.finals) - min(result.finals))
        fatigue.append(bench.state.a)
        logger.debug("Iteration %d: detected %d, range %.2f, fatigue %.4f",
                     iteration + 1, result.argmin, ranges[-1], bench.state.a)

    restored_range = None
    if restore_duration is not None:
        bench.set_bias(-MAX_BIAS_V)
        bench.wait(restore_duration)
        bench.set_bias(0.0)
        restored = classify_inmemory(bench, digits, weighted_digit, setpoint=setpoint)
        restored_range = max(restored.finals) - min(restored.finals)
        logger.info("Restored range %.2f (initial %.2f)", restored_range, ranges[0])
    return DynamicsReductionResult(weighted_digit=weighted_digit, finals=finals, detected=detected,
                                   thresholds=thresholds, ranges=ranges, fatigue=fatigue,
                                   restored_range=restored_range)


def chaos_probe(
    bench: Testbench,
    low: float = 16250.0,
    high: float = 16300.0,
    tol: float = 1.0,
    v_drive: float = 3.3,
    pause: float = 10.0,
    sample_interval: float = 1.0,
    cycles: int = 10,
    indicator: Indicator = "ZC22",
) -> ChaosProbeResult:
    """
    Alternate drives to a high and a low setpoint with zero-bias pauses.

    Every measurement taken during the probe ends up in the returned series,
    both the drive ticks and the pause samples.

    Returns:
        ChaosProbeResult; cycles = 0 gives an empty series
    """
    if cycles < 0:
        raise PreconditionError(f"cycles must be >= 0, got {cycles}")
    if not low < high:
        raise PreconditionError(f"Need low < high, got {low}, {high}")
    spec_high = SetpointSpec(indicator=indicator, target=high, tol=tol, v_up=v_drive, v_down=-v_drive)
    spec_low = spec_high.model_copy(update={"target": low})

    first_row = len(bench.log)
    cycle_ticks, cycle_starts = [], []
    for _ in range(cycles):
        cycle_starts.append(len(bench.log) - first_row)
        ticks_high = drive_to_setpoint(bench, spec_high)
        _hold_samples(bench, pause, sample_interval, indicator)
        ticks_low = drive_to_setpoint(bench, spec_low)
        _hold_samples(bench, pause, sample_interval, indicator)
        cycle_ticks.append((ticks_high, ticks_low))
        logger.debug("Cycle ticks: high %d, low %d", ticks_high, ticks_low)

    rows = bench.log[first_row:]
    return ChaosProbeResult(times=[e.t for e in rows], values=[getattr(e, indicator.lower()) for e in rows],
                            cycle_ticks=cycle_ticks, cycle_starts=cycle_starts)


def sweep_restore(bench: Testbench, v_peak: float = 10.0, step: float = 0.1, dwell: float = 0.5,
                  loops: int = 1) -> float:
    """
    Zero-mean triangular staircase sweeps at high voltage to recover fatigue.

    The staircase runs 0 -> +v_peak -> -v_peak -> 0 without measuring.

    Returns:
        Fatigue level after the sweeps
    """
    check_bias(v_peak)
    if step <= 0 or dwell < bench.command_latency or loops < 1:
        raise PreconditionError("sweep_restore needs step > 0, dwell >= command latency and loops >= 1")
    n = int(round(v_peak / step))
    levels = list(range(1, n + 1)) + list(range(n - 1, -n - 1, -1)) + list(range(-n + 1, 1))
    before = bench.state.a
    for _ in range(loops):
        for i in levels:
            bench.set_bias(i * step)
            bench.wait(dwell - bench.command_latency)
    logger.info("Sweep restore: fatigue %.4f -> %.4f", before, bench.state.a)
    return bench.state.a


def settle_run(bench: Testbench, duration: float = 60.0, interval: float = 1.0,
               indicator: Indicator = "ZC22") -> List[float]:
    """
    Release the bias and sample an indicator while the short-term trace decays.

    Returns:
        One value per interval
    """
    _zero_bias(bench)
    return _hold_samples(bench, duration, interval, indicator)
