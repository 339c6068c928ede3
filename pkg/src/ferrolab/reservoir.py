"""
Physical reservoir computing: digit acquisition after the two-sided reset
and training-set collection.
"""
import logging
from pathlib import Path
from typing import List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from pydantic import BaseModel, Field, field_validator

from ferrolab.control import prc_reset
from ferrolab.experiments import N_PIXELS, DigitBitmaps, serialize_digit, stream_schedule
from ferrolab.instruments import Testbench, write_csv
from ferrolab.utils import InsufficientData, SetpointUnreachable, ShapeMismatch

logger = logging.getLogger(__name__)

PRC_LABELS = (0, 1, 2, 3)
FEATURE_COLUMNS = [f"f{i:02d}" for i in range(N_PIXELS)]


class Sample(BaseModel):
    """ZC22 after each of the 64 pixels of one streamed digit."""

    features: List[float]
    label: int = Field(ge=0, le=3)
    start: Optional[float] = None

    @field_validator("features")
    @classmethod
    def _check_length(cls, v: List[float]) -> List[float]:
        if len(v) != N_PIXELS:
            raise ValueError(f"Expected {N_PIXELS} features, got {len(v)}")
        return v

    @property
    def target(self) -> float:
        return self.label / 3.0


class PrcReset(BaseModel):
    """Endpoints of the two-sided reset run before every digit."""

    low: float = 16350.0
    high: float = 16450.0
    star: float = 16400.0
    tol: float = Field(default=2.5, gt=0)


def acquire_digit(bench: Testbench, digits: DigitBitmaps, digit: int, pixel_dwell: float = 2.0,
                  v_black: float = -3.3, reset: Optional[PrcReset] = None) -> Tuple[float, List[float]]:
    """
    Reset the device and stream one digit with a sweep after every pixel.

    Returns:
        (ZC22 accepted by the reset, the 64 per-pixel ZC22 values)
    """
    reset = reset or PrcReset()
    prc_reset(bench, low=reset.low, high=reset.high, star=reset.star, tol=reset.tol)
    start = bench.log[-1].zc22
    trace = stream_schedule(bench, serialize_digit(digits, digit, pixel_dwell, v_black=v_black), measure_each=True)
    if bench.bias != 0:
        bench.set_bias(0.0)
    return start, trace


def collect_dataset(
    bench: Testbench,
    digits: DigitBitmaps,
    reps: int = 50,
    pixel_dwell: float = 2.0,
    v_black: float = -3.3,
    labels: Sequence[int] = PRC_LABELS,
    reset: Optional[PrcReset] = None,
) -> List[Sample]:
    """
    Stream the label digits repeatedly and record their feature curves.

    Reset measurements are not part of the features. A repetition in which
    any reset fails is dropped as a whole and logged.

    Args:
        bench: Bench to drive
        digits: Dataset
        reps: Repetitions of the label sequence
        pixel_dwell: Duration of every pixel (s)
        v_black: Bias of a black pixel (V)
        labels: Digits streamed in each repetition
        reset: Reset endpoints

    Returns:
        One Sample per successfully streamed digit
    """
    samples: List[Sample] = []
    for rep in range(reps):
        batch = []
        try:
            for label in labels:
                start, trace = acquire_digit(bench, digits, label, pixel_dwell, v_black, reset)
                batch.append(Sample(features=trace, label=label, start=start))
        except SetpointUnreachable as e:
            logger.warning("Skipping repetition %d: %s", rep, e)
            continue
        samples.extend(batch)
        logger.info("Repetition %d/%d collected at t=%.0f s", rep + 1, reps, bench.clock)
    return samples


def feature_matrix(samples: Sequence[Sample]) -> Tuple[np.ndarray, np.ndarray]:
    """Stack samples into (features, labels) arrays."""
    if not samples:
        raise InsufficientData("No samples")
    features = np.array([s.features for s in samples], dtype=float)
    labels = np.array([s.label for s in samples], dtype=int)
    return features, labels


def samples_to_frame(samples: Sequence[Sample]) -> pd.DataFrame:
    frame = pd.DataFrame([s.features for s in samples], columns=FEATURE_COLUMNS)
    frame.insert(0, "start", [s.start for s in samples])
    frame.insert(0, "label", [s.label for s in samples])
    return frame


def write_samples(samples: Sequence[Sample], path: Path) -> Path:
    write_csv(samples_to_frame(samples), path)
    logger.info("Wrote %d samples to %s", len(samples), path)
    return Path(path)


def read_samples(path: Path) -> List[Sample]:
    """
    Read a sample CSV written by write_samples.

    Raises:
        ShapeMismatch: If feature columns are missing
    """
    frame = pd.read_csv(path)
    missing = [c for c in ["label", *FEATURE_COLUMNS] if c not in frame.columns]
    if missing:
        raise ShapeMismatch(f"{path} lacks columns {missing[:3]}{'...' if len(missing) > 3 else ''}")
    starts = frame["start"] if "start" in frame.columns else pd.Series([None] * len(frame))
    return [
        Sample(features=row[FEATURE_COLUMNS].astype(float).tolist(), label=int(row["label"]),
               start=None if pd.isna(start) else float(start))
        for (_, row), start in zip(frame.iterrows(), starts)
    ]
