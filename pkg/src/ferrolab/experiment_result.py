from typing import Dict, List, Optional, Tuple

import pandas as pd
from pydantic import BaseModel, Field


class MemoryLevel(BaseModel):
    """
    One Reset/Write/Hold level of an analog storage ladder.
    """
    level: int
    write_time: float
    reset_ticks: int
    baseline: float
    hold_values: List[float]
    hold_mean: float
    hold_var: float
    delta: float


class MemoryResult(BaseModel):
    """
    Pydantic model for storage-ladder results.
    """
    setpoint: float
    reset_indicator: str
    read_indicator: str
    levels: List[MemoryLevel]

    def deltas(self) -> List[float]:
        return [level.delta for level in self.levels]

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame([
            {
                "level": lv.level,
                "write_time_s": lv.write_time,
                "reset_ticks": lv.reset_ticks,
                "baseline": lv.baseline,
                "hold_mean": lv.hold_mean,
                "hold_var": lv.hold_var,
                "delta": lv.delta,
            }
            for lv in self.levels
        ])


class PulseLevel(BaseModel):
    """
    Storage level written with a pulse train.
    """
    count: int
    duty_cycle: float
    baseline: float
    hold_values: List[float]
    final: float
    delta: float


class PulseResult(BaseModel):
    levels: List[PulseLevel]

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame([
            {"count": lv.count, "duty_cycle": lv.duty_cycle, "baseline": lv.baseline,
             "final": lv.final, "delta": lv.delta}
            for lv in self.levels
        ])


class ClassificationResult(BaseModel):
    """
    Pydantic model for one weighted in-memory classification pass.
    """
    weighted_digit: int
    finals: List[float]
    argmin: int
    reset_ticks: List[int]

    @property
    def correct(self) -> bool:
        return self.argmin == self.weighted_digit

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame({
            "digit": list(range(len(self.finals))),
            "final_zc22": self.finals,
            "reset_ticks": self.reset_ticks,
        })


class ResolutionEstimate(BaseModel):
    sigma: float
    epsilon: float
    values: List[float]


class DifferentiationResult(BaseModel):
    """
    Constant-weight serialization of a digit sequence.
    """
    sequence: List[int]
    starts: List[float]
    finals: List[float]
    decrements: List[float]
    traces: List[List[float]]
    epsilon: float
    min_gap: float

    @property
    def distinct(self) -> bool:
        return self.min_gap > self.epsilon

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame({
            "position": list(range(len(self.sequence))),
            "digit": self.sequence,
            "start": self.starts,
            "final": self.finals,
            "decrement": self.decrements,
        })


class AdaptationDigit(BaseModel):
    digit: int
    starts: List[float]
    finals: List[float]
    dynamic_range: float


class AdaptationResult(BaseModel):
    """
    Progressive adaptation with a voltage offset ramp.
    """
    weighted_digit: int
    k: float
    setpoint: float
    digits: List[AdaptationDigit]

    def ranges(self) -> Dict[int, float]:
        return {d.digit: d.dynamic_range for d in self.digits}

    def to_frame(self) -> pd.DataFrame:
        rows = []
        for d in self.digits:
            for rep, (start, final) in enumerate(zip(d.starts, d.finals)):
                rows.append({"digit": d.digit, "rep": rep, "start": start, "final": final,
                             "dynamic_range": d.dynamic_range})
        return pd.DataFrame(rows)


class DynamicsReductionResult(BaseModel):
    """
    Pydantic model for repeated classification under fatigue.
    """
    weighted_digit: int
    finals: List[List[float]]
    detected: List[int]
    thresholds: List[float]
    ranges: List[float]
    fatigue: List[float]
    restored_range: Optional[float] = None

    @property
    def accuracy(self) -> float:
        if not self.detected:
            return 0.0
        return sum(d == self.weighted_digit for d in self.detected) / len(self.detected)

    @property
    def recovered_fraction(self) -> Optional[float]:
        if self.restored_range is None or not self.ranges or self.ranges[0] == 0:
            return None
        return self.restored_range / self.ranges[0]

    def to_frame(self) -> pd.DataFrame:
        frame = pd.DataFrame(self.finals, columns=[f"final_{d}" for d in range(len(self.finals[0]))]) \
            if self.finals else pd.DataFrame()
        frame.insert(0, "iteration", list(range(1, len(self.detected) + 1)))
        frame["detected"] = self.detected
        frame["threshold"] = self.thresholds
        frame["dynamic_range"] = self.ranges
        frame["fatigue"] = self.fatigue
        return frame


class ChaosProbeResult(BaseModel):
    """
    Alternating setpoint drives with zero-bias pauses.
    """
    times: List[float]
    values: List[float]
    cycle_ticks: List[Tuple[int, int]]
    cycle_starts: List[int]

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame({"t_s": self.times, "zc22": self.values})

    def ticks_frame(self) -> pd.DataFrame:
        return pd.DataFrame(self.cycle_ticks, columns=["ticks_high", "ticks_low"])


class RunManifest(BaseModel):
    """
    Record of one command line run, written before and finalized after it.
    """
    command: str
    arguments: Dict[str, str] = Field(default_factory=dict)
    config_paths: List[str] = Field(default_factory=list)
    seed: int
    output_dir: str
    tool_version: str
    started_at: str
    finished_at: Optional[str] = None
    sim_start: float = 0.0
    sim_end: Optional[float] = None
    status: str = "running"
    outputs: List[str] = Field(default_factory=list)
