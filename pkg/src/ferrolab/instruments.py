"""
Emulated lab bench: a VNA, a DC bias generator and a simulated clock bound
to one device instance.
"""
import logging
from pathlib import Path
from typing import Dict, List, Optional

import pandas as pd
from pydantic import BaseModel, ConfigDict

from ferrolab.config import config, split_parameters
from ferrolab.ffmodel import (
    DeviceParams,
    DeviceState,
    device_param_keys,
    device_params_from_mapping,
    initial_state,
    network_matrices,
    step,
)
from ferrolab.rf import SweepConfig, SweepResult, build_sweep
from ferrolab.utils import InvalidDuration, ParameterFileError, check_bias, check_duration

logger = logging.getLogger(__name__)

LOG_COLUMNS = ["t_s", "bias_v", "zc11", "zc12", "zc21", "zc22"]

BENCH_KEYS = ("sweep_duration", "command_latency")
SWEEP_KEYS = tuple(SweepConfig.model_fields)


class LogEvent(BaseModel):
    """One measurement as recorded by the bench."""

    model_config = ConfigDict(frozen=True)

    t: float
    bias: float
    zc11: float
    zc12: float
    zc21: float
    zc22: float


class Testbench:
    """
    One device wired to a VNA and a DC generator, driven in simulated time.

    Every command advances the device under the bias in force while the
    command runs, so the device clock always equals the bench clock.
    """

    __test__ = False

    def __init__(
        self,
        params: Optional[DeviceParams] = None,
        sweep_config: Optional[SweepConfig] = None,
        sweep_duration: Optional[float] = None,
        command_latency: Optional[float] = None,
        state: Optional[DeviceState] = None,
    ):
        self.params = params or DeviceParams()
        self.sweep_config = sweep_config or SweepConfig()
        self.sweep_duration = config.sweep_duration if sweep_duration is None else float(sweep_duration)
        self.command_latency = config.command_latency if command_latency is None else float(command_latency)
        if self.sweep_duration <= 0:
            raise InvalidDuration(f"sweep_duration must be > 0, got {self.sweep_duration}")
        if self.command_latency < 0:
            raise InvalidDuration(f"command_latency must be >= 0, got {self.command_latency}")

        self.state = state or initial_state(self.params)
        self.bias = 0.0
        self.clock = self.state.t
        self.log: List[LogEvent] = []
        self._freqs = self.sweep_config.frequencies()

    @classmethod
    def from_mapping(cls, values: Dict[str, str], seed: Optional[int] = None,
                     chaos: Optional[bool] = None) -> "Testbench":
        """
        Build a bench from a parsed key/value parameter file.

        Args:
            values: Device, sweep and bench keys
            seed: Overrides the device seed when given
            chaos: Forces the chaotic perturbation off when False

        Raises:
            ParameterFileError: If a key belongs to none of the three groups
        """
        bench_values, rest = split_parameters(values, BENCH_KEYS)
        sweep_values, rest = split_parameters(rest, SWEEP_KEYS)
        device_values, unknown = split_parameters(rest, device_param_keys())
        if unknown:
            raise ParameterFileError(f"Unknown parameter keys: {', '.join(sorted(unknown))}")

        params = device_params_from_mapping(device_values)
        updates = {}
        if seed is not None:
            updates["seed"] = seed
        if chaos is False:
            updates["chaos_eps"] = 0.0
        if updates:
            params = params.model_copy(update=updates)
        try:
            sweep_config = SweepConfig(**{k: float(v) if k != "n_points" else int(v) for k, v in sweep_values.items()})
            timing = {k: float(v) for k, v in bench_values.items()}
        except ValueError as e:
            raise ParameterFileError(f"Invalid bench parameter: {e}") from None
        return cls(params=params, sweep_config=sweep_config, **timing)

    def _run(self, duration: float) -> None:
        if duration > 0:
            self.state = step(self.state, self.params, self.bias, duration)
            self.clock = self.state.t

    def set_bias(self, v: float) -> None:
        """
        Program the DC generator.

        Raises:
            BiasOutOfRange: If |v| > 10 V
        """
        v = check_bias(v)
        self.bias = v
        self._run(self.command_latency)

    def sweep(self) -> SweepResult:
        """
        Acquire one S-parameter sweep and the derived indicators.

        The readout reflects the state at the start of the sweep and does
        not perturb it; the clock then advances by the sweep duration.

        Raises:
            SingularConversion: With the offending frequency index
        """
        z = network_matrices(self.state, self.params, self._freqs)
        result = build_sweep(z, self.sweep_config, t=self.clock)
        self.log.append(LogEvent(t=result.t, bias=self.bias, zc11=result.zc[0],
                                 zc12=result.zc[1], zc21=result.zc[2], zc22=result.zc[3]))
        self._run(self.sweep_duration)
        return result

    def wait(self, duration: float) -> None:
        """
        Hold the current bias for a duration.

        Raises:
            InvalidDuration: If duration < 0
        """
        self._run(check_duration(duration))

    def log_frame(self) -> pd.DataFrame:
        """Measurement log as a DataFrame with the export column names."""
        return pd.DataFrame(
            [[e.t, e.bias, e.zc11, e.zc12, e.zc21, e.zc22] for e in self.log],
            columns=LOG_COLUMNS,
        )

    def export_log(self, path: Path) -> Path:
        """Write the measurement log as CSV (fixed columns, LF endings)."""
        path = Path(path)
        write_csv(self.log_frame(), path)
        logger.info("Wrote %d log rows to %s", len(self.log), path)
        return path


def write_csv(frame: pd.DataFrame, path: Path) -> None:
    """Write a DataFrame the way every ferrolab CSV is written."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    frame.to_csv(path, index=False, lineterminator="\n")


def read_log(path: Path) -> pd.DataFrame:
    """
    Read a bench log CSV.

    Raises:
        ValueError: If the header does not match the log format
    """
    frame = pd.read_csv(path)
    if list(frame.columns) != LOG_COLUMNS:
        raise ValueError(f"{path} is not a bench log; header {list(frame.columns)}")
    return frame
