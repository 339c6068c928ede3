"""
Phenomenological state-space model of the ferrofluid two-port device.

The colloid is described by a long-term memristive state ``w`` with a window
function, a leaky short-term trace ``s``, a fatigue variable ``a`` that
weakens the response under one-sided drive and lets the perturbation
dominate it, and an ensemble of logistic-map oscillators feeding a zero-mean
chaotic perturbation into ``s``. The RF side is a lumped pi network whose
branch resistances follow the hidden state.
"""
import logging
import math
from pathlib import Path
from typing import Dict, Optional, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator

from ferrolab.config import read_parameter_file
from ferrolab.utils import MAX_BIAS_V, ParameterFileError, check_bias, check_duration

logger = logging.getLogger(__name__)

RESTORE_BIAS_V = -10.0
_C_FLOOR = 1e-12
_C_CEIL = 1.0 - 1e-12


class ZScale(BaseModel):
    """Calibration map from hidden state to lumped element values."""

    model_config = ConfigDict(frozen=True)

    r_shunt: float = Field(default=150.0, gt=0, description="Port-2 shunt resistance at w_eq (ohm)")
    r_series: float = Field(default=2000.0, gt=0, description="Series resistance at w_eq (ohm)")
    c_shunt: float = Field(default=2e-15, gt=0, description="Shunt capacitance (F)")
    c_series: float = Field(default=5e-16, gt=0, description="Series capacitance (F)")
    gamma_w: float = Field(default=0.5, description="Log-resistance sensitivity to w")
    gamma_s: float = Field(default=0.002, description="Log-resistance sensitivity to s")
    gamma_q: float = Field(default=0.15, ge=0, description="Port-1 quadratic sensitivity to s")


class DeviceParams(BaseModel):
    """Rates, thresholds and calibration of the colloid model."""

    model_config = ConfigDict(frozen=True)

    w_gain: float = Field(default=7.0e-4, gt=0, description="State change per second at saturated drive")
    w_relax: float = Field(default=4.0e-4, gt=0, description="Long-term relaxation rate (1/s)")
    w_eq: float = Field(default=0.5, ge=0, le=1, description="Relaxed long-term state")
    s_gain: float = Field(default=0.01, gt=0, description="Short-term trace gain (1/(V*s))")
    s_relax: float = Field(default=0.1, gt=0, description="Short-term trace decay (1/s)")
    fatigue_gain: float = Field(default=1.6e-6, gt=0, description="Fatigue accumulation per |V|*s")
    fatigue_recovery_v: float = Field(default=-9.5, lt=0, description="Bias at or below which fatigue recovers (V)")
    fatigue_recovery_rate: float = Field(default=0.02, gt=0, description="Fatigue recovery rate (1/s)")
    kappa: float = Field(default=10.0, gt=0, description="Fatigue attenuation strength in g(a) = 1/(1 + kappa*a)")
    v0: float = Field(default=1.0, gt=0, description="Saturation voltage of f(v) = tanh(v/v0)")
    chaos_eps: float = Field(default=3.0, ge=0, description="Chaotic perturbation amplitude")
    chaos_r: float = Field(default=3.99, description="Logistic map parameter")
    fatigue_chaos_gain: float = Field(default=5.0, ge=0,
                                      description="Growth of the chaotic perturbation with fatigue: eps*(1 + gain*a)")
    n_osc: int = Field(default=8, ge=2, description="Number of chaos oscillators (even)")
    asym: float = Field(default=0.05, ge=0, le=0.2, description="Port asymmetry factor")
    z_scale: ZScale = Field(default_factory=ZScale)
    seed: int = Field(default=0, ge=0, description="Seed of the chaos ensemble")
    dt_int: float = Field(default=0.01, gt=0, le=0.01, description="Integrator step (s)")

    @model_validator(mode="after")
    def _check_rates(self) -> "DeviceParams":
        if not self.s_relax > 10 * self.w_relax:
            raise ValueError(f"s_relax ({self.s_relax}) must exceed 10*w_relax ({10 * self.w_relax})")
        if self.chaos_eps > 0 and not 3.57 < self.chaos_r <= 4.0:
            raise ValueError(f"chaos_r must lie in (3.57, 4.0] when chaos is enabled, got {self.chaos_r}")
        if self.n_osc % 2:
            raise ValueError(f"n_osc must be even, got {self.n_osc}")
        return self

    @property
    def s_bound(self) -> float:
        """Largest reachable |s| under admissible voltages."""
        return self.s_gain * MAX_BIAS_V / self.s_relax

    def trace_sigma(self, a: float = 0.0) -> float:
        """Stationary standard deviation of s induced by the chaos ensemble at fatigue a."""
        # logistic-map variance ~1/8; the ensemble contrast has variance 4*var/n_osc
        x_var = 0.5 / self.n_osc
        return self.chaos_eps * (1.0 + self.fatigue_chaos_gain * a) * math.sqrt(x_var * self.dt_int / (2.0 * self.s_relax))

    def chaos_scale(self, zc: float, a: float = 0.0) -> float:
        """Expected chaos-induced standard deviation of an indicator near value zc."""
        return abs(zc) * abs(self.z_scale.gamma_s) * self.trace_sigma(a)

    def without_chaos(self) -> "DeviceParams":
        return self.model_copy(update={"chaos_eps": 0.0})


class DeviceState(BaseModel):
    """Immutable snapshot of the colloid's hidden state."""

    model_config = ConfigDict(frozen=True)

    w: float = Field(ge=0.0, le=1.0)
    s: float
    a: float = Field(ge=0.0, le=1.0)
    c: Tuple[float, ...]
    t: float = Field(ge=0.0)

    @model_validator(mode="after")
    def _check_oscillators(self) -> "DeviceState":
        if any(not 0.0 < ci < 1.0 for ci in self.c):
            raise ValueError("Chaos oscillators must stay inside (0, 1)")
        return self


class PortNetwork(BaseModel):
    """Lumped pi network: two shunt RC branches joined by a series RC branch."""

    model_config = ConfigDict(frozen=True)

    r_series: float = Field(gt=0)
    c_series: float = Field(gt=0)
    r_shunt1: float = Field(gt=0)
    c_shunt1: float = Field(gt=0)
    r_shunt2: float = Field(gt=0)
    c_shunt2: float = Field(gt=0)
    asym: float = Field(default=0.0, ge=0)

    @classmethod
    def from_state(cls, state: DeviceState, params: DeviceParams) -> "PortNetwork":
        zs = params.z_scale
        exponent = zs.gamma_w * (state.w - params.w_eq) + zs.gamma_s * state.s
        scale = math.exp(exponent)
        return cls(
            r_series=zs.r_series * scale,
            c_series=zs.c_series,
            r_shunt1=zs.r_shunt * (1.0 + params.asym) * math.exp(exponent - zs.gamma_q * state.s ** 2),
            c_shunt1=zs.c_shunt,
            r_shunt2=zs.r_shunt * scale,
            c_shunt2=zs.c_shunt,
            asym=params.asym,
        )

    def impedance(self, freqs: np.ndarray) -> np.ndarray:
        """
        Two-port impedance matrices at the given frequencies.

        Args:
            freqs: Frequencies in Hz (all positive)

        Returns:
            Complex array of shape (len(freqs), 2, 2)
        """
        omega = 2 * np.pi * np.asarray(freqs, dtype=float)
        za = self.r_shunt1 / (1 + 1j * omega * self.r_shunt1 * self.c_shunt1)
        zb = self.r_shunt2 / (1 + 1j * omega * self.r_shunt2 * self.c_shunt2)
        zs = self.r_series / (1 + 1j * omega * self.r_series * self.c_series)
        total = za + zb + zs

        z = np.empty((omega.size, 2, 2), dtype=complex)
        z[:, 0, 0] = za * (zs + zb) / total
        z[:, 1, 1] = zb * (zs + za) / total
        z[:, 0, 1] = za * zb / total
        z[:, 1, 0] = z[:, 0, 1] * (1.0 + self.asym)
        return z


def initial_state(params: DeviceParams, w: Optional[float] = None) -> DeviceState:
    """
    Fresh device state at rest.

    Args:
        params: Device parameters (the seed fixes the chaos ensemble)
        w: Long-term state; defaults to w_eq

    Returns:
        DeviceState at t = 0 with no fatigue and no short-term trace
    """
    rng = np.random.default_rng(params.seed)
    c = tuple(float(x) for x in rng.uniform(0.05, 0.95, params.n_osc))
    return DeviceState(w=params.w_eq if w is None else w, s=0.0, a=0.0, c=c, t=0.0)


def step(state: DeviceState, params: DeviceParams, v: float, dt: float) -> DeviceState:
    """
    Advance the device under a constant bias.

    Fixed-step explicit Euler with sub-steps of at most dt_int; the chaos
    ensemble advances once per sub-step. Fatigue weakens the drive through
    g(a) and strengthens the chaotic perturbation by (1 + fatigue_chaos_gain*a),
    so a worn device drifts toward a noise-dominated response.

    Args:
        state: Current state
        params: Device parameters
        v: Applied bias in volts
        dt: Duration in seconds

    Returns:
        The advanced state

    Raises:
        BiasOutOfRange: If |v| > 10 V
        InvalidDuration: If dt < 0
    """
    v = check_bias(v)
    dt = check_duration(dt)
    if dt == 0:
        return state

    n = max(1, math.ceil(dt / params.dt_int - 1e-9))
    h = dt / n

    w, s, a = state.w, state.s, state.a
    c = list(state.c)
    half = len(c) // 2
    norm = 2.0 / len(c)

    fv = math.tanh(v / params.v0)
    w_gain, w_relax, w_eq = params.w_gain, params.w_relax, params.w_eq
    s_drive = params.s_gain * v
    s_relax = params.s_relax
    s_bound = params.s_bound
    kappa = params.kappa
    eps = params.chaos_eps
    r = params.chaos_r
    chaos_fatigue = params.fatigue_chaos_gain
    recovering = v <= params.fatigue_recovery_v
    fatigue_drive = params.fatigue_gain * abs(v)
    recovery_rate = params.fatigue_recovery_rate

    for _ in range(n):
        if eps > 0:
            contrast = 0.0
            for i, ci in enumerate(c):
                ci = r * ci * (1.0 - ci)
                if ci < _C_FLOOR:
                    ci = _C_FLOOR
                elif ci > _C_CEIL:
                    ci = _C_CEIL
                c[i] = ci
                contrast += ci if i < half else -ci
            x = norm * contrast
        else:
            x = 0.0

        g = 1.0 / (1.0 + kappa * a)
        dw = g * w_gain * fv * 4.0 * w * (1.0 - w) - w_relax * (w - w_eq)
        ds = s_drive - s_relax * s + eps * (1.0 + chaos_fatigue * a) * x
        da = -recovery_rate * a if recovering else fatigue_drive

        w += h * dw
        s += h * ds
        a += h * da

        w = 0.0 if w < 0.0 else (1.0 if w > 1.0 else w)
        a = 0.0 if a < 0.0 else (1.0 if a > 1.0 else a)
        s = -s_bound if s < -s_bound else (s_bound if s > s_bound else s)

    return DeviceState(w=w, s=s, a=a, c=tuple(c), t=state.t + dt)


def network_at(state: DeviceState, params: DeviceParams, freq: float) -> np.ndarray:
    """
    Evaluate the device's 2x2 impedance matrix at one frequency.

    Args:
        state: Device state
        params: Device parameters
        freq: Frequency in Hz

    Returns:
        Complex 2x2 impedance matrix

    Raises:
        ValueError: If freq is not positive
    """
    if not freq > 0:
        raise ValueError(f"Frequency must be positive, got {freq}")
    return PortNetwork.from_state(state, params).impedance(np.array([freq]))[0]


def network_matrices(state: DeviceState, params: DeviceParams, freqs: np.ndarray) -> np.ndarray:
    """Vectorized network_at over a frequency grid; shape (n, 2, 2)."""
    freqs = np.asarray(freqs, dtype=float)
    if np.any(freqs <= 0):
        raise ValueError("Frequencies must be positive")
    return PortNetwork.from_state(state, params).impedance(freqs)


def restore(state: DeviceState, params: DeviceParams, duration: float) -> DeviceState:
    """
    Hold the restoration bias (-10 V) to undo fatigue.

    Raises:
        InvalidDuration: If duration is not strictly positive
    """
    duration = check_duration(duration, allow_zero=False)
    return step(state, params, RESTORE_BIAS_V, duration)


def settle(state: DeviceState, params: DeviceParams, duration: float) -> DeviceState:
    """Hold 0 V so the short-term trace decays; zero duration is the identity."""
    return step(state, params, 0.0, duration)


_Z_SCALE_KEYS = tuple(ZScale.model_fields)
_PARAM_KEYS = tuple(k for k in DeviceParams.model_fields if k != "z_scale")


def device_params_from_mapping(values: Dict[str, str]) -> DeviceParams:
    """
    Build DeviceParams from raw key/value strings.

    Calibration keys (r_shunt, gamma_w, ...) sit at top level. Every missing
    key is defaulted and reported in the log.

    Args:
        values: Mapping of parameter names to string values

    Returns:
        Validated DeviceParams

    Raises:
        ParameterFileError: If a key is unknown or a value is not numeric
    """
    unknown = sorted(set(values) - set(_PARAM_KEYS) - set(_Z_SCALE_KEYS))
    if unknown:
        raise ParameterFileError(f"Unknown device parameter keys: {', '.join(unknown)}")

    def convert(key: str, raw: str, annotation) -> float:
        try:
            return int(raw) if annotation is int else float(raw)
        except ValueError:
            raise ParameterFileError(f"Parameter {key!r} is not numeric: {raw!r}") from None

    top = {}
    for key in _PARAM_KEYS:
        if key in values:
            top[key] = convert(key, values[key], DeviceParams.model_fields[key].annotation)
        else:
            logger.info("Device parameter %s not given, using default %s", key, DeviceParams.model_fields[key].default)
    scale = {}
    for key in _Z_SCALE_KEYS:
        if key in values:
            scale[key] = convert(key, values[key], float)
        else:
            logger.info("Calibration parameter %s not given, using default %s", key, ZScale.model_fields[key].default)
    return DeviceParams(z_scale=ZScale(**scale), **top)


def device_param_keys() -> Tuple[str, ...]:
    """All keys a device parameter file may carry."""
    return _PARAM_KEYS + _Z_SCALE_KEYS


def load_device_params(path: Path) -> DeviceParams:
    """Read a key/value parameter file into DeviceParams."""
    return device_params_from_mapping(read_parameter_file(path))
