"""
Two-port RF mathematics: S/Z conversion, sweep containers and the collapsed
impedance indicator.
"""
from typing import Tuple, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator

from ferrolab.utils import EmptySweep, INDICATORS, SingularConversion

ArrayLike = Union[complex, np.ndarray]

# |Delta_S| (dimensionless) at or below this is treated as singular
SINGULAR_TOL = 1e-12


class SweepConfig(BaseModel):
    """VNA sweep settings."""

    f_start: float = Field(default=10e6, gt=0, description="First frequency point in Hz")
    f_stop: float = Field(default=6e9, gt=0, description="Last frequency point in Hz")
    n_points: int = Field(default=101, ge=2, description="Number of frequency points")
    power_dbm: float = Field(default=0.0, description="Stimulus power in dBm (informational)")
    z0: float = Field(default=50.0, gt=0, description="Reference impedance in ohms")

    @model_validator(mode="after")
    def _check_band(self) -> "SweepConfig":
        if not self.f_stop > self.f_start:
            raise ValueError(f"f_stop ({self.f_stop}) must exceed f_start ({self.f_start})")
        return self

    def frequencies(self) -> np.ndarray:
        """Linear frequency grid from f_start to f_stop inclusive."""
        return np.linspace(self.f_start, self.f_stop, self.n_points)


class SweepResult(BaseModel):
    """One emulated VNA sweep with derived impedance parameters and indicators."""

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    freqs: np.ndarray
    s11: np.ndarray
    s12: np.ndarray
    s21: np.ndarray
    s22: np.ndarray
    z11: np.ndarray
    z12: np.ndarray
    z21: np.ndarray
    z22: np.ndarray
    zc: Tuple[float, float, float, float]
    t: float

    @model_validator(mode="after")
    def _check_lengths(self) -> "SweepResult":
        n = len(self.freqs)
        for name in ("s11", "s12", "s21", "s22", "z11", "z12", "z21", "z22"):
            if len(getattr(self, name)) != n:
                raise ValueError(f"{name} has {len(getattr(self, name))} points, expected {n}")
        if not all(np.isfinite(v) and v >= 0 for v in self.zc):
            raise ValueError(f"Collapsed indicators must be finite and nonnegative: {self.zc}")
        return self

    @property
    def zc11(self) -> float:
        return self.zc[0]

    @property
    def zc12(self) -> float:
        return self.zc[1]

    @property
    def zc21(self) -> float:
        return self.zc[2]

    @property
    def zc22(self) -> float:
        return self.zc[3]

    def indicator(self, name: str) -> float:
        """Return the collapsed indicator named ZC11, ZC12, ZC21 or ZC22."""
        try:
            return self.zc[INDICATORS.index(name.upper())]
        except ValueError:
            raise KeyError(f"Unknown indicator {name!r}; expected one of {INDICATORS}") from None


def _first_singular(mask: np.ndarray) -> int:
    return int(np.flatnonzero(np.atleast_1d(mask))[0])


def z_from_s(s11: ArrayLike, s12: ArrayLike, s21: ArrayLike, s22: ArrayLike,
             z0: float = 50.0) -> Tuple[ArrayLike, ArrayLike, ArrayLike, ArrayLike]:
    """
    Convert S-parameters to Z-parameters.

    Works on scalars or on equal-length arrays (one entry per frequency).

    Args:
        s11, s12, s21, s22: Scattering parameters
        z0: Reference impedance in ohms

    Returns:
        Tuple (Z11, Z12, Z21, Z22) in ohms

    Raises:
        SingularConversion: If |Delta_S| <= SINGULAR_TOL at any point; carries the index
    """
    s11, s12, s21, s22 = (np.asarray(x, dtype=complex) for x in (s11, s12, s21, s22))
    delta = (1 - s11) * (1 - s22) - s21 * s12
    singular = np.abs(delta) <= SINGULAR_TOL
    if np.any(singular):
        index = _first_singular(singular)
        raise SingularConversion(f"S-matrix not invertible (|Delta_S| <= {SINGULAR_TOL:g}) at point {index}", index=index)

    z11 = z0 * ((1 + s11) * (1 - s22) + s12 * s21) / delta
    z12 = z0 * 2 * s12 / delta
    z21 = z0 * 2 * s21 / delta
    z22 = z0 * ((1 - s11) * (1 + s22) + s12 * s21) / delta
    if z11.ndim == 0:
        return complex(z11), complex(z12), complex(z21), complex(z22)
    return z11, z12, z21, z22


def s_from_z(z: np.ndarray, z0: float = 50.0) -> Tuple[ArrayLike, ArrayLike, ArrayLike, ArrayLike]:
    """
    Convert a 2x2 impedance matrix (or a stack of them) to S-parameters.

    S = (Z - z0 I)(Z + z0 I)^-1

    Args:
        z: Array of shape (2, 2) or (n, 2, 2)
        z0: Reference impedance in ohms

    Returns:
        Tuple (S11, S12, S21, S22)

    Raises:
        SingularConversion: If Z + z0 I is not invertible; carries the index
    """
    z = np.asarray(z, dtype=complex)
    single = z.ndim == 2
    stack = z[np.newaxis] if single else z
    eye = np.eye(2) * z0
    plus = stack + eye
    det = plus[:, 0, 0] * plus[:, 1, 1] - plus[:, 0, 1] * plus[:, 1, 0]
    singular = np.abs(det) <= SINGULAR_TOL * z0 * z0
    if np.any(singular):
        index = _first_singular(singular)
        raise SingularConversion(f"Z + z0*I not invertible at point {index}", index=index)

    z11, z12, z21, z22 = stack[:, 0, 0], stack[:, 0, 1], stack[:, 1, 0], stack[:, 1, 1]
    # closed form keeps S12 == S21 bit-for-bit when Z12 == Z21
    s11 = ((z11 - z0) * (z22 + z0) - z12 * z21) / det
    s12 = 2 * z0 * z12 / det
    s21 = 2 * z0 * z21 / det
    s22 = ((z11 + z0) * (z22 - z0) - z12 * z21) / det
    if single:
        return complex(s11[0]), complex(s12[0]), complex(s21[0]), complex(s22[0])
    return s11, s12, s21, s22


def collapse(z_mags: np.ndarray) -> float:
    """
    Collapse per-frequency impedance magnitudes into one indicator.

    Args:
        z_mags: Array of |Z| samples across the sweep

    Returns:
        Plain sum of the magnitudes in ohms

    Raises:
        EmptySweep: If the array is empty
        ValueError: If any magnitude is negative or not finite
    """
    mags = np.asarray(z_mags, dtype=float).ravel()
    if mags.size == 0:
        raise EmptySweep("Cannot collapse an empty sweep")
    if not np.all(np.isfinite(mags)) or np.any(mags < 0):
        raise ValueError("Magnitudes must be finite and nonnegative")
    return float(np.sum(mags))


def build_sweep(z_matrices: np.ndarray, sweep_config: SweepConfig, t: float) -> SweepResult:
    """
    Emulate a VNA measurement of a two-port with known impedance matrices.

    S-parameters are emitted from the impedance matrices, then converted back
    to Z and collapsed, as the instrument software does while sweeping.

    Args:
        z_matrices: Array of shape (n_points, 2, 2)
        sweep_config: Sweep settings matching the matrices' frequency grid
        t: Simulated timestamp of the readout

    Returns:
        SweepResult for the sweep
    """
    freqs = sweep_config.frequencies()
    s11, s12, s21, s22 = s_from_z(z_matrices, sweep_config.z0)
    z11, z12, z21, z22 = z_from_s(s11, s12, s21, s22, sweep_config.z0)
    zc = tuple(collapse(np.abs(z)) for z in (z11, z12, z21, z22))
    return SweepResult(
        freqs=freqs,
        s11=s11, s12=s12, s21=s21, s22=s22,
        z11=z11, z12=z12, z21=z21, z22=z22,
        zc=zc,
        t=float(t),
    )
