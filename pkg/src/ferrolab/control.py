"""
Closed-loop impedance programming on a Testbench: bang-bang setpoint
drives, the charge reset used before in-memory classification, and the
two-sided reset that precedes every reservoir-computing sequence.
"""
import logging
from enum import Enum
from typing import Literal

from pydantic import BaseModel, Field

from ferrolab.instruments import Testbench
from ferrolab.utils import PreconditionError, SetpointUnreachable

logger = logging.getLogger(__name__)

Indicator = Literal["ZC11", "ZC12", "ZC21", "ZC22"]


class ToleranceMode(str, Enum):
    BILATERAL = "bilateral"
    UNILATERAL = "unilateral"


class SetpointSpec(BaseModel):
    """Target, tolerance and drive voltages for one setpoint drive."""

    indicator: Indicator = "ZC22"
    target: float
    tol: float = Field(gt=0)
    tol_mode: ToleranceMode = ToleranceMode.BILATERAL
    v_up: float = Field(default=10.0, gt=0, le=10)
    v_down: float = Field(default=-10.0, lt=0, ge=-10)
    tick: float = Field(default=0.7, gt=0)
    max_ticks: int = Field(default=20_000, ge=1)


def tick_hold(bench: Testbench, spec: SetpointSpec) -> float:
    """Wait inserted after the drive command so one tick lasts spec.tick."""
    return max(0.0, spec.tick - bench.sweep_duration - bench.command_latency)


def drive_to_setpoint(bench: Testbench, spec: SetpointSpec) -> int:
    """
    Bang-bang drive of one indicator to a target.

    Each tick measures, checks the tolerance and, when outside it, applies
    v_up below the target or v_down above it for the rest of the tick. In
    unilateral mode the approach side is fixed by the first measurement and
    the first sample at or past ``target -/+ tol`` is accepted.

    Args:
        bench: Bench to drive
        spec: Setpoint specification

    Returns:
        Number of drive ticks used

    Raises:
        SetpointUnreachable: If max_ticks ticks pass without acceptance
    """
    hi = spec.target + spec.tol
    lo = spec.target - spec.tol
    hold = tick_hold(bench, spec)

    zc = bench.sweep().indicator(spec.indicator)
    from_above = zc > hi
    from_below = zc < lo
    ticks = 0
    while True:
        if spec.tol_mode is ToleranceMode.UNILATERAL:
            accepted = (from_above and not zc > hi) or (from_below and not zc < lo) or not (from_above or from_below)
        else:
            accepted = not zc > hi and not zc < lo
        if accepted:
            if bench.bias != 0:
                bench.set_bias(0.0)
            logger.debug("%s reached %.2f (target %.2f) after %d ticks", spec.indicator, zc, spec.target, ticks)
            return ticks

        if ticks >= spec.max_ticks:
            bench.set_bias(0.0)
            raise SetpointUnreachable(
                f"{spec.indicator} did not reach {spec.target} ± {spec.tol} within {spec.max_ticks} ticks (last {zc:.3f})",
                last_zc=zc,
            )

        if spec.tol_mode is ToleranceMode.UNILATERAL:
            v = spec.v_up if from_below else spec.v_down
        else:
            v = spec.v_up if zc < spec.target else spec.v_down
        bench.set_bias(v)
        bench.wait(hold)
        ticks += 1
        zc = bench.sweep().indicator(spec.indicator)


def charge_reset(bench: Testbench, target: float = 14338.0, tol: float = 2.5,
                 v_charge: float = 10.0, indicator: Indicator = "ZC22",
                 max_ticks: int = 20_000) -> int:
    """
    Charge-phase reset: unilateral drive at ±v_charge onto the setpoint.

    Returns:
        Ticks used
    """
    spec = SetpointSpec(indicator=indicator, target=target, tol=tol,
                        tol_mode=ToleranceMode.UNILATERAL,
                        v_up=v_charge, v_down=-v_charge, max_ticks=max_ticks)
    return drive_to_setpoint(bench, spec)


def prc_reset(bench: Testbench, low: float = 16350.0, high: float = 16450.0,
              star: float = 16400.0, tol: float = 2.5, v_coarse: float = 10.0,
              v_fine: float = 3.3, settle: float = 15.0,
              indicator: Indicator = "ZC22", max_ticks: int = 20_000) -> int:
    """
    Two-sided reset before a reservoir sequence.

    Drives past ``low`` then past ``high`` with the coarse voltage, comes back down
    close to ``star``, approaches it with the fine voltage, lets the short
    term trace settle at 0 V and finishes with a fine approach from above.

    Args:
        bench: Bench to drive
        low: Lower excursion point (ohm)
        high: Upper excursion point (ohm)
        star: Final setpoint (ohm)
        tol: Tolerance (ohm)
        v_coarse: Magnitude of the excursion voltage
        v_fine: Magnitude of the approach voltage
        settle: Zero-bias hold before the final approach (s)

    Returns:
        Total ticks used over all legs

    Raises:
        PreconditionError: Unless low < star < high
        SetpointUnreachable: From any leg
    """
    if not low < star < high:
        raise PreconditionError(f"prc_reset needs low < star < high, got {low}, {star}, {high}")

    def leg(target: float, mode: ToleranceMode, v: float) -> int:
        spec = SetpointSpec(indicator=indicator, target=target, tol=tol, tol_mode=mode,
                            v_up=v, v_down=-v, max_ticks=max_ticks)
        return drive_to_setpoint(bench, spec)

    ticks = leg(low, ToleranceMode.UNILATERAL, v_coarse)
    ticks += leg(high, ToleranceMode.UNILATERAL, v_coarse)
    ticks += leg(star + 4 * tol, ToleranceMode.UNILATERAL, v_coarse)
    ticks += leg(star, ToleranceMode.UNILATERAL, v_fine)

    bench.wait(settle)
    if bench.sweep().indicator(indicator) < star - tol:
        ticks += leg(star + 2 * tol, ToleranceMode.UNILATERAL, v_fine)
    ticks += leg(star, ToleranceMode.UNILATERAL, v_fine)
    logger.debug("prc_reset finished after %d ticks at t=%.1f s", ticks, bench.clock)
    return ticks
