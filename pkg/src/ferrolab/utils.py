from typing import List, Optional, Sequence, Tuple
import functools
from importlib import resources

import numpy as np

MAX_BIAS_V = 10.0

INDICATORS: Tuple[str, ...] = ("ZC11", "ZC12", "ZC21", "ZC22")


class FerroLabError(Exception):
    """Base exception class for ferrolab errors."""
    pass

class BiasOutOfRange(FerroLabError):
    """Exception raised when a voltage exceeds the generator range."""
    pass

class InvalidDuration(FerroLabError):
    """Exception raised when a duration is negative (or zero where forbidden)."""
    pass

class SingularConversion(FerroLabError):
    """Exception raised when an S/Z conversion is not invertible."""

    def __init__(self, message: str, index: Optional[int] = None):
        super().__init__(message)
        self.index = index

class EmptySweep(FerroLabError):
    """Exception raised when collapsing an empty magnitude array."""
    pass

class PreconditionError(FerroLabError):
    """Exception raised when an operation's precondition does not hold."""
    pass

class SetpointUnreachable(FerroLabError):
    """Exception raised when a setpoint drive runs out of ticks."""

    def __init__(self, message: str, last_zc: float):
        super().__init__(message)
        self.last_zc = last_zc

class UnknownCharacter(FerroLabError):
    """Exception raised by the script lexer on an unexpected character."""

    def __init__(self, char: str, line: int, column: int):
        super().__init__(f"Unknown character {char!r} at line {line}, column {column}")
        self.char = char
        self.line = line
        self.column = column

class ScriptSyntaxError(FerroLabError):
    """Exception raised by the script parser."""

    def __init__(self, expected: Sequence[str], found: str, line: int, column: int):
        expected_text = ", ".join(sorted(set(expected)))
        super().__init__(
            f"Syntax error at line {line}, column {column}: expected one of "
            f"[{expected_text}], found {found}"
        )
        self.expected = frozenset(expected)
        self.found = found
        self.line = line
        self.column = column

class ScriptRuntimeError(FerroLabError):
    """Exception raised when a running script fails at a statement."""

    def __init__(self, message: str, line: int, column: int, cause: Optional[Exception] = None):
        super().__init__(f"line {line}, column {column}: {message}")
        self.line = line
        self.column = column
        self.cause = cause

class StepLimitExceeded(FerroLabError):
    """Exception raised when a script exceeds its statement budget."""
    pass

class ShapeMismatch(FerroLabError):
    """Exception raised when a feature vector has the wrong length."""
    pass

class DivergedTraining(FerroLabError):
    """Exception raised when the training loss stops being finite."""

    def __init__(self, message: str, epoch: int):
        super().__init__(message)
        self.epoch = epoch

class ServiceStartError(FerroLabError):
    """Exception raised when the inference service cannot bind its socket."""
    pass

class ModelNotFound(FerroLabError):
    """Exception raised when a readout model file is missing or unreadable."""
    pass

class MalformedDatagram(FerroLabError):
    """Exception raised when a datagram does not match the wire format."""
    pass

class InsufficientPairs(FerroLabError):
    """Exception raised when no neighbour pairs qualify for divergence tracking."""
    pass

class DegenerateSeries(FerroLabError):
    """Exception raised for constant or non-finite series."""
    pass

class PartialLoop(FerroLabError):
    """Exception raised when a sweep series does not split into whole loops."""
    pass

class InsufficientData(FerroLabError):
    """Exception raised when too few values are supplied."""
    pass

class ParameterFileError(FerroLabError):
    """Exception raised when a key/value parameter file is malformed."""
    pass


def check_bias(v: float) -> float:
    """
    Validate a bias voltage against the generator range.

    Args:
        v: Voltage in volts

    Returns:
        The voltage as a float

    Raises:
        BiasOutOfRange: If |v| exceeds 10 V or v is not finite
    """
    v = float(v)
    if not np.isfinite(v) or abs(v) > MAX_BIAS_V:
        raise BiasOutOfRange(f"Bias {v} V outside the ±{MAX_BIAS_V:g} V range")
    return v


def check_duration(duration: float, allow_zero: bool = True) -> float:
    """
    Validate a duration in seconds.

    Args:
        duration: Duration in seconds
        allow_zero: Whether a zero duration is acceptable

    Returns:
        The duration as a float

    Raises:
        InvalidDuration: If the duration is negative, non-finite, or zero when not allowed
    """
    duration = float(duration)
    if not np.isfinite(duration) or duration < 0 or (duration == 0 and not allow_zero):
        bound = ">= 0" if allow_zero else "> 0"
        raise InvalidDuration(f"Duration must be {bound} s, got {duration}")
    return duration


def parse_digit_bitmaps(text: str) -> np.ndarray:
    """
    Parse a digit bitmap file into a boolean array.

    The file holds blocks of 8 lines of 8 characters ('#' black, '.' white)
    separated by blank lines, in digit order.

    Args:
        text: File content

    Returns:
        Boolean array of shape (n_digits, 8, 8), rows ordered top to bottom

    Raises:
        PreconditionError: If a block is not 8x8 or contains other characters
    """
    blocks: List[List[str]] = []
    current: List[str] = []
    for raw in text.splitlines():
        line = raw.strip()
        if not line:
            if current:
                blocks.append(current)
                current = []
            continue
        current.append(line)
    if current:
        blocks.append(current)

    grids = []
    for number, block in enumerate(blocks):
        if len(block) != 8 or any(len(row) != 8 for row in block):
            raise PreconditionError(f"Digit block {number} is not 8x8")
        if any(ch not in "#." for row in block for ch in row):
            raise PreconditionError(f"Digit block {number} contains characters other than '#' and '.'")
        grids.append([[ch == "#" for ch in row] for row in block])
    return np.array(grids, dtype=bool).reshape(len(grids), 8, 8)


@functools.lru_cache(maxsize=1)
def packaged_digits_text() -> str:
    """Return the text of the digit dataset shipped with the package."""
    return resources.files("ferrolab").joinpath("data/digits.txt").read_text(encoding="utf-8")
