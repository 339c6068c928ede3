"""
Post-hoc numerics over recorded series: divergence curves for Lyapunov
exponent estimation, hysteresis loop metrics, detection thresholds,
summary statistics and classification bookkeeping.
"""
import logging
from typing import List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from pydantic import BaseModel
from scipy import stats

from ferrolab.utils import (
    DegenerateSeries,
    InsufficientData,
    InsufficientPairs,
    PartialLoop,
)

logger = logging.getLogger(__name__)


class DivergenceCurve(BaseModel):
    """Mean log-divergence of initially close pairs versus elapsed samples."""

    k: List[int]
    mean_log_d: List[float]
    pair_counts: List[int]
    slope: float
    intercept: float
    fit_range: Tuple[int, int]
    eps: float
    min_pair_gap: int
    n_pairs: int

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame({"k": self.k, "mean_ln_d": self.mean_log_d, "pairs": self.pair_counts})


def lyapunov_curve(
    series: Sequence[float],
    eps: float = 0.1,
    k_max: int = 20,
    min_pair_gap: Optional[int] = None,
    fit_range: Optional[Tuple[int, int]] = None,
) -> DivergenceCurve:
    """
    Track the divergence of nearest-neighbour pairs in a scalar series.

    The series is shifted to zero mean and scaled to unit range first, so
    ``eps`` is scale free. For every index i the nearest j with
    ``|i - j| >= min_pair_gap`` and ``|T_i - T_j| < eps`` is paired, then
    ``d(k) = |T_{i+k} - T_{j+k}|`` is followed for k = 1..k_max. The slope of
    mean ln d(k) over the fit range estimates the largest exponent per sample.

    Args:
        series: Scalar time series
        eps: Pairing radius on the normalized series
        k_max: Longest tracked separation
        min_pair_gap: Smallest index distance of a pair (defaults to k_max)
        fit_range: Inclusive (k_lo, k_hi) for the slope; defaults to (1, k_max // 4)

    Returns:
        DivergenceCurve with the fitted slope

    Raises:
        DegenerateSeries: If the series is constant or not finite
        InsufficientData: If the series is too short for k_max and the gap
        InsufficientPairs: If no index finds a qualifying neighbour
    """
    x = np.asarray(series, dtype=float)
    if x.size == 0 or not np.all(np.isfinite(x)):
        raise DegenerateSeries("Series is empty or contains non-finite values")
    span = float(np.ptp(x))
    if span == 0:
        raise DegenerateSeries("Series is constant")
    if k_max < 1:
        raise InsufficientData(f"k_max must be >= 1, got {k_max}")
    gap = k_max if min_pair_gap is None else int(min_pair_gap)
    if x.size <= k_max + gap:
        raise InsufficientData(f"Series of length {x.size} too short for k_max={k_max} and gap={gap}")

    x = (x - x.mean()) / span
    usable = x.size - k_max
    head = x[:usable]
    log_sums = np.zeros(k_max)
    counts = np.zeros(k_max, dtype=int)
    n_pairs = 0

    for i in range(usable):
        d0 = np.abs(head - head[i])
        d0[max(0, i - gap + 1):min(usable, i + gap)] = np.inf
        j = int(np.argmin(d0))
        if not d0[j] < eps:
            continue
        n_pairs += 1
        dk = np.abs(x[i + 1:i + k_max + 1] - x[j + 1:j + k_max + 1])
        positive = dk > 0
        log_sums[positive] += np.log(dk[positive])
        counts[positive] += 1

    if n_pairs == 0:
        raise InsufficientPairs(f"No pairs closer than eps={eps} with index gap >= {gap}")

    reported = np.flatnonzero(counts > 0)
    ks = reported + 1
    mean_log_d = log_sums[reported] / counts[reported]

    lo, hi = fit_range if fit_range is not None else (1, max(2, k_max // 4))
    in_fit = (ks >= lo) & (ks <= hi)
    if in_fit.sum() < 2:
        raise InsufficientPairs(f"Fewer than two populated k values in fit range [{lo}, {hi}]")
    slope, intercept = np.polyfit(ks[in_fit], mean_log_d[in_fit], 1)

    return DivergenceCurve(
        k=ks.tolist(),
        mean_log_d=mean_log_d.tolist(),
        pair_counts=counts[reported].tolist(),
        slope=float(slope),
        intercept=float(intercept),
        fit_range=(int(lo), int(hi)),
        eps=eps,
        min_pair_gap=gap,
        n_pairs=n_pairs,
    )


class LoopMetrics(BaseModel):
    loop: int
    area: float
    pinch_voltage: float
    crossings: int
    dynamic_range: float


def shoelace_area(x: np.ndarray, y: np.ndarray) -> float:
    """Signed area of the closed polygon through (x, y); counter-clockwise is positive."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    return 0.5 * float(np.sum(x * np.roll(y, -1) - np.roll(x, -1) * y))


def _branch_crossings(v: np.ndarray, z: np.ndarray) -> List[float]:
    steps = np.diff(v)
    up = np.flatnonzero(steps > 0) + 1
    down = np.flatnonzero(steps < 0) + 1
    if up.size < 2 or down.size < 2:
        return []

    def branch(indices: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        frame = pd.DataFrame({"v": v[indices], "z": z[indices]}).groupby("v", sort=True)["z"].mean()
        return frame.index.to_numpy(dtype=float), frame.to_numpy(dtype=float)

    vu, zu = branch(up)
    vd, zd = branch(down)
    lo, hi = max(vu[0], vd[0]), min(vu[-1], vd[-1])
    grid = np.unique(np.concatenate([vu, vd]))
    grid = grid[(grid >= lo) & (grid <= hi)]
    if grid.size < 2:
        return []

    diff = np.interp(grid, vd, zd) - np.interp(grid, vu, zu)
    crossings: List[float] = []
    for i in range(grid.size - 1):
        a, b = diff[i], diff[i + 1]
        if a == 0:
            if 0 < i and diff[i - 1] * b < 0:
                crossings.append(float(grid[i]))
        elif a * b < 0:
            crossings.append(float(grid[i] - a * (grid[i + 1] - grid[i]) / (b - a)))
    return crossings


def hysteresis_metrics(voltages: Sequence[float], values: Sequence[float], loops: int) -> List[LoopMetrics]:
    """
    Per-loop area, pinch voltage and dynamic range of a sweep series.

    Consecutive loops share their boundary sample, so a series of ``loops``
    loops holds ``loops * p + 1`` samples. Within a loop each sample belongs
    to the up or down branch according to the direction it was reached from.

    The pinch is the branch crossing nearest the middle of the swept range.
    It need not sit at 0 V: on the default device the ZC11 branches cross
    at a positive bias, near +2.4 V.

    Args:
        voltages: Applied bias per sample
        values: Indicator per sample
        loops: Number of loops in the series

    Returns:
        One LoopMetrics per loop; pinch_voltage is NaN when the branches never cross

    Raises:
        PartialLoop: If the series does not split into whole loops of at least two steps
    """
    v = np.asarray(voltages, dtype=float)
    z = np.asarray(values, dtype=float)
    if v.shape != z.shape:
        raise PartialLoop(f"voltages and values differ in length ({v.size} vs {z.size})")
    if loops < 1 or v.size < 3 or (v.size - 1) % loops:
        raise PartialLoop(f"{v.size} samples do not form {loops} complete loop(s)")
    per_loop = (v.size - 1) // loops
    if per_loop < 2:
        raise PartialLoop(f"Loops of {per_loop} step(s) are incomplete")

    metrics = []
    mid_voltage = 0.5 * (v.min() + v.max())
    for n in range(loops):
        sl = slice(n * per_loop, (n + 1) * per_loop + 1)
        lv, lz = v[sl], z[sl]
        crossings = _branch_crossings(lv, lz)
        pinch = min(crossings, key=lambda c: abs(c - mid_voltage)) if crossings else float("nan")
        metrics.append(LoopMetrics(
            loop=n,
            area=shoelace_area(lv, lz),
            pinch_voltage=pinch,
            crossings=len(crossings),
            dynamic_range=float(lz.max() - lz.min()),
        ))
    return metrics


def shrinkage_trend(areas: Sequence[float]) -> float:
    """
    Spearman rank correlation of |area| against loop index.

    Raises:
        InsufficientData: With fewer than three loops
    """
    areas = np.abs(np.asarray(areas, dtype=float))
    if areas.size < 3:
        raise InsufficientData("Need at least three loops for a trend")
    rho, _ = stats.spearmanr(np.arange(areas.size), areas)
    return float(rho)


def detection_threshold(values: Sequence[float]) -> float:
    """
    Threshold between the lowest and the second-lowest value.

    Args:
        values: Final indicator per digit

    Returns:
        Mean of the two smallest values

    Raises:
        InsufficientData: With fewer than two values
    """
    ordered = np.sort(np.asarray(values, dtype=float))
    if ordered.size < 2:
        raise InsufficientData("Need at least two values for a detection threshold")
    return float((ordered[0] + ordered[1]) / 2)


class SummaryStats(BaseModel):
    n: int
    mu: float
    sigma: float
    sigma_defined: bool
    bin_edges: List[float]
    counts: List[int]


def summary_stats(values: Sequence[float], bins: int = 20) -> SummaryStats:
    """
    Mean, sample standard deviation and a fixed-bin histogram.

    A single value has no sample deviation; sigma is then reported as 0
    with ``sigma_defined`` False.

    Raises:
        InsufficientData: If values is empty
    """
    data = np.asarray(values, dtype=float)
    if data.size == 0:
        raise InsufficientData("No values to summarize")
    counts, edges = np.histogram(data, bins=bins)
    defined = data.size > 1
    return SummaryStats(
        n=int(data.size),
        mu=float(data.mean()),
        sigma=float(data.std(ddof=1)) if defined else 0.0,
        sigma_defined=defined,
        bin_edges=edges.tolist(),
        counts=counts.tolist(),
    )


def confusion_matrix(true_labels: Sequence[int], predicted: Sequence[int],
                     labels: Sequence[int] = (0, 1, 2, 3)) -> pd.DataFrame:
    """Counts of (true, predicted) pairs with every label present on both axes."""
    labels = list(labels)
    return pd.crosstab(
        pd.Categorical(list(true_labels), categories=labels),
        pd.Categorical(list(predicted), categories=labels),
        rownames=["true"],
        colnames=["predicted"],
        dropna=False,
    )


def accuracy(true_labels: Sequence[int], predicted: Sequence[int]) -> float:
    """Fraction of matching labels; 0 for empty input."""
    true_labels, predicted = list(true_labels), list(predicted)
    if not true_labels:
        return 0.0
    return sum(t == p for t, p in zip(true_labels, predicted)) / len(true_labels)
