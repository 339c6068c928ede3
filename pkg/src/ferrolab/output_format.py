from typing import List, Sequence

import pandas as pd
from rich.console import Console
from rich.table import Table

from ferrolab.analysis import DivergenceCurve, LoopMetrics, SummaryStats
from ferrolab.experiment_result import (
    AdaptationResult,
    ChaosProbeResult,
    ClassificationResult,
    DifferentiationResult,
    DynamicsReductionResult,
    MemoryResult,
    PulseResult,
)
from ferrolab.script import Diagnostics

console = Console()


def _table(title: str, columns: Sequence[str]) -> Table:
    table = Table(show_header=True, header_style="bold", title=f"[bold green]{title}[/bold green]")
    for i, column in enumerate(columns):
        table.add_column(column, justify="left" if i == 0 else "right")
    return table


def print_diagnostics(path: str, report: Diagnostics) -> None:
    """Print checker findings, errors first."""
    for diag in report.errors:
        console.print(f"[bold red]Error:[/bold red] {path}:{diag.line}:{diag.column} {diag.code}: {diag.message}")
    for diag in report.warnings:
        console.print(f"[bold yellow]Warning:[/bold yellow] {path}:{diag.line}:{diag.column} {diag.code}: {diag.message}")
    console.print(f"{len(report.errors)} errors, {len(report.warnings)} warnings")


def print_memory(result: MemoryResult) -> None:
    table = _table(f"Storage levels (reset {result.reset_indicator} to {result.setpoint:.0f} Ω)",
                   ["Level", "T_P (s)", "Baseline", "Hold mean", "Hold var", f"Δ{result.read_indicator}"])
    for lv in result.levels:
        table.add_row(str(lv.level), f"{lv.write_time:.2f}", f"{lv.baseline:.2f}",
                      f"{lv.hold_mean:.2f}", f"{lv.hold_var:.3f}", f"{lv.delta:+.2f}")
    console.print(table)


def print_pulse(result: PulseResult) -> None:
    table = _table("Pulse-train storage", ["Pulses", "Duty cycle", "Baseline", "Final", "Δ"])
    for lv in result.levels:
        table.add_row(str(lv.count), f"{lv.duty_cycle:.0%}", f"{lv.baseline:.2f}", f"{lv.final:.2f}", f"{lv.delta:+.2f}")
    console.print(table)


def print_classification(result: ClassificationResult) -> None:
    table = _table(f"Weighted classification for digit {result.weighted_digit}", ["Digit", "Final ZC22", "Reset ticks"])
    for digit, (final, ticks) in enumerate(zip(result.finals, result.reset_ticks)):
        marker = " ◀" if digit == result.argmin else ""
        table.add_row(f"{digit}{marker}", f"{final:.2f}", str(ticks))
    console.print(table)
    status = "[bold green]correct[/bold green]" if result.correct else "[bold yellow]misclassified[/bold yellow]"
    console.print(f"Lowest impedance: digit {result.argmin} ({status})")


def print_differentiation(result: DifferentiationResult) -> None:
    table = _table("Constant-weight differentiation", ["Position", "Digit", "Start", "Final", "Decrement"])
    for i, (digit, start, final, dec) in enumerate(zip(result.sequence, result.starts, result.finals, result.decrements)):
        table.add_row(str(i), str(digit), f"{start:.2f}", f"{final:.2f}", f"{dec:.2f}")
    console.print(table)
    console.print(f"Smallest gap {result.min_gap:.3f} Ω, resolution {result.epsilon:.3f} Ω")


def print_adaptation(result: AdaptationResult) -> None:
    table = _table(f"Progressive adaptation (weighted {result.weighted_digit}, k={result.k:+.2f} V)",
                   ["Digit", "Dynamic range"])
    for d in result.digits:
        table.add_row(str(d.digit), f"{d.dynamic_range:.2f}")
    console.print(table)


def print_dynamics(result: DynamicsReductionResult) -> None:
    console.print(f"[bold green]Dynamics reduction:[/bold green] {len(result.detected)} iterations, "
                  f"accuracy {result.accuracy:.0%}, range {result.ranges[0]:.2f} → {result.ranges[-1]:.2f} Ω")
    if result.restored_range is not None:
        console.print(f"Restored range {result.restored_range:.2f} Ω ({result.recovered_fraction:.0%} of initial)")


def print_chaos(result: ChaosProbeResult) -> None:
    table = _table("Chaos probe", ["Cycle", "Ticks high", "Ticks low"])
    for i, (high, low) in enumerate(result.cycle_ticks):
        table.add_row(str(i), str(high), str(low))
    console.print(table)


def print_loops(metrics: List[LoopMetrics]) -> None:
    table = _table("Loop metrics", ["Loop", "Area", "Pinch (V)", "Crossings", "Range"])
    for m in metrics:
        table.add_row(str(m.loop), f"{m.area:.2f}", f"{m.pinch_voltage:.3f}", str(m.crossings), f"{m.dynamic_range:.2f}")
    console.print(table)


def print_divergence(curve: DivergenceCurve) -> None:
    console.print(f"[bold green]Divergence slope:[/bold green] {curve.slope:.4f} per sample over k = "
                  f"{curve.fit_range[0]}..{curve.fit_range[1]} ({curve.n_pairs} pairs, ε = {curve.eps})")


def print_summary(stats: SummaryStats) -> None:
    sigma = f"{stats.sigma:.4f}" if stats.sigma_defined else "undefined"
    console.print(f"[bold green]Summary:[/bold green] n = {stats.n}, μ = {stats.mu:.4f}, σ = {sigma}")


def print_confusion(matrix: pd.DataFrame, accuracy: float) -> None:
    table = _table(f"Confusion matrix (accuracy {accuracy:.1%})", ["true \\ predicted", *[str(c) for c in matrix.columns]])
    for label, row in matrix.iterrows():
        table.add_row(str(label), *[str(int(v)) for v in row])
    console.print(table)
