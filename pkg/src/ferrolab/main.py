import logging
import sys
from contextlib import contextmanager
from datetime import datetime, timezone
from pathlib import Path
from typing import Dict, Iterator, List, Optional

import click
import numpy as np
import pandas as pd
import typer
from pydantic import ValidationError
from rich.console import Console

# Import internal modules
from ferrolab import __version__
from ferrolab.analysis import (
    accuracy,
    confusion_matrix,
    detection_threshold,
    hysteresis_metrics,
    lyapunov_curve,
    shrinkage_trend,
    summary_stats,
)
from ferrolab.config import config, get_output_dir, read_parameter_file, setup_logging
from ferrolab.experiment_report import line_chart, plot_hysteresis, plot_log
from ferrolab.experiment_result import RunManifest
from ferrolab.experiments import (
    CLASSIFY_SETPOINT,
    N_DIGITS,
    chaos_probe,
    classify_inmemory,
    differentiation_run,
    dynamics_reduction_run,
    estimate_resolution,
    hysteresis_sweep,
    load_digits,
    memory_store,
    progressive_adaptation,
    pulse_memory,
    settle_run,
    sweep_restore,
)
from ferrolab.ffmodel import DeviceParams
from ferrolab.instruments import Testbench, write_csv
from ferrolab.output_format import (
    print_adaptation,
    print_chaos,
    print_classification,
    print_confusion,
    print_diagnostics,
    print_differentiation,
    print_divergence,
    print_dynamics,
    print_loops,
    print_memory,
    print_pulse,
    print_summary,
)
from ferrolab.prc_service import InferenceService, stream
from ferrolab.readout import TrainConfig, load_model, save_model, train
from ferrolab.reservoir import PRC_LABELS, collect_dataset, read_samples, write_samples
from ferrolab.script import CsvSink, check, load_script, pretty_print
from ferrolab.script import run as run_script
from ferrolab.utils import FerroLabError, ModelNotFound, PreconditionError

logger = logging.getLogger(__name__)

app = typer.Typer(help="Virtual ferrofluid laboratory: device simulator, experiments, scripts and reservoir readout.")
experiment_app = typer.Typer(help="Run a canned experiment on a fresh simulated bench.")
analyze_app = typer.Typer(help="Analyze series recorded in CSV files.")
app.add_typer(experiment_app, name="experiment")
app.add_typer(analyze_app, name="analyze")
console = Console()


def _seed_option():
    return typer.Option(None, "--seed", help=f"Seed of the device chaos ensemble (default: {config.default_seed})")


def _out_option():
    return typer.Option(None, "--out", help=f"Output directory (default: ./{config.output_dir_name})")


def _config_option():
    return typer.Option(None, "--config", help="Key/value parameter file for the device, sweep and bench timing")


def _chaos_option():
    return typer.Option(None, "--chaos/--no-chaos",
                        help=f"Enable the chaotic perturbation (default: {'on' if config.chaos_enabled else 'off'})")


def _plot_option():
    return typer.Option(False, "--plot", help="Also write SVG line charts next to the CSVs (default: off)")


def _digits_option():
    return typer.Option(None, "--digits", help="Digit bitmap file (default: packaged dataset)")


class Run:
    """
    Output directory and manifest of one command.

    The manifest is written when the run starts and rewritten with the
    simulated end time, status and output list when it finishes.
    """

    def __init__(self, command: str, arguments: Dict[str, object], out: Optional[Path],
                 config_file: Optional[Path] = None, seed: Optional[int] = None):
        self.out_dir = get_output_dir(out)
        self.bench: Optional[Testbench] = None
        self.manifest = RunManifest(
            command=command,
            arguments={k: str(v) for k, v in arguments.items() if v is not None},
            config_paths=[str(config_file)] if config_file is not None else [],
            seed=config.default_seed if seed is None else seed,
            output_dir=str(self.out_dir),
            tool_version=__version__,
            started_at=datetime.now(timezone.utc).isoformat(),
        )
        self._write_manifest()

    def _write_manifest(self) -> None:
        path = self.out_dir / config.manifest_name
        path.write_text(self.manifest.model_dump_json(indent=2) + "\n", encoding="utf-8")

    def attach(self, bench: Testbench) -> Testbench:
        self.bench = bench
        self.manifest.seed = bench.params.seed
        self.manifest.sim_start = bench.clock
        self._write_manifest()
        return bench

    def path(self, name: str) -> Path:
        """Path of an output file, recorded in the manifest."""
        if name not in self.manifest.outputs:
            self.manifest.outputs.append(name)
        return self.out_dir / name

    def write(self, frame: pd.DataFrame, name: str) -> Path:
        path = self.path(name)
        write_csv(frame, path)
        return path

    def finish(self, status: str) -> None:
        self.manifest.status = status
        self.manifest.finished_at = datetime.now(timezone.utc).isoformat()
        if self.bench is not None:
            self.manifest.sim_end = self.bench.clock
        self._write_manifest()


@contextmanager
def _session(command: str, arguments: Dict[str, object], out: Optional[Path],
             config_file: Optional[Path] = None, seed: Optional[int] = None) -> Iterator[Run]:
    """Open a Run and turn library errors into exit code 2."""
    try:
        run = Run(command, arguments, out, config_file, seed)
    except OSError as e:
        console.print(f"[bold red]Error:[/bold red] Cannot prepare output directory: {e}")
        raise typer.Exit(2)
    try:
        yield run
    except (FerroLabError, ValidationError) as e:
        run.finish("failed")
        console.print(f"[bold red]Error:[/bold red] {type(e).__name__}: {e}")
        raise typer.Exit(2)
    except KeyboardInterrupt:
        run.finish("interrupted")
        raise
    run.finish("ok")
    console.print(f"[bold green]Outputs written to:[/bold green] {run.out_dir}")


def build_bench(seed: Optional[int] = None, config_file: Optional[Path] = None,
                chaos: Optional[bool] = None) -> Testbench:
    """
    Build a fresh bench from flags, an optional parameter file and the configuration.

    Flags win over the parameter file, which wins over the environment and
    built-in defaults.
    """
    chaos = config.chaos_enabled if chaos is None else chaos
    if config_file is not None:
        values = read_parameter_file(config_file)
        if seed is None and "seed" not in values:
            seed = config.default_seed
        bench = Testbench.from_mapping(values, seed=seed, chaos=chaos)
    else:
        params = DeviceParams(seed=config.default_seed if seed is None else seed)
        bench = Testbench(params=params if chaos else params.without_chaos())
    logger.info("Bench: seed %d, chaos_eps %g, sweep %.3f s, latency %.3f s, %d points %.3g-%.3g Hz",
                bench.params.seed, bench.params.chaos_eps, bench.sweep_duration, bench.command_latency,
                bench.sweep_config.n_points, bench.sweep_config.f_start, bench.sweep_config.f_stop)
    return bench


def _int_list(text: str, name: str) -> List[int]:
    try:
        return [int(part) for part in text.split(",") if part.strip()]
    except ValueError:
        raise typer.BadParameter(f"{name} must be a comma separated list of integers, got {text!r}") from None


def _export_log(run: Run, bench: Testbench, plot: bool, name: str = "log") -> None:
    bench.export_log(run.path(f"{name}.csv"))
    if plot and bench.log:
        plot_log(bench.log_frame(), run.path(f"{name}.svg"))


@app.callback()
def _main_options(
    verbose: bool = typer.Option(False, "--verbose", "-v", help="Log progress at INFO level (default: off)"),
    log_level: Optional[str] = typer.Option(None, "--log-level", help=f"Explicit log level (default: {config.log_level})"),
):
    """Virtual ferrofluid laboratory."""
    setup_logging(log_level or ("INFO" if verbose else config.log_level))


@app.command("check")
def check_command(
    script: Path = typer.Argument(..., exists=True, dir_okay=False, help="Script file to check"),
    pretty: bool = typer.Option(False, "--pretty", help="Print the normalized source after checking (default: off)"),
):
    """
    Parse and statically check an experiment script.

    Prints every diagnostic with its position and a final
    "N errors, M warnings" line. Exits 2 when the script does not parse or
    has errors.
    """
    try:
        program = load_script(script)
    except FerroLabError as e:
        console.print(f"[bold red]Error:[/bold red] {script}: {e}")
        raise typer.Exit(2)

    report = check(program)
    print_diagnostics(str(script), report)
    if pretty:
        console.print(pretty_print(program), markup=False, highlight=False)
    if not report.ok:
        raise typer.Exit(2)


@app.command("run")
def run_command(
    script: Path = typer.Argument(..., exists=True, dir_okay=False, help="Script file to execute"),
    seed: Optional[int] = _seed_option(),
    out: Optional[Path] = _out_option(),
    config_file: Optional[Path] = _config_option(),
    chaos: Optional[bool] = _chaos_option(),
    plot: bool = _plot_option(),
    step_limit: int = typer.Option(config.step_limit, help=f"Statement budget (default: {config.step_limit})"),
):
    """
    Execute an experiment script on a fresh simulated bench.

    Rows saved by the script go to <script>.csv and the full measurement
    log to <script>_log.csv in the output directory.
    """
    with _session("run", {"script": script, "step_limit": step_limit, "chaos": chaos}, out, config_file, seed) as run:
        program = load_script(script)
        bench = run.attach(build_bench(seed, config_file, chaos))
        sink = CsvSink(run.path(f"{script.stem}.csv"))
        try:
            interpreter = run_script(program, bench, sink=sink, step_limit=step_limit,
                                     on_print=lambda value: console.print(repr(value)))
        finally:
            _export_log(run, bench, plot, f"{script.stem}_log")
        console.print(f"Script finished after {interpreter.steps} steps at t = {bench.clock:.1f} s, "
                      f"{len(sink.rows)} rows saved")


@app.command("calibrate")
def calibrate_command(
    seed: Optional[int] = _seed_option(),
    out: Optional[Path] = _out_option(),
    config_file: Optional[Path] = _config_option(),
    chaos: Optional[bool] = _chaos_option(),
    samples: int = typer.Option(20, help="Held samples for the resolution estimate (default: 20)"),
    drive: float = typer.Option(10.0, help="Drive time per polarity in seconds (default: 10)"),
):
    """
    Characterize the simulated device.

    Records the rest indicators, the chaos-induced noise scale, the held
    measurement resolution and the ZC22 drive rate at +10 V and -10 V, and
    writes the effective parameters as a key/value file that reproduces the
    device with --config.
    """
    with _session("calibrate", {"samples": samples, "drive": drive, "chaos": chaos}, out, config_file, seed) as run:
        bench = run.attach(build_bench(seed, config_file, chaos))
        rest = bench.sweep()
        resolution = estimate_resolution(bench, samples=samples)

        rates = {}
        for v in (10.0, -10.0):
            before = bench.sweep().zc22
            bench.set_bias(v)
            bench.wait(max(0.0, drive - bench.command_latency))
            bench.set_bias(0.0)
            rates[v] = (bench.sweep().zc22 - before) / drive

        row = {
            "zc11": rest.zc11, "zc12": rest.zc12, "zc21": rest.zc21, "zc22": rest.zc22,
            "trace_sigma": bench.params.trace_sigma(),
            "chaos_scale_zc22": bench.params.chaos_scale(rest.zc22),
            "resolution_sigma": resolution.sigma,
            "resolution_epsilon": resolution.epsilon,
            "rate_pos_ohm_per_s": rates[10.0],
            "rate_neg_ohm_per_s": rates[-10.0],
        }
        run.write(pd.DataFrame([row]), "calibration.csv")
        _export_log(run, bench, False, "calibration_log")

        params = bench.params.model_dump()
        lines = [f"{k} = {v!r}" for k, v in params.items() if k != "z_scale"]
        lines += [f"{k} = {v!r}" for k, v in params["z_scale"].items()]
        lines += [f"{k} = {v!r}" for k, v in bench.sweep_config.model_dump().items()]
        lines += [f"sweep_duration = {bench.sweep_duration!r}", f"command_latency = {bench.command_latency!r}"]
        run.path("device.params").write_text("\n".join(lines) + "\n", encoding="utf-8")

        for name, value in row.items():
            console.print(f"{name:>22}: {value:.6g}")


@experiment_app.command("hysteresis")
def hysteresis_command(
    seed: Optional[int] = _seed_option(),
    out: Optional[Path] = _out_option(),
    config_file: Optional[Path] = _config_option(),
    chaos: Optional[bool] = _chaos_option(),
    plot: bool = _plot_option(),
    v_min: float = typer.Option(-3.8, help="Lowest bias in volts (default: -3.8)"),
    v_max: float = typer.Option(3.8, help="Highest bias in volts (default: 3.8)"),
    step: float = typer.Option(0.1, help="Staircase step in volts (default: 0.1)"),
    dwell: float = typer.Option(1.0, help="Time per step in seconds (default: 1.0)"),
    loops: int = typer.Option(50, help="Number of loops (default: 50)"),
):
    """
    Triangular staircase sweep with one measurement per step.

    Writes the sweep log (hysteresis.csv) and per-loop area, pinch voltage
    and dynamic range for ZC11 and ZC22 (hysteresis_loops.csv).

    Consecutive loops share their boundary sample, so the log holds
    2n * loops + 1 rows for n = (v_max - v_min) / step: 7601 with the defaults.
    """
    args = {"v_min": v_min, "v_max": v_max, "step": step, "dwell": dwell, "loops": loops, "chaos": chaos}
    with _session("experiment hysteresis", args, out, config_file, seed) as run:
        bench = run.attach(build_bench(seed, config_file, chaos))
        frame = hysteresis_sweep(bench, v_min, v_max, step, dwell, loops)
        run.write(frame, "hysteresis.csv")

        rows = []
        for indicator in ("zc11", "zc22"):
            metrics = hysteresis_metrics(frame["bias_v"], frame[indicator], loops)
            rows += [{"indicator": indicator.upper(), **m.model_dump()} for m in metrics]
            if indicator == "zc22":
                print_loops(metrics)
                if loops >= 3:
                    console.print(f"ZC22 loop-area trend (Spearman): {shrinkage_trend([m.area for m in metrics]):+.3f}")
        run.write(pd.DataFrame(rows), "hysteresis_loops.csv")
        if plot:
            plot_hysteresis(frame, run.path("hysteresis_zc11.svg"), "zc11")
            plot_hysteresis(frame, run.path("hysteresis_zc22.svg"), "zc22")


def _memory(command: str, setpoint: float, hold: float, levels: int, v_write: float, seed, out, config_file,
            chaos, plot) -> None:
    args = {"setpoint": setpoint, "hold": hold, "levels": levels, "v_write": v_write, "chaos": chaos}
    with _session(command, args, out, config_file, seed) as run:
        bench = run.attach(build_bench(seed, config_file, chaos))
        result = memory_store(bench, setpoint=setpoint, n=levels, v_write=v_write, hold=hold)
        run.write(result.to_frame(), "memory.csv")
        run.write(pd.DataFrame({f"level_{lv.level}": lv.hold_values for lv in result.levels}), "memory_hold.csv")
        _export_log(run, bench, plot)
        if plot:
            line_chart({f"T_P={lv.write_time:g}s": lv.hold_values for lv in result.levels}, run.path("memory_hold.svg"),
                       title="Hold phase", xlabel="sample", ylabel=f"{result.read_indicator} (Ω)")
        print_memory(result)


@experiment_app.command("memory")
def memory_command(
    seed: Optional[int] = _seed_option(),
    out: Optional[Path] = _out_option(),
    config_file: Optional[Path] = _config_option(),
    chaos: Optional[bool] = _chaos_option(),
    plot: bool = _plot_option(),
    setpoint: float = typer.Option(CLASSIFY_SETPOINT, help=f"ZC11 reset target in ohm (default: {CLASSIFY_SETPOINT:g})"),
    levels: int = typer.Option(16, help="Number of storage levels (default: 16)"),
    v_write: float = typer.Option(3.3, help="Write bias in volts (default: 3.3)"),
    hold: float = typer.Option(30.0, help="Hold period in seconds (default: 30)"),
):
    """Reset, write for 4..4n seconds and hold: the analog storage ladder."""
    _memory("experiment memory", setpoint, hold, levels, v_write, seed, out, config_file, chaos, plot)


@experiment_app.command("memory-long")
def memory_long_command(
    seed: Optional[int] = _seed_option(),
    out: Optional[Path] = _out_option(),
    config_file: Optional[Path] = _config_option(),
    chaos: Optional[bool] = _chaos_option(),
    plot: bool = _plot_option(),
    setpoint: float = typer.Option(15300.0, help="ZC11 reset target in ohm (default: 15300)"),
    levels: int = typer.Option(16, help="Number of storage levels (default: 16)"),
    v_write: float = typer.Option(3.3, help="Write bias in volts (default: 3.3)"),
    hold: float = typer.Option(150.0, help="Hold period in seconds (default: 150)"),
):
    """Storage ladder with a higher reset target and long holds."""
    _memory("experiment memory-long", setpoint, hold, levels, v_write, seed, out, config_file, chaos, plot)


@experiment_app.command("pulse")
def pulse_command(
    seed: Optional[int] = _seed_option(),
    out: Optional[Path] = _out_option(),
    config_file: Optional[Path] = _config_option(),
    chaos: Optional[bool] = _chaos_option(),
    plot: bool = _plot_option(),
    counts: str = typer.Option("0,8,16,24", help="Pulse counts per level (default: 0,8,16,24)"),
    t_high: float = typer.Option(0.25, help="Pulse width in seconds (default: 0.25)"),
    t_low: float = typer.Option(0.75, help="Gap between pulses in seconds (default: 0.75)"),
    v_high: float = typer.Option(3.3, help="Pulse bias in volts (default: 3.3)"),
    hold: float = typer.Option(30.0, help="Hold period in seconds (default: 30)"),
):
    """Write storage levels with pulse trains instead of a single long write."""
    count_list = _int_list(counts, "--counts")
    args = {"counts": counts, "t_high": t_high, "t_low": t_low, "v_high": v_high, "hold": hold, "chaos": chaos}
    with _session("experiment pulse", args, out, config_file, seed) as run:
        bench = run.attach(build_bench(seed, config_file, chaos))
        result = pulse_memory(bench, count_list, t_high, t_low, v_high, hold=hold)
        run.write(result.to_frame(), "pulse.csv")
        run.write(pd.DataFrame({f"pulses_{lv.count}": lv.hold_values for lv in result.levels}), "pulse_hold.csv")
        _export_log(run, bench, plot)
        if plot:
            line_chart({f"{lv.count} pulses": lv.hold_values for lv in result.levels}, run.path("pulse_hold.svg"),
                       title="Hold after pulse trains", xlabel="sample", ylabel="ZC22 (Ω)")
        print_pulse(result)


@experiment_app.command("classify")
def classify_command(
    seed: Optional[int] = _seed_option(),
    out: Optional[Path] = _out_option(),
    config_file: Optional[Path] = _config_option(),
    chaos: Optional[bool] = _chaos_option(),
    plot: bool = _plot_option(),
    digits_file: Optional[Path] = _digits_option(),
    weighted_digit: Optional[int] = typer.Option(None, "--digit", help="Weighted digit; all ten in turn when omitted"),
    setpoint: float = typer.Option(CLASSIFY_SETPOINT, help=f"Charge reset target in ohm (default: {CLASSIFY_SETPOINT:g})"),
    w_black: float = typer.Option(4.5, help="Weight of the target's black pixels in seconds (default: 4.5)"),
    w_white: float = typer.Option(0.25, help="Weight of every other pixel in seconds (default: 0.25)"),
):
    """
    Weighted in-memory classification.

    Each pass weights one digit's black pixels, streams all ten digits after
    a charge reset and picks the digit with the lowest final ZC22.
    """
    args = {"digit": weighted_digit, "setpoint": setpoint, "w_black": w_black, "w_white": w_white,
            "digits": digits_file, "chaos": chaos}
    with _session("experiment classify", args, out, config_file, seed) as run:
        digits = load_digits(digits_file)
        bench = run.attach(build_bench(seed, config_file, chaos))
        targets = [weighted_digit] if weighted_digit is not None else list(range(N_DIGITS))
        frames, hits = [], 0
        for target in targets:
            result = classify_inmemory(bench, digits, target, setpoint=setpoint, w_black=w_black, w_white=w_white)
            print_classification(result)
            frame = result.to_frame()
            frame.insert(0, "weighted_digit", target)
            frame["argmin"] = result.argmin
            frames.append(frame)
            hits += result.correct
        run.write(pd.concat(frames, ignore_index=True), "classification.csv")
        _export_log(run, bench, plot)
        console.print(f"[bold green]Classified {hits}/{len(targets)} weighted digits correctly[/bold green]")


@experiment_app.command("differentiate")
def differentiate_command(
    seed: Optional[int] = _seed_option(),
    out: Optional[Path] = _out_option(),
    config_file: Optional[Path] = _config_option(),
    chaos: Optional[bool] = _chaos_option(),
    plot: bool = _plot_option(),
    digits_file: Optional[Path] = _digits_option(),
    sequence: str = typer.Option("0,1,2,3,4,5,6,7,8,9", help="Digits to stream (default: 0,1,2,3,4,5,6,7,8,9)"),
    weight: float = typer.Option(4.0, help="Constant pixel weight in seconds (default: 4.0)"),
):
    """Stream digits with a constant weight and compare their final decrements."""
    digit_list = _int_list(sequence, "--sequence")
    args = {"sequence": sequence, "weight": weight, "digits": digits_file, "chaos": chaos}
    with _session("experiment differentiate", args, out, config_file, seed) as run:
        digits = load_digits(digits_file)
        bench = run.attach(build_bench(seed, config_file, chaos))
        result = differentiation_run(bench, digits, digit_list, w=weight)
        run.write(result.to_frame(), "differentiation.csv")
        run.write(pd.DataFrame({f"pos{i}_digit{d}": trace for i, (d, trace) in enumerate(zip(result.sequence, result.traces))}),
                  "differentiation_traces.csv")
        _export_log(run, bench, plot)
        if plot:
            line_chart({f"digit {d}": trace for d, trace in zip(result.sequence, result.traces)},
                       run.path("differentiation_traces.svg"), title="Per-pixel ZC22", xlabel="pixel", ylabel="ZC22 (Ω)")
        print_differentiation(result)
        if not result.distinct:
            console.print("[bold yellow]Warning:[/bold yellow] Some digits are not separated by the resolution")


@experiment_app.command("adapt")
def adapt_command(
    seed: Optional[int] = _seed_option(),
    out: Optional[Path] = _out_option(),
    config_file: Optional[Path] = _config_option(),
    chaos: Optional[bool] = _chaos_option(),
    plot: bool = _plot_option(),
    digits_file: Optional[Path] = _digits_option(),
    weighted_digit: int = typer.Option(1, "--digit", help="Weighted digit (default: 1)"),
    k: float = typer.Option(-0.5, help="Offset ramp amplitude in volts (default: -0.5)"),
    reps: int = typer.Option(20, help="Repetitions per digit (default: 20)"),
    setpoint: float = typer.Option(15100.0, help="ZC11 reset target in ohm (default: 15100)"),
):
    """Progressive adaptation: repeated weighted streaming with a voltage offset ramp."""
    args = {"digit": weighted_digit, "k": k, "reps": reps, "setpoint": setpoint, "digits": digits_file, "chaos": chaos}
    with _session("experiment adapt", args, out, config_file, seed) as run:
        digits = load_digits(digits_file)
        bench = run.attach(build_bench(seed, config_file, chaos))
        result = progressive_adaptation(bench, digits, weighted_digit=weighted_digit, k=k, reps=reps, setpoint=setpoint)
        run.write(result.to_frame(), "adaptation.csv")
        _export_log(run, bench, plot)
        if plot:
            line_chart({f"digit {d.digit}": d.finals for d in result.digits}, run.path("adaptation.svg"),
                       title="Final ZC11 per repetition", xlabel="repetition", ylabel="ZC11 (Ω)")
        print_adaptation(result)


@experiment_app.command("dynamics")
def dynamics_command(
    seed: Optional[int] = _seed_option(),
    out: Optional[Path] = _out_option(),
    config_file: Optional[Path] = _config_option(),
    chaos: Optional[bool] = _chaos_option(),
    plot: bool = _plot_option(),
    digits_file: Optional[Path] = _digits_option(),
    weighted_digit: int = typer.Option(4, "--digit", help="Weighted digit (default: 4)"),
    iterations: int = typer.Option(100, help="Classification passes (default: 100)"),
    restore: float = typer.Option(0.0, help="Seconds at -10 V after the passes; 0 skips restoration (default: 0)"),
):
    """Repeated classification under fatigue, optionally followed by restoration."""
    args = {"digit": weighted_digit, "iterations": iterations, "restore": restore, "digits": digits_file, "chaos": chaos}
    with _session("experiment dynamics", args, out, config_file, seed) as run:
        digits = load_digits(digits_file)
        bench = run.attach(build_bench(seed, config_file, chaos))
        result = dynamics_reduction_run(bench, digits, weighted_digit, iterations,
                                        restore_duration=restore if restore > 0 else None)
        run.write(result.to_frame(), "dynamics.csv")
        _export_log(run, bench, False)
        if plot:
            line_chart({"dynamic range": result.ranges}, run.path("dynamics.svg"), x=list(range(1, len(result.ranges) + 1)),
                       title="Dynamic range per iteration", xlabel="iteration", ylabel="Ω")
        print_dynamics(result)


@experiment_app.command("chaos")
def chaos_command(
    seed: Optional[int] = _seed_option(),
    out: Optional[Path] = _out_option(),
    config_file: Optional[Path] = _config_option(),
    chaos: Optional[bool] = _chaos_option(),
    plot: bool = _plot_option(),
    low: float = typer.Option(16250.0, help="Lower setpoint in ohm (default: 16250)"),
    high: float = typer.Option(16300.0, help="Upper setpoint in ohm (default: 16300)"),
    pause: float = typer.Option(10.0, help="Zero-bias pause after each drive in seconds (default: 10)"),
    cycles: int = typer.Option(10, help="High/low cycles (default: 10)"),
):
    """Alternate setpoint drives with zero-bias pauses and record ZC22."""
    args = {"low": low, "high": high, "pause": pause, "cycles": cycles, "chaos": chaos}
    with _session("experiment chaos", args, out, config_file, seed) as run:
        bench = run.attach(build_bench(seed, config_file, chaos))
        result = chaos_probe(bench, low, high, pause=pause, cycles=cycles)
        run.write(result.to_frame(), "chaos.csv")
        run.write(result.ticks_frame(), "chaos_ticks.csv")
        if plot:
            line_chart({"ZC22": result.values}, run.path("chaos.svg"), x=result.times,
                       title="Chaos probe", xlabel="t (s)", ylabel="ZC22 (Ω)")
        print_chaos(result)


@experiment_app.command("settle")
def settle_command(
    seed: Optional[int] = _seed_option(),
    out: Optional[Path] = _out_option(),
    config_file: Optional[Path] = _config_option(),
    chaos: Optional[bool] = _chaos_option(),
    plot: bool = _plot_option(),
    charge: float = typer.Option(10.0, help="Seconds at +10 V before releasing the bias (default: 10)"),
    duration: float = typer.Option(60.0, help="Observation period at 0 V in seconds (default: 60)"),
    interval: float = typer.Option(1.0, help="Time between samples in seconds (default: 1.0)"),
):
    """Charge briefly, release the bias and watch the short-term trace decay."""
    args = {"charge": charge, "duration": duration, "interval": interval, "chaos": chaos}
    with _session("experiment settle", args, out, config_file, seed) as run:
        bench = run.attach(build_bench(seed, config_file, chaos))
        if charge > 0:
            bench.set_bias(10.0)
            bench.wait(max(0.0, charge - bench.command_latency))
        start = len(bench.log)
        values = settle_run(bench, duration, interval)
        frame = bench.log_frame().iloc[start:].reset_index(drop=True)
        run.write(frame, "settle.csv")
        if plot:
            plot_log(frame, run.path("settle.svg"))
        console.print(f"ZC22 {values[0]:.2f} → {values[-1]:.2f} Ω over {duration:g} s" if values
                      else "No samples taken")


@experiment_app.command("sweep-restore")
def sweep_restore_command(
    seed: Optional[int] = _seed_option(),
    out: Optional[Path] = _out_option(),
    config_file: Optional[Path] = _config_option(),
    chaos: Optional[bool] = _chaos_option(),
    digits_file: Optional[Path] = _digits_option(),
    iterations: int = typer.Option(20, help="Fatiguing classification passes before the sweeps (default: 20)"),
    loops: int = typer.Option(1, help="Restoration sweeps (default: 1)"),
    v_peak: float = typer.Option(10.0, help="Sweep amplitude in volts (default: 10)"),
):
    """Fatigue the device with classification passes, then recover it with fast high-voltage sweeps."""
    args = {"iterations": iterations, "loops": loops, "v_peak": v_peak, "digits": digits_file, "chaos": chaos}
    with _session("experiment sweep-restore", args, out, config_file, seed) as run:
        digits = load_digits(digits_file)
        bench = run.attach(build_bench(seed, config_file, chaos))
        fatigued = dynamics_reduction_run(bench, digits, iterations=iterations)
        before = bench.state.a
        after = sweep_restore(bench, v_peak=v_peak, loops=loops)
        run.write(pd.DataFrame([{"iterations": iterations, "loops": loops, "v_peak": v_peak,
                                 "initial_range": fatigued.ranges[0], "fatigued_range": fatigued.ranges[-1],
                                 "fatigue_before": before, "fatigue_after": after}]), "sweep_restore.csv")
        console.print(f"Fatigue {before:.4f} → {after:.4f}")


@app.command("prc-collect")
def prc_collect_command(
    seed: Optional[int] = _seed_option(),
    out: Optional[Path] = _out_option(),
    config_file: Optional[Path] = _config_option(),
    chaos: Optional[bool] = _chaos_option(),
    digits_file: Optional[Path] = _digits_option(),
    reps: int = typer.Option(50, help="Repetitions of digits 0-3 (default: 50)"),
    pixel_dwell: float = typer.Option(2.0, help="Seconds per pixel (default: 2.0)"),
    name: str = typer.Option("samples.csv", help="Sample file name (default: samples.csv)"),
):
    """Stream digits 0-3 after the two-sided reset and record the 64-value feature curves."""
    args = {"reps": reps, "pixel_dwell": pixel_dwell, "digits": digits_file, "chaos": chaos}
    with _session("prc-collect", args, out, config_file, seed) as run:
        digits = load_digits(digits_file)
        bench = run.attach(build_bench(seed, config_file, chaos))
        samples = collect_dataset(bench, digits, reps=reps, pixel_dwell=pixel_dwell)
        write_samples(samples, run.path(name))
        expected = reps * len(PRC_LABELS)
        if len(samples) < expected:
            console.print(f"[bold yellow]Warning:[/bold yellow] Collected {len(samples)} of {expected} samples")
        else:
            console.print(f"Collected {len(samples)} samples")


@app.command("prc-train")
def prc_train_command(
    samples_path: Path = typer.Argument(..., exists=True, dir_okay=False, help="Sample CSV written by prc-collect"),
    out: Optional[Path] = _out_option(),
    seed: int = typer.Option(0, help="Weight initialization seed (default: 0)"),
    epochs: int = typer.Option(2000, help="Training epochs (default: 2000)"),
    learning_rate: float = typer.Option(0.01, help="Adam step size (default: 0.01)"),
    variant: str = typer.Option("full", help="Readout layout: full, single_layer or two_layer_4_1 (default: full)"),
    model_name: str = typer.Option("model.bin", help="Model file name (default: model.bin)"),
):
    """Train the readout network on collected samples and save it."""
    args = {"samples": samples_path, "epochs": epochs, "learning_rate": learning_rate, "variant": variant}
    with _session("prc-train", args, out, seed=seed) as run:
        samples = read_samples(samples_path)
        model = train(samples, TrainConfig(epochs=epochs, learning_rate=learning_rate, seed=seed, variant=variant))
        save_model(model, run.path(model_name))
        run.write(pd.DataFrame([model.metrics.model_dump()]), "training.csv")
        console.print(f"[bold green]Trained {variant} readout:[/bold green] RMSE {model.metrics.rmse:.4f}, "
                      f"accuracy {model.metrics.accuracy:.1%}")


@app.command("prc-serve")
def prc_serve_command(
    model_path: Path = typer.Option(..., "--model", help="Readout model file"),
    host: str = typer.Option("127.0.0.1", help="Bind address (default: 127.0.0.1)"),
    port: int = typer.Option(9750, help="UDP port; 0 picks a free one (default: 9750)"),
    out: Optional[Path] = _out_option(),
):
    """Serve digit inference over UDP until interrupted; results go to inference.csv."""
    with _session("prc-serve", {"model": model_path, "host": host, "port": port}, out) as run:
        model = load_model(model_path)
        service = InferenceService(model, host, port).start()
        console.print(f"Listening on {service.address[0]}:{service.address[1]} (Ctrl+C to stop)")
        try:
            service.serve_forever()
        except KeyboardInterrupt:
            console.print("Stopping")
        finally:
            service.export_results(run.path("inference.csv"))


@app.command("prc-stream")
def prc_stream_command(
    seed: Optional[int] = typer.Option(None, "--seed",
                                       help=f"Seed of the session bench and digit order (default: {config.default_seed + 1})"),
    out: Optional[Path] = _out_option(),
    config_file: Optional[Path] = _config_option(),
    chaos: Optional[bool] = _chaos_option(),
    digits_file: Optional[Path] = _digits_option(),
    model_path: Optional[Path] = typer.Option(None, "--model", help="Serve this model in-process instead of --host/--port"),
    host: str = typer.Option("127.0.0.1", help="Service address (default: 127.0.0.1)"),
    port: int = typer.Option(9750, help="Service UDP port (default: 9750)"),
    count: int = typer.Option(200, help="Digits to stream (default: 200)"),
    pixel_dwell: float = typer.Option(2.0, help="Seconds per pixel (default: 2.0)"),
):
    """
    Stream random digits 0-3 to an inference service and score the replies.

    With --model the service runs in this process on a free port, which
    makes a complete loopback session.
    """
    seed = config.default_seed + 1 if seed is None else seed
    args = {"model": model_path, "host": host, "port": port, "count": count, "pixel_dwell": pixel_dwell,
            "digits": digits_file, "chaos": chaos}
    with _session("prc-stream", args, out, config_file, seed) as run:
        if model_path is not None and not model_path.exists():
            raise ModelNotFound(f"Model file {model_path} does not exist")
        digits = load_digits(digits_file)
        bench = run.attach(build_bench(seed, config_file, chaos))
        sequence = np.random.default_rng(seed).integers(0, len(PRC_LABELS), size=count).tolist()

        if model_path is not None:
            with InferenceService(load_model(model_path)) as service:
                replies = stream(bench, digits, sequence, service.address, pixel_dwell=pixel_dwell)
        else:
            replies = stream(bench, digits, sequence, (host, port), pixel_dwell=pixel_dwell)

        frame = pd.DataFrame({"seq": [r.seq for r in replies], "label": sequence,
                              "predicted": [r.digit for r in replies], "score": [r.score for r in replies]})
        run.write(frame, "session.csv")
        matrix = confusion_matrix(frame["label"], frame["predicted"], PRC_LABELS)
        run.write(matrix.reset_index(), "confusion.csv")
        print_confusion(matrix, accuracy(frame["label"], frame["predicted"]))


def _column(path: Path, column: str) -> pd.Series:
    frame = pd.read_csv(path)
    if column not in frame.columns:
        raise PreconditionError(f"{path} has no column {column!r}")
    return frame[column]


@analyze_app.command("lyapunov")
def lyapunov_command(
    csv_path: Path = typer.Argument(..., exists=True, dir_okay=False, help="CSV file with the series"),
    column: str = typer.Option("zc22", help="Series column (default: zc22)"),
    eps: float = typer.Option(0.1, help="Neighbour radius on the normalized series (default: 0.1)"),
    k_max: int = typer.Option(20, help="Longest tracked separation (default: 20)"),
    out: Optional[Path] = _out_option(),
):
    """Mean log divergence of nearby pairs and its fitted slope."""
    args = {"csv": csv_path, "column": column, "eps": eps, "k_max": k_max}
    with _session("analyze lyapunov", args, out) as run:
        curve = lyapunov_curve(_column(csv_path, column), eps=eps, k_max=k_max)
        run.write(curve.to_frame(), "divergence.csv")
        print_divergence(curve)


@analyze_app.command("loops")
def loops_command(
    csv_path: Path = typer.Argument(..., exists=True, dir_okay=False, help="Sweep log CSV"),
    loops: int = typer.Option(..., help="Number of loops in the log"),
    column: str = typer.Option("zc22", help="Indicator column (default: zc22)"),
    out: Optional[Path] = _out_option(),
):
    """Per-loop area, pinch voltage and dynamic range of a hysteresis log."""
    with _session("analyze loops", {"csv": csv_path, "loops": loops, "column": column}, out) as run:
        metrics = hysteresis_metrics(_column(csv_path, "bias_v"), _column(csv_path, column), loops)
        run.write(pd.DataFrame([m.model_dump() for m in metrics]), "loops.csv")
        print_loops(metrics)
        if loops >= 3:
            console.print(f"Loop-area trend (Spearman): {shrinkage_trend([m.area for m in metrics]):+.3f}")


@analyze_app.command("stats")
def stats_command(
    csv_path: Path = typer.Argument(..., exists=True, dir_okay=False, help="CSV file with the values"),
    column: str = typer.Option("zc22", help="Value column (default: zc22)"),
    bins: int = typer.Option(20, help="Histogram bins (default: 20)"),
    out: Optional[Path] = _out_option(),
):
    """Mean, sample deviation, histogram and detection threshold of a column."""
    with _session("analyze stats", {"csv": csv_path, "column": column, "bins": bins}, out) as run:
        values = _column(csv_path, column)
        stats = summary_stats(values, bins=bins)
        run.write(pd.DataFrame({"bin_left": stats.bin_edges[:-1], "bin_right": stats.bin_edges[1:],
                                "count": stats.counts}), "histogram.csv")
        print_summary(stats)
        if len(values) >= 2:
            console.print(f"Detection threshold: {detection_threshold(values):.4f}")


@analyze_app.command("confusion")
def confusion_command(
    csv_path: Path = typer.Argument(..., exists=True, dir_okay=False, help="Inference results CSV with label and predicted columns"),
    out: Optional[Path] = _out_option(),
):
    """Confusion matrix and accuracy of an inference results log."""
    with _session("analyze confusion", {"csv": csv_path}, out) as run:
        labels, predicted = _column(csv_path, "label"), _column(csv_path, "predicted")
        known = labels.notna()
        labels, predicted = labels[known].astype(int), predicted[known].astype(int)
        matrix = confusion_matrix(labels, predicted, PRC_LABELS)
        run.write(matrix.reset_index(), "confusion.csv")
        print_confusion(matrix, accuracy(labels, predicted))


def main():
    """Entry point for the ferrolab command line tool.

    Exit codes: 0 on success, 1 on a usage error, 2 when a command fails.
    """
    try:
        code = app(standalone_mode=False)
    except click.UsageError as e:
        e.show()
        code = 1
    except click.ClickException as e:
        e.show()
        code = 2
    except click.Abort:
        console.print("Aborted")
        code = 1
    sys.exit(code if isinstance(code, int) else 0)


if __name__ == "__main__":
    main()
