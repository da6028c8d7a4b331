"""
Command line: run, preset, validate, list-presets
"""
from pathlib import Path
from typing import Optional

import typer
from rich.console import Console
from rich.markup import escape
from rich.table import Table

from config import get_config
from emission.experiments import ExperimentRunner, ExperimentSpec, RunResult, load_spec, validate_spec
from emission.presets import preset as build_preset, preset_data, preset_names
from emission import outputs
from utils.errors import EmissionError, error_handler

app = typer.Typer(help="Simulate trapped lattice atoms emitting into a free-atom reservoir.", add_completion=False)
console = Console()


def _fail(error: Exception) -> None:
    handled = error_handler.handle_error(error, context={"phase": "cli"})
    console.print(f"[bold red]{escape(handled.user_message)}[/bold red] {escape(handled.message)}")
    raise typer.Exit(code=1)


def _execute(spec: ExperimentSpec, out: Optional[Path], threads: Optional[int], tolerance_scale: float) -> RunResult:
    config = get_config()
    if tolerance_scale != 1.0:
        spec = spec.with_numerics(spec.numerics.scaled(tolerance_scale))
    runner = ExperimentRunner(spec, out if out is not None else Path(config.run.output_dir),
                              threads if threads is not None else config.run.threads)
    return runner.run()


def _report(result: RunResult) -> None:
    table = Table(title=f"{result.manifest['experiment']} ({len(result.points)} point(s))")
    table.add_column("sweep value", justify="right")
    table.add_column("warnings", justify="right")
    table.add_column("tables")
    for point in result.points:
        value = "-" if point.value is None else f"{point.value:g}"
        table.add_row(value, str(len(point.warnings)), ", ".join(point.tables) or "-")
    console.print(table)
    console.print(f"{len(result.files)} data file(s); manifest [bold]{result.manifest_path}[/bold]")


@app.command()
def run(
    spec: Path = typer.Option(..., "--spec", help="Experiment spec file (TOML)."),
    out: Optional[Path] = typer.Option(None, "--out", help="Output directory."),
    threads: Optional[int] = typer.Option(None, "--threads", min=1, help="Sweep points run at once."),
    tolerance_scale: float = typer.Option(1.0, "--tolerance-scale", help="Multiply every numerical tolerance."),
):
    """Run the experiment described by a spec file."""
    try:
        _report(_execute(load_spec(spec), out, threads, tolerance_scale))
    except (EmissionError, OSError) as e:
        _fail(e)


@app.command()
def preset(
    name: str = typer.Argument(..., help="Preset name, see list-presets."),
    out: Optional[Path] = typer.Option(None, "--out", help="Output directory."),
    threads: Optional[int] = typer.Option(None, "--threads", min=1, help="Sweep points run at once."),
    tolerance_scale: float = typer.Option(1.0, "--tolerance-scale", help="Multiply every numerical tolerance."),
    write_spec: bool = typer.Option(False, "--write-spec", help="Only write the preset as a spec file."),
):
    """Run a figure-reproduction preset."""
    try:
        if write_spec:
            directory = out if out is not None else Path(get_config().run.output_dir)
            path = outputs.write_spec_file(preset_data(name), directory / f"{name}.toml")
            console.print(f"wrote [bold]{path}[/bold]")
            return
        _report(_execute(build_preset(name), out, threads, tolerance_scale))
    except (EmissionError, OSError) as e:
        _fail(e)


@app.command()
def validate(spec: Path = typer.Option(..., "--spec", help="Experiment spec file (TOML).")):
    """Check a spec file and report physics warnings without running it."""
    report = validate_spec(spec)
    for message in report.errors:
        console.print(f"[bold red]error[/bold red] {escape(message)}")
    for message in report.warnings:
        console.print(f"[yellow]warning[/yellow] {escape(message)}")
    console.print(f"{len(report.errors)} error(s), {len(report.warnings)} warning(s)")
    if not report.ok:
        raise typer.Exit(code=1)


@app.command("list-presets")
def list_presets():
    """Show the available presets."""
    table = Table(title="presets")
    table.add_column("name")
    table.add_column("experiment")
    table.add_column("sweep")
    for name in preset_names():
        experiment = preset_data(name)["experiment"]
        sweep = experiment.get("sweep_parameter")
        values = ", ".join(f"{v:g}" for v in experiment.get("sweep_values", []))
        table.add_row(name, experiment["name"], f"{sweep} = {values}" if sweep else "-")
    console.print(table)
