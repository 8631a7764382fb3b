from __future__ import annotations

import json
import sys
from contextlib import contextmanager
from pathlib import Path

import click
from rich.console import Console
from rich.markup import escape
from rich.table import Table
from rich.tree import Tree

from transit_typology import __version__
from transit_typology.errors import StageError, TypologyError
from transit_typology.ioutils.artifacts import read_csv, read_json
from transit_typology.tools.config import default_template, validate_config
from transit_typology.tools.pipeline import STAGES, Pipeline, RunSummary
from transit_typology.tools.utility import configure_logging

INTERNAL_ERROR = 4
TREE_DEPTH = 3

console = Console()
err_console = Console(stderr=True)


@contextmanager
def _exit_codes():
    """Maps errors to the documented exit codes: 2 config, 3 data, 4 internal."""
    try:
        yield
    except TypologyError as e:
        cause = e.cause if isinstance(e, StageError) else e
        err_console.print(
            f"[bold red]{type(cause).__name__}:[/bold red] {escape(str(e))}"
        )
        sys.exit(e.exit_code)
    except Exception as e:
        err_console.print(f"[bold red]Internal error:[/bold red] {escape(repr(e))}")
        sys.exit(INTERNAL_ERROR)


def _summary_table(summary: RunSummary) -> Table:
    table = Table(title="Stages", header_style="bold magenta")
    table.add_column("Stage", style="cyan")
    table.add_column("Scope")
    table.add_column("Status", justify="right")
    for entries, status in ((summary.executed, "[green]ran"), (summary.skipped, "[dim]cached")):
        for entry in entries:
            stage, scope = entry.split("/", 1)
            table.add_row(stage, scope, status)
    return table


@click.group()
@click.version_option(__version__, prog_name="transit-typology")
def cli():
    """Typology of transit availability in city micro-regions from GTFS feeds."""


@cli.command()
@click.option(
    "-c",
    "--config",
    "config_path",
    type=click.Path(path_type=Path),
    required=True,
    help="Pipeline config (JSON)",
)
@click.option(
    "--stages",
    default=",".join(STAGES),
    show_default=True,
    help="Comma separated stages to run",
)
@click.option(
    "--date",
    type=click.DateTime(formats=["%Y-%m-%d"]),
    default=None,
    help="Service day for every city, overriding the config",
)
@click.option("--no-progress", is_flag=True, help="Hide the progress bar")
@click.option("--verbose", is_flag=True, help="Log at debug level")
def run(config_path: Path, stages: str, date, no_progress: bool, verbose: bool):
    """Run pipeline stages; unchanged stages are taken from the cache."""
    if verbose:
        configure_logging("DEBUG")
    with _exit_codes():
        config = validate_config(config_path)
        pipeline = Pipeline(
            config,
            date=date.date() if date else None,
            show_progress=not no_progress,
        )
        summary = pipeline.run(stages)
        console.print(_summary_table(summary))
        console.print(f"[bold green]Artifacts in {pipeline.store.root}[/bold green]")


@cli.command()
@click.option(
    "-c",
    "--config",
    "config_path",
    type=click.Path(path_type=Path),
    required=True,
    help="Pipeline config (JSON)",
)
def validate(config_path: Path):
    """Check a config without running anything."""
    with _exit_codes():
        config = validate_config(config_path)
        table = Table(title=str(config_path), header_style="bold magenta")
        table.add_column("City", style="cyan")
        table.add_column("Feed")
        table.add_column("Date")
        for city in config.cities:
            table.add_row(
                city.city_tag,
                str(city.feed_path),
                str(city.analysis_date or "first Wednesday"),
            )
        console.print(table)
        console.print(
            f"[green]Config is valid[/green]: resolution {config.resolution}, "
            f"hours {config.hours[0]}..{config.hours[1]}, ks {config.ks}"
        )


@cli.command()
def template():
    """Print the default config."""
    click.echo(json.dumps(default_template(), indent=2))


def _manifest_table(path: Path) -> Table:
    stages = read_json(path).get("stages", {})
    table = Table(title=str(path), header_style="bold magenta")
    table.add_column("Stage", style="cyan")
    table.add_column("Input hash")
    table.add_column("Outputs", justify="right")
    for key, record in stages.items():
        table.add_row(key, record["input_hash"][:12], str(len(record["outputs"])))
    return table


def _csv_table(path: Path, rows: int) -> Table:
    frame = read_csv(path)
    table = Table(
        title=f"{path.name} ({len(frame)} rows)", header_style="bold magenta"
    )
    for column in frame.columns:
        table.add_column(str(column))
    for row in frame.head(rows).itertuples(index=False):
        table.add_row(*[str(value) for value in row])
    return table


def _add_branch(tree: Tree, value, depth: int) -> None:
    if depth >= TREE_DEPTH:
        return
    if isinstance(value, dict):
        for key, item in value.items():
            if isinstance(item, (dict, list)):
                _add_branch(tree.add(f"[cyan]{key}"), item, depth + 1)
            else:
                tree.add(f"[cyan]{key}[/cyan]: {item}")
    elif isinstance(value, list):
        tree.label = f"{tree.label} [dim]({len(value)} items)"
        if value and isinstance(value[0], (dict, list)):
            _add_branch(tree.add("[0]"), value[0], depth + 1)


def _json_tree(path: Path) -> Tree:
    tree = Tree(f"[bold]{path.name}")
    _add_branch(tree, read_json(path), 0)
    return tree


@cli.command()
@click.argument("artifact", type=click.Path(exists=True, dir_okay=False, path_type=Path))
@click.option("--rows", default=10, show_default=True, help="Rows of a CSV to show")
def inspect(artifact: Path, rows: int):
    """Summarize an artifact: manifest, CSV table or JSON document."""
    if artifact.suffix not in (".csv", ".json", ".geojson"):
        raise click.BadParameter(
            f"Unsupported artifact type '{artifact.suffix}'.", param_hint="ARTIFACT"
        )
    with _exit_codes():
        if artifact.name == "manifest.json":
            console.print(_manifest_table(artifact))
        elif artifact.suffix == ".csv":
            console.print(_csv_table(artifact, rows))
        else:
            console.print(_json_tree(artifact))


if __name__ == "__main__":
    cli()
