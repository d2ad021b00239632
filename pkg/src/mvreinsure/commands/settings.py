from __future__ import annotations

import sys
from dataclasses import asdict
from typing import TYPE_CHECKING

from mvreinsure.commands import Command
from mvreinsure.config import Settings, generate_config, load_run_config
from mvreinsure.models import Report
from mvreinsure.parser import parse_model

if TYPE_CHECKING:
    import argparse

    from mvreinsure.app import Application
    from mvreinsure.config import RunConfig


def settings_report(settings: Settings) -> Report:
    """Values a run falls back to when its JSON file leaves them out."""
    report = Report(title="Effective settings", command="settings")
    report.section(
        "Riccati grid",
        steps=settings.grid_steps,
        tail_tolerance=settings.tail_tolerance,
        grid_tolerance=settings.grid_tolerance,
    )
    report.section(
        "Monte Carlo",
        n_paths=settings.paths,
        seed=settings.seed,
        dt_max=settings.dt_max,
        chunk_size=settings.chunk_size,
        mode=settings.mode,
    )
    _tolerance_section(report, settings)
    report.section("Output", directory=settings.output, template=settings.template)
    return report


def run_report(run_config: RunConfig, settings: Settings, n_max: int) -> Report:
    report = Report(title="Effective run settings", command="settings")
    report.section(
        "Riccati grid",
        steps=run_config.grid.steps,
        n_max=n_max,
        tail_tolerance=run_config.grid.tail_tolerance,
        grid_tolerance=settings.grid_tolerance,
    )
    sim = run_config.simulation
    report.section(
        "Monte Carlo",
        n_paths=sim.n_paths,
        seed=sim.seed,
        dt_max=sim.dt_max,
        chunk_size=sim.chunk_size,
        mode=sim.mode,
        strategy=run_config.strategy.name,
    )
    report.section("Frontier", x=run_config.frontier.x, targets=list(run_config.frontier.targets))
    _tolerance_section(report, settings)
    report.section("Output", directory=run_config.output, template=settings.template)
    return report


def _tolerance_section(report: Report, settings: Settings) -> None:
    tolerances = asdict(settings.validation_tolerances())
    probes = tolerances.pop("probes")
    section = report.section("Validation tolerances", **tolerances)
    section.columns = ["pi scale", "q scale"]
    section.rows = [list(p) for p in probes]


class SettingsCommand(Command):
    """Show the grid, Monte Carlo and validation settings in effect."""

    name = "settings"
    aliases = ("cfg",)

    @classmethod
    def add_arguments(cls, parser: argparse.ArgumentParser) -> None:
        parser.add_argument(
            "--generate",
            action="store_true",
            help="Print a default .mvreinsure ini file",
        )
        parser.add_argument("-c", "--config", action="store", help="resolve the values this JSON run file would use")
        parser.add_argument(
            "-t",
            "--template",
            action="store",
            help="report format [txt, markdown, json], or path to your template; default from settings: 'txt'",
        )

    @classmethod
    def execute(cls, args: argparse.Namespace, app: Application) -> None:
        if args.generate:
            generate_config().write(sys.stdout)
            return
        if args.config:
            run_config = load_run_config(args.config, app.settings)
            n_max = app.n_max(run_config, parse_model(run_config.model))
            report = run_report(run_config, app.settings, n_max)
        else:
            report = settings_report(app.settings)
        sys.stdout.write(app.render(report, args.template))
