from __future__ import annotations

import logging
from typing import TYPE_CHECKING

from mvreinsure.commands import PipelineCommand
from mvreinsure.models import Report
from mvreinsure.montecarlo import estimate_terminal_stats, q_exceeds_one_frequency
from mvreinsure.renderers import write_csv

if TYPE_CHECKING:
    import argparse

    from mvreinsure.app import Application

logger = logging.getLogger(__name__)


class SimulateCommand(PipelineCommand):
    """Simulate terminal wealth under a strategy and write simulation.csv."""

    name = "simulate"
    aliases = ("sim",)

    @classmethod
    def add_arguments(cls, parser: argparse.ArgumentParser) -> None:
        super().add_arguments(parser)
        parser.add_argument(
            "--strategy",
            action="store",
            help="registered strategy name [feedback, zero, fixed]; default from the run configuration",
        )

    @classmethod
    def execute(cls, args: argparse.Namespace, app: Application) -> None:
        run_config = args.run_config
        model = app.load_model(run_config)
        result = app.simulate(run_config, model, args.strategy)

        path = write_csv(result.to_frame(), cls.output_path(run_config, "simulation.csv"))
        logger.info("[simulate] wrote %s", path)

        report = Report(title="Monte Carlo simulation", command=cls.name)
        report.section(
            "Run",
            strategy=result.strategy,
            mode=result.config.mode,
            paths=result.n_paths,
            seed=result.config.seed,
            dt_max=result.config.dt_max,
        )
        if result.n_paths >= 2:  # noqa: PLR2004
            stats = estimate_terminal_stats(result)
            report.section(
                "Terminal wealth",
                mean=stats.mean,
                se_mean=stats.se_mean,
                variance=stats.variance,
                se_variance=stats.se_variance,
            )
        else:
            report.section("Terminal wealth", value=float(result.terminal[0]))
        extra = report.section("Controls", q_above_one_frequency=q_exceeds_one_frequency(result))
        if result.max_gap is not None:
            extra.items["max_gap"] = float(result.max_gap.max())
        report.artifacts.append(str(path))
        cls.emit(args, app, report)
