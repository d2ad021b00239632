from __future__ import annotations

import argparse
import logging
from typing import TYPE_CHECKING

from mvreinsure.commands import PipelineCommand
from mvreinsure.exceptions import ValidationRejectedError
from mvreinsure.models import Report
from mvreinsure.renderers import write_json

if TYPE_CHECKING:
    from mvreinsure.app import Application

logger = logging.getLogger(__name__)


class ValidateCommand(PipelineCommand):
    """Check the analytic frontier against Monte Carlo and write validation.json."""

    name = "validate"
    aliases = ("val",)

    @classmethod
    def add_arguments(cls, parser: argparse.ArgumentParser) -> None:
        super().add_arguments(parser)
        parser.add_argument(
            "--analytic-variance-scale",
            action="store",
            type=float,
            default=1.0,
            help=argparse.SUPPRESS,
        )

    @classmethod
    def execute(cls, args: argparse.Namespace, app: Application) -> None:
        run_config = args.run_config
        model = app.load_model(run_config)
        solution, _ = app.solve(run_config, model)
        result = app.validate(run_config, solution, variance_scale=args.analytic_variance_scale)

        path = write_json(result.as_dict(), cls.output_path(run_config, "validation.json"))
        logger.info("[validate] wrote %s", path)

        report = Report(title="Frontier validation", command=cls.name)
        report.section(
            "Target",
            z=result.z,
            x=result.x,
            zeta_hat=result.zeta_hat,
            paths=result.n_paths,
            seed=result.seed,
            mode=result.mode,
        )
        table = report.section("Criteria")
        table.columns = ["criterion", "observed", "expected", "tolerance", "se", "passed"]
        table.rows = [[c.name, c.observed, c.expected, c.tolerance, c.standard_error, c.passed] for c in result.criteria]
        report.section("Controls", q_above_one_frequency=result.q_above_one_frequency)
        report.artifacts.append(str(path))
        cls.emit(args, app, report)

        if not result.passed:
            names = ", ".join(c.name for c in result.failures)
            msg = f"statistical validation rejected: {names}"
            raise ValidationRejectedError(msg, result)
