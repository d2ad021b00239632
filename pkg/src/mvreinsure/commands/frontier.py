from __future__ import annotations

import logging
from typing import TYPE_CHECKING

from mvreinsure.commands import PipelineCommand
from mvreinsure.commands.solve import solution_section
from mvreinsure.models import Report
from mvreinsure.policy import frontier_frame, frontier_slope, riskless_mean
from mvreinsure.renderers import write_csv

if TYPE_CHECKING:
    import argparse

    from mvreinsure.app import Application

logger = logging.getLogger(__name__)


class FrontierCommand(PipelineCommand):
    """Tabulate the efficient frontier over the target means and write frontier.csv."""

    name = "frontier"
    aliases = ("f",)

    @classmethod
    def execute(cls, args: argparse.Namespace, app: Application) -> None:
        run_config = args.run_config
        model = app.load_model(run_config)
        solution, _ = app.solve(run_config, model)
        rows = app.frontier(run_config, solution)

        path = write_csv(frontier_frame(rows), cls.output_path(run_config, "frontier.csv"))
        logger.info("[frontier] wrote %s", path)

        report = Report(title="Efficient frontier", command=cls.name)
        solution_section(report, solution)
        x = run_config.frontier.x
        report.section(
            "Half-line",
            x=x,
            vertex=riskless_mean(x, model),
            slope=frontier_slope(model, solution.p2_0),
        )
        table = report.section("Targets")
        table.columns = ["z", "stddev", "variance", "zeta_hat", "status"]
        for row in rows:
            if row.point is None:
                table.rows.append([row.z, None, None, None, "infeasible"])
                report.warnings.append(f"z={row.z:g}: {row.error}")
            else:
                p = row.point
                table.rows.append([p.z, p.stddev, p.variance, p.zeta_hat, "ok"])
        report.artifacts.append(str(path))
        cls.emit(args, app, report)
