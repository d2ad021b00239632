from __future__ import annotations

import logging
from typing import TYPE_CHECKING

import numpy as np

from mvreinsure.commands import PipelineCommand
from mvreinsure.models import Report
from mvreinsure.renderers import write_csv

if TYPE_CHECKING:
    import argparse

    from mvreinsure.app import Application
    from mvreinsure.sre import SRESolution

logger = logging.getLogger(__name__)


def solution_section(report: Report, solution: SRESolution) -> None:
    theta, upper = solution.bounds
    discount = float(np.exp(-2.0 * solution.model.short_rate.integral()))
    report.section("Bounds certificate", theta=theta, M=upper)
    report.section(
        "Initial values",
        **{"P1(0)": solution.p1_0, "P2(0)": solution.p2_0, "P2(0) exp(-2 int r)": solution.p2_0 * discount},
    )


class SolveCommand(PipelineCommand):
    """Solve the Riccati pair and write sre.csv."""

    name = "solve"
    aliases = ("s",)

    @classmethod
    def execute(cls, args: argparse.Namespace, app: Application) -> None:
        run_config = args.run_config
        model = app.load_model(run_config)
        solution, change = app.solve(run_config, model, check_grid=True)

        path = write_csv(solution.to_frame(), cls.output_path(run_config, "sre.csv"))
        logger.info("[solve] wrote %s", path)

        report = Report(title="Riccati solution", command=cls.name)
        report.section("Grid", steps=solution.grid.steps, n_max=solution.grid.n_max, horizon=solution.grid.horizon)
        solution_section(report, solution)
        report.section("Grid convergence", relative_change=change, tolerance=app.settings.grid_tolerance)
        if change is not None and change > app.settings.grid_tolerance:
            report.warnings.append(f"P(0) changes by {change:.3e} on the halved grid")
        report.artifacts.append(str(path))
        cls.emit(args, app, report)
