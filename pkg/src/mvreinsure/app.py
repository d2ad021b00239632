"""The Applications object."""

from __future__ import annotations

import importlib.util
import logging
from functools import cached_property
from pathlib import Path
from typing import TYPE_CHECKING, Callable

import pluggy

from mvreinsure import hookspecs, lib
from mvreinsure.exceptions import ConfigError, FrontierError
from mvreinsure.model import validate_model
from mvreinsure.montecarlo import FeedbackStrategy, SimulationResult, ValidationReport, simulate_paths, validate_frontier
from mvreinsure.parser import parse_model
from mvreinsure.policy import FeedbackPolicy, FrontierRow, frontier_policy, frontier_table
from mvreinsure.renderers import RENDERERS, ReportRenderer, TemplateReportRenderer
from mvreinsure.sre import SREGrid, SRESolution, default_n_max, grid_convergence, solve

if TYPE_CHECKING:
    from mvreinsure.config import RunConfig, Settings
    from mvreinsure.lib import StrategyFactory
    from mvreinsure.model import MarketModel
    from mvreinsure.models import Report

logger = logging.getLogger(__name__)


class Application:
    """Main application code."""

    def __init__(self, *, settings: Settings, hook: pluggy.HookRelay) -> None:
        self.settings = settings
        self.hook = hook

    def get_renderer(self, name: str) -> ReportRenderer:
        """
        Get ReportRenderer by name.

        If renderer is not registered, then default TemplateReportRenderer is returned
        with passed name as input template.
        """
        try:
            renderer_class = RENDERERS[name]
            renderer = renderer_class(self.settings)
        except KeyError:
            renderer = TemplateReportRenderer(self.settings, name)

        # register jinja filters for TemplateReportRenderer instances
        if isinstance(renderer, TemplateReportRenderer):
            for key, tpl_filter in self.get_template_filters().items():
                logger.debug("registering filter '%s'", key)
                renderer.env.filters[key] = tpl_filter
        return renderer

    def get_template_filters(self) -> dict[str, Callable[..., str]]:
        """
        Returns dictionary of registered template filters.

        The final filters dictionary is merged from the default filters and from
        registered hooks.
        """
        ff: dict[str, Callable[..., str]] = {}
        for _dict in self.hook.provide_template_filters(settings=self.settings):
            ff.update(_dict)
        return ff

    @cached_property
    def strategies(self) -> dict[str, StrategyFactory]:
        found: dict[str, StrategyFactory] = {}
        for _dict in self.hook.provide_strategies(settings=self.settings):
            found.update(_dict)
        return found

    def render(self, report: Report, template: str | None = None) -> str:
        return self.get_renderer(template or self.settings.template).render(report)

    def load_model(self, run_config: RunConfig) -> MarketModel:
        """Parse and validate the model of a run configuration."""
        model = parse_model(run_config.model)
        validate_model(model, n_max=self.n_max(run_config, model)).raise_for_violations()
        return model

    def n_max(self, run_config: RunConfig, model: MarketModel) -> int:
        if run_config.grid.nmax is not None:
            return run_config.grid.nmax
        return default_n_max(model, run_config.grid.tail_tolerance)

    def solve(self, run_config: RunConfig, model: MarketModel, *, check_grid: bool = False) -> tuple[SRESolution, float | None]:
        """
        Solve the Riccati pair; with `check_grid` also report the relative change on the halved grid.

        A change above `grid_tolerance` is logged as a warning, not raised.
        """
        grid = SREGrid.uniform(model.horizon, run_config.grid.steps, self.n_max(run_config, model))
        logger.info("[solve] steps=%d n_max=%d", grid.steps, grid.n_max)
        solution = solve(model, grid)
        change = None
        if check_grid:
            change = grid_convergence(model, grid, solution)
            if change > self.settings.grid_tolerance:
                logger.warning(
                    "[solve] grid change %.3e above tolerance %.1e; refine the grid", change, self.settings.grid_tolerance
                )
        return solution, change

    def frontier(self, run_config: RunConfig, solution: SRESolution) -> list[FrontierRow]:
        """
        Raises:
            FrontierError: empty target list or every target infeasible
        """
        targets = run_config.frontier.targets
        if not targets:
            msg = "frontier needs at least one target mean"
            raise FrontierError(msg)
        rows = frontier_table(targets, run_config.frontier.x, solution.model, solution.p2_0, solution.p1_0)
        if not any(row.feasible for row in rows):
            msg = f"all {len(rows)} target means are infeasible"
            raise FrontierError(msg)
        return rows

    def target(self, run_config: RunConfig) -> float:
        z = run_config.strategy.z
        if z is None:
            if not run_config.frontier.targets:
                msg = "no target mean: set strategy.z or frontier.targets"
                raise ConfigError(msg)
            z = run_config.frontier.targets[-1]
        return z

    def simulate(self, run_config: RunConfig, model: MarketModel, strategy_name: str | None = None) -> SimulationResult:
        name = strategy_name or run_config.strategy.name
        try:
            factory = self.strategies[name]
        except KeyError as exc:
            msg = f"unknown strategy {name!r}, expected one of {', '.join(sorted(self.strategies))}"
            raise ConfigError(msg) from exc

        def get_policy() -> FeedbackPolicy:
            solution, _ = self.solve(run_config, model)
            return frontier_policy(solution, run_config.frontier.x, self.target(run_config))

        strategy = factory(run_config, model, get_policy)
        config = run_config.simulation
        if not isinstance(strategy, FeedbackStrategy) and config.mode == "explicit-product":
            logger.info("[simulate] strategy %s is not a feedback rule, using euler mode", name)
            config = type(config)(**{**config.as_dict(), "mode": "euler"})
        return simulate_paths(model, strategy, config)

    def validate(self, run_config: RunConfig, solution: SRESolution, *, variance_scale: float = 1.0) -> ValidationReport:
        return validate_frontier(
            solution,
            run_config.frontier.x,
            self.target(run_config),
            run_config.simulation,
            self.settings.validation_tolerances(),
            variance_scale=variance_scale,
        )


def get_plugin_manager() -> pluggy.PluginManager:
    """Return PluginManager."""
    pm = pluggy.PluginManager("mvreinsure")
    pm.add_hookspecs(hookspecs)
    pm.load_setuptools_entrypoints("mvreinsure")

    hooks_path = Path() / ".mvreinsure.d" / "hooks.py"
    if hooks_path.exists():
        spec = importlib.util.spec_from_file_location("mvreinsure_hooks", hooks_path)
        if spec and spec.loader:
            mvreinsure_hooks = importlib.util.module_from_spec(spec)
            spec.loader.exec_module(mvreinsure_hooks)
            pm.register(mvreinsure_hooks)

    # register `lib` as last (can be overwritten by custom hooks then)
    pm.register(lib)
    return pm


def create_application(settings: Settings) -> Application:
    """Create main Application.

    Args:
        settings: application settings
    """
    pm = get_plugin_manager()
    return Application(settings=settings, hook=pm.hook)

