from __future__ import annotations

from typing import TYPE_CHECKING, Any, Callable, Dict

import pluggy

from mvreinsure.exceptions import ConfigError
from mvreinsure.montecarlo import FeedbackStrategy, FixedStrategy, Strategy, ZeroStrategy
from mvreinsure.utils import fmt

if TYPE_CHECKING:
    from mvreinsure.config import RunConfig, Settings
    from mvreinsure.model import MarketModel
    from mvreinsure.policy import FeedbackPolicy

StrategyFactory = Callable[["RunConfig", "MarketModel", Callable[[], "FeedbackPolicy"]], Strategy]

hookimpl = pluggy.HookimplMarker("mvreinsure")


def underline_filter(line: str, char: str) -> str:
    return f"{line}\n{ char * len(line)}"


def fmt_filter(value: Any, digits: int = 6) -> str:
    return fmt(value, digits)


def feedback_strategy(run_config: RunConfig, model: MarketModel, get_policy: Callable[[], FeedbackPolicy]) -> Strategy:  # noqa: ARG001
    return FeedbackStrategy(get_policy())


def zero_strategy(run_config: RunConfig, model: MarketModel, get_policy: Callable[[], FeedbackPolicy]) -> Strategy:  # noqa: ARG001
    return ZeroStrategy(model.n_assets)


def fixed_strategy(run_config: RunConfig, model: MarketModel, get_policy: Callable[[], FeedbackPolicy]) -> Strategy:  # noqa: ARG001
    spec = run_config.strategy
    pi = spec.pi or (0.0,) * model.n_assets
    if len(pi) != model.n_assets:
        msg = f"fixed strategy has {len(pi)} investment entries for {model.n_assets} assets"
        raise ConfigError(msg)
    return FixedStrategy(pi, spec.q)


@hookimpl
def provide_template_filters(settings: Settings) -> Dict[str, Callable[..., str]]:  # noqa: ARG001
    return {"underline": underline_filter, "fmt": fmt_filter}


@hookimpl
def provide_strategies(settings: Settings) -> Dict[str, StrategyFactory]:  # noqa: ARG001
    return {"feedback": feedback_strategy, "zero": zero_strategy, "fixed": fixed_strategy}
