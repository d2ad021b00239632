from __future__ import annotations

from typing import TYPE_CHECKING, Callable, Dict

import pluggy

if TYPE_CHECKING:
    from mvreinsure.config import Settings
    from mvreinsure.lib import StrategyFactory

hookspec = pluggy.HookspecMarker("mvreinsure")


@hookspec
def provide_template_filters(settings: Settings) -> Dict[str, Callable[..., str]]:
    """Return dictionary of Jinja2 filters to be used in report templates."""


@hookspec
def provide_strategies(settings: Settings) -> Dict[str, StrategyFactory]:
    """Return strategy factories by name, called as `factory(run_config, model, get_policy)`."""

