from __future__ import annotations

import abc
import dataclasses
import json
from pathlib import Path
from typing import TYPE_CHECKING, Any

import numpy as np
from jinja2 import Environment, FileSystemLoader, PackageLoader, select_autoescape

if TYPE_CHECKING:
    import pandas as pd

    from mvreinsure.config import Settings
    from mvreinsure.models import Report

CSV_FLOAT_FORMAT = "%.12g"


class ReportRenderer(abc.ABC):
    def __init__(self, settings: Settings) -> None:
        self.settings = settings

    @abc.abstractmethod
    def render(self, report: Report) -> str: ...


class TemplateReportRenderer(ReportRenderer):
    TEMPLATE: str | None = None

    def __init__(self, settings: Settings, template: str | None = None) -> None:
        super().__init__(settings)

        # support absolute templates path
        if template and template.startswith("/"):
            template = template[1:]

        self.template = template or self.TEMPLATE
        if template:
            search_paths = [Path.cwd(), Path.cwd().root, Path() / ".mvreinsure.d" / "templates"]
            loader = FileSystemLoader(search_paths, followlinks=True)
        else:
            loader = PackageLoader("mvreinsure")

        self.env = Environment(loader=loader, autoescape=select_autoescape(), trim_blocks=True, lstrip_blocks=True)

    def render(self, report: Report) -> str:
        template = self.env.get_template(self.template)
        return template.render(settings=self.settings, report=report)


class EnhancedJSONEncoder(json.JSONEncoder):
    def default(self, o: Any) -> Any:
        """Add types handlers to encoder.

        Args:
            o: parsed object

        Returns:
            Any
        """
        if dataclasses.is_dataclass(o) and not isinstance(o, type):
            return dataclasses.asdict(o)
        if isinstance(o, np.ndarray):
            return o.tolist()
        if isinstance(o, np.bool_):
            return bool(o)
        if isinstance(o, np.integer):
            return int(o)
        if isinstance(o, np.floating):
            return float(o)
        if isinstance(o, (set, tuple)):
            return list(o)
        if isinstance(o, Path):
            return str(o)

        return super().default(o)


def dumps(obj: Any) -> str:
    """Deterministic JSON: sorted keys, fixed indentation, trailing newline."""
    return json.dumps(obj, cls=EnhancedJSONEncoder, sort_keys=True, indent=2) + "\n"


class JsonReportRenderer(ReportRenderer):
    def render(self, report: Report) -> str:
        return dumps(report)


class TextReportRenderer(TemplateReportRenderer):
    TEMPLATE = "txt.jinja2"


class MarkdownReportRenderer(TemplateReportRenderer):
    TEMPLATE = "markdown.jinja2"


RENDERERS: dict[str, type[ReportRenderer]] = {
    "json": JsonReportRenderer,
    "markdown": MarkdownReportRenderer,
    "txt": TextReportRenderer,
}


def write_csv(frame: pd.DataFrame, path: str | Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    frame.to_csv(path, index=False, float_format=CSV_FLOAT_FORMAT, lineterminator="\n")
    return path


def write_json(obj: Any, path: str | Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="\n") as fh:
        fh.write(dumps(obj))
    return path
