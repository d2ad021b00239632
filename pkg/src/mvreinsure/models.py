from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any


@dataclass
class ReportSection:
    title: str

    # key/value lines, rendered in insertion order
    items: dict[str, Any] = field(default_factory=dict)

    # optional small table
    columns: list[str] = field(default_factory=list)
    rows: list[list[Any]] = field(default_factory=list)


@dataclass
class Report:
    """Console summary of one command run."""

    title: str
    command: str
    sections: list[ReportSection] = field(default_factory=list)

    # files written by the command
    artifacts: list[str] = field(default_factory=list)
    warnings: list[str] = field(default_factory=list)

    def section(self, title: str, **items: Any) -> ReportSection:
        section = ReportSection(title, dict(items))
        self.sections.append(section)
        return section
