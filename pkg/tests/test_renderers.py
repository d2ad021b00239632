from __future__ import annotations

import json
from pathlib import Path

import numpy as np
import pandas as pd
import pytest

from mvreinsure.app import create_application
from mvreinsure.config import Settings
from mvreinsure.lib import underline_filter
from mvreinsure.models import Report
from mvreinsure.renderers import JsonReportRenderer, TemplateReportRenderer, dumps, write_csv, write_json


def sample_report() -> Report:
    report = Report(title="Efficient frontier", command="frontier")
    report.section("Half-line", vertex=np.float64(1.0512710963760241), slope=0.5742)
    table = report.section("Targets")
    table.columns = ["z", "variance", "status"]
    table.rows = [[0.9, None, "infeasible"], [1.2, 0.035503, "ok"]]
    report.warnings.append("z=0.9: below the riskless mean")
    report.artifacts.append("out/frontier.csv")
    return report


class TestTextRenderer:
    def test_sections_tables_and_warnings(self) -> None:
        rendered = create_application(Settings()).render(sample_report(), "txt")

        assert rendered.startswith("Efficient frontier\n==================\n")
        assert "vertex: 1.05127\n" in rendered
        assert "z\tvariance\tstatus\n" in rendered
        assert "0.9\t-\tinfeasible\n" in rendered
        assert "warning: z=0.9: below the riskless mean\n" in rendered
        assert "wrote out/frontier.csv\n" in rendered

    def test_markdown(self) -> None:
        rendered = create_application(Settings()).render(sample_report(), "markdown")
        assert "## Half-line\n" in rendered
        assert "- **slope**: 0.5742\n" in rendered
        assert "- `out/frontier.csv`" in rendered

    def test_custom_template(self, tmp_path: Path, monkeypatch: pytest.MonkeyPatch) -> None:
        # Given a user template under .mvreinsure.d/templates
        templates = tmp_path / ".mvreinsure.d" / "templates"
        templates.mkdir(parents=True)
        (templates / "short.j2").write_text("{{ report.title | underline('~') }}")
        monkeypatch.chdir(tmp_path)

        # When rendering with it
        rendered = create_application(Settings()).render(sample_report(), "short.j2")

        # Then plugin filters are available
        assert rendered == "Efficient frontier\n" + "~" * 18

    def test_unfiltered_renderer_needs_registered_filters(self) -> None:
        renderer = TemplateReportRenderer(Settings())
        assert "fmt" not in renderer.env.filters


class TestJson:
    def test_report_is_plain_json(self) -> None:
        data = json.loads(JsonReportRenderer(Settings()).render(sample_report()))
        assert data["sections"][0]["items"]["vertex"] == pytest.approx(1.0512710963760241)
        assert data["sections"][1]["rows"][0] == [0.9, None, "infeasible"]

    def test_dumps_is_deterministic(self) -> None:
        text = dumps({"b": np.arange(2), "a": (np.bool_(True), Path("x"))})
        assert text == '{\n  "a": [\n    true,\n    "x"\n  ],\n  "b": [\n    0,\n    1\n  ]\n}\n'

    def test_write_json(self, tmp_path: Path) -> None:
        path = write_json({"passed": False}, tmp_path / "nested" / "validation.json")
        assert path.read_text() == '{\n  "passed": false\n}\n'


def test_write_csv(tmp_path: Path) -> None:
    frame = pd.DataFrame({"t": [0.0, 0.5], "P1": [1.1051709180756477, 1.0]})
    path = write_csv(frame, tmp_path / "sre.csv")
    assert path.read_bytes() == b"t,P1\n0,1.10517091808\n0.5,1\n"


@pytest.mark.parametrize(
    ("line", "char", "expected"),
    [
        ("Grid", "-", "Grid\n----"),
        ("", "=", "\n"),
    ],
)
def test_underline_filter(line: str, char: str, expected: str) -> None:
    assert underline_filter(line, char) == expected
