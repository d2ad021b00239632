from __future__ import annotations

import numpy as np
import pytest

from mvreinsure.exceptions import ModelValidationError
from mvreinsure.parser import ModelParser, parse_model
from tests.helpers import constants_spec


def test_constants_instance() -> None:
    model = parse_model(constants_spec())
    assert model.horizon == 1.0
    assert model.n_assets == 1
    assert model.cone.kind == "nonnegative"
    assert model.mu(0.3).tolist() == [0.2]
    assert model.sigma(0.3).tolist() == [[0.3]]
    assert model.derived.b == pytest.approx(0.2)


@pytest.mark.parametrize(
    ("volatility", "expected"),
    [
        (0.3, [[0.3]]),
        ([0.3, 0.2], [[0.3, 0.0], [0.0, 0.2]]),
        ([[0.3, 0.1], [0.0, 0.2]], [[0.3, 0.1], [0.0, 0.2]]),
    ],
)
def test_volatility_shorthands(volatility, expected) -> None:
    drift = [0.1] * len(expected)
    model = parse_model(constants_spec(drift=drift, volatility=volatility, cone="full"))
    assert model.sigma(0.0) == pytest.approx(np.array(expected))


def test_piecewise_curves() -> None:
    # Given a rate that jumps at t=0.5
    spec = constants_spec(interest_rate={"knots": [0.0, 0.5], "values": [0.01, 0.05]})

    # When parsed
    model = parse_model(spec)

    # Then it holds the pieces
    assert model.r(0.25) == pytest.approx(0.01)
    assert model.r(0.75) == pytest.approx(0.05)


def test_claim_count_levels() -> None:
    spec = constants_spec(coefficient_mode="count-modulated", drift={"by_claim_count": [[0.6], [0.0]]})
    model = parse_model(spec)
    assert model.mu(0.0, 0).tolist() == [0.6]
    assert model.mu(0.0, 3).tolist() == [0.0]


def test_density_claims() -> None:
    spec = constants_spec(claims={"kind": "density", "family": "uniform", "y_max": 2.0})
    assert parse_model(spec).b_Y == pytest.approx(1.0, abs=1e-8)


@pytest.mark.parametrize(
    ("overrides", "message"),
    [
        ({"coefficient_mode": "brownian-adapted"}, "brownian-adapted"),
        ({"coefficient_mode": "rough"}, "unknown mode"),
        ({"drift": {"by_claim_count": [[0.1], [0.2]]}}, "count-modulated"),
        ({"claims": {"kind": "atoms", "atoms": []}}, "atom list is empty"),
        ({"claims": {"kind": "empirical"}}, "unknown claims kind"),
        ({"brownian_dim": 2}, "brownian_dim"),
        ({"interest_rate": {"values": [0.1]}}, "knots"),
    ],
)
def test_rejected_fields(overrides: dict, message: str) -> None:
    with pytest.raises(ModelValidationError, match=message):
        parse_model(constants_spec(**overrides))


def test_all_problems_are_reported_together() -> None:
    # Given two broken insurance parameters
    spec = constants_spec(insurance={"intensity": "often", "loading": 0.2})

    # When parsed
    with pytest.raises(ModelValidationError) as exc:
        ModelParser(spec).parse()

    # Then both are named
    assert len(exc.value.violations) == 2
    assert exc.value.violations[0].startswith("insurance.intensity")
    assert exc.value.violations[1] == "insurance.reinsurance_loading: missing"


def test_missing_required_keys() -> None:
    spec = constants_spec()
    del spec["claims"]
    del spec["horizon"]
    with pytest.raises(ModelValidationError) as exc:
        parse_model(spec)
    assert exc.value.violations == ["horizon: missing", "claims: missing"]
