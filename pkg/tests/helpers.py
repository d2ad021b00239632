from __future__ import annotations

import math
from typing import Any

import numpy as np

from mvreinsure.model import ClaimDistribution, ConvexCone, MarketModel, PiecewiseCurve

# constants instance: one asset, long-only, unit point claim, a = 0
R, MU, SIGMA, B = 0.05, 0.2, 0.3, 0.2
P1_0 = math.exp(2 * R)
P2_0 = math.exp(2 * R - B * B - MU * MU / (SIGMA * SIGMA))
RISKLESS = math.exp(R)


def constants_model(
    *,
    r: float = R,
    mu: float = MU,
    sigma: float = SIGMA,
    cone: ConvexCone | None = None,
    intensity: float = 1.0,
    loading: float = B,
    reinsurance_loading: float = B,
    atoms: Any = ((1.0, 1.0),),
    horizon: float = 1.0,
) -> MarketModel:
    return MarketModel(
        horizon=horizon,
        rate=PiecewiseCurve.constant(r),
        drift=(PiecewiseCurve.constant([mu]),),
        volatility=(PiecewiseCurve.constant([[sigma]]),),
        cone=cone or ConvexCone.nonnegative(1),
        intensity=intensity,
        loading=loading,
        reinsurance_loading=reinsurance_loading,
        claims=ClaimDistribution.from_atoms(atoms),
    )


def count_modulated_model(drifts: Any = (0.6, 0.0), sigma: float = 0.3, **kwargs: Any) -> MarketModel:
    """Drift depends on the claim count; the last level holds for larger counts."""
    base = constants_model(sigma=sigma, **kwargs)
    return MarketModel(
        horizon=base.horizon,
        rate=base.rate,
        drift=tuple(PiecewiseCurve.constant([d]) for d in drifts),
        volatility=base.volatility,
        cone=base.cone,
        intensity=base.intensity,
        loading=base.loading,
        reinsurance_loading=base.reinsurance_loading,
        claims=base.claims,
        coefficient_mode="count-modulated",
    )


def two_asset_model(cone: ConvexCone | None = None) -> MarketModel:
    return MarketModel(
        horizon=1.0,
        rate=PiecewiseCurve.constant(0.03),
        drift=(PiecewiseCurve.constant([0.1, -0.05]),),
        volatility=(PiecewiseCurve.constant([[0.25, 0.05], [0.0, 0.2]]),),
        cone=cone or ConvexCone.nonnegative(2),
        intensity=2.0,
        loading=0.1,
        reinsurance_loading=0.3,
        claims=ClaimDistribution.from_density("uniform", 2.0),
    )


def constants_spec(**overrides: Any) -> dict[str, Any]:
    """JSON model mapping of the constants instance."""
    spec: dict[str, Any] = {
        "horizon": 1.0,
        "interest_rate": R,
        "drift": [MU],
        "volatility": [[SIGMA]],
        "cone": {"kind": "nonnegative"},
        "insurance": {"intensity": 1.0, "loading": B, "reinsurance_loading": B},
        "claims": {"kind": "atoms", "atoms": [[1.0, 1.0]]},
    }
    spec.update(overrides)
    return spec


def run_config(out: str, **overrides: Any) -> dict[str, Any]:
    config: dict[str, Any] = {
        "model": constants_spec(),
        "grid": {"steps": 50},
        "frontier": {"x": 1.0, "targets": [1.2]},
        "simulation": {"n_paths": 2000, "seed": 42, "dt_max": 0.02, "chunk_size": 1000},
        "output": out,
    }
    config.update(overrides)
    return config


def rng(seed: int = 7) -> np.random.Generator:
    return np.random.default_rng(seed)
