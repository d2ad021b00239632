from __future__ import annotations

import logging
from typing import Any

import numpy as np

from mvreinsure.exceptions import ModelValidationError
from mvreinsure.model import (
    COEFFICIENT_MODES,
    DEFAULT_QUADRATURE_NODES,
    ClaimDistribution,
    ConvexCone,
    MarketModel,
    PiecewiseCurve,
)

logger = logging.getLogger(__name__)


class ModelParser:
    """
    Build a `MarketModel` from its JSON mapping.

    Problems are collected per field, so a broken instance is reported in one
    `ModelValidationError` instead of failing on the first bad key.
    """

    REQUIRED = ("horizon", "interest_rate", "drift", "volatility", "insurance", "claims")

    def __init__(self, spec: dict[str, Any]) -> None:
        self.spec = spec
        self.violations: list[str] = []

    def _fail(self, where: str, exc: Exception | str) -> None:
        self.violations.append(f"{where}: {exc}")

    @staticmethod
    def _curve(raw: Any, rank: int) -> PiecewiseCurve:
        """Constant (number/array) or `{"knots", "values", "interpolation"}` curve of tensor rank `rank`."""
        if isinstance(raw, dict):
            if "knots" not in raw or "values" not in raw:
                msg = "curve needs 'knots' and 'values'"
                raise ValueError(msg)
            values = [_promote(v, rank) for v in raw["values"]]
            return PiecewiseCurve(
                np.asarray(raw["knots"], dtype=float),
                np.stack(values) if values else np.empty((0,)),
                raw.get("interpolation", "constant"),
            )
        return PiecewiseCurve.constant(_promote(raw, rank))

    def _levels(self, name: str, rank: int, mode: str) -> tuple[PiecewiseCurve, ...]:
        raw = self.spec[name]
        if isinstance(raw, dict) and "by_claim_count" in raw:
            levels = raw["by_claim_count"]
            if not levels:
                msg = "'by_claim_count' needs at least one level"
                raise ValueError(msg)
            if mode != "count-modulated" and len(levels) > 1:
                msg = "claim-count levels need coefficient_mode 'count-modulated'"
                raise ValueError(msg)
            return tuple(self._curve(level, rank) for level in levels)
        return (self._curve(raw, rank),)

    def _cone(self, n_assets: int) -> ConvexCone:
        raw = self.spec.get("cone", {"kind": "full"})
        if isinstance(raw, str):
            raw = {"kind": raw}
        kind = raw.get("kind", "full")
        if kind == "product":
            return ConvexCone.product(raw.get("signs", ()))
        if kind == "generated":
            return ConvexCone.generated(raw.get("generators"))
        return ConvexCone(kind, int(raw.get("dim", n_assets)))

    def _claims(self) -> ClaimDistribution:
        raw = self.spec["claims"]
        kind = raw.get("kind", "atoms")
        if kind == "atoms":
            atoms = raw.get("atoms")
            if not atoms:
                msg = "atom list is empty"
                raise ValueError(msg)
            return ClaimDistribution.from_atoms(atoms)
        if kind == "density":
            return ClaimDistribution.from_density(
                raw["family"],
                float(raw["y_max"]),
                raw.get("params", {}),
                int(raw.get("nodes", DEFAULT_QUADRATURE_NODES)),
            )
        msg = f"unknown claims kind {kind!r}, expected 'atoms' or 'density'"
        raise ValueError(msg)

    def parse(self) -> MarketModel:
        """
        Raises:
            ModelValidationError: missing fields, malformed curves or an unsupported mode
        """
        spec = self.spec
        for key in self.REQUIRED:
            if key not in spec:
                self._fail(key, "missing")
        mode = spec.get("coefficient_mode", "deterministic")
        if mode == "brownian-adapted":
            self._fail("coefficient_mode", "brownian-adapted coefficients are not supported")
        elif mode not in COEFFICIENT_MODES:
            self._fail("coefficient_mode", f"unknown mode {mode!r}")
        if self.violations:
            raise ModelValidationError(self.violations)

        parts: dict[str, Any] = {}
        steps = (
            ("horizon", lambda: float(spec["horizon"])),
            ("interest_rate", lambda: self._curve(spec["interest_rate"], 0)),
            ("drift", lambda: self._levels("drift", 1, mode)),
            ("volatility", lambda: self._levels("volatility", 2, mode)),
            ("claims", self._claims),
        )
        for name, build in steps:
            try:
                parts[name] = build()
            except (ValueError, TypeError, KeyError) as exc:
                self._fail(name, exc)

        insurance = spec["insurance"]
        for key in ("intensity", "loading", "reinsurance_loading"):
            try:
                parts[key] = float(insurance[key])
            except (KeyError, TypeError, ValueError) as exc:
                self._fail(f"insurance.{key}", exc if not isinstance(exc, KeyError) else "missing")

        n_assets = 1
        if "drift" in parts:
            n_assets = int(parts["drift"][0].shape[0])
            if any(c.shape != (n_assets,) for c in parts["drift"]):
                self._fail("drift", "levels disagree on the number of assets")
        if "volatility" in parts:
            shapes = {c.shape for c in parts["volatility"]}
            if len(shapes) != 1:
                self._fail("volatility", "levels disagree on the matrix shape")
            elif "brownian_dim" in spec and int(spec["brownian_dim"]) != parts["volatility"][0].shape[1]:
                self._fail("brownian_dim", f"{spec['brownian_dim']} does not match volatility columns")
        try:
            parts["cone"] = self._cone(n_assets)
        except (ValueError, TypeError) as exc:
            self._fail("cone", exc)

        if self.violations:
            raise ModelValidationError(self.violations)
        model = MarketModel(
            horizon=parts["horizon"],
            rate=parts["interest_rate"],
            drift=parts["drift"],
            volatility=parts["volatility"],
            cone=parts["cone"],
            intensity=parts["intensity"],
            loading=parts["loading"],
            reinsurance_loading=parts["reinsurance_loading"],
            claims=parts["claims"],
            coefficient_mode=mode,
            ellipticity=float(spec.get("ellipticity", 1e-8)),
        )
        logger.info("[parser] assets=%d brownian_dim=%d mode=%s", model.n_assets, model.brownian_dim, mode)
        return model


def _promote(value: Any, rank: int) -> np.ndarray:
    """Scalars become 1-vectors or 1x1 matrices; a vector given for a matrix becomes its diagonal."""
    arr = np.asarray(value, dtype=float)
    if rank == 0:
        if arr.ndim != 0:
            msg = f"expected a number, got shape {arr.shape}"
            raise ValueError(msg)
        return arr
    if arr.ndim == 0:
        arr = arr.reshape((1,) * rank)
    if rank == 2 and arr.ndim == 1:  # noqa: PLR2004
        arr = np.diag(arr)
    if arr.ndim != rank:
        msg = f"expected rank {rank}, got shape {arr.shape}"
        raise ValueError(msg)
    return arr


def parse_model(spec: dict[str, Any]) -> MarketModel:
    return ModelParser(spec).parse()
