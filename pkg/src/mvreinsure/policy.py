"""Lagrange layer: h-path, relaxed value, optimal multiplier, feedback rule and the efficient frontier."""

from __future__ import annotations

import dataclasses
import logging
from dataclasses import dataclass, field
from typing import TYPE_CHECKING, Any, Sequence

import numpy as np
import pandas as pd

from mvreinsure.exceptions import FrontierError, InfeasibleTargetError, SolverError
from mvreinsure.sre import sre_at

if TYPE_CHECKING:
    from mvreinsure.model import MarketModel
    from mvreinsure.sre import SREGrid, SRESolution

logger = logging.getLogger(__name__)

FEASIBILITY_TOLERANCE = 1e-12


def h_values(zeta: float, model: MarketModel, t: Any) -> np.ndarray:
    """h_t = zeta exp(-int_t^T r) - a int_t^T exp(-int_t^s r) ds, vectorized in t."""
    rate = model.short_rate
    growth = rate.growth(t)
    annuity = rate.annuity(t)
    total_growth = rate.growth(model.horizon)
    total_annuity = rate.annuity(model.horizon)
    a = model.derived.a
    return zeta * np.exp(growth - total_growth) - a * np.exp(growth) * (total_annuity - annuity)


@dataclass(frozen=True, eq=False)
class HPath:
    zeta: float
    model: MarketModel = field(repr=False)
    t_nodes: np.ndarray = field(repr=False)
    values: np.ndarray = field(repr=False)

    def __call__(self, t: Any) -> np.ndarray:
        return h_values(self.zeta, self.model, t)

    @property
    def h0(self) -> float:
        return float(self.values[0])


def h_path(zeta: float, model: MarketModel, grid: SREGrid | np.ndarray) -> HPath:
    t_nodes = np.asarray(getattr(grid, "t_nodes", grid), dtype=float)
    values = h_values(zeta, model, t_nodes)
    values[-1] = zeta
    return HPath(zeta=float(zeta), model=model, t_nodes=t_nodes, values=values)


def riskless_mean(x: float, model: MarketModel) -> float:
    """Terminal wealth of the riskless strategy: x e^{int r} + a int_0^T e^{int_t^T r} dt."""
    rate = model.short_rate
    return float(np.exp(rate.growth(model.horizon)) * (x + model.derived.a * rate.annuity(model.horizon)))


def _discounted_p2(model: MarketModel, p2_0: float) -> tuple[float, float]:
    discount = float(np.exp(-model.short_rate.integral()))
    rho = p2_0 * discount * discount
    if not rho < 1.0:
        msg = f"P2(0) exp(-2 int r) = {rho:.12g} is not below one; Riccati solution is inconsistent"
        raise SolverError(msg)
    return discount, rho


def _check_feasible(z: float, mean: float) -> None:
    if z < mean - FEASIBILITY_TOLERANCE * (1.0 + abs(mean)):
        msg = f"target mean z={z:.12g} is below the riskless mean {mean:.12g}"
        raise InfeasibleTargetError(msg)


def zeta_hat(z: float, x: float, model: MarketModel, p2_0: float) -> float:
    """
    Optimal multiplier for target mean z.

    Raises:
        InfeasibleTargetError: z below the riskless mean
        SolverError: P2(0) exp(-2 int r) >= 1
    """
    discount, rho = _discounted_p2(model, p2_0)
    mean = riskless_mean(x, model)
    _check_feasible(z, mean)
    base = x + model.derived.a * float(model.short_rate.annuity(model.horizon))
    return (p2_0 * discount * base - z) / (rho - 1.0)


def relaxed_value(zeta: float, x: float, z: float, p1_0: float, p2_0: float, model: MarketModel) -> float:
    """J(zeta) = P1(0) ((x - h0)^+)^2 + P2(0) ((x - h0)^-)^2 - (zeta - z)^2."""
    gap = x - float(h_values(zeta, model, 0.0))
    pos, neg = max(gap, 0.0), max(-gap, 0.0)
    return p1_0 * pos * pos + p2_0 * neg * neg - (zeta - z) ** 2


@dataclass(frozen=True)
class FrontierPoint:
    z: float
    variance: float
    zeta_hat: float
    value: float
    riskless_mean: float

    @property
    def stddev(self) -> float:
        return float(np.sqrt(self.variance))


def frontier_variance(
    z: float,
    x: float,
    model: MarketModel,
    p2_0: float,
    p1_0: float | None = None,
) -> FrontierPoint:
    """
    Minimal variance for target mean z.

    Var = rho / (1 - rho) (z - riskless mean)^2 with rho = P2(0) exp(-2 int r). On the
    frontier x - h0 <= 0, so P1(0) only enters J through a vanishing term.
    """
    _, rho = _discounted_p2(model, p2_0)
    mean = riskless_mean(x, model)
    zeta = zeta_hat(z, x, model, p2_0)
    excess = max(z - mean, 0.0)
    variance = rho / (1.0 - rho) * excess * excess
    value = relaxed_value(zeta, x, z, p2_0 if p1_0 is None else p1_0, p2_0, model)
    return FrontierPoint(z=float(z), variance=float(variance), zeta_hat=float(zeta), value=value, riskless_mean=mean)


def frontier_slope(model: MarketModel, p2_0: float) -> float:
    """d stddev / d z on the efficient half-line."""
    _, rho = _discounted_p2(model, p2_0)
    return float(np.sqrt(rho / (1.0 - rho)))


@dataclass(frozen=True)
class FrontierRow:
    z: float
    point: FrontierPoint | None = None
    error: str | None = None

    @property
    def feasible(self) -> bool:
        return self.point is not None


def frontier_table(
    z_list: Sequence[float],
    x: float,
    model: MarketModel,
    p2_0: float,
    p1_0: float | None = None,
) -> list[FrontierRow]:
    """Frontier point per target; infeasible targets get an error row instead."""
    rows: list[FrontierRow] = []
    for z in z_list:
        try:
            rows.append(FrontierRow(z=float(z), point=frontier_variance(z, x, model, p2_0, p1_0)))
        except InfeasibleTargetError as exc:
            logger.info("[frontier] z=%s infeasible: %s", z, exc)
            rows.append(FrontierRow(z=float(z), error=str(exc)))
    return rows


def frontier_frame(rows: Sequence[FrontierRow]) -> pd.DataFrame:
    records = []
    for row in rows:
        if row.point is None:
            records.append(
                {"z": row.z, "stddev": np.nan, "variance": np.nan, "zeta_hat": np.nan, "J": np.nan, "status": "infeasible"}
            )
        else:
            p = row.point
            records.append(
                {"z": p.z, "stddev": p.stddev, "variance": p.variance, "zeta_hat": p.zeta_hat, "J": p.value, "status": "ok"}
            )
    return pd.DataFrame.from_records(records, columns=["z", "stddev", "variance", "zeta_hat", "J", "status"])


@dataclass(frozen=True, eq=False)
class FeedbackPolicy:
    """
    Two-sided linear feedback in the wealth gap X - h_t.

    pi = v1 (X-h)^+ + v2 (X-h)^-,  q = u1 (X-h)^+ + u2 (X-h)^-.
    `pi_scale` / `q_scale` multiply the minimizers; they are 1 for the optimal rule and
    let the simulator run perturbed (still admissible) rules.
    """

    solution: SRESolution = field(repr=False)
    zeta: float
    x: float
    h: HPath = field(repr=False)
    z: float | None = None
    pi_scale: float = 1.0
    q_scale: float = 1.0

    @property
    def model(self) -> MarketModel:
        return self.solution.model

    def perturbed(self, *, pi_scale: float = 1.0, q_scale: float = 1.0) -> FeedbackPolicy:
        return dataclasses.replace(self, pi_scale=pi_scale, q_scale=q_scale)

    def coefficients(self, t: Any, n: Any) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
        """Minimizers at the grid node at or before t, level min(n, N_max); batched over paths."""
        sol = self.solution
        k = sol.node_index(t)
        level = np.minimum(np.asarray(n), sol.grid.n_max)
        return (
            self.pi_scale * sol.v1[k, level],
            self.pi_scale * sol.v2[k, level],
            self.q_scale * sol.u1[k, level],
            self.q_scale * sol.u2[k, level],
        )

    def controls(self, t: Any, n: Any, wealth: Any) -> tuple[np.ndarray, np.ndarray]:
        v1, v2, u1, u2 = self.coefficients(t, n)
        gap = np.asarray(wealth, dtype=float) - self.h(t)
        pos, neg = np.maximum(gap, 0.0), np.maximum(-gap, 0.0)
        return v1 * pos[..., np.newaxis] + v2 * neg[..., np.newaxis], u1 * pos + u2 * neg


def feedback_controls(t: float, n: int, wealth: float, policy: FeedbackPolicy) -> tuple[np.ndarray, float]:
    """Optimal (pi, q) at one point, with minimizers evaluated exactly at (t, n)."""
    state = sre_at(policy.solution, t, min(n, policy.solution.grid.n_max))
    gap = wealth - float(policy.h(t))
    pos, neg = max(gap, 0.0), max(-gap, 0.0)
    pi = policy.pi_scale * (state.v1 * pos + state.v2 * neg)
    q = policy.q_scale * (state.u1 * pos + state.u2 * neg)
    return pi, q


def relaxed_policy(solution: SRESolution, x: float, zeta: float) -> FeedbackPolicy:
    return FeedbackPolicy(solution=solution, zeta=float(zeta), x=float(x), h=h_path(zeta, solution.model, solution.grid))


def frontier_policy(solution: SRESolution, x: float, z: float) -> FeedbackPolicy:
    """
    Efficient feedback rule for target mean z.

    Raises:
        FrontierError: the initial gap x - h0 is positive (frontier branch not reached)
    """
    zeta = zeta_hat(z, x, solution.model, solution.p2_0)
    policy = dataclasses.replace(relaxed_policy(solution, x, zeta), z=float(z))
    gap = x - policy.h.h0
    if gap > FEASIBILITY_TOLERANCE * (1.0 + abs(x)):
        msg = f"initial gap x - h0 = {gap:.3e} is positive for z={z}"
        raise FrontierError(msg)
    logger.info("[policy] z=%s zeta_hat=%.10g h0=%.10g", z, zeta, policy.h.h0)
    return policy
