"""
Backward solver for the partially coupled Riccati pair (P1, P2).

Both equations are integrated with classical RK4 on U = ln P, so positivity is
structural. In the claim-count modulated regime every level n = 0..N_max is a
component of one vector system: between claims

    dP(t, n)/dt = -[2 r P + F*(P) + G*(P, Gamma)] - lambda Gamma(t, n),
    Gamma(t, n) = P(t, n + 1) - P(t, n),  Gamma(t, N_max) = 0.

P2 is solved first on all levels, then P1 reads P2 through a cubic Hermite
interpolant in ln P2.
"""

from __future__ import annotations

import dataclasses
import logging
from dataclasses import dataclass, field
from typing import TYPE_CHECKING, Any, Callable, NamedTuple

import numpy as np
import pandas as pd
from scipy import interpolate, linalg, stats

from mvreinsure.exceptions import BoundsCertificateError, GridConvergenceError, SolverError
from mvreinsure.model import sample_times
from mvreinsure.optimizers import F_star, G1_star, G2_star, OptimizerInputs

if TYPE_CHECKING:
    from mvreinsure.model import MarketModel

logger = logging.getLogger(__name__)

DEFAULT_STEPS = 2000
DEFAULT_TAIL_TOLERANCE = 1e-8
BOUNDS_TOLERANCE = 1e-9
LEMMA_MARGIN = 1e-9

RHS = Callable[[int, np.ndarray], np.ndarray]


def default_n_max(model: MarketModel, tail: float = DEFAULT_TAIL_TOLERANCE) -> int:
    """Smallest N with P(N_T > N) < tail; a single level in the deterministic mode."""
    if model.coefficient_mode == "deterministic":
        return 0
    law = stats.poisson(model.intensity * model.horizon)
    n = 0
    while law.sf(n) >= tail:
        n += 1
    return n


@dataclass(frozen=True, eq=False)
class SREGrid:
    t_nodes: np.ndarray
    n_max: int = 0

    def __post_init__(self) -> None:
        nodes = np.asarray(self.t_nodes, dtype=float)
        if nodes.ndim != 1 or nodes.shape[0] < 2:  # noqa: PLR2004
            msg = "time grid needs at least one step"
            raise SolverError(msg)
        if nodes[0] != 0.0 or np.any(np.diff(nodes) <= 0):
            msg = "time grid must start at 0 and increase strictly"
            raise SolverError(msg)
        if self.n_max < 0:
            msg = f"n_max must be nonnegative, got {self.n_max}"
            raise SolverError(msg)
        object.__setattr__(self, "t_nodes", nodes)

    @classmethod
    def uniform(cls, horizon: float, steps: int = DEFAULT_STEPS, n_max: int = 0) -> SREGrid:
        if steps < 1:
            msg = f"grid needs at least one step, got {steps}"
            raise SolverError(msg)
        nodes = np.linspace(0.0, horizon, steps + 1)
        nodes[-1] = horizon
        return cls(nodes, n_max)

    @classmethod
    def for_model(cls, model: MarketModel, steps: int = DEFAULT_STEPS, n_max: int | None = None) -> SREGrid:
        return cls.uniform(model.horizon, steps, default_n_max(model) if n_max is None else n_max)

    @property
    def steps(self) -> int:
        return self.t_nodes.shape[0] - 1

    @property
    def horizon(self) -> float:
        return float(self.t_nodes[-1])

    @property
    def levels(self) -> int:
        return self.n_max + 1

    def halved(self) -> SREGrid:
        """Same grid with every second node, i.e. twice the step."""
        if self.steps < 2:  # noqa: PLR2004
            msg = "cannot coarsen a single-step grid"
            raise GridConvergenceError(msg)
        nodes = self.t_nodes[::2]
        if nodes[-1] != self.t_nodes[-1]:
            nodes = np.append(nodes, self.t_nodes[-1])
        return SREGrid(nodes, self.n_max)


class Bounds(NamedTuple):
    theta: float
    upper: float


def bounds_certificate(model: MarketModel, n_max: int = 0) -> Bounds:
    """
    Certified band [theta, M] for P_i and P_i + Gamma_i.

    theta = exp(-c1 T) with c1 = max(0, sup[max(lambda, b^2/(lambda sigma_Y^2)) + mu^T (sigma sigma^T)^-1 mu - 2r])
    and M = exp(int_0^T 2|r|).
    """
    b = model.derived.b
    jump_rate = max(model.intensity, b * b / (model.intensity * model.sigma_Y2))
    c1 = 0.0
    for n in range(n_max + 1):
        for t in sample_times(model):
            mu, sigma = model.mu(t, n), model.sigma(t, n)
            sharpe = float(mu @ linalg.solve(sigma @ sigma.T, mu, assume_a="pos"))
            c1 = max(c1, jump_rate + sharpe - 2.0 * model.r(t))
    return Bounds(theta=float(np.exp(-c1 * model.horizon)), upper=float(np.exp(2.0 * model.short_rate.abs_integral())))


def stage_times(grid: SREGrid) -> np.ndarray:
    """RK4 stage times: entry 2k is node k, entry 2k + 1 the midpoint of step k."""
    t = grid.t_nodes
    times = np.empty(2 * grid.steps + 1)
    times[0::2] = t
    times[1::2] = 0.5 * (t[:-1] + t[1:])
    return times


class InvestmentTable:
    """
    Investment minimizers at P = 1 on every stage time and claim-count level.

    With Lambda = 0 the investment part is positively homogeneous in P, so
    F_i*(P) = P * F_i*(1) and the argmin does not depend on P. Each distinct
    coefficient pair is minimized once.
    """

    def __init__(self, model: MarketModel, grid: SREGrid, branch: int, radius: float | None = None) -> None:
        times = stage_times(grid)
        levels = grid.levels
        mu = np.stack([model.mu_batch(times, np.full(times.shape, n)) for n in range(levels)], axis=1)
        sigma = np.stack([model.sigma_batch(times, np.full(times.shape, n)) for n in range(levels)], axis=1)
        self.values = np.empty((times.shape[0], levels))
        self.argmins = np.empty((times.shape[0], levels, model.n_assets))
        solved: dict[tuple[bytes, bytes], tuple[float, np.ndarray]] = {}
        last: dict[int, np.ndarray] = {}
        base = OptimizerInputs.from_model(model, 0.0, 0)
        for j in range(times.shape[0]):
            for n in range(levels):
                key = (mu[j, n].tobytes(), sigma[j, n].tobytes())
                if key not in solved:
                    inputs = dataclasses.replace(base, mu=mu[j, n], sigma=sigma[j, n])
                    solved[key] = F_star(branch, inputs, model.cone, radius=radius, start=last.get(n))
                    last[n] = solved[key][1]
                self.values[j, n], self.argmins[j, n] = solved[key]
        logger.debug("[sre] branch %d: %d distinct investment problems", branch, len(solved))

    def at_nodes(self) -> tuple[np.ndarray, np.ndarray]:
        return self.values[0::2], self.argmins[0::2]


class ClaimsInputs:
    """Builds `OptimizerInputs` for the reinsurance minimizers from one template."""

    def __init__(self, model: MarketModel) -> None:
        self.base = OptimizerInputs.from_model(model, 0.0, 0)

    def __call__(self, p1: Any, gamma1: Any, p2: Any, gamma2: Any) -> OptimizerInputs:
        # jump increments carry a trailing atom axis of length one (constant in claim size)
        return self.base.at_state(p1, np.asarray(gamma1)[..., np.newaxis], p2, np.asarray(gamma2)[..., np.newaxis])


def _level_jumps(p: np.ndarray) -> np.ndarray:
    """Gamma(n) = P(n+1) - P(n) along the last axis, closed by zero at the top level."""
    gamma = np.zeros_like(p)
    gamma[..., :-1] = p[..., 1:] - p[..., :-1]
    return gamma


def _rk4_backward(grid: SREGrid, rhs: RHS, levels: int) -> tuple[np.ndarray, np.ndarray]:
    """
    Integrate dU/dt = rhs(j, U) from U(T) = 0 down to t = 0.

    `rhs` receives the stage index into `stage_times(grid)`. Returns U and dU/dt at the nodes.
    """
    steps = grid.steps
    t = grid.t_nodes
    u = np.zeros((steps + 1, levels))
    du = np.zeros_like(u)
    slope = rhs(2 * steps, u[-1])
    for k in range(steps - 1, -1, -1):
        h = t[k + 1] - t[k]
        du[k + 1] = slope
        k2 = rhs(2 * k + 1, u[k + 1] - 0.5 * h * slope)
        k3 = rhs(2 * k + 1, u[k + 1] - 0.5 * h * k2)
        k4 = rhs(2 * k, u[k + 1] - h * k3)
        u[k] = u[k + 1] - h / 6.0 * (slope + 2.0 * k2 + 2.0 * k3 + k4)
        slope = rhs(2 * k, u[k])
    du[0] = slope
    return u, du


@dataclass(frozen=True, eq=False)
class P2Solution:
    grid: SREGrid
    log_p2: np.ndarray
    dlog_p2: np.ndarray
    investment: InvestmentTable = field(repr=False)

    @property
    def p2(self) -> np.ndarray:
        return np.exp(self.log_p2)

    def interpolant(self) -> interpolate.CubicHermiteSpline:
        return interpolate.CubicHermiteSpline(self.grid.t_nodes, self.log_p2, self.dlog_p2, axis=0)


def _check_model_grid(model: MarketModel, grid: SREGrid) -> None:
    if abs(grid.horizon - model.horizon) > 1e-12 * max(1.0, model.horizon):
        msg = f"grid ends at {grid.horizon}, model horizon is {model.horizon}"
        raise SolverError(msg)


def solve_P2(model: MarketModel, grid: SREGrid) -> P2Solution:  # noqa: N802
    """Integrate the P2 equation on every claim-count level."""
    _check_model_grid(model, grid)
    levels = grid.levels
    lam = model.intensity
    investment = InvestmentTable(model, grid, 2)
    drift = 2.0 * model.rate.at(stage_times(grid))[:, np.newaxis] + investment.values
    claims = ClaimsInputs(model)

    def rhs(j: int, u: np.ndarray) -> np.ndarray:
        p = np.exp(u)
        gamma = _level_jumps(p)
        g2, _ = G2_star(claims(p, 0.0, p, gamma))
        return -(drift[j] + g2 / p + lam * gamma / p)

    log_p2, dlog_p2 = _rk4_backward(grid, rhs, levels)
    logger.info("[sre] P2(0)=%.10g steps=%d levels=%d", np.exp(log_p2[0, 0]), grid.steps, levels)
    return P2Solution(grid=grid, log_p2=log_p2, dlog_p2=dlog_p2, investment=investment)


def _solve_p1(
    model: MarketModel,
    grid: SREGrid,
    p2_solution: P2Solution,
    truncation: float | None,
) -> tuple[np.ndarray, InvestmentTable]:
    _check_model_grid(model, grid)
    if p2_solution.grid.levels != grid.levels or p2_solution.grid.steps != grid.steps:
        msg = "P2 must be solved on the same grid as P1"
        raise SolverError(msg)
    levels = grid.levels
    lam = model.intensity
    times = stage_times(grid)
    investment = InvestmentTable(model, grid, 1, radius=truncation)
    drift = 2.0 * model.rate.at(times)[:, np.newaxis] + investment.values
    claims = ClaimsInputs(model)
    p2 = np.exp(p2_solution.interpolant()(times))
    gamma2 = _level_jumps(p2)

    def rhs(j: int, u: np.ndarray) -> np.ndarray:
        p1 = np.exp(u)
        gamma1 = _level_jumps(p1)
        g1, _ = G1_star(claims(p1, gamma1, p2[j], gamma2[j]), upper=truncation)
        return -(drift[j] + g1 / p1 + lam * gamma1 / p1)

    log_p1, _ = _rk4_backward(grid, rhs, levels)
    return log_p1, investment


@dataclass(frozen=True, eq=False)
class SRESolution:
    """Node tables of the Riccati pair and the cached pointwise minimizers."""

    model: MarketModel = field(repr=False)
    grid: SREGrid
    p1: np.ndarray
    p2: np.ndarray
    gamma1: np.ndarray
    gamma2: np.ndarray
    v1: np.ndarray
    v2: np.ndarray
    u1: np.ndarray
    u2: np.ndarray
    f1: np.ndarray
    f2: np.ndarray
    g1: np.ndarray
    g2: np.ndarray
    bounds: Bounds
    truncation: float | None = None

    @property
    def t_nodes(self) -> np.ndarray:
        return self.grid.t_nodes

    @property
    def p1_0(self) -> float:
        return float(self.p1[0, 0])

    @property
    def p2_0(self) -> float:
        return float(self.p2[0, 0])

    def node_index(self, t: Any) -> np.ndarray:
        """Index of the grid node at or before t."""
        idx = np.searchsorted(self.grid.t_nodes, np.asarray(t, dtype=float), side="right") - 1
        return np.clip(idx, 0, self.grid.steps)

    def to_frame(self) -> pd.DataFrame:
        """Table in t-major, then n, row order."""
        t_count, levels = self.p1.shape
        m = self.v1.shape[-1]
        frame: dict[str, Any] = {
            "t": np.repeat(self.grid.t_nodes, levels),
            "n": np.tile(np.arange(levels), t_count),
            "P1": self.p1.ravel(),
            "P2": self.p2.ravel(),
            "Gamma1": self.gamma1.ravel(),
            "Gamma2": self.gamma2.ravel(),
        }
        for name, table in (("v1_hat", self.v1), ("v2_hat", self.v2)):
            for i in range(m):
                frame[name if m == 1 else f"{name}_{i}"] = table[..., i].ravel()
        frame["u1_hat"] = self.u1.ravel()
        frame["u2_hat"] = self.u2.ravel()
        return pd.DataFrame(frame)


def _assemble(
    model: MarketModel,
    grid: SREGrid,
    p2_solution: P2Solution,
    log_p1: np.ndarray,
    investment: InvestmentTable,
    truncation: float | None,
) -> SRESolution:
    p1, p2 = np.exp(log_p1), p2_solution.p2
    gamma1, gamma2 = _level_jumps(p1), _level_jumps(p2)
    phi1, v1 = investment.at_nodes()
    phi2, v2 = p2_solution.investment.at_nodes()
    inputs = ClaimsInputs(model)(p1, gamma1, p2, gamma2)
    g1, u1 = G1_star(inputs, upper=truncation)
    g2, u2 = G2_star(inputs)
    solution = SRESolution(
        model=model,
        grid=grid,
        p1=p1,
        p2=p2,
        gamma1=gamma1,
        gamma2=gamma2,
        v1=v1,
        v2=v2,
        u1=np.asarray(u1),
        u2=np.asarray(u2),
        f1=phi1 * p1,
        f2=phi2 * p2,
        g1=np.asarray(g1),
        g2=np.asarray(g2),
        bounds=bounds_certificate(model, grid.n_max),
        truncation=truncation,
    )
    check_certificate(solution)
    return solution


def check_certificate(solution: SRESolution, tol: float = BOUNDS_TOLERANCE) -> None:
    """
    Verify theta <= P_i, P_i + Gamma_i <= M at every node and the strict P2 inequality.

    Raises:
        BoundsCertificateError: first offending node
        SolverError: P2(0) exp(-2 int r) is not below one
    """
    theta, upper = solution.bounds
    for name, p, gamma in (("P1", solution.p1, solution.gamma1), ("P2", solution.p2, solution.gamma2)):
        for table, label in ((p, name), (p + gamma, f"{name}+Gamma")):
            bad = np.argwhere((table < theta - tol) | (table > upper + tol))
            if bad.size:
                k, n = bad[0]
                msg = (
                    f"{label}={table[k, n]:.12g} outside [{theta:.6g}, {upper:.6g}] "
                    f"at t={solution.grid.t_nodes[k]:g}, n={n}"
                )
                raise BoundsCertificateError(msg)
    ratio = solution.p2_0 * np.exp(-2.0 * solution.model.short_rate.integral())
    if not ratio < 1.0 - LEMMA_MARGIN:
        msg = f"P2(0) exp(-2 int r) = {ratio:.12g} is not below one; mean-variance frontier undefined"
        raise SolverError(msg)


def solve_P1(model: MarketModel, grid: SREGrid, p2_solution: P2Solution) -> SRESolution:  # noqa: N802
    """Integrate the P1 equation given P2 and assemble the full solution."""
    log_p1, investment = _solve_p1(model, grid, p2_solution, None)
    logger.info("[sre] P1(0)=%.10g", np.exp(log_p1[0, 0]))
    return _assemble(model, grid, p2_solution, log_p1, investment, None)


def solve_truncated(k: float, model: MarketModel, grid: SREGrid, p2_solution: P2Solution) -> SRESolution:
    """P1 with the inner minimizations restricted to |v| <= k and u <= k."""
    if k < 1:
        msg = f"truncation level must be at least 1, got {k}"
        raise SolverError(msg)
    log_p1, investment = _solve_p1(model, grid, p2_solution, float(k))
    logger.info("[sre] P1^%g(0)=%.10g", k, np.exp(log_p1[0, 0]))
    return _assemble(model, grid, p2_solution, log_p1, investment, float(k))


def solve(model: MarketModel, grid: SREGrid) -> SRESolution:
    return solve_P1(model, grid, solve_P2(model, grid))


def grid_convergence(model: MarketModel, grid: SREGrid, solution: SRESolution | None = None) -> float:
    """Relative change of (P1(0), P2(0)) when the step is doubled."""
    solution = solution or solve(model, grid)
    coarse = solve(model, grid.halved())
    return max(
        abs(coarse.p1_0 - solution.p1_0) / solution.p1_0,
        abs(coarse.p2_0 - solution.p2_0) / solution.p2_0,
    )


class SREState(NamedTuple):
    p1: float
    p2: float
    gamma1: float
    gamma2: float
    v1: np.ndarray
    v2: np.ndarray
    u1: float
    u2: float


def sre_at(solution: SRESolution, t: float, n: int) -> SREState:
    """
    Evaluate the solution off-grid.

    ln P is interpolated linearly between nodes; the minimizers are recomputed at the
    interpolated values.
    """
    grid = solution.grid
    if not 0.0 <= t <= grid.horizon:
        msg = f"t={t} outside [0, {grid.horizon}]"
        raise ValueError(msg)
    if not 0 <= n <= grid.n_max:
        msg = f"n={n} outside [0, {grid.n_max}]"
        raise ValueError(msg)
    k = int(min(solution.node_index(t), grid.steps - 1))
    t0, t1 = grid.t_nodes[k], grid.t_nodes[k + 1]
    w = (t - t0) / (t1 - t0)

    def level(table: np.ndarray, j: int) -> float:
        if w == 0.0:
            return float(table[k, j])
        if w == 1.0:
            return float(table[k + 1, j])
        return float(np.exp((1.0 - w) * np.log(table[k, j]) + w * np.log(table[k + 1, j])))

    top = min(n + 1, grid.n_max)
    p1, p2 = level(solution.p1, n), level(solution.p2, n)
    gamma1 = level(solution.p1, top) - p1 if top > n else 0.0
    gamma2 = level(solution.p2, top) - p2 if top > n else 0.0

    model = solution.model
    unit = OptimizerInputs.from_model(model, t, n, p1=p1, p2=p2)
    _, v1 = F_star(1, unit, model.cone, radius=solution.truncation)
    _, v2 = F_star(2, unit, model.cone)
    inputs = ClaimsInputs(model)(p1, gamma1, p2, gamma2)
    _, u1 = G1_star(inputs, upper=solution.truncation)
    _, u2 = G2_star(inputs)
    return SREState(p1, p2, gamma1, gamma2, v1, v2, float(u1), float(u2))
