"""
Monte Carlo simulation of the controlled wealth process and frontier validation.

Wealth follows the raw-measure form of the surplus dynamics

    dX = [r X + pi^T mu + (b + lambda b_Y) q + a] dt + pi^T sigma dW - q Y dN,

which equals the compensated form term by term. Claim times are exact exponential
arrivals; Brownian increments are drawn on sub-steps no longer than `dt_max`, split at
the claim times. Every path owns a counter-based Philox stream keyed by (seed, path),
so a path's randomness does not depend on how many other paths run.
"""

from __future__ import annotations

import abc
import logging
from dataclasses import asdict, dataclass, field
from typing import TYPE_CHECKING, Any, Literal, NamedTuple, Sequence

import numpy as np
import pandas as pd

from mvreinsure.exceptions import ConfigError, InadmissibleStrategyError, SimulationError
from mvreinsure.policy import FeedbackPolicy, frontier_policy, frontier_variance, relaxed_value

if TYPE_CHECKING:
    from mvreinsure.model import MarketModel
    from mvreinsure.sre import SRESolution

logger = logging.getLogger(__name__)

SimulationMode = Literal["euler", "explicit-product"]
SIMULATION_MODES: tuple[str, ...] = ("euler", "explicit-product")
ARRIVAL_BLOCK = 8
CONTROL_TOLERANCE = 1e-12


@dataclass(frozen=True)
class SimConfig:
    n_paths: int = 100_000
    seed: int = 42
    dt_max: float = 0.01
    mode: SimulationMode = "explicit-product"
    record_paths: bool = False
    chunk_size: int = 10_000
    x: float = 1.0

    def __post_init__(self) -> None:
        if self.n_paths < 1:
            msg = f"n_paths must be at least 1, got {self.n_paths}"
            raise ConfigError(msg)
        if not self.dt_max > 0:
            msg = f"dt_max must be positive, got {self.dt_max}"
            raise ConfigError(msg)
        if self.mode not in SIMULATION_MODES:
            msg = f"unknown simulation mode {self.mode!r}, expected one of {', '.join(SIMULATION_MODES)}"
            raise ConfigError(msg)
        if self.chunk_size < 1:
            msg = f"chunk_size must be at least 1, got {self.chunk_size}"
            raise ConfigError(msg)
        if self.seed < 0:
            msg = f"seed must be nonnegative, got {self.seed}"
            raise ConfigError(msg)

    def as_dict(self) -> dict[str, Any]:
        return asdict(self)


def path_generator(seed: int, path: int) -> np.random.Generator:
    """Independent counter-based stream for one path."""
    return np.random.Generator(np.random.Philox(key=seed, counter=[0, 0, 0, path]))


class Strategy(abc.ABC):
    """Investment-reinsurance rule (t, n, X) -> (pi, q), batched over paths."""

    name: str = "strategy"

    @abc.abstractmethod
    def controls(self, t: np.ndarray, n: np.ndarray, wealth: np.ndarray) -> tuple[np.ndarray, np.ndarray]: ...

    def gap(self, t: np.ndarray, wealth: np.ndarray) -> np.ndarray | None:
        """Wealth gap X - h_t for feedback rules, None otherwise."""
        return None


class FixedStrategy(Strategy):
    name = "fixed"

    def __init__(self, pi: Sequence[float], q: float) -> None:
        self.pi = np.atleast_1d(np.asarray(pi, dtype=float))
        self.q = float(q)

    def controls(self, t: np.ndarray, n: np.ndarray, wealth: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        size = np.shape(wealth)[0]
        return np.broadcast_to(self.pi, (size, self.pi.shape[0])), np.full(size, self.q)


class ZeroStrategy(FixedStrategy):
    name = "zero"

    def __init__(self, n_assets: int) -> None:
        super().__init__(np.zeros(n_assets), 0.0)


class FeedbackStrategy(Strategy):
    name = "feedback"

    def __init__(self, policy: FeedbackPolicy) -> None:
        self.policy = policy

    def controls(self, t: np.ndarray, n: np.ndarray, wealth: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        return self.policy.controls(t, n, wealth)

    def gap(self, t: np.ndarray, wealth: np.ndarray) -> np.ndarray:
        return wealth - self.policy.h(t)


@dataclass
class PathRecord:
    path: int
    claim_times: np.ndarray
    claim_sizes: np.ndarray
    times: np.ndarray | None = None
    wealth: np.ndarray | None = None
    pi: np.ndarray | None = None
    q: np.ndarray | None = None
    terminal: float = np.nan


@dataclass
class SimulationResult:
    terminal: np.ndarray
    q_above_one_time: np.ndarray
    horizon: float
    strategy: str
    config: SimConfig
    max_gap: np.ndarray | None = None
    records: list[PathRecord] = field(default_factory=list)

    @property
    def n_paths(self) -> int:
        return int(self.terminal.shape[0])

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame(
            {
                "path": np.arange(self.n_paths),
                "X_T": self.terminal,
                "q_above_one_time": self.q_above_one_time,
            }
        )


@dataclass
class Skeleton:
    """Per-chunk random inputs padded to a common number of sub-steps."""

    paths: np.ndarray
    times: np.ndarray
    claim_end: np.ndarray
    sizes: np.ndarray
    normals: np.ndarray
    steps: np.ndarray
    claim_times: list[np.ndarray]
    claim_sizes: list[np.ndarray]


def _path_inputs(
    model: MarketModel, seed: int, path: int, base: np.ndarray
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    rng = path_generator(seed, path)
    horizon = model.horizon
    arrivals: list[float] = []
    clock = 0.0
    while clock <= horizon:
        for gap in rng.exponential(1.0 / model.intensity, size=ARRIVAL_BLOCK):
            clock += gap
            if clock > horizon:
                break
            arrivals.append(clock)
    times = np.asarray(arrivals, dtype=float)
    sizes = model.claims.sample(rng, times.shape[0])
    normals = rng.standard_normal((base.shape[0] - 1 + times.shape[0], model.brownian_dim))
    return times, sizes, normals


def draw_skeleton(model: MarketModel, config: SimConfig, paths: np.ndarray) -> Skeleton:
    steps = max(1, int(np.ceil(model.horizon / config.dt_max - 1e-12)))
    base = np.linspace(0.0, model.horizon, steps + 1)
    drawn = [_path_inputs(model, config.seed, int(p), base) for p in paths]
    width = steps + max(t.shape[0] for t, _, _ in drawn)
    count = paths.shape[0]
    times = np.full((count, width + 1), model.horizon)
    times[:, 0] = 0.0
    claim_end = np.zeros((count, width), dtype=bool)
    sizes = np.zeros((count, width))
    normals = np.zeros((count, width, model.brownian_dim))
    used = np.zeros(count, dtype=int)
    for i, (claim_times, claim_sizes, z) in enumerate(drawn):
        ends = np.concatenate((base[1:], claim_times))
        is_claim = np.concatenate((np.zeros(steps, dtype=bool), np.ones(claim_times.shape[0], dtype=bool)))
        order = np.argsort(ends, kind="stable")
        k = ends.shape[0]
        times[i, 1 : k + 1] = ends[order]
        claim_end[i, :k] = is_claim[order]
        sizes[i, :k][claim_end[i, :k]] = claim_sizes
        normals[i, :k] = z
        used[i] = k
    return Skeleton(
        paths=paths,
        times=times,
        claim_end=claim_end,
        sizes=sizes,
        normals=normals,
        steps=used,
        claim_times=[d[0] for d in drawn],
        claim_sizes=[d[1] for d in drawn],
    )


def _check_admissible(model: MarketModel, t: np.ndarray, pi: np.ndarray, q: np.ndarray, paths: np.ndarray) -> None:
    bad_q = q < -CONTROL_TOLERANCE
    bad_pi = ~np.asarray(model.cone.contains(pi, tol=1e-9))
    bad = bad_q | bad_pi
    if bad.any():
        i = int(np.argmax(bad))
        what = f"q={q[i]:.6g} < 0" if bad_q[i] else f"pi={pi[i]} outside the cone"
        msg = f"inadmissible control at t={t[i]:.6g} on path {paths[i]}: {what}"
        raise InadmissibleStrategyError(msg)


class _ChunkState(NamedTuple):
    terminal: np.ndarray
    q_time: np.ndarray
    max_gap: np.ndarray | None
    wealth: np.ndarray | None
    pi: np.ndarray | None
    q: np.ndarray | None


def _run_euler(model: MarketModel, strategy: Strategy, sk: Skeleton, x: float, record: bool) -> _ChunkState:
    b, a = model.derived.b, model.derived.a
    loading = b + model.intensity * model.b_Y
    count, width = sk.claim_end.shape
    wealth = np.full(count, float(x))
    n = np.zeros(count, dtype=int)
    q_time = np.zeros(count)
    gap = strategy.gap(sk.times[:, 0], wealth)
    max_gap = None if gap is None else gap.copy()
    path_w = np.empty((count, width + 1)) if record else None
    path_pi = np.empty((count, width, model.n_assets)) if record else None
    path_q = np.empty((count, width)) if record else None
    if path_w is not None:
        path_w[:, 0] = wealth
    for j in range(width):
        s, dt = sk.times[:, j], sk.times[:, j + 1] - sk.times[:, j]
        pi, q = strategy.controls(s, n, wealth)
        _check_admissible(model, s, pi, q, sk.paths)
        mu, sigma = model.mu_batch(s, n), model.sigma_batch(s, n)
        drift = model.rate.at(s) * wealth + np.einsum("pm,pm->p", pi, mu) + loading * q + a
        dw = np.sqrt(dt)[:, np.newaxis] * sk.normals[:, j]
        wealth = wealth + drift * dt + np.einsum("pm,pmw,pw->p", pi, sigma, dw)
        q_time += np.where(q > 1.0, dt, 0.0)
        if path_pi is not None and path_q is not None:
            path_pi[:, j], path_q[:, j] = pi, q
        jump = sk.claim_end[:, j]
        if jump.any():
            end = sk.times[jump, j + 1]
            _, q_jump = strategy.controls(end, n[jump], wealth[jump])
            wealth[jump] -= q_jump * sk.sizes[jump, j]
            n = n + jump
        if max_gap is not None:
            max_gap = np.maximum(max_gap, strategy.gap(sk.times[:, j + 1], wealth))
        if path_w is not None:
            path_w[:, j + 1] = wealth
    return _ChunkState(wealth, q_time, max_gap, path_w, path_pi, path_q)


def _run_explicit(model: MarketModel, policy: FeedbackPolicy, sk: Skeleton, x: float, record: bool) -> _ChunkState:
    # the gap g = X - h is geometric: on each branch the rule is linear in g
    loading = model.derived.b + model.intensity * model.b_Y
    count, width = sk.claim_end.shape
    gap = np.full(count, float(x - policy.h(0.0)))
    n = np.zeros(count, dtype=int)
    q_time = np.zeros(count)
    max_gap = gap.copy()
    path_w = np.empty((count, width + 1)) if record else None
    path_pi = np.empty((count, width, model.n_assets)) if record else None
    path_q = np.empty((count, width)) if record else None
    if path_w is not None:
        path_w[:, 0] = x
    for j in range(width):
        s, dt = sk.times[:, j], sk.times[:, j + 1] - sk.times[:, j]
        v1, v2, u1, u2 = policy.coefficients(s, n)
        positive = gap > 0
        w = np.where(positive[:, np.newaxis], v1, -v2)
        u = np.where(positive, u1, -u2)
        pi, q = w * gap[:, np.newaxis], u * gap
        _check_admissible(model, s, pi, q, sk.paths)
        mu, sigma = model.mu_batch(s, n), model.sigma_batch(s, n)
        exposure = np.einsum("pm,pmw->pw", w, sigma)
        rate = model.rate.at(s) + np.einsum("pm,pm->p", w, mu) + u * loading - 0.5 * np.sum(exposure**2, axis=1)
        noise = np.einsum("pw,pw->p", exposure, np.sqrt(dt)[:, np.newaxis] * sk.normals[:, j])
        gap = gap * np.exp(rate * dt + noise)
        q_time += np.where(q > 1.0, dt, 0.0)
        if path_pi is not None and path_q is not None:
            path_pi[:, j], path_q[:, j] = pi, q
        jump = sk.claim_end[:, j]
        if jump.any():
            end = sk.times[jump, j + 1]
            _, _, c1, c2 = policy.coefficients(end, n[jump])
            g = gap[jump]
            gap[jump] = np.where(g > 0, g * (1.0 - c1 * sk.sizes[jump, j]), g * (1.0 + c2 * sk.sizes[jump, j]))
            n = n + jump
        max_gap = np.maximum(max_gap, gap)
        if path_w is not None:
            path_w[:, j + 1] = gap + policy.h(sk.times[:, j + 1])
    return _ChunkState(gap + policy.zeta, q_time, max_gap, path_w, path_pi, path_q)


def simulate_paths(model: MarketModel, strategy: Strategy, config: SimConfig) -> SimulationResult:
    """
    Simulate `config.n_paths` wealth paths under `strategy`, chunk by chunk in path order.

    Raises:
        InadmissibleStrategyError: first control outside the cone or with q < 0
        SimulationError: explicit-product mode requested for a non-feedback strategy
    """
    if config.mode == "explicit-product" and not isinstance(strategy, FeedbackStrategy):
        msg = f"explicit-product mode needs a feedback strategy, got {strategy.name!r}"
        raise SimulationError(msg)
    terminal, q_time, gaps = [], [], []
    records: list[PathRecord] = []
    for start in range(0, config.n_paths, config.chunk_size):
        paths = np.arange(start, min(start + config.chunk_size, config.n_paths))
        skeleton = draw_skeleton(model, config, paths)
        if isinstance(strategy, FeedbackStrategy) and config.mode == "explicit-product":
            state = _run_explicit(model, strategy.policy, skeleton, config.x, config.record_paths)
        else:
            state = _run_euler(model, strategy, skeleton, config.x, config.record_paths)
        terminal.append(state.terminal)
        q_time.append(state.q_time)
        if state.max_gap is not None:
            gaps.append(state.max_gap)
        if config.record_paths:
            records.extend(_records(skeleton, state))
        logger.debug("[simulate] paths %d..%d done", paths[0], paths[-1])
    result = SimulationResult(
        terminal=np.concatenate(terminal),
        q_above_one_time=np.concatenate(q_time),
        horizon=model.horizon,
        strategy=strategy.name,
        config=config,
        max_gap=np.concatenate(gaps) if gaps else None,
        records=records,
    )
    logger.info("[simulate] strategy=%s mode=%s paths=%d", strategy.name, config.mode, result.n_paths)
    return result


def _records(sk: Skeleton, state: _ChunkState) -> list[PathRecord]:
    records = []
    for i, path in enumerate(sk.paths):
        k = int(sk.steps[i])
        records.append(
            PathRecord(
                path=int(path),
                claim_times=sk.claim_times[i],
                claim_sizes=sk.claim_sizes[i],
                times=sk.times[i, : k + 1].copy(),
                wealth=None if state.wealth is None else state.wealth[i, : k + 1].copy(),
                pi=None if state.pi is None else state.pi[i, :k].copy(),
                q=None if state.q is None else state.q[i, :k].copy(),
                terminal=float(state.terminal[i]),
            )
        )
    return records


class TerminalStats(NamedTuple):
    mean: float
    variance: float
    se_mean: float
    se_variance: float
    n: int


def estimate_terminal_stats(data: SimulationResult | np.ndarray) -> TerminalStats:
    """Unbiased mean/variance with standard errors; the variance SE uses the fourth central moment."""
    sample = np.asarray(data.terminal if isinstance(data, SimulationResult) else data, dtype=float)
    n = sample.shape[0]
    if n < 2:  # noqa: PLR2004
        msg = f"terminal statistics need at least two paths, got {n}"
        raise SimulationError(msg)
    mean = float(np.mean(sample))
    centred = sample - mean
    variance = float(np.sum(centred * centred) / (n - 1))
    m4 = float(np.mean(centred**4))
    se_var = float(np.sqrt(max(m4 - (n - 3) / (n - 1) * variance * variance, 0.0) / n))
    return TerminalStats(mean=mean, variance=variance, se_mean=float(np.sqrt(variance / n)), se_variance=se_var, n=n)


def second_moment_about(data: SimulationResult | np.ndarray, centre: float) -> tuple[float, float]:
    """E[(X_T - centre)^2] and its standard error."""
    sample = np.asarray(data.terminal if isinstance(data, SimulationResult) else data, dtype=float)
    squared = (sample - centre) ** 2
    return float(np.mean(squared)), float(np.std(squared, ddof=1) / np.sqrt(squared.shape[0]))


def q_exceeds_one_frequency(result: SimulationResult) -> float:
    """Share of path-time during which the retention q exceeded one."""
    return float(np.sum(result.q_above_one_time) / (result.n_paths * result.horizon))


@dataclass(frozen=True)
class ValidationTolerances:
    sigmas: float = 3.0
    variance_rel: float = 0.05
    value_rel: float = 0.05
    sign_explicit: float = 1e-12
    absolute: float = 1e-10
    probes: tuple[tuple[float, float], ...] = ((0.8, 1.0), (1.0, 1.2))


@dataclass
class Criterion:
    name: str
    observed: float
    expected: float
    tolerance: float
    standard_error: float
    passed: bool
    relation: str = "abs-diff"


@dataclass
class ValidationReport:
    z: float
    x: float
    zeta_hat: float
    analytic_variance: float
    analytic_value: float
    n_paths: int
    seed: int
    mode: str
    q_above_one_frequency: float
    criteria: list[Criterion] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.criteria)

    @property
    def failures(self) -> list[Criterion]:
        return [c for c in self.criteria if not c.passed]

    def as_dict(self) -> dict[str, Any]:
        data = asdict(self)
        data["passed"] = self.passed
        return data


def _within(name: str, observed: float, expected: float, tolerance: float, se: float) -> Criterion:
    return Criterion(name, observed, expected, tolerance, se, bool(abs(observed - expected) <= tolerance))


def validate_frontier(
    solution: SRESolution,
    x: float,
    z: float,
    config: SimConfig,
    tolerances: ValidationTolerances | None = None,
    *,
    variance_scale: float = 1.0,
) -> ValidationReport:
    """
    Simulate the efficient rule for target z and compare against the analytic frontier.

    `variance_scale` multiplies the analytic variance before comparison; values other
    than one exist to exercise the rejection path.
    """
    tol = tolerances or ValidationTolerances()
    if config.n_paths < 2:  # noqa: PLR2004
        msg = f"validation needs at least two paths, got {config.n_paths}"
        raise SimulationError(msg)
    model = solution.model
    config = SimConfig(**{**config.as_dict(), "x": x})
    policy = frontier_policy(solution, x, z)
    point = frontier_variance(z, x, model, solution.p2_0, solution.p1_0)
    value = relaxed_value(point.zeta_hat, x, z, solution.p1_0, solution.p2_0, model)
    expected_var = point.variance * variance_scale

    result = simulate_paths(model, FeedbackStrategy(policy), config)
    stats = estimate_terminal_stats(result)
    k = tol.sigmas
    scale = max(1.0, abs(z))
    criteria = [
        _within("mean", stats.mean, z, max(k * stats.se_mean, tol.absolute * scale), stats.se_mean),
        _within(
            "variance",
            stats.variance,
            expected_var,
            max(tol.variance_rel * expected_var, k * stats.se_variance, tol.absolute * scale * scale),
            stats.se_variance,
        ),
    ]

    squared = (result.terminal - point.zeta_hat) ** 2
    moment, se_sq = second_moment_about(result, point.zeta_hat)
    identity = moment - (point.zeta_hat - z) ** 2
    criteria.append(
        _within("value_identity", identity, value, max(tol.value_rel * abs(value), k * se_sq, tol.absolute * scale), se_sq)
    )

    sign_tol = tol.sign_explicit * scale
    if config.mode == "euler":
        sign_tol = float(np.sqrt(config.dt_max)) * max(1.0, abs(x - policy.h.h0))
    worst = float(np.max(result.max_gap)) if result.max_gap is not None else 0.0
    criteria.append(Criterion("sign_invariant", worst, 0.0, sign_tol, 0.0, worst <= sign_tol, relation="upper-bound"))

    for pi_scale, q_scale in tol.probes:
        strategy = FeedbackStrategy(policy.perturbed(pi_scale=pi_scale, q_scale=q_scale))
        perturbed = simulate_paths(model, strategy, config)
        diff = (perturbed.terminal - point.zeta_hat) ** 2 - squared
        se_diff = float(np.std(diff, ddof=1) / np.sqrt(diff.shape[0]))
        mean_diff = float(np.mean(diff))
        criteria.append(
            Criterion(
                f"suboptimality_pi{pi_scale:g}_q{q_scale:g}",
                mean_diff,
                0.0,
                k * se_diff,
                se_diff,
                mean_diff >= -k * se_diff - tol.absolute * scale,
                relation="lower-bound",
            )
        )

    report = ValidationReport(
        z=float(z),
        x=float(x),
        zeta_hat=point.zeta_hat,
        analytic_variance=expected_var,
        analytic_value=value,
        n_paths=config.n_paths,
        seed=config.seed,
        mode=config.mode,
        q_above_one_frequency=q_exceeds_one_frequency(result),
        criteria=criteria,
    )
    for c in criteria:
        logger.info("[validate] %s observed=%.8g expected=%.8g passed=%s", c.name, c.observed, c.expected, c.passed)
    return report
