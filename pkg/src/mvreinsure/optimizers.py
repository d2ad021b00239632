"""
Pointwise minimizations behind the Riccati generators.

Branch 1 belongs to the positive wealth gap (X - h)^+ and branch 2 to the negative
gap (X - h)^-. The investment part F is minimized over the constraint cone, the
reinsurance part G over u >= 0. Jump increments Gamma may be scalars or one value
per claim atom; all functions broadcast over leading axes so the Riccati solver can
evaluate every claim-count level at once.
"""

from __future__ import annotations

import copy
import logging
from dataclasses import dataclass
from typing import TYPE_CHECKING, Any, Callable

import numpy as np
from scipy import linalg

from mvreinsure.exceptions import BracketError, ConvergenceError

if TYPE_CHECKING:
    from mvreinsure.model import ConvexCone, MarketModel

logger = logging.getLogger(__name__)

INVPHI = (np.sqrt(5.0) - 1.0) / 2.0
GOLDEN_TOLERANCE = 1e-10
PG_TOLERANCE = 1e-10
PG_MAX_ITERATIONS = 10_000
MAX_BRACKET_DOUBLINGS = 64


@dataclass(frozen=True, eq=False)
class OptimizerInputs:
    p1: Any
    p2: Any
    gamma1: Any
    gamma2: Any
    mu: np.ndarray
    sigma: np.ndarray
    intensity: float
    b: float
    b_Y: float  # noqa: N815
    sizes: np.ndarray
    weights: np.ndarray
    lambda1: np.ndarray | None = None
    lambda2: np.ndarray | None = None

    def __post_init__(self) -> None:
        sigma = np.atleast_2d(np.asarray(self.sigma, dtype=float))
        object.__setattr__(self, "mu", np.atleast_1d(np.asarray(self.mu, dtype=float)))
        object.__setattr__(self, "sigma", sigma)
        # Brownian-adapted coefficients are out of scope: Lambda stays identically zero
        for name in ("lambda1", "lambda2"):
            value = getattr(self, name)
            if value is None:
                object.__setattr__(self, name, np.zeros(sigma.shape[1]))
            elif np.any(np.asarray(value) != 0):
                msg = f"{name} must be zero for claim-count driven coefficients"
                raise ValueError(msg)

    @classmethod
    def from_model(
        cls,
        model: MarketModel,
        t: float,
        n: int,
        *,
        p1: Any = 1.0,
        p2: Any = 1.0,
        gamma1: Any = 0.0,
        gamma2: Any = 0.0,
    ) -> OptimizerInputs:
        return cls(
            p1=p1,
            p2=p2,
            gamma1=gamma1,
            gamma2=gamma2,
            mu=model.mu(t, n),
            sigma=model.sigma(t, n),
            intensity=model.intensity,
            b=model.derived.b,
            b_Y=model.b_Y,
            sizes=model.claims.sizes,
            weights=model.claims.weights,
        )

    def at_state(self, p1: Any, gamma1: Any, p2: Any, gamma2: Any) -> OptimizerInputs:
        """Copy carrying new Riccati values; the coefficients are already checked."""
        state = copy.copy(self)
        for name, value in (("p1", p1), ("gamma1", gamma1), ("p2", p2), ("gamma2", gamma2)):
            object.__setattr__(state, name, value)
        return state

    @property
    def reinsurance_drift(self) -> float:
        """Drift per unit of retained risk, b + lambda b_Y."""
        return self.b + self.intensity * self.b_Y


def _linear_coefficient(branch: int, inputs: OptimizerInputs) -> tuple[float, np.ndarray]:
    if branch == 1:
        p = float(inputs.p1)
        return p, p * inputs.mu + inputs.sigma @ inputs.lambda1
    if branch == 2:
        p = float(inputs.p2)
        return p, -(p * inputs.mu + inputs.sigma @ inputs.lambda2)
    msg = f"branch must be 1 or 2, got {branch}"
    raise ValueError(msg)


def eval_F(branch: int, v: Any, inputs: OptimizerInputs) -> float:  # noqa: N802
    """P |sigma^T v|^2 + 2 v^T c with c = +-(P mu + sigma Lambda) for branch 1 / 2."""
    p, c = _linear_coefficient(branch, inputs)
    v = np.atleast_1d(np.asarray(v, dtype=float))
    sv = inputs.sigma.T @ v
    return float(p * sv @ sv + 2.0 * v @ c)


def F_star(  # noqa: N802
    branch: int,
    inputs: OptimizerInputs,
    cone: ConvexCone,
    *,
    radius: float | None = None,
    start: np.ndarray | None = None,
) -> tuple[float, np.ndarray]:
    """
    Minimize `eval_F` over the cone, optionally intersected with the ball |v| <= radius.

    The full space has a closed form and one-dimensional cones reduce to clipping the
    unconstrained minimizer. Everything else runs projected gradient with exact line
    search on the strictly convex quadratic.

    Returns:
        (value, argmin) with value <= 0

    Raises:
        ConvergenceError: projected gradient did not reach tolerance
    """
    p, c = _linear_coefficient(branch, inputs)
    cov = inputs.sigma @ inputs.sigma.T
    free = -linalg.solve(cov, c, assume_a="pos") / p

    if cone.kind == "full" and radius is None:
        v = free
    elif cone.dim == 1:
        v = cone.project(free, radius)
    else:
        v = _projected_gradient(2.0 * p * cov, 2.0 * c, cone, radius, start)

    value = eval_F(branch, v, inputs)
    if value > 0.0:
        return 0.0, np.zeros_like(v)
    return value, v


def _projected_gradient(
    hessian: np.ndarray,
    linear: np.ndarray,
    cone: ConvexCone,
    radius: float | None,
    start: np.ndarray | None,
) -> np.ndarray:
    # minimizes 0.5 v^T H v + linear^T v over the cone (and ball)
    step = 1.0 / float(np.linalg.eigvalsh(hessian)[-1])
    v = cone.project(np.zeros_like(linear) if start is None else start, radius)
    scale = max(1.0, float(np.linalg.norm(linear)))
    residual = np.inf
    for iteration in range(PG_MAX_ITERATIONS):
        grad = hessian @ v + linear
        direction = cone.project(v - step * grad, radius) - v
        residual = float(np.linalg.norm(direction)) / step
        if residual <= PG_TOLERANCE * scale:
            logger.debug("[optimizers] projected gradient converged in %d iterations", iteration)
            return v
        curvature = float(direction @ hessian @ direction)
        t = 1.0 if curvature <= 0 else min(1.0, max(0.0, -float(grad @ direction) / curvature))
        v = v + t * direction
    msg = f"projected gradient did not converge in {PG_MAX_ITERATIONS} iterations"
    raise ConvergenceError(msg, residual)


def _atom_terms(inputs: OptimizerInputs) -> tuple[np.ndarray, ...]:
    # level axis first, atom axis last
    p1 = np.asarray(inputs.p1, dtype=float)[..., np.newaxis]
    p2 = np.asarray(inputs.p2, dtype=float)[..., np.newaxis]
    up1 = p1 + np.asarray(inputs.gamma1, dtype=float)
    up2 = p2 + np.asarray(inputs.gamma2, dtype=float)
    rate = inputs.intensity * inputs.weights
    return p1[..., 0], up1, up2, rate


def eval_G1(u: Any, inputs: OptimizerInputs) -> np.ndarray:  # noqa: N802
    """
    Reinsurance generator of branch 1.

    sum_y lambda w(y) [(P1+G1)(((1-uy)^+)^2 - 1) + (P2+G2)((1-uy)^-)^2] + 2u P1 (b + lambda b_Y)
    """
    p1, up1, up2, rate = _atom_terms(inputs)
    u = np.asarray(u, dtype=float)
    gap = 1.0 - u[..., np.newaxis] * inputs.sizes
    pos = np.maximum(gap, 0.0)
    neg = np.maximum(-gap, 0.0)
    jumps = np.sum(rate * (up1 * (pos * pos - 1.0) + up2 * neg * neg), axis=-1)
    return jumps + 2.0 * u * p1 * inputs.reinsurance_drift


def G1_slope(u: Any, inputs: OptimizerInputs) -> np.ndarray:  # noqa: N802
    """Derivative of `eval_G1` in u (G1 is continuously differentiable)."""
    p1, up1, up2, rate = _atom_terms(inputs)
    u = np.asarray(u, dtype=float)
    uy = u[..., np.newaxis] * inputs.sizes
    pos = np.maximum(1.0 - uy, 0.0)
    neg = np.maximum(uy - 1.0, 0.0)
    jumps = np.sum(2.0 * rate * inputs.sizes * (up2 * neg - up1 * pos), axis=-1)
    return jumps + 2.0 * p1 * inputs.reinsurance_drift


def golden_section(
    func: Callable[[np.ndarray], np.ndarray],
    lower: np.ndarray,
    upper: np.ndarray,
    tol: float = GOLDEN_TOLERANCE,
) -> np.ndarray:
    """
    Golden-section search on [lower, upper], elementwise over independent problems.

    Ties move the bracket left, so flat minima resolve toward the smaller point.
    """
    a = np.array(lower, dtype=float)
    b = np.array(upper, dtype=float)
    c = b - INVPHI * (b - a)
    d = a + INVPHI * (b - a)
    fc, fd = func(c), func(d)
    while np.any(b - a > tol):
        left = fc <= fd
        b = np.where(left, d, b)
        a = np.where(left, a, c)
        trial = np.where(left, b - INVPHI * (b - a), a + INVPHI * (b - a))
        fp = func(trial)
        c, d = np.where(left, trial, d), np.where(left, c, trial)
        fc, fd = np.where(left, fp, fd), np.where(left, fc, fp)
    return 0.5 * (a + b)


def G1_star(inputs: OptimizerInputs, *, upper: float | None = None) -> tuple[np.ndarray, np.ndarray]:  # noqa: N802
    """
    Minimize `eval_G1` over 0 <= u (<= upper when truncated).

    A nonnegative slope at u = 0 gives (0, 0) exactly. Otherwise the bracket end doubles
    until the slope turns positive and golden-section search refines the minimizer.

    Raises:
        BracketError: the slope stays negative, which a valid input cannot produce
    """
    p1 = np.asarray(inputs.p1, dtype=float)
    shape = p1.shape
    value = np.zeros(shape)
    argmin = np.zeros(shape)
    active = np.asarray(G1_slope(np.zeros(shape), inputs) < 0.0)
    if not active.any():
        return value, argmin

    hi = np.ones(shape)
    for _ in range(MAX_BRACKET_DOUBLINGS):
        growing = active & (G1_slope(hi, inputs) <= 0.0)
        if upper is not None:
            growing &= hi < upper
        if not growing.any():
            break
        hi = np.where(growing, 2.0 * hi, hi)
    else:
        msg = "G1 slope stays negative; no bracket for the reinsurance minimizer"
        raise BracketError(msg)
    if upper is not None:
        hi = np.minimum(hi, upper)

    best = golden_section(lambda u: eval_G1(u, inputs), np.zeros(shape), hi)
    best_value = eval_G1(best, inputs)
    take = active & (best_value < 0.0)
    value = np.where(take, best_value, 0.0)
    argmin = np.where(take, best, 0.0)
    return value, argmin


def _g2_moments(inputs: OptimizerInputs) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    p2 = np.asarray(inputs.p2, dtype=float)
    gamma2 = np.asarray(inputs.gamma2, dtype=float)
    up2 = p2[..., np.newaxis] + gamma2
    rate = inputs.intensity * inputs.weights
    sizes = inputs.sizes
    numerator = p2 * inputs.b - np.sum(rate * np.broadcast_to(gamma2, up2.shape) * sizes, axis=-1)
    first = np.sum(rate * up2 * sizes, axis=-1)
    second = np.sum(rate * up2 * sizes * sizes, axis=-1)
    return numerator, first, second


def eval_G2(u: Any, inputs: OptimizerInputs) -> np.ndarray:  # noqa: N802
    """Quadratic form of the branch-2 generator, u^2 D + 2u [sum (P2+G2) y lambda w - P2 (b + lambda b_Y)]."""
    _, first, second = _g2_moments(inputs)
    u = np.asarray(u, dtype=float)
    return u * u * second + 2.0 * u * (first - np.asarray(inputs.p2, dtype=float) * inputs.reinsurance_drift)


def G2_star(inputs: OptimizerInputs) -> tuple[np.ndarray, np.ndarray]:  # noqa: N802
    """Closed-form minimum of `eval_G2` over u >= 0."""
    numerator, _, second = _g2_moments(inputs)
    if np.any(second <= 0):
        msg = "G2 denominator must be positive; claims are a.s. zero"
        raise ValueError(msg)
    clamped = np.maximum(numerator, 0.0)
    return -clamped * clamped / second, clamped / second
