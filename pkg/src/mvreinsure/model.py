"""Problem instance: coefficient curves, constraint cones, claim laws and the market model."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from functools import cached_property
from typing import TYPE_CHECKING, Any, Literal, NamedTuple

import numpy as np
from scipy import optimize, stats

from mvreinsure.exceptions import ModelValidationError

if TYPE_CHECKING:
    from collections.abc import Sequence

logger = logging.getLogger(__name__)

Interpolation = Literal["constant", "linear"]
CoefficientMode = Literal["deterministic", "count-modulated"]
ConeKind = Literal["full", "nonnegative", "nonpositive", "product", "generated"]

COEFFICIENT_MODES: tuple[str, ...] = ("deterministic", "count-modulated")
CONE_KINDS: tuple[str, ...] = ("full", "nonnegative", "nonpositive", "product", "generated")
CLAIM_FAMILIES: tuple[str, ...] = ("uniform", "truncexpon", "beta", "triang")

DEFAULT_QUADRATURE_NODES = 64
MAX_QUADRATURE_NODES = 4096
QUADRATURE_TOLERANCE = 1e-8
WEIGHT_TOLERANCE = 1e-12

# 16-point rule on [0, 1] for segment integrals of smooth integrands
_GL_X, _GL_W = np.polynomial.legendre.leggauss(16)
_GL_X = 0.5 * (_GL_X + 1.0)
_GL_W = 0.5 * _GL_W


@dataclass(frozen=True, eq=False)
class PiecewiseCurve:
    """
    Coefficient table in t.

    `values[i]` is attached to `knots[i]`. With constant interpolation the value holds on
    [knots[i], knots[i+1]); with linear interpolation values are joined linearly. Outside
    the knot range the nearest end value is used.
    """

    knots: np.ndarray
    values: np.ndarray
    interpolation: Interpolation = "constant"

    def __post_init__(self) -> None:
        knots = np.asarray(self.knots, dtype=float).reshape(-1)
        values = np.asarray(self.values, dtype=float)
        if values.shape[0] != knots.shape[0]:
            msg = f"curve has {knots.shape[0]} knots but {values.shape[0]} values"
            raise ValueError(msg)
        if knots.shape[0] == 0:
            msg = "curve needs at least one knot"
            raise ValueError(msg)
        if np.any(np.diff(knots) <= 0):
            msg = "curve knots must be strictly increasing"
            raise ValueError(msg)
        if self.interpolation not in ("constant", "linear"):
            msg = f"unknown interpolation {self.interpolation!r}"
            raise ValueError(msg)
        object.__setattr__(self, "knots", knots)
        object.__setattr__(self, "values", values)

    @classmethod
    def constant(cls, value: Any) -> PiecewiseCurve:
        return cls(np.array([0.0]), np.asarray(value, dtype=float)[np.newaxis, ...])

    @property
    def shape(self) -> tuple[int, ...]:
        return tuple(self.values.shape[1:])

    def __call__(self, t: float) -> np.ndarray:
        return self.at(t)

    def at(self, t: Any) -> np.ndarray:
        """Vectorized evaluation; the result has shape `np.shape(t) + self.shape`."""
        t = np.asarray(t, dtype=float)
        knots, values = self.knots, self.values
        if knots.shape[0] == 1:
            return np.broadcast_to(values[0], t.shape + self.shape).copy()
        idx = np.clip(np.searchsorted(knots, t, side="right") - 1, 0, knots.shape[0] - 1)
        if self.interpolation == "constant":
            return values[idx]
        lo = np.clip(idx, 0, knots.shape[0] - 2)
        w = np.clip((t - knots[lo]) / (knots[lo + 1] - knots[lo]), 0.0, 1.0)
        w = w.reshape(w.shape + (1,) * len(self.shape))
        return (1.0 - w) * values[lo] + w * values[lo + 1]

    def breakpoints(self, start: float, stop: float) -> np.ndarray:
        """Return sorted [start, interior knots..., stop]."""
        inner = self.knots[(self.knots > start) & (self.knots < stop)]
        return np.concatenate(([start], inner, [stop]))

    def sup_norm(self) -> float:
        return float(np.max(np.abs(self.values))) if self.values.size else 0.0


@dataclass(frozen=True, eq=False)
class ShortRate:
    """
    Deterministic short rate r(t) on [0, T] with exact integrals.

    `growth(t)` is R(t) = int_0^t r and `annuity(t)` is A(t) = int_0^t exp(-R(s)) ds.
    Piecewise-constant pieces are integrated in closed form, linear pieces with a
    16-point Gauss-Legendre rule.
    """

    curve: PiecewiseCurve
    horizon: float

    @cached_property
    def _nodes(self) -> np.ndarray:
        return self.curve.breakpoints(0.0, self.horizon)

    @cached_property
    def _node_tables(self) -> tuple[np.ndarray, np.ndarray]:
        nodes = self._nodes
        growth = np.zeros_like(nodes)
        annuity = np.zeros_like(nodes)
        for i in range(nodes.shape[0] - 1):
            dg, da = self._segment(nodes[i], nodes[i + 1] - nodes[i])
            growth[i + 1] = growth[i] + dg
            annuity[i + 1] = annuity[i] + np.exp(-growth[i]) * da
        return growth, annuity

    def _rate_at(self, t: np.ndarray) -> np.ndarray:
        return self.curve.at(t)

    def _segment(self, start: Any, length: Any) -> tuple[np.ndarray, np.ndarray]:
        # returns int_start^{start+length} r and int_0^length exp(-int_start^{start+s} r) ds
        start = np.asarray(start, dtype=float)
        length = np.asarray(length, dtype=float)
        r0 = self._rate_at(start)
        if self.curve.interpolation == "constant":
            growth = r0 * length
            with np.errstate(divide="ignore", invalid="ignore"):
                annuity = np.where(np.abs(r0) > 1e-14, -np.expm1(-r0 * length) / r0, length)
            return growth, annuity
        r1 = self._rate_at(start + length)
        slope = np.where(length > 0, (r1 - r0) / np.where(length > 0, length, 1.0), 0.0)
        growth = 0.5 * (r0 + r1) * length
        s = length[..., np.newaxis] * _GL_X
        inner = r0[..., np.newaxis] * s + 0.5 * slope[..., np.newaxis] * s * s
        annuity = length * np.sum(_GL_W * np.exp(-inner), axis=-1)
        return growth, annuity

    def _locate(self, t: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        t = np.clip(np.asarray(t, dtype=float), 0.0, self.horizon)
        idx = np.clip(np.searchsorted(self._nodes, t, side="right") - 1, 0, self._nodes.shape[0] - 2)
        return t, idx, t - self._nodes[idx]

    def growth(self, t: Any) -> np.ndarray:
        t, idx, offset = self._locate(t)
        growth, _ = self._node_tables
        dg, _ = self._segment(self._nodes[idx], offset)
        return growth[idx] + dg

    def annuity(self, t: Any) -> np.ndarray:
        t, idx, offset = self._locate(t)
        growth, annuity = self._node_tables
        _, da = self._segment(self._nodes[idx], offset)
        return annuity[idx] + np.exp(-growth[idx]) * da

    def integral(self, start: float = 0.0, stop: float | None = None) -> float:
        stop = self.horizon if stop is None else stop
        return float(self.growth(stop) - self.growth(start))

    def abs_integral(self, start: float = 0.0, stop: float | None = None) -> float:
        """Return int |r| over [start, stop], splitting linear pieces at sign changes."""
        stop = self.horizon if stop is None else stop
        nodes = self.curve.breakpoints(start, stop)
        total = 0.0
        for left, right in zip(nodes[:-1], nodes[1:]):
            r0 = float(self.curve(left))
            if self.curve.interpolation == "constant":
                total += abs(r0) * (right - left)
                continue
            r1 = float(self.curve(right))
            width = right - left
            if r0 * r1 >= 0:
                total += 0.5 * abs(r0 + r1) * width
            else:
                total += 0.5 * (r0 * r0 + r1 * r1) / abs(r1 - r0) * width
        return total


@dataclass(frozen=True, eq=False)
class ConvexCone:
    """
    Closed convex cone of admissible investment directions in R^m.

    `signs` is used by the product kind: +1 for a nonnegative coordinate, -1 for a
    nonpositive one and 0 for a free one. `generators` holds the columns spanning a
    finitely-generated cone.
    """

    kind: ConeKind
    dim: int
    signs: tuple[int, ...] = ()
    generators: np.ndarray | None = None

    def __post_init__(self) -> None:
        if self.kind not in CONE_KINDS:
            msg = f"unknown cone kind {self.kind!r}"
            raise ValueError(msg)
        if self.dim < 1:
            msg = "cone dimension must be positive"
            raise ValueError(msg)
        signs = self.signs
        if self.kind == "nonnegative":
            signs = (1,) * self.dim
        elif self.kind == "nonpositive":
            signs = (-1,) * self.dim
        elif self.kind == "full":
            signs = (0,) * self.dim
        elif self.kind == "product":
            if len(signs) != self.dim or any(s not in (-1, 0, 1) for s in signs):
                msg = f"product cone needs {self.dim} signs from {{-1, 0, 1}}"
                raise ValueError(msg)
        object.__setattr__(self, "signs", tuple(int(s) for s in signs))
        if self.kind == "generated":
            gen = np.atleast_2d(np.asarray(self.generators, dtype=float))
            if gen.shape[0] != self.dim or gen.shape[1] == 0:
                msg = f"generator matrix must have shape ({self.dim}, k>0)"
                raise ValueError(msg)
            object.__setattr__(self, "generators", gen)

    @classmethod
    def full(cls, dim: int) -> ConvexCone:
        return cls("full", dim)

    @classmethod
    def nonnegative(cls, dim: int) -> ConvexCone:
        return cls("nonnegative", dim)

    @classmethod
    def nonpositive(cls, dim: int) -> ConvexCone:
        return cls("nonpositive", dim)

    @classmethod
    def product(cls, signs: Sequence[int]) -> ConvexCone:
        return cls("product", len(signs), tuple(signs))

    @classmethod
    def generated(cls, generators: Any) -> ConvexCone:
        gen = np.atleast_2d(np.asarray(generators, dtype=float))
        return cls("generated", gen.shape[0], generators=gen)

    @property
    def is_sign_cone(self) -> bool:
        return self.kind != "generated"

    def project(self, v: Any, radius: float | None = None) -> np.ndarray:
        """Euclidean projection onto the cone, or onto cone ∩ {|v| <= radius}."""
        v = np.asarray(v, dtype=float)
        if self.is_sign_cone:
            signs = np.asarray(self.signs)
            out = np.where(signs > 0, np.maximum(v, 0.0), np.where(signs < 0, np.minimum(v, 0.0), v))
        else:
            coef, _ = optimize.nnls(self.generators, v)
            out = self.generators @ coef
        if radius is not None:
            norm = float(np.linalg.norm(out))
            if norm > radius:
                out = out * (radius / norm)
        return out

    def contains(self, v: Any, tol: float = 1e-10) -> np.ndarray | bool:
        """Membership test; accepts one vector or a (paths, m) batch."""
        v = np.asarray(v, dtype=float)
        if self.is_sign_cone:
            signs = np.asarray(self.signs)
            scale = tol * (1.0 + np.abs(v))
            ok = np.where(signs > 0, v >= -scale, np.where(signs < 0, v <= scale, True))
            return ok.all(axis=-1) if v.ndim > 1 else bool(ok.all())
        if v.ndim == 1:
            gap = np.linalg.norm(self.project(v) - v)
            return bool(gap <= tol * (1.0 + np.linalg.norm(v)))
        return np.array([self.contains(row, tol) for row in v], dtype=bool)

    def sample(self, rng: np.random.Generator, size: int) -> np.ndarray:
        """Random members of the cone, used by invariant checks."""
        if self.is_sign_cone:
            return np.array([self.project(w) for w in rng.standard_normal((size, self.dim))])
        coef = rng.exponential(size=(size, self.generators.shape[1]))
        return coef @ self.generators.T


@dataclass(frozen=True, eq=False)
class ClaimDistribution:
    """
    Bounded nonnegative claim-size law reduced to a finite atom list.

    Continuous densities keep their frozen `scipy.stats` law for sampling, while all
    integrals against the claim law are finite sums over `sizes`/`weights`.
    """

    kind: Literal["atoms", "density"]
    sizes: np.ndarray
    weights: np.ndarray
    y_max: float
    law: Any = field(default=None, repr=False)
    family: str | None = None

    @classmethod
    def from_atoms(cls, atoms: Sequence[tuple[float, float]]) -> ClaimDistribution:
        pairs = np.asarray(atoms, dtype=float).reshape(-1, 2)
        sizes, weights = pairs[:, 0], pairs[:, 1]
        y_max = float(np.max(sizes)) if sizes.size else 0.0
        return cls("atoms", sizes, weights, y_max)

    @classmethod
    def from_density(
        cls,
        family: str,
        y_max: float,
        params: dict[str, float] | None = None,
        nodes: int = DEFAULT_QUADRATURE_NODES,
    ) -> ClaimDistribution:
        """
        Discretize a density on [0, y_max] with Gauss-Legendre nodes.

        The node count is doubled until the first two moments agree with the doubled rule
        to `QUADRATURE_TOLERANCE`; a warning is logged if `MAX_QUADRATURE_NODES` is reached.
        """
        law = claim_law(family, y_max, params or {})
        count = nodes
        sizes, weights = _legendre_atoms(law, y_max, count)
        while True:
            finer_sizes, finer_weights = _legendre_atoms(law, y_max, 2 * count)
            coarse = _moments(sizes, weights)
            fine = _moments(finer_sizes, finer_weights)
            if max(abs(coarse[0] - fine[0]), abs(coarse[1] - fine[1])) < QUADRATURE_TOLERANCE:
                break
            if 2 * count >= MAX_QUADRATURE_NODES:
                logger.warning("[claims] quadrature for %s not converged at %d nodes", family, 2 * count)
                sizes, weights, count = finer_sizes, finer_weights, 2 * count
                break
            sizes, weights, count = finer_sizes, finer_weights, 2 * count
        logger.debug("[claims] %s density reduced to %d atoms", family, count)
        return cls("density", sizes, weights, float(y_max), law=law, family=family)

    def sample(self, rng: np.random.Generator, size: int) -> np.ndarray:
        if self.law is not None:
            return np.asarray(self.law.ppf(rng.random(size)), dtype=float)
        return rng.choice(self.sizes, size=size, p=self.weights)


def claim_law(family: str, y_max: float, params: dict[str, float]) -> Any:
    """Return a frozen `scipy.stats` law supported on [0, y_max]."""
    if y_max <= 0 or not np.isfinite(y_max):
        msg = f"claim support bound must be finite and positive, got {y_max}"
        raise ValueError(msg)
    if family == "uniform":
        return stats.uniform(loc=0.0, scale=y_max)
    if family == "truncexpon":
        scale = float(params.get("scale", y_max / 2.0))
        return stats.truncexpon(b=y_max / scale, scale=scale)
    if family == "beta":
        return stats.beta(float(params.get("a", 2.0)), float(params.get("b", 2.0)), scale=y_max)
    if family == "triang":
        return stats.triang(float(params.get("c", 0.5)), scale=y_max)
    msg = f"unknown claim family {family!r}, expected one of {', '.join(CLAIM_FAMILIES)}"
    raise ValueError(msg)


def _legendre_atoms(law: Any, y_max: float, nodes: int) -> tuple[np.ndarray, np.ndarray]:
    x, w = np.polynomial.legendre.leggauss(nodes)
    sizes = 0.5 * y_max * (x + 1.0)
    weights = 0.5 * y_max * w * law.pdf(sizes)
    return sizes, weights / weights.sum()


def _moments(sizes: np.ndarray, weights: np.ndarray) -> tuple[float, float]:
    return float(np.dot(weights, sizes)), float(np.dot(weights, sizes * sizes))


def claim_moments(claims: ClaimDistribution) -> tuple[float, float]:
    """
    First and second moments (b_Y, sigma_Y^2) of the claim law.

    Raises:
        ModelValidationError: the law is degenerate at zero
    """
    first, second = _moments(claims.sizes, claims.weights)
    if first <= 0 or second <= 0:
        msg = f"claim law degenerate at zero: b_Y={first}"
        raise ModelValidationError([msg])
    return first, second


class DerivedParams(NamedTuple):
    b: float
    a: float
    premium: float


@dataclass(frozen=True, eq=False)
class MarketModel:
    """Financial market and insurance business on [0, horizon]."""

    horizon: float
    rate: PiecewiseCurve
    drift: tuple[PiecewiseCurve, ...]
    volatility: tuple[PiecewiseCurve, ...]
    cone: ConvexCone
    intensity: float
    loading: float
    reinsurance_loading: float
    claims: ClaimDistribution
    coefficient_mode: CoefficientMode = "deterministic"
    ellipticity: float = 1e-8

    @property
    def n_assets(self) -> int:
        return int(self.drift[0].shape[0])

    @property
    def brownian_dim(self) -> int:
        return int(self.volatility[0].shape[1])

    @property
    def coefficient_levels(self) -> int:
        """Number of distinct claim-count levels in the coefficient tables."""
        return max(len(self.drift), len(self.volatility))

    @cached_property
    def short_rate(self) -> ShortRate:
        return ShortRate(self.rate, self.horizon)

    @cached_property
    def moments(self) -> tuple[float, float]:
        return claim_moments(self.claims)

    @property
    def b_Y(self) -> float:  # noqa: N802
        return self.moments[0]

    @property
    def sigma_Y2(self) -> float:  # noqa: N802
        return self.moments[1]

    @cached_property
    def derived(self) -> DerivedParams:
        return derived_params(self)

    def r(self, t: float) -> float:
        return float(self.rate(t))

    def mu(self, t: float, n: int = 0) -> np.ndarray:
        return self.drift[min(n, len(self.drift) - 1)](t)

    def sigma(self, t: float, n: int = 0) -> np.ndarray:
        return self.volatility[min(n, len(self.volatility) - 1)](t)

    def mu_batch(self, t: Any, n: Any) -> np.ndarray:
        """Drift per path, shape `np.shape(t) + (m,)`."""
        return _level_batch(self.drift, t, n)

    def sigma_batch(self, t: Any, n: Any) -> np.ndarray:
        return _level_batch(self.volatility, t, n)

    def knots(self) -> np.ndarray:
        """All coefficient knots inside [0, horizon]."""
        curves = [self.rate, *self.drift, *self.volatility]
        pts = np.concatenate([c.knots for c in curves])
        return np.unique(np.clip(pts, 0.0, self.horizon))


def _level_batch(curves: tuple[PiecewiseCurve, ...], t: Any, n: Any) -> np.ndarray:
    t = np.asarray(t, dtype=float)
    if len(curves) == 1:
        return curves[0].at(t)
    level = np.minimum(np.asarray(n), len(curves) - 1)
    out = np.empty(t.shape + curves[0].shape)
    for i, curve in enumerate(curves):
        mask = level == i
        if mask.any():
            out[mask] = curve.at(t[mask])
    return out


def derived_params(model: MarketModel) -> DerivedParams:
    """Return b = lambda b_Y eta_r, a = lambda b_Y (eta - eta_r) and the premium rate."""
    lam_by = model.intensity * model.b_Y
    return DerivedParams(
        b=lam_by * model.reinsurance_loading,
        a=lam_by * (model.loading - model.reinsurance_loading),
        premium=(1.0 + model.loading) * lam_by,
    )


@dataclass
class ModelReport:
    delta: float
    rate_bound: float
    drift_bound: float
    volatility_bound: float
    claim_support: tuple[float, float]
    b_Y: float | None = None  # noqa: N815
    sigma_Y2: float | None = None  # noqa: N815
    violations: list[str] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return not self.violations

    def raise_for_violations(self) -> None:
        if self.violations:
            raise ModelValidationError(self.violations)


def sample_times(model: MarketModel, points: int = 101) -> np.ndarray:
    return np.unique(np.concatenate((np.linspace(0.0, model.horizon, points), model.knots())))


def validate_model(model: MarketModel, *, n_max: int | None = None, seed: int = 0) -> ModelReport:
    """
    Check the model invariants on a (t, n) sample grid.

    Every violation is recorded with its location; call `raise_for_violations()` on the
    result to turn them into a `ModelValidationError`.
    """
    violations: list[str] = []
    levels = range((n_max if n_max is not None else model.coefficient_levels - 1) + 1)
    times = sample_times(model)

    if not model.horizon > 0:
        violations.append(f"horizon must be positive, got {model.horizon}")
    if not model.intensity > 0:
        violations.append(f"claim intensity must be positive, got {model.intensity}")
    if not model.loading > 0:
        violations.append(f"loading must be positive, got {model.loading}")
    if model.reinsurance_loading < model.loading:
        violations.append(
            f"loading order violated: reinsurance_loading={model.reinsurance_loading} < loading={model.loading}"
        )
    if model.brownian_dim < model.n_assets:
        violations.append(f"brownian dimension {model.brownian_dim} below number of assets {model.n_assets}")
    if model.ellipticity <= 0:
        violations.append(f"ellipticity floor must be positive, got {model.ellipticity}")

    delta = np.inf
    drift_bound = vol_bound = 0.0
    for n in levels:
        for t in times:
            mu, sigma = model.mu(t, n), model.sigma(t, n)
            if mu.shape != (model.n_assets,) or sigma.shape != (model.n_assets, model.brownian_dim):
                violations.append(f"coefficient shape mismatch at t={t:g} (n={n})")
                continue
            if not (np.all(np.isfinite(mu)) and np.all(np.isfinite(sigma))):
                violations.append(f"unbounded coefficient at t={t:g} (n={n})")
                continue
            eig = float(np.linalg.eigvalsh(sigma @ sigma.T).min())
            delta = min(delta, eig)
            if eig < model.ellipticity:
                violations.append(f"ellipticity violated at t={t:g} (n={n}): min eigenvalue {eig:.3g}")
            drift_bound = max(drift_bound, float(np.abs(mu).max()))
            vol_bound = max(vol_bound, float(np.abs(sigma).max()))
    rate_bound = model.rate.sup_norm()
    if not np.isfinite(rate_bound):
        violations.append("interest rate is not bounded")

    claims = model.claims
    support = (float(claims.sizes.min()), claims.y_max) if claims.sizes.size else (0.0, 0.0)
    if not claims.sizes.size:
        violations.append("claim law has no atoms")
    total = float(claims.weights.sum())
    if abs(total - 1.0) > WEIGHT_TOLERANCE:
        violations.append(f"claim weights sum to {total!r}, not 1")
    if np.any(claims.weights < 0):
        violations.append("negative claim weight")
    if np.any(claims.sizes < 0) or np.any(claims.sizes > claims.y_max) or not np.isfinite(claims.y_max):
        violations.append("claim sizes outside [0, y_max]")
    b_y = sigma_y2 = None
    try:
        b_y, sigma_y2 = claim_moments(claims)
    except ModelValidationError as exc:
        violations.extend(exc.violations)

    rng = np.random.default_rng(seed)
    cone = model.cone
    if cone.dim != model.n_assets:
        violations.append(f"cone dimension {cone.dim} does not match {model.n_assets} assets")
    elif not cone.contains(np.zeros(cone.dim)):
        violations.append("cone does not contain the origin")
    else:
        members = cone.sample(rng, 32)
        scales = rng.uniform(0.0, 10.0, size=32)
        if not all(cone.contains(alpha * v, tol=1e-8) for alpha, v in zip(scales, members)):
            violations.append("cone is not closed under nonnegative scaling")

    report = ModelReport(
        delta=float(delta),
        rate_bound=rate_bound,
        drift_bound=drift_bound,
        volatility_bound=vol_bound,
        claim_support=support,
        b_Y=b_y,
        sigma_Y2=sigma_y2,
        violations=violations,
    )
    logger.info("[model] delta=%.6g violations=%d", report.delta, len(violations))
    return report
