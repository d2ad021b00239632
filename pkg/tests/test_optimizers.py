from __future__ import annotations

import numpy as np
import pytest

from mvreinsure.exceptions import ConvergenceError
from mvreinsure.model import ConvexCone
from mvreinsure.optimizers import (
    F_star,
    G1_slope,
    G1_star,
    G2_star,
    OptimizerInputs,
    eval_F,
    eval_G1,
    eval_G2,
    golden_section,
)
from tests.helpers import rng


def inputs(
    *,
    p1: float = 1.0,
    p2: float = 1.0,
    gamma1: float | np.ndarray = 0.0,
    gamma2: float | np.ndarray = 0.0,
    mu: list[float] | None = None,
    sigma: list[list[float]] | None = None,
    b: float = 0.2,
    sizes: list[float] | None = None,
    weights: list[float] | None = None,
) -> OptimizerInputs:
    sizes_arr = np.array(sizes or [1.0])
    weights_arr = np.array(weights or [1.0])
    return OptimizerInputs(
        p1=p1,
        p2=p2,
        gamma1=gamma1,
        gamma2=gamma2,
        mu=np.array(mu or [0.2]),
        sigma=np.array(sigma or [[0.3]]),
        intensity=1.0,
        b=b,
        b_Y=float(weights_arr @ sizes_arr),
        sizes=sizes_arr,
        weights=weights_arr,
    )


def random_inputs(gen: np.random.Generator, *, gamma: bool = True) -> OptimizerInputs:
    sizes = gen.uniform(0.1, 2.0, size=3)
    weights = gen.dirichlet(np.ones(3))
    p1, p2 = gen.uniform(0.2, 3.0, size=2)
    g1 = gen.uniform(-0.5 * p1, 2.0, size=3) if gamma else 0.0
    g2 = gen.uniform(-0.5 * p2, 2.0, size=3) if gamma else 0.0
    return inputs(
        p1=p1,
        p2=p2,
        gamma1=g1,
        gamma2=g2,
        mu=[gen.normal()],
        sigma=[[gen.uniform(0.1, 1.0)]],
        b=gen.uniform(0.0, 1.0),
        sizes=sizes.tolist(),
        weights=weights.tolist(),
    )


class TestFStar:
    def test_long_only_positive_drift(self) -> None:
        # branch 2 invests mu / sigma^2 in the constants instance
        value, v = F_star(2, inputs(), ConvexCone.nonnegative(1))
        assert v == pytest.approx([0.2 / 0.09])
        assert value == pytest.approx(-0.04 / 0.09)

    def test_branch_one_is_clipped_to_zero(self) -> None:
        value, v = F_star(1, inputs(), ConvexCone.nonnegative(1))
        assert value == 0.0
        assert v.tolist() == [0.0]

    def test_full_space_sign_follows_drift(self) -> None:
        # one asset without constraint: the efficient position is short iff mu < 0
        _, v_pos = F_star(2, inputs(mu=[0.1]), ConvexCone.full(1))
        _, v_neg = F_star(2, inputs(mu=[-0.1]), ConvexCone.full(1))
        assert v_pos[0] > 0
        assert v_neg[0] < 0

    def test_truncation_radius(self) -> None:
        _, v = F_star(2, inputs(), ConvexCone.nonnegative(1), radius=1.0)
        assert v == pytest.approx([1.0])

    def test_projected_gradient_matches_brute_force(self) -> None:
        # Given two correlated assets and a long-only cone
        data = inputs(mu=[0.1, 0.15], sigma=[[0.3, 0.0], [0.2, 0.25]])
        cone = ConvexCone.nonnegative(2)

        # When minimizing
        value, v = F_star(2, data, cone)

        # Then a grid search over the quadrant finds nothing better
        axis = np.linspace(0.0, 5.0, 201)
        best = min(eval_F(2, [a, b], data) for a in axis for b in axis)
        assert cone.contains(v)
        assert value <= best + 1e-9

    def test_generated_cone(self) -> None:
        data = inputs(mu=[0.1, -0.05], sigma=[[0.25, 0.0], [0.0, 0.2]])
        cone = ConvexCone.generated([[1.0, 1.0], [0.0, 1.0]])
        value, v = F_star(2, data, cone)
        assert cone.contains(v, tol=1e-8)
        for w in cone.sample(rng(), 50):
            assert value <= eval_F(2, w, data) + 1e-10

    @pytest.mark.parametrize(
        ("branch", "v", "expected"),
        [(1, 1.0, 0.49), (2, 1.0, -0.31), (1, 0.0, 0.0), (2, 0.0, 0.0)],
    )
    def test_objective_values(self, branch: int, v: float, expected: float) -> None:
        # P = 1, mu = 0.2, sigma = 0.3: F = 0.09 v^2 +- 0.4 v
        assert eval_F(branch, [v], inputs()) == pytest.approx(expected, abs=1e-15)

    @pytest.mark.parametrize(
        "cone",
        [
            ConvexCone.generated([[1.0, 1.0], [0.0, 1.0]]),
            ConvexCone.product([1, 0]),
            ConvexCone.product([-1, 1]),
            ConvexCone.nonnegative(2),
        ],
        ids=["generated", "long-free", "short-long", "nonnegative"],
    )
    @pytest.mark.parametrize("branch", [1, 2])
    def test_variational_inequality(self, cone: ConvexCone, branch: int) -> None:
        # Given two correlated assets with drifts of opposite sign
        data = inputs(p1=1.3, p2=0.7, mu=[0.1, -0.05], sigma=[[0.25, 0.05], [0.0, 0.2]])
        sign = 1.0 if branch == 1 else -1.0
        p = 1.3 if branch == 1 else 0.7

        # When minimizing over the cone
        _, v = F_star(branch, data, cone)

        # Then no direction into the cone decreases the objective
        grad = 2.0 * p * (data.sigma @ data.sigma.T) @ v + 2.0 * sign * p * data.mu
        members = cone.sample(rng(), 1000)
        slack = members @ grad - float(v @ grad)
        scale = 1e-7 * (1.0 + np.linalg.norm(members, axis=1) + np.linalg.norm(v))
        assert np.all(slack >= -scale)
        assert cone.contains(v, tol=1e-8)

    @pytest.mark.parametrize("factor", [0.5, 2.0, 7.0])
    @pytest.mark.parametrize("branch", [1, 2])
    def test_positive_homogeneity(self, factor: float, branch: int) -> None:
        # Given the same coefficients at P = 1 and at P = factor
        cone = ConvexCone.nonnegative(2)
        unit = inputs(mu=[0.1, -0.05], sigma=[[0.3, 0.0], [0.2, 0.25]])
        scaled = inputs(p1=factor, p2=factor, mu=[0.1, -0.05], sigma=[[0.3, 0.0], [0.2, 0.25]])

        # When minimizing both
        value, v = F_star(branch, unit, cone)
        scaled_value, scaled_v = F_star(branch, scaled, cone)

        # Then the value scales with P and the argmin does not move
        assert scaled_value == pytest.approx(factor * value, rel=1e-9, abs=1e-14)
        assert scaled_v == pytest.approx(v, rel=1e-7, abs=1e-9)

    def test_nonconvergence_is_reported(self, monkeypatch: pytest.MonkeyPatch) -> None:
        monkeypatch.setattr("mvreinsure.optimizers.PG_MAX_ITERATIONS", 0)
        data = inputs(mu=[0.1, 0.15], sigma=[[0.3, 0.0], [0.2, 0.25]])
        with pytest.raises(ConvergenceError) as exc:
            F_star(2, data, ConvexCone.nonnegative(2))
        assert exc.value.exit_code == 3


class TestGoldenSection:
    def test_vectorized_parabolas(self) -> None:
        centres = np.array([0.3, 1.7, 4.2])
        found = golden_section(lambda u: (u - centres) ** 2, np.zeros(3), np.full(3, 5.0))
        assert found == pytest.approx(centres, abs=1e-8)


class TestG1:
    def test_zero_jumps_give_exact_zero(self) -> None:
        # Given Gamma = 0 on 100 random inputs
        gen = rng(1)
        for _ in range(100):
            data = random_inputs(gen, gamma=False)

            # Then the minimizer and the minimum are exactly zero
            value, u = G1_star(data)
            assert float(u) == 0.0
            assert float(value) == 0.0

    @pytest.mark.parametrize(("u", "expected"), [(0.0, 0.0), (0.5, 0.45), (2.0, 4.8)])
    def test_generator_values(self, u: float, expected: float) -> None:
        # unit claim, P = 1, Gamma = 0, b + lambda b_Y = 1.2
        assert float(eval_G1(u, inputs())) == pytest.approx(expected, abs=1e-14)

    def test_positive_jump_makes_reinsurance_active(self) -> None:
        # lambda Gamma1 y > P1 b makes the right slope at zero negative
        data = inputs(p1=1.0, p2=1.0, gamma1=np.array([2.0]), gamma2=np.array([0.0]), b=0.2)
        assert float(G1_slope(0.0, data)) < 0
        value, u = G1_star(data)
        assert float(u) > 0
        assert float(value) < 0
        assert float(G1_slope(u, data)) == pytest.approx(0.0, abs=1e-6)

    def test_minimum_beats_grid(self) -> None:
        gen = rng(2)
        grid = np.linspace(0.0, 20.0, 4001)
        for _ in range(20):
            data = random_inputs(gen)
            value, _ = G1_star(data)
            assert float(value) <= float(np.min(eval_G1(grid, data))) + 1e-9

    def test_truncated_upper_bound(self) -> None:
        data = inputs(gamma1=np.array([50.0]), gamma2=np.array([0.0]))
        _, u = G1_star(data, upper=1.0)
        assert float(u) <= 1.0

    def test_levels_are_vectorized(self) -> None:
        data = inputs(
            p1=np.array([1.0, 1.0]),
            p2=np.array([1.0, 1.0]),
            gamma1=np.array([[0.0], [2.0]]),
            gamma2=np.array([[0.0], [0.0]]),
        )
        _, u = G1_star(data)
        assert u[0] == 0.0
        assert u[1] > 0.0


class TestG2:
    def test_closed_form_matches_brute_force(self) -> None:
        gen = rng(3)
        grid = np.linspace(0.0, 10.0, 200001)
        for _ in range(100):
            data = random_inputs(gen)
            value, u = G2_star(data)
            values = eval_G2(grid, data)
            if float(u) < 10.0:
                assert float(value) == pytest.approx(float(values.min()), abs=1e-6)
                assert float(u) == pytest.approx(float(grid[values.argmin()]), abs=1e-4)
            else:
                assert float(value) <= float(values.min())

    def test_constants_instance(self) -> None:
        # u2 = b / (lambda sigma_Y^2) and G2* = -P2 b^2 / (lambda sigma_Y^2)
        value, u = G2_star(inputs(p2=0.5))
        assert float(u) == pytest.approx(0.2)
        assert float(value) == pytest.approx(-0.5 * 0.04)
