import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import integrate, stats

from lrdsep.function_classes import (Ball, ChaosProjection, Custom, FunctionClass, HalfSpace, HermitePolynomial,
                                     QuadratureError, QuadratureSpec, RankError, Rectangle, Scaled,
                                     build_bracket_cover, class_mean, entropy_condition, gaussian_expectation,
                                     hermite_coefficient, hermite_rank, minimal_2q, moment_bound,
                                     moment_lower_bound, project_leading)
from lrdsep.hermite import enumerate_multi_indices, hermite_eval

phi = stats.norm.pdf


def density2(x1, x2):
    return phi(x1) * phi(x2)


def h2(l, x1, x2):
    return hermite_eval(l[0], x1) * hermite_eval(l[1], x2)


def oracle_half_plane(l, v, c):
    # integrate over x1, then x2 <= (c - v1 x1) / v2 for v2 > 0
    v1, v2 = v
    value, _ = integrate.dblquad(lambda x2, x1: h2(l, x1, x2) * density2(x1, x2), -9, 9,
                                 lambda x1: -9, lambda x1: min((c - v1 * x1) / v2, 9.0), epsabs=1e-10)
    return value


def oracle_disc(l, c):
    value, _ = integrate.dblquad(lambda x2, x1: h2(l, x1, x2) * density2(x1, x2), -c, c,
                                 lambda x1: -math.sqrt(max(c * c - x1 * x1, 0.0)),
                                 lambda x1: math.sqrt(max(c * c - x1 * x1, 0.0)), epsabs=1e-11)
    return value


def oracle_halfline(q, c):
    value, _ = integrate.quad(lambda y: hermite_eval(q, y) * phi(y), -np.inf, c, epsabs=1e-13)
    return value


class TestMeans:
    def test_examples(self):
        assert class_mean(HalfSpace((1.0, 0.0), 0.0)) == 0.5
        assert class_mean(Ball(50.0, 2)) == pytest.approx(1.0, abs=1e-12)
        square = Custom(lambda x: x[:, 0] ** 2, p=2)
        assert class_mean(square) == pytest.approx(1.0, abs=1e-10)

    def test_closed_forms_agree_with_quadrature_for_smooth_members(self):
        poly = HermitePolynomial({(0, 0): 0.5, (2, 0): 2.0, (1, 1): -1.0})
        generic = QuadratureSpec(closed_form=False)
        assert class_mean(poly) == pytest.approx(class_mean(poly, generic), abs=1e-10)

    def test_indicator_quadrature_error_is_reported(self):
        # Gauss-Hermite converges slowly on a discontinuity; the estimate must say so
        with pytest.raises(QuadratureError) as err:
            class_mean(HalfSpace((1.0, 0.3), 0.2), QuadratureSpec(closed_form=False, tol=1e-8))
        assert err.value.estimate > 1e-8

    def test_sobol_branch_for_p4(self):
        f = Custom(lambda x: x[:, 0] ** 2 + x[:, 3], p=4)
        value, err = gaussian_expectation(f, 4)
        assert abs(value - 1.0) <= max(5 * err, 1e-3)


class TestCoefficients:
    def test_examples(self):
        assert hermite_coefficient(Custom(lambda x: x[:, 0], p=3), (1, 0, 0)) == pytest.approx(1.0, abs=1e-10)
        assert hermite_coefficient(Custom(lambda x: x[:, 0] ** 2, p=2), (2, 0)) == pytest.approx(2.0, abs=1e-10)
        c = 0.7
        assert hermite_coefficient(HalfSpace((1.0,), c), (1,)) == pytest.approx(-phi(c), abs=1e-15)

    @pytest.mark.parametrize("q", range(0, 6))
    @pytest.mark.parametrize("c", [-1.0, 0.0, 0.8])
    def test_halfline_against_quad(self, q, c):
        assert hermite_coefficient(HalfSpace((1.0,), c), (q,)) == pytest.approx(oracle_halfline(q, c), abs=1e-10)

    @pytest.mark.parametrize("l", [(1, 0), (0, 1), (2, 0), (1, 1), (0, 2), (2, 1), (1, 3)])
    def test_half_plane_against_dblquad(self, l):
        v, c = (0.6, 1.3), 0.4
        expected = oracle_half_plane(l, v, c)
        assert hermite_coefficient(HalfSpace(v, c), l) == pytest.approx(expected, abs=1e-8)

    @pytest.mark.parametrize("l", [(1, 0), (2, 0), (1, 1), (0, 2), (2, 2), (4, 0)])
    def test_disc_against_dblquad(self, l):
        expected = oracle_disc(l, 1.5)
        assert hermite_coefficient(Ball(1.5, 2), l) == pytest.approx(expected, abs=1e-8)

    def test_rectangle_is_a_product(self):
        c = (0.3, -0.5)
        l = (2, 1)
        expected = oracle_halfline(2, c[0]) * oracle_halfline(1, c[1])
        assert hermite_coefficient(Rectangle(c), l) == pytest.approx(expected, abs=1e-10)

    def test_ball_p3_against_tensor_quadrature(self):
        f = Ball(1.2, 3)
        closed = hermite_coefficient(f, (2, 0, 0))
        value, err = gaussian_expectation(lambda x: f(x) * hermite_eval(2, x[:, 0]), 3,
                                          QuadratureSpec(order=128))
        assert closed == pytest.approx(value, abs=max(3 * err, 5e-3))

    def test_scaled_member_is_linear(self):
        f = HalfSpace((1.0, 2.0), 0.5)
        assert hermite_coefficient(Scaled(f, -3.0), (1, 1)) == pytest.approx(-3 * hermite_coefficient(f, (1, 1)))
        assert class_mean(Scaled(f, 2.0)) == pytest.approx(2 * class_mean(f))

    def test_dimension_mismatch(self):
        with pytest.raises(ValueError):
            hermite_coefficient(Ball(1.0, 2), (1, 0, 0))


class TestRankAndProjection:
    def test_rank_examples(self):
        assert hermite_rank(FunctionClass.custom([Custom(lambda x: x[:, 0], p=1)])) == 1
        assert hermite_rank(FunctionClass.custom([Custom(lambda x: x[:, 0] ** 2 - 1, p=1)])) == 2
        assert hermite_rank(FunctionClass.half_space([[1.0]], [-1.0, 0.0, 1.5])) == 1

    def test_ball_rank_two(self):
        assert hermite_rank(FunctionClass.ball([0.5, 1.0, 2.0], 2)) == 2

    def test_rank_undetermined(self):
        with pytest.raises(RankError):
            hermite_rank(FunctionClass.polynomial([{(0, 0): 1.0}]), max_order=3)

    def test_projection_examples(self):
        proj = project_leading(Custom(lambda x: x[:, 0] + x[:, 1], p=2), 1)
        assert proj.coefficients == pytest.approx({(1, 0): 1.0, (0, 1): 1.0}, abs=1e-10)
        ball = project_leading(Ball(1.5, 2), 1)
        assert max(abs(v) for v in ball.coefficients.values()) <= 1e-12
        ball2 = project_leading(Ball(1.5, 2), 2)
        assert set(ball2.coefficients) == set(enumerate_multi_indices(2, 2))
        assert ball2.coefficients[(2, 0)] == pytest.approx(ball2.coefficients[(0, 2)], abs=1e-12)
        assert ball2.coefficients[(1, 1)] == pytest.approx(0.0, abs=1e-12)
        assert ball2.coefficients[(2, 0)] < 0

    def test_projection_rejects_foreign_keys(self):
        with pytest.raises(ValueError):
            ChaosProjection(2, 2, {(1, 0): 1.0})

    def test_moment_bound(self):
        cls = FunctionClass.half_planes(5)
        assert moment_bound(cls, 8) == 1.0
        assert cls.uniform_bound == 1.0
        assert math.isinf(FunctionClass.polynomial([{(1,): 1.0}]).uniform_bound)


class TestClasses:
    def test_half_planes_grid(self):
        cls = FunctionClass.half_planes(25)
        assert len(cls) == 25 and cls.p == 2
        units = np.array([f.unit for f in cls])
        np.testing.assert_allclose(np.linalg.norm(units, axis=1), 1.0)

    def test_evaluate_shape(self):
        cls = FunctionClass.ball([0.5, 1.0, 2.0], 2)
        x = np.random.default_rng(0).standard_normal((11, 2))
        assert cls.evaluate(x).shape == (3, 11)

    def test_mixed_dimensions_rejected(self):
        with pytest.raises(ValueError):
            FunctionClass("custom", (Ball(1.0, 2), Ball(1.0, 3)), 2)


def _check_cover(cls, eps, n=10_000, seed=0):
    cover = build_bracket_cover(cls, eps)
    x = np.random.default_rng(seed).standard_normal((n, cls.p))
    for f, k in zip(cls, cover.assignment):
        lo, hi = cover.brackets[k]
        fx, lx, ux = f(x), lo(x), hi(x)
        assert np.all(lx <= fx) and np.all(fx <= ux)
        gap2 = (ux - lx) ** 2
        se = gap2.std(ddof=1) / math.sqrt(n)
        assert gap2.mean() <= eps ** 2 + 3 * se
        # exact squared gap from the closed-form means
        assert hi.mean() - lo.mean() <= eps ** 2 + 1e-12
    return cover


class TestBrackets:
    def test_univariate_examples(self):
        cls = FunctionClass.half_space([[1.0]], np.linspace(-3, 3, 61))
        assert build_bracket_cover(cls, 1.0).count == 1
        assert _check_cover(cls, 0.1).count <= 100

    def test_ball_example(self):
        cls = FunctionClass.ball(np.linspace(0.1, 4, 40), 2)
        assert _check_cover(cls, 0.1).count <= 100

    def test_half_planes_union(self):
        cls = FunctionClass.half_planes(5, offsets=(-1.0, 0.0, 0.7))
        cover = _check_cover(cls, 0.25)
        assert cover.count == 5 * 16

    def test_rectangles(self):
        grid = [(a, b) for a in (-1.0, 0.0, 1.0) for b in (-0.5, 0.5)]
        cover = _check_cover(FunctionClass.hyperrectangle(grid), 0.3)
        k = math.ceil(2 / 0.09 - 1e-9)
        assert cover.count == k * k

    def test_bad_epsilon(self):
        with pytest.raises(ValueError):
            build_bracket_cover(FunctionClass.ball([1.0], 2), 0.0)

    def test_unsupported_kind(self):
        with pytest.raises(ValueError):
            build_bracket_cover(FunctionClass.polynomial([{(1,): 1.0}]), 0.5)

    @given(st.floats(0.05, 1.0))
    def test_count_monotone_in_epsilon(self, eps):
        cls = FunctionClass.half_space([[1.0]], [0.0])
        assert build_bracket_cover(cls, eps).count >= build_bracket_cover(cls, min(1.0, 1.5 * eps)).count


class TestEntropyCondition:
    def test_examples(self):
        assert not entropy_condition(1, exponent=1).finite
        v = entropy_condition(3, exponent=1)
        assert v.finite and v.integral == pytest.approx(1.0)
        assert entropy_condition(5, exponent=2).finite

    @pytest.mark.parametrize("a", [0.0, 0.5, 1.0, 1.5, 2.0, 2.5, 3.0])
    @pytest.mark.parametrize("r", range(1, 9))
    def test_criterion_grid(self, a, r):
        v = entropy_condition(r, exponent=a, scale=2.0)
        assert v.finite == (r > 2 * a)
        if v.finite:
            assert v.integral == pytest.approx(4.0 / (r - 2 * a))

    def test_sampled_power_law(self):
        eps = np.array([1.0, 0.5, 0.25, 0.1, 0.05])
        samples = list(zip(eps, 3.0 * eps ** -2.0))
        assert not entropy_condition(4, samples=samples).finite
        v = entropy_condition(6, samples=samples)
        assert v.finite and v.exponent == pytest.approx(2.0)
        assert v.integral == pytest.approx(9.0 / 2.0, rel=1e-9)

    def test_ill_formed_samples(self):
        with pytest.raises(ValueError):
            entropy_condition(3, samples=[(0.5, 4.0)])
        with pytest.raises(ValueError):
            entropy_condition(3, samples=[(0.5, 4.0), (-0.1, 10.0)])


class TestMinimalTwoQ:
    def test_examples(self):
        assert minimal_2q(1, 0.4, 2) == 4
        assert minimal_2q(2, 0.4, 1) == 6
        assert minimal_2q(1, 0.5, 2) == 4

    def test_boundary_binding_term_is_mr(self):
        for m in range(1, 5):
            for r in range(1, 6):
                bound, which = moment_lower_bound(m, Fraction(1, m + 1), r)
                assert bound == m * r and which == "mr"

    def test_regime(self):
        with pytest.raises(ValueError):
            minimal_2q(2, 0.5, 1)
        with pytest.raises(ValueError):
            minimal_2q(1, 0.0, 1)

    @given(st.integers(1, 4), st.fractions(Fraction(1, 100), Fraction(99, 100)), st.integers(1, 8))
    def test_even_strict_and_monotone(self, m, frac, r):
        D = frac / m
        q2 = minimal_2q(m, D, r)
        bound, _ = moment_lower_bound(m, D, r)
        assert q2 % 2 == 0 and q2 > bound and q2 - 2 <= bound
        assert minimal_2q(m, D, r + 1) >= q2
        assert minimal_2q(m, D * Fraction(101, 100) if D * Fraction(101, 100) < Fraction(1, m) else D, r) >= q2
