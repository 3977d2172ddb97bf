import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from fosrpower.exceptions import DegenerateFunctionError, GridMismatchError, InvalidGridError
from fosrpower.fungrid import (
    FunctionOnGrid,
    Grid,
    gram_matrix,
    inner_product,
    l2_correlation,
    l2_norm,
    quad_weights,
)
from fosrpower.synthgen import beta_tm1, fourier_eigenfunction

SQ2 = np.sqrt(2.0)


def fn(grid, f):
    return FunctionOnGrid(grid, f(grid.points))


class TestQuadWeights:
    def test_three_points(self):
        np.testing.assert_allclose(quad_weights([0, 0.5, 1]), [0.25, 0.5, 0.25])

    def test_two_points(self):
        np.testing.assert_allclose(quad_weights([0, 1]), [0.5, 0.5])

    def test_uniform_101_by_summation(self):
        w = quad_weights(np.linspace(0, 1, 101))
        assert w[0] == pytest.approx(0.005) and w[-1] == pytest.approx(0.005)
        np.testing.assert_allclose(w[1:-1], 0.01)
        assert w.sum() == pytest.approx(1.0, abs=1e-14)

    def test_nonuniform_matches_explicit_formula(self):
        s = np.array([0.0, 0.1, 0.4, 0.45, 1.0])
        expected = np.empty_like(s)
        expected[0] = (s[1] - s[0]) / 2
        expected[-1] = (s[-1] - s[-2]) / 2
        expected[1:-1] = (s[2:] - s[:-2]) / 2
        np.testing.assert_allclose(quad_weights(s), expected)

    @pytest.mark.parametrize("pts", [[0.5], [0, 0.5, 0.5], [0, 0.6, 0.3], [0, np.nan, 1]])
    def test_invalid(self, pts):
        with pytest.raises(InvalidGridError):
            quad_weights(pts)

    def test_grid_outside_unit_interval(self):
        with pytest.raises(InvalidGridError):
            Grid([0.0, 0.5, 1.5])

    @given(st.lists(st.floats(0, 1, allow_nan=False), min_size=2, max_size=40, unique=True))
    def test_weights_positive_and_sum_to_span(self, pts):
        pts = np.sort(np.array(pts))
        try:
            w = quad_weights(pts)
        except InvalidGridError:
            # only spacings that underflow when halved are rejected
            assert np.min(np.diff(pts)) < 1e-300
            return
        assert np.all(w > 0)
        assert w.sum() == pytest.approx(pts[-1] - pts[0], rel=1e-12, abs=1e-15)


class TestInnerProduct:
    def test_unit_sine(self, grid201):
        f = fn(grid201, lambda s: SQ2 * np.sin(2 * np.pi * s))
        assert inner_product(f, f) == pytest.approx(1.0, abs=1e-3)

    def test_sine_cosine_orthogonal(self, grid201):
        f = fn(grid201, lambda s: SQ2 * np.sin(2 * np.pi * s))
        g = fn(grid201, lambda s: SQ2 * np.cos(2 * np.pi * s))
        assert inner_product(f, g) == pytest.approx(0.0, abs=1e-3)

    def test_beta_projection_half(self, grid201):
        beta = beta_tm1(1.0, 0.5, grid201)
        phi = fourier_eigenfunction(1, grid201)
        assert inner_product(beta, phi) == pytest.approx(0.5, abs=1e-3)

    def test_grid_mismatch(self):
        f = FunctionOnGrid(Grid.uniform(11), np.ones(11))
        g = FunctionOnGrid(Grid.uniform(12), np.ones(12))
        with pytest.raises(GridMismatchError):
            inner_product(f, g)

    def test_polynomial_oracle(self):
        # trapezoid error for s^2 on a uniform grid is h^2/6 exactly
        g = Grid.uniform(51)
        f = fn(g, lambda s: s)
        h = 1 / 50
        assert inner_product(f, f) == pytest.approx(1 / 3 + h**2 / 6, rel=1e-12)


class TestNormsAndCorrelation:
    def test_norm_of_unit_eigenfunction(self, grid201):
        assert l2_norm(fourier_eigenfunction(1, grid201)) == pytest.approx(1.0, abs=1e-3)

    def test_correlation_closed_form(self, grid201):
        w = 0.5
        beta = beta_tm1(1.0, w, grid201)
        phi = fourier_eigenfunction(1, grid201)
        expected = (1 - w) / np.sqrt(w**2 + (1 - w) ** 2)
        assert l2_correlation(beta, phi) == pytest.approx(expected, abs=2e-3)

    def test_self_correlation(self, grid101):
        f = fn(grid101, lambda s: np.exp(s) - 0.3)
        assert l2_correlation(f, f) == pytest.approx(1.0, abs=1e-15)

    def test_zero_norm(self, grid101):
        with pytest.raises(DegenerateFunctionError):
            l2_correlation(FunctionOnGrid(grid101, np.zeros(101)), fn(grid101, np.sin))


class TestInvariants:
    vals = arrays(np.float64, 21, elements=st.floats(-1e3, 1e3, allow_nan=False))

    @given(vals, vals)
    def test_cauchy_schwarz_and_symmetry(self, a, b):
        g = Grid.uniform(21)
        f, h = FunctionOnGrid(g, a), FunctionOnGrid(g, b)
        ip = inner_product(f, h)
        assert ip == pytest.approx(inner_product(h, f), rel=1e-12, abs=1e-9)
        assert abs(ip) <= l2_norm(f) * l2_norm(h) * (1 + 1e-12) + 1e-9

    @given(vals, vals, st.floats(-10, 10, allow_nan=False))
    def test_bilinear(self, a, b, c):
        g = Grid.uniform(21)
        f, h = FunctionOnGrid(g, a), FunctionOnGrid(g, b)
        k = FunctionOnGrid(g, np.cos(g.points))
        lhs = inner_product(f * c + h, k)
        rhs = c * inner_product(f, k) + inner_product(h, k)
        assert lhs == pytest.approx(rhs, rel=1e-9, abs=1e-7)

    @given(vals, vals)
    def test_correlation_bounded(self, a, b):
        g = Grid.uniform(21)
        f, h = FunctionOnGrid(g, a), FunctionOnGrid(g, b)
        if l2_norm(f) < 1e-6 or l2_norm(h) < 1e-6:
            return
        assert -1.0 <= l2_correlation(f, h) <= 1.0

    def test_orthonormality_improves_with_density(self):
        errs = []
        for P in (51, 201):
            g = Grid.uniform(P)
            G = gram_matrix([fourier_eigenfunction(k, g) for k in range(1, 5)])
            errs.append(np.abs(G - np.eye(4)).max())
        # full periods on a uniform grid: the rule is exact up to rounding,
        # so the trend can only be non-increasing
        assert errs[1] <= errs[0] + 1e-14
        assert max(errs) < 1e-3

    def test_jittered_grid_consistency(self):
        rng = np.random.default_rng(5)
        base = np.linspace(0, 1, 201)
        jit = base.copy()
        jit[1:-1] += rng.uniform(-0.4, 0.4, 199) * (base[1] - base[0])
        gu, gj = Grid(base), Grid(jit)
        for k in range(1, 5):
            for m in range(1, 5):
                u = inner_product(fourier_eigenfunction(k, gu), fourier_eigenfunction(m, gu))
                j = inner_product(fourier_eigenfunction(k, gj), fourier_eigenfunction(m, gj))
                assert j == pytest.approx(u, abs=1e-2)


class TestFunctionOnGrid:
    def test_wrong_length(self, grid101):
        with pytest.raises(GridMismatchError):
            FunctionOnGrid(grid101, np.ones(5))

    def test_arithmetic(self, grid101):
        f = fn(grid101, np.sin)
        g = fn(grid101, np.cos)
        np.testing.assert_allclose((f + g * 2 - f).values, 2 * np.cos(grid101.points))
        np.testing.assert_allclose((-f).values, -np.sin(grid101.points))

    def test_values_read_only(self, grid101):
        f = fn(grid101, np.sin)
        with pytest.raises(ValueError):
            f.values[0] = 1.0
