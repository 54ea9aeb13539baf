import numpy as np
import pytest
import scipy.special as sp
from hypothesis import given, settings, strategies as st

from ftkalign.special import (RadialJacobiBasis, bessel_j, bessel_j_all, gauss_jacobi_rule,
                              jacobi_basis_eval)

# (order, argument, J_order(argument)) from mpmath at 50 digits
BESSEL_ORACLE = [
    (0, 0.5, 0.9384698072408129),
    (1, 3.7, 0.05383398774546179),
    (5, 10.0, -0.23406152818679363),
    (20, 15.5, 0.011468566904954089),
    (40, 30.0, 0.0003612023608896585),
    (3, 120.0, 0.009404539121233908),
    (100, 80.0, 4.606553064823477e-06),
]


class TestBessel:
    @pytest.mark.parametrize("order,x,expected", BESSEL_ORACLE)
    def test_against_mpmath(self, order, x, expected):
        assert bessel_j(order, x) == pytest.approx(expected, rel=1e-12, abs=1e-15)

    def test_all_orders_match_scipy(self):
        x = np.linspace(0, 60, 301)
        table = bessel_j_all(80, x)
        ref = sp.jv(np.arange(81)[:, None], x[None, :])
        np.testing.assert_allclose(table, ref, atol=1e-14)

    def test_negative_order_symmetry(self):
        x = np.linspace(0.1, 25, 50)
        for n in range(1, 8):
            np.testing.assert_allclose(bessel_j(-n, x), (-1) ** n * bessel_j(n, x), atol=1e-15)

    def test_rejects_out_of_range(self):
        with pytest.raises(ValueError):
            bessel_j(2, -1.0)
        with pytest.raises(ValueError):
            bessel_j(2.5, 1.0)
        with pytest.raises(ValueError):
            bessel_j(1, np.inf)

    def test_decay_past_turning_point(self):
        # J_n(x) is tiny once n is well beyond x
        x = np.linspace(0, 10, 41)
        assert np.abs(bessel_j(40, x)).max() < 1e-15

    def test_value_at_zero(self):
        assert bessel_j(0, 0.0) == 1.0
        assert bessel_j(3, 0.0) == 0.0

    @settings(max_examples=40, deadline=None)
    @given(st.integers(1, 60), st.floats(0.01, 200.0))
    def test_three_term_recurrence(self, n, x):
        lhs = bessel_j(n - 1, x) + bessel_j(n + 1, x)
        rhs = 2 * n / x * bessel_j(n, x)
        assert abs(lhs - rhs) < 1e-12 * max(1.0, 2 * n / x)


class TestQuadrature:
    @pytest.mark.parametrize("M", [1, 2, 5, 17, 64])
    def test_monomial_exactness(self, M):
        R = 2.3
        rule = gauss_jacobi_rule(M, R)
        for p in range(2 * M):
            exact = R ** (p + 2) / (p + 2)
            assert rule.weights @ rule.nodes ** p == pytest.approx(exact, rel=1e-12)

    def test_not_exact_beyond_degree(self):
        rule = gauss_jacobi_rule(4)
        p = 8
        assert abs(rule.weights @ rule.nodes ** p - 1 / (p + 2)) > 1e-8

    def test_nodes_inside_and_weights_positive(self):
        rule = gauss_jacobi_rule(40, 5.0)
        assert np.all(rule.nodes > 0) and np.all(rule.nodes < 5.0)
        assert np.all(rule.weights > 0)
        assert np.all(np.diff(rule.nodes) > 0)

    def test_bessel_integral(self):
        # int_0^1 J_0(a k) k dk = J_1(a) / a
        rule = gauss_jacobi_rule(40)
        a = 7.5
        assert rule.weights @ bessel_j(0, a * rule.nodes) == pytest.approx(sp.j1(a) / a, rel=1e-13)

    def test_rejects_bad_size(self):
        with pytest.raises(ValueError):
            gauss_jacobi_rule(0)
        with pytest.raises(ValueError):
            gauss_jacobi_rule(3, -1.0)


class TestJacobiBasis:
    @pytest.mark.parametrize("radius", [1.0, 0.2, 7.0])
    def test_orthonormal(self, radius):
        basis = RadialJacobiBasis(radius, 30)
        rule = gauss_jacobi_rule(40, radius)
        phi = basis.evaluate(rule.nodes)
        gram = (phi * rule.weights) @ phi.T
        np.testing.assert_allclose(gram, np.eye(30), atol=1e-12)

    def test_degree(self):
        basis = RadialJacobiBasis(1.0, 6)
        x = np.linspace(0, 1, 20)
        for j in range(6):
            fit = np.polynomial.polynomial.polyfit(x, jacobi_basis_eval(basis, j, x), 8)
            assert np.all(np.abs(fit[j + 1:]) < 1e-8)
            assert abs(fit[j]) > 1e-3

    def test_expand_trailing_axes(self):
        basis = RadialJacobiBasis(2.0, 5)
        c = np.arange(15.0).reshape(5, 3)
        x = np.array([0.1, 0.7, 1.9])
        out = basis.expand(c, x)
        assert out.shape == (3, 3)
        np.testing.assert_allclose(out, basis.evaluate(x).T @ c)

    def test_rejects_empty(self):
        with pytest.raises(ValueError):
            RadialJacobiBasis(1.0, 0)
