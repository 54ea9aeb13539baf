import math

import numpy as np
import pytest

from ftkalign.fourier_bessel import nyquist_frequency
from ftkalign.kernel import (assemble_svd, eval_singular_functions, hs_error, load_plan,
                             modal_svd, plan_matches, rank_bound, reconstruct_kernel,
                             relative_hs_error, save_plan, total_rank_bound)

K64 = nyquist_frequency(64)
D1 = 2 * math.pi / K64          # W = 1

# Leading modal singular values at W = 1, n = 64 from an independent
# discretization: 200-point Gauss-Legendre in delta and k, weights delta and k,
# scipy.special.jv and a dense numpy SVD.
SIGMA_ORACLE = {
    0: [0.9997619967469856, 0.9363073838428891, 0.3436609025961071, 0.0286531115530352],
    1: [0.9952801568689442, 0.7174710520756217, 0.11829164263645706, 0.006435486474616996],
    3: [0.8429247562304697, 0.17430123635034023, 0.009392876442863176, 0.00027993987066274236],
    6: [0.19628298549811388, 0.006376020483002432, 0.0001262066349298246,
        1.807592631240396e-06],
}


@pytest.fixture(scope="module")
def svd1():
    return assemble_svd(1.0, K64, 1e-2)


class TestModalSVD:
    @pytest.mark.parametrize("ell", sorted(SIGMA_ORACLE))
    def test_singular_values_against_oracle(self, ell):
        m = modal_svd(ell, D1, K64, 1e-2)
        np.testing.assert_allclose(m.sigma_all[:4], SIGMA_ORACLE[ell], rtol=1e-10, atol=1e-15)

    def test_depends_only_on_DK(self):
        a = modal_svd(2, D1, K64, 1e-3)
        b = modal_svd(2, 3 * D1, K64 / 3, 1e-3)
        n = min(a.sigma_all.size, b.sigma_all.size, 8)
        np.testing.assert_allclose(a.sigma_all[:n], b.sigma_all[:n], atol=1e-10)

    def test_negative_mode_mirrors(self):
        a = modal_svd(3, D1, K64, 1e-2)
        b = modal_svd(-3, D1, K64, 1e-2)
        np.testing.assert_allclose(a.sigma_all, b.sigma_all, atol=1e-14)

    def test_singular_vectors_orthonormal(self):
        from ftkalign.special import gauss_jacobi_rule
        m = modal_svd(1, D1, K64, 1e-4)
        rule = gauss_jacobi_rule(60, D1)
        u = m.left(rule.nodes)
        np.testing.assert_allclose((u.T * rule.weights) @ u, np.eye(m.H), atol=1e-10)
        rule = gauss_jacobi_rule(80, K64)
        v = m.right(rule.nodes)
        np.testing.assert_allclose((v.T * rule.weights) @ v, np.eye(m.H), atol=1e-10)

    def test_truncation_threshold(self):
        m = modal_svd(0, D1, K64, 1e-2)
        assert np.all(m.sigma > 1e-2)
        assert m.sigma_all[m.H] <= 1e-2

    def test_reconstructs_modal_kernel(self):
        from ftkalign.special import bessel_j
        m = modal_svd(2, D1, K64, 1e-8)
        d = np.linspace(0, D1, 9)
        k = np.linspace(0, K64, 11)
        approx = (m.left(d) * m.sigma) @ m.right(k).T
        assert np.abs(approx - bessel_j(2, np.outer(d, k))).max() < 1e-6


class TestAssembly:
    def test_rank_at_W1(self, svd1):
        # per-mode counts of oracle values above 1e-2 for l = 0, 1, 3, 6
        r = svd1.mode_ranks()
        assert (r[0], r[1], r[3], r[6]) == (4, 3, 2, 1)
        assert svd1.H == 36
        assert all(r[l] == r[-l] for l in r)

    def test_order_is_descending(self, svd1):
        s = svd1.sigma
        assert np.all(np.diff(s[:svd1.H]) <= 0)
        assert svd1.first_discarded() <= 1e-2 < s[svd1.H - 1]

    @pytest.mark.parametrize("W,eps", [(1, 1e-2), (2, 1e-3), (3, 1e-4)])
    def test_lemma_bounds(self, W, eps):
        svd = assemble_svd(W, K64, eps)
        for ell, h in svd.mode_ranks().items():
            assert h <= rank_bound(ell, W, eps)
        assert svd.H <= total_rank_bound(W, eps)

    def test_energy_matches_hs_norm(self, svd1):
        # sum of squared singular values of exp(-i delta . k) over the two disks
        assert math.sqrt(svd1.energy()) == pytest.approx(math.pi * svd1.D * svd1.K, rel=1e-6)
        assert hs_error(svd1, 0) == pytest.approx(math.pi * svd1.D * svd1.K, rel=1e-6)

    def test_relative_error_monotone(self, svd1):
        e = [relative_hs_error(svd1, h) for h in range(0, svd1.H + 1, 4)]
        assert np.all(np.diff(e) < 0)
        assert relative_hs_error(svd1, svd1.H) < 1e-2

    def test_kernel_reconstruction(self, svd1):
        rng = np.random.default_rng(0)
        r = svd1.D * np.sqrt(rng.uniform(size=200))
        t = rng.uniform(0, 2 * np.pi, 200)
        delta = np.stack([r * np.cos(t), r * np.sin(t)], -1)
        kr = svd1.K * np.sqrt(rng.uniform(size=200))
        kt = rng.uniform(0, 2 * np.pi, 200)
        k = np.stack([kr * np.cos(kt), kr * np.sin(kt)], -1)
        exact = np.exp(-1j * np.sum(delta * k, -1))
        approx = reconstruct_kernel(svd1, delta, k)
        rms = np.sqrt(np.mean(np.abs(approx - exact) ** 2))
        assert rms < 0.05
        with pytest.raises(ValueError):
            reconstruct_kernel(svd1, delta, k, H=svd1.H + 1)

    def test_singular_function_sides(self, svd1):
        left = eval_singular_functions(svd1, 0, np.array([0.0, svd1.D / 2]), np.zeros(2))
        right = eval_singular_functions(svd1, 0, np.array([1.0]), np.zeros(1), side="right")
        assert left.shape == (2,) and right.shape == (1,)
        with pytest.raises(ValueError):
            eval_singular_functions(svd1, 0, 0.0, 0.0, side="middle")

    def test_rejects_bad_arguments(self):
        with pytest.raises(ValueError):
            rank_bound(0, 1.0, 2.0)
        with pytest.raises(ValueError):
            rank_bound(0, -1.0, 1e-2)


class TestPlanCache:
    def test_round_trip(self, svd1, tmp_path):
        save_plan(svd1, tmp_path / "plan.ftk")
        back = load_plan(tmp_path / "plan.ftk")
        assert back.H == svd1.H
        np.testing.assert_array_equal(back.sigma, svd1.sigma)
        d = np.array([[0.01, 0.02]])
        k = np.array([[10.0, -30.0]])
        np.testing.assert_allclose(reconstruct_kernel(back, d, k),
                                   reconstruct_kernel(svd1, d, k), atol=1e-15)
        assert plan_matches(back, svd1.W, svd1.K, svd1.eps, svd1.P)
        assert not plan_matches(back, 2.0, svd1.K, svd1.eps, svd1.P)

    def test_corrupt_file_rejected(self, svd1, tmp_path):
        p = tmp_path / "plan.ftk"
        save_plan(svd1, p)
        p.write_bytes(p.read_bytes()[:-100])
        with pytest.raises(ValueError):
            load_plan(p)
