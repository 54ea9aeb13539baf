import math

import numpy as np
import pytest

from ftkalign.engines import (InnerProductGrid, ResolutionError, RotationGrid,
                              argmax_alignment, bfr_align,
                              bft_align, bft_batch, direct_inner_product,
                              explicit_translation_grid, ftk_align, ftk_batch, ftk_operators,
                              load_grid_binary, load_grid_csv, make_translation_grid,
                              radial_self_test, save_grid_binary, save_grid_csv,
                              single_shift_rotations)
from ftkalign.fourier_bessel import (RigidTransform, fb_decompose, gen_gaussian_blobs,
                                     nyquist_frequency, polar_fourier, transform_image)
from ftkalign.kernel import assemble_svd, x_error_bound

N = 32
K = nyquist_frequency(N)
W = 1.5
D = 2 * math.pi * W / K


@pytest.fixture(scope="module")
def pair():
    A = gen_gaussian_blobs(1, N)
    B = transform_image(gen_gaussian_blobs(1, N), RigidTransform((0.0625, -0.03125), 1.0))
    pa = polar_fourier(A)
    return A, B, pa, fb_decompose(pa), fb_decompose(polar_fourier(B))


@pytest.fixture(scope="module")
def grids():
    return make_translation_grid(D, 1 / N), RotationGrid(40)


def rel(a, b):
    return np.linalg.norm(a - b) / np.linalg.norm(b)


class TestGrids:
    def test_lattice_inside_disk(self):
        g = make_translation_grid(0.1, 0.02)
        assert np.all(g.radii <= 0.1 + 1e-12)
        assert g.N == 81          # lattice points with i^2 + j^2 <= 25
        idx = g.lattice_indices()
        np.testing.assert_allclose(idx * 0.02, g.shifts)

    def test_zero_radius(self):
        assert make_translation_grid(0.0, 0.1).N == 1

    def test_nearest(self):
        g = make_translation_grid(0.1, 0.02)
        np.testing.assert_allclose(g.shifts[g.nearest((0.039, -0.009))], (0.04, -0.0))
        r = RotationGrid(8)
        assert r.nearest(2 * np.pi - 0.1) == 0
        assert r.nearest(np.pi / 4 + 0.2) == 1

    def test_rejects(self):
        with pytest.raises(ValueError):
            make_translation_grid(0.1, 0.0)
        with pytest.raises(ValueError):
            explicit_translation_grid(0.1, [[0.2, 0.0]])
        with pytest.raises(ValueError):
            RotationGrid(0)


class TestOracle:
    def test_parseval_at_identity(self, pair):
        A, _, _, a, _ = pair
        X = direct_inner_product(a, a, (0.0, 0.0), 0.0)
        assert X == pytest.approx((2 * np.pi) ** 2 * A.norm() ** 2, rel=1e-3)

    def test_matches_pixel_inner_product(self):
        # (2 pi)^2 <R T A, B> in pixel space; n = 64 so the blobs are resolved
        n = 64
        A, B = gen_gaussian_blobs(7, n), gen_gaussian_blobs(8, n)
        a, b = fb_decompose(polar_fourier(A)), fb_decompose(polar_fourier(B))
        d, g = (0.05, -0.03), 0.7
        moved = transform_image(A, RigidTransform(d, g))
        pix = (2 * np.pi) ** 2 * np.sum(moved.samples * B.samples) * (2 / n) ** 2
        assert direct_inner_product(a, b, d, g) == pytest.approx(pix, rel=1e-10)

    def test_single_shift_matches_direct(self, pair):
        _, _, _, a, b = pair
        d = (0.03, 0.05)
        X = single_shift_rotations(a, b, d, 12)
        ref = [direct_inner_product(a, b, d, g) for g in RotationGrid(12).angles]
        np.testing.assert_allclose(X, ref, rtol=1e-12, atol=1e-12)

    def test_real_for_real_images(self, pair):
        _, _, _, a, b = pair
        X = single_shift_rotations(a, b, (0.04, -0.02), 16, complex_out=True)
        assert np.abs(X.imag).max() < 1e-10 * np.abs(X).max()


class TestBFT:
    def test_matches_direct(self, pair, grids):
        _, _, pa, a, b = pair
        tg, rg = grids
        X = bft_align(pa, b, tg, rg, a_coeffs=a)
        rng = np.random.default_rng(1)
        for j, r in zip(rng.integers(tg.N, size=10), rng.integers(rg.n_gamma, size=10)):
            ref = direct_inner_product(a, b, tg.shifts[j], rg.angles[r])
            assert X.values[j, r] == pytest.approx(ref, rel=1e-10)
        assert X.imag_residual < 1e-10

    def test_batch_layout(self, pair, grids):
        _, _, pa, a, b = pair
        tg, rg = grids
        X = bft_batch(pa, [b, a], tg, rg)
        assert X.shape == (2, tg.N, rg.n_gamma)
        np.testing.assert_allclose(X[0], bft_align(pa, b, tg, rg).values)

    def test_explicit_grid_agrees_with_lattice(self, pair, grids):
        _, _, pa, _, b = pair
        tg, rg = grids
        eg = explicit_translation_grid(D, tg.shifts)
        np.testing.assert_allclose(bft_align(pa, b, eg, rg).values,
                                   bft_align(pa, b, tg, rg).values, rtol=1e-12, atol=1e-12)

    def test_recovers_transform(self, pair, grids):
        _, _, pa, _, b = pair
        tg = make_translation_grid(D, 1 / N)
        rg = RotationGrid(2 * 40)
        j, r, _ = argmax_alignment(bft_align(pa, b, tg, rg))
        np.testing.assert_allclose(tg.shifts[j], (0.0625, -0.03125), atol=1e-12)
        assert rg.angles[r] == pytest.approx(1.0, abs=np.pi / 80)


class TestFTK:
    @pytest.mark.parametrize("eps", [1e-2, 1e-4])
    def test_error_within_bound(self, pair, grids, eps):
        _, _, pa, a, b = pair
        tg, rg = grids
        svd = assemble_svd(W, K, eps)
        F = ftk_align(a, b, svd, tg, rg)
        X = bft_align(pa, b, tg, rg)
        rms = np.sqrt(np.mean((F.values - X.values) ** 2))
        assert rms <= x_error_bound(svd, svd.H, a, b)
        assert rms / np.sqrt(np.mean(X.values ** 2)) < 10 * eps
        assert F.meta["H"] == svd.H

    def test_error_drops_with_eps(self, pair, grids):
        _, _, pa, a, b = pair
        tg, rg = grids
        X = bft_align(pa, b, tg, rg).values
        errs = [np.abs(ftk_align(a, b, assemble_svd(W, K, e), tg, rg).values - X).max()
                for e in (1e-1, 1e-3, 1e-6)]
        assert errs[0] > errs[1] > errs[2]
        assert errs[2] < 1e-4 * np.abs(X).max()

    def test_batch_matches_single(self, pair, grids):
        _, _, _, a, b = pair
        tg, rg = grids
        svd = assemble_svd(W, K, 1e-2)
        ops = ftk_operators(svd, a.rule, a.Q, tg)
        X = ftk_batch(a, [b, a], ops, rg)
        np.testing.assert_allclose(X[0], ftk_align(a, b, svd, tg, rg, ops).values)

    def test_shift_outside_plan_rejected(self, pair):
        _, _, _, a, _ = pair
        svd = assemble_svd(W, K, 1e-2)
        with pytest.raises(ValueError):
            ftk_operators(svd, a.rule, a.Q, make_translation_grid(2 * D, 1 / N))


class TestBFR:
    def test_matches_bft_on_lattice(self, pair):
        A, B, pa, _, b = pair
        rg = RotationGrid(24)
        R = bfr_align(A, B, rg, pad=2, D=D)
        X = bft_align(pa, b, R.tgrid, rg)
        assert rel(R.values, X.values) < 1e-3


class TestRadialSelfTest:
    def test_default_rings_suffice(self, pair, grids):
        A, B = pair[0], pair[1]
        tg, rg = grids
        assert radial_self_test(A, B, tg, rg.n_gamma, 1e-2) == N

    def test_too_few_rings_are_doubled(self, pair, grids):
        A, B = pair[0], pair[1]
        tg, rg = grids
        assert radial_self_test(A, B, tg, rg.n_gamma, 1e-2, M=4) > 4

    def test_gives_up(self, pair, grids):
        A, B = pair[0], pair[1]
        tg, rg = grids
        with pytest.raises(ResolutionError):
            radial_self_test(A, B, tg, rg.n_gamma, 1e-2, M=2, max_doublings=0)


class TestResults:
    def test_argmax_ties_take_first(self):
        X = np.zeros((3, 4))
        X[1, 2] = X[2, 0] = 5.0
        assert argmax_alignment(X) == (1, 2, 5.0)

    def test_grid_rejects_nonfinite(self, grids):
        tg, rg = grids
        with pytest.raises(FloatingPointError):
            InnerProductGrid(np.full((tg.N, rg.n_gamma), np.nan), tg, rg, "bft")
        with pytest.raises(ValueError):
            InnerProductGrid(np.zeros((1, 1)), tg, rg, "bft")

    def test_file_round_trips(self, pair, grids, tmp_path):
        _, _, pa, _, b = pair
        tg, rg = grids
        X = bft_align(pa, b, tg, rg)
        save_grid_binary(X, tmp_path / "g.bin")
        back = load_grid_binary(tmp_path / "g.bin")
        np.testing.assert_array_equal(back.values, X.values)
        np.testing.assert_array_equal(back.tgrid.shifts, tg.shifts)
        save_grid_csv(X, tmp_path / "g.csv")
        dx, dy, g, v = load_grid_csv(tmp_path / "g.csv")
        np.testing.assert_array_equal(v, X.values.ravel())
        np.testing.assert_array_equal(g[:rg.n_gamma], rg.angles)
