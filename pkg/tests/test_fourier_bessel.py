import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from ftkalign.fourier_bessel import (PixelImage, RigidTransform, default_L, default_Q,
                                     fb_decompose, gen_gaussian_blobs, load_image,
                                     modal_translation_kernel, nonuniform_fourier,
                                     nyquist_frequency, polar_fourier, rotate_coeffs,
                                     save_image, shift_radius, shift_wavelengths,
                                     transform_image, translate_coeffs, translation_kernel,
                                     translation_phase)

N = 32


@pytest.fixture(scope="module")
def blob():
    return gen_gaussian_blobs(3, N)


@pytest.fixture(scope="module")
def blob_coeffs(blob):
    return fb_decompose(polar_fourier(blob))


def rel(a, b):
    return np.linalg.norm(a - b) / np.linalg.norm(b)


class TestParameters:
    def test_nyquist(self):
        assert nyquist_frequency(64) == pytest.approx(32 * math.pi)

    def test_default_Q(self):
        assert default_Q(nyquist_frequency(64)) == 138

    def test_shift_radius_round_trip(self):
        n, W = 64, 2.5
        D = shift_radius(n, W)
        assert D == pytest.approx(2 * (2 / n) * W)
        assert shift_wavelengths(D, nyquist_frequency(n)) == pytest.approx(W)

    def test_default_L_grows(self):
        assert default_L(1) < default_L(2) < default_L(3)
        assert default_L(2) >= 4 * math.pi


class TestFourierTransform:
    def test_gaussian_transform(self):
        # isotropic Gaussian: FT = 2 pi s^2 exp(-s^2 k^2 / 2)
        s = 0.1
        x = np.arange(N) * (2 / N) - 1
        X, Y = np.meshgrid(x, x, indexing="ij")
        img = PixelImage(np.exp(-(X ** 2 + Y ** 2) / (2 * s * s)))
        k = np.array([0.0, 3.0, 10.0, 25.0])
        psi = 0.4
        vals = nonuniform_fourier(img, k * math.cos(psi), k * math.sin(psi))
        np.testing.assert_allclose(vals, 2 * np.pi * s * s * np.exp(-s * s * k * k / 2),
                                   atol=1e-14)

    def test_conjugate_symmetry(self, blob_coeffs):
        # real image: a(k; -q) = (-1)^q conj a(k; q)
        c = blob_coeffs
        for q in range(1, 20):
            np.testing.assert_allclose(c.mode(-q), (-1) ** q * np.conj(c.mode(q)), atol=1e-13)

    def test_parseval(self, blob, blob_coeffs):
        c = blob_coeffs
        freq = 2 * np.pi * np.sum(c.rule.weights[:, None] * np.abs(c.values) ** 2)
        assert freq == pytest.approx((2 * np.pi) ** 2 * blob.norm() ** 2, rel=1e-3)

    def test_pure_mode_decomposes_to_one_coefficient(self, blob):
        s = polar_fourier(blob, M=8, Q=10)
        s.values = np.exp(3j * s.angles)[None, :] * np.ones((8, 1))
        c = fb_decompose(s)
        expect = np.zeros(21)
        expect[10 + 3] = 1
        np.testing.assert_allclose(np.abs(c.values[0]), expect, atol=1e-14)

    def test_rejects_bad_tolerance_and_band(self, blob):
        with pytest.raises(ValueError):
            polar_fourier(blob, tol=1e-2)
        with pytest.raises(ValueError):
            polar_fourier(blob, K=2 * nyquist_frequency(N))


class TestTranslationKernel:
    def test_jacobi_anger(self, blob):
        s = polar_fourier(blob, M=12, Q=40)
        delta = (0.07, -0.04)
        f = modal_translation_kernel(delta, s.rule.nodes, 40)
        ell = np.arange(-40, 41)
        series = f @ np.exp(1j * np.outer(ell, s.angles))
        np.testing.assert_allclose(series, translation_phase(s, delta), atol=1e-13)

    def test_scalar_and_modal_forms_agree(self):
        k = np.linspace(0, 50, 7)
        delta = (-0.1, 0.05)
        table = modal_translation_kernel(delta, k, 6)
        for j, ell in enumerate(range(-6, 7)):
            np.testing.assert_allclose(translation_kernel(delta, k, ell), table[:, j], atol=1e-15)

    def test_zero_shift_is_identity(self, blob_coeffs):
        c = translate_coeffs(blob_coeffs, (0.0, 0.0))
        np.testing.assert_allclose(c.values, blob_coeffs.values, atol=1e-15)


class TestGroupLaws:
    def test_rotation_composes(self, blob_coeffs):
        a = rotate_coeffs(rotate_coeffs(blob_coeffs, 0.3), 1.1)
        b = rotate_coeffs(blob_coeffs, 1.4)
        np.testing.assert_allclose(a.values, b.values, atol=1e-14)

    def test_full_turn(self, blob_coeffs):
        c = rotate_coeffs(blob_coeffs, 2 * np.pi)
        np.testing.assert_allclose(c.values, blob_coeffs.values, atol=1e-12)

    def test_translation_composes(self, blob_coeffs):
        d1, d2 = (0.05, 0.02), (-0.03, 0.04)
        a = translate_coeffs(translate_coeffs(blob_coeffs, d1), d2)
        b = translate_coeffs(blob_coeffs, (d1[0] + d2[0], d1[1] + d2[1]))
        assert rel(a.values, b.values) < 1e-10

    def test_translation_inverse(self, blob_coeffs):
        d = (0.06, -0.08)
        a = translate_coeffs(translate_coeffs(blob_coeffs, d), (-d[0], -d[1]))
        assert rel(a.values, blob_coeffs.values) < 1e-10

    def test_translation_preserves_norm(self, blob_coeffs):
        c = translate_coeffs(blob_coeffs, (0.1, 0.0))
        w = blob_coeffs.rule.weights[:, None]
        assert np.sum(w * np.abs(c.values) ** 2) == pytest.approx(
            np.sum(w * np.abs(blob_coeffs.values) ** 2), rel=1e-10)

    @settings(max_examples=5, deadline=None)
    @given(st.floats(-0.1, 0.1), st.floats(-0.1, 0.1), st.floats(0, 2 * math.pi))
    def test_pixel_and_coefficient_transforms_agree(self, dx, dy, gamma):
        # n = 64 so the blobs are resolved and the pixel interpolant is accurate
        img = gen_gaussian_blobs(5, 64)
        moved = transform_image(img, RigidTransform((dx, dy), gamma))
        pix = fb_decompose(polar_fourier(moved))
        c = fb_decompose(polar_fourier(img))
        coef = rotate_coeffs(translate_coeffs(c, (dx, dy)), gamma)
        assert rel(pix.values, coef.values) < 1e-9


class TestImages:
    def test_blobs_unit_norm_and_seeded(self):
        a = gen_gaussian_blobs(11, N)
        b = gen_gaussian_blobs(11, N)
        assert a.norm() == pytest.approx(1.0)
        np.testing.assert_array_equal(a.samples, b.samples)
        assert not np.allclose(a.samples, gen_gaussian_blobs(12, N).samples)

    def test_transform_identity(self, blob):
        out = transform_image(blob, RigidTransform())
        np.testing.assert_allclose(out.samples, blob.samples, atol=1e-13)

    def test_quarter_turn_is_exact_permutation(self, blob):
        # rotating by pi/2 maps pixel (i, j) to (-j, i) about the origin
        out = transform_image(blob, RigidTransform((0.0, 0.0), math.pi / 2))
        i = np.arange(1, N)
        expect = np.zeros_like(blob.samples)
        expect[np.ix_(i, i)] = blob.samples[np.ix_(i, N - i)].T
        np.testing.assert_allclose(out.samples[1:, 1:], expect[1:, 1:], atol=1e-12)

    def test_rejects_bad_shapes(self):
        with pytest.raises(ValueError):
            PixelImage(np.zeros((4, 6)))
        with pytest.raises(ValueError):
            PixelImage(np.zeros((5, 5)))
        with pytest.raises(ValueError):
            PixelImage(np.full((4, 4), np.nan))

    def test_save_load_round_trip(self, blob, tmp_path):
        blob.meta["transform"] = "none"
        save_image(blob, tmp_path / "img")
        back = load_image(tmp_path / "img")
        np.testing.assert_array_equal(back.samples, blob.samples)
        assert back.meta["n"] == N and back.meta["transform"] == "none"
        assert back.meta["dx"] == pytest.approx(2 / N)

    def test_truncated_file_rejected(self, blob, tmp_path):
        save_image(blob, tmp_path / "img")
        data = (tmp_path / "img.f64").read_bytes()
        (tmp_path / "img.f64").write_bytes(data[:-8])
        with pytest.raises(ValueError):
            load_image(tmp_path / "img")
