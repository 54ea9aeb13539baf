"""Fast rotational and translational alignment of 2-D images.

Images are expanded in Fourier-Bessel coefficients, and inner products over
all shifts and rotations are computed with a low-rank factorization of the
translation kernel (FTK), with brute-force engines as references.
"""
from .engines import (InnerProductGrid, RotationGrid, TranslationGrid, argmax_alignment,
                      bfr_align, bft_align, direct_inner_product, ftk_align,
                      make_translation_grid, single_shift_rotations)
from .fourier_bessel import (FourierBesselCoeffs, PixelImage, PolarFourierSamples,
                             RigidTransform, fb_decompose, gen_gaussian_blobs, polar_fourier,
                             rotate_coeffs, transform_image, translate_coeffs,
                             translation_kernel)
from .kernel import (ModalSVD, TranslationKernelSVD, assemble_svd, hs_error, modal_svd,
                     rank_bound, total_rank_bound, x_error_bound)
from .special import (QuadratureRule, RadialJacobiBasis, bessel_j, gauss_jacobi_rule,
                      jacobi_basis_eval)

__version__ = "0.1.0"

__all__ = [
    "InnerProductGrid", "RotationGrid", "TranslationGrid", "argmax_alignment", "bfr_align",
    "bft_align", "direct_inner_product", "ftk_align", "make_translation_grid",
    "single_shift_rotations", "FourierBesselCoeffs", "PixelImage", "PolarFourierSamples",
    "RigidTransform", "fb_decompose", "gen_gaussian_blobs", "polar_fourier", "rotate_coeffs",
    "transform_image", "translate_coeffs", "translation_kernel", "ModalSVD",
    "TranslationKernelSVD", "assemble_svd", "hs_error", "modal_svd", "rank_bound",
    "total_rank_bound", "x_error_bound", "QuadratureRule", "RadialJacobiBasis", "bessel_j",
    "gauss_jacobi_rule", "jacobi_basis_eval",
]
