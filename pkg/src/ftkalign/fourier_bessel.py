"""Pixel images, polar Fourier samples and Fourier-Bessel coefficients.

Conventions
-----------
An ``n x n`` image holds samples ``A[i, j] = A(x_ij)`` with
``x_ij = (i*dx - 1, j*dx - 1)`` and ``dx = 2/n``; the first array axis is the
x coordinate and index ``(n/2, n/2)`` sits at the origin.  The maximum
frequency defaults to Nyquist, ``K = pi n / 2``, and the maximum shift is
``D = 2 dx W`` for a shift of ``W`` wavelengths.

Rotation acts on coefficients as ``a(k; q) -> exp(-i q gamma) a(k; q)`` and
translation by ``delta`` as a discrete convolution in ``q`` with
``J_l(|delta| k) exp(-i l (omega + pi/2))``.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .special import QuadratureRule, bessel_j_all, gauss_jacobi_rule


# -- parameter conventions -------------------------------------------------

def nyquist_frequency(n: int) -> float:
    return 0.5 * math.pi * n


def default_Q(K: float) -> int:
    return int(math.ceil(K + 8.0 * K ** (1 / 3)))


def default_L(W: float) -> int:
    z = 2.0 * math.pi * W
    return int(math.ceil(z + 8.0 * z ** (1 / 3)))


def shift_radius(n: int, W: float) -> float:
    """Maximum shift ``D = 2 dx W`` for ``W`` wavelengths at Nyquist."""
    return 2.0 * (2.0 / n) * W


def shift_wavelengths(D: float, K: float) -> float:
    return D * K / (2.0 * math.pi)


# -- data types --------------------------------------------------------------

@dataclass
class PixelImage:
    """Real samples on the ``[-1, 1]^2`` pixel grid."""

    samples: np.ndarray
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=float)
        s = self.samples
        if s.ndim != 2 or s.shape[0] != s.shape[1]:
            raise ValueError("image must be square")
        if s.shape[0] < 4 or s.shape[0] % 2:
            raise ValueError("image side must be even and at least 4")
        if not np.all(np.isfinite(s)):
            raise ValueError("image samples must be finite")

    @property
    def n(self) -> int:
        return self.samples.shape[0]

    @property
    def dx(self) -> float:
        return 2.0 / self.n

    @property
    def coords(self) -> np.ndarray:
        return np.arange(self.n) * self.dx - 1.0

    def norm(self) -> float:
        return float(np.sqrt(np.sum(self.samples ** 2)) * self.dx)


@dataclass
class RigidTransform:
    """Translate by ``shift`` then rotate by ``angle`` about the origin."""

    shift: tuple = (0.0, 0.0)
    angle: float = 0.0

    @property
    def magnitude(self) -> float:
        return float(math.hypot(*self.shift))

    @property
    def direction(self) -> float:
        return float(math.atan2(self.shift[1], self.shift[0]))


@dataclass
class PolarFourierSamples:
    """``A_hat(k_m, psi_p)`` on ``M`` quadrature rings and ``2Q`` equispaced angles."""

    rule: QuadratureRule
    Q: int
    values: np.ndarray

    @property
    def K(self) -> float:
        return self.rule.radius

    @property
    def angles(self) -> np.ndarray:
        return np.pi * np.arange(2 * self.Q) / self.Q


@dataclass
class FourierBesselCoeffs:
    """``a(k_m; q)`` for ``m < M`` and ``-Q <= q <= Q``; column ``Q + q`` holds mode ``q``."""

    rule: QuadratureRule
    Q: int
    values: np.ndarray

    @property
    def K(self) -> float:
        return self.rule.radius

    @property
    def modes(self) -> np.ndarray:
        return np.arange(-self.Q, self.Q + 1)

    def mode(self, q: int) -> np.ndarray:
        return self.values[..., self.Q + q]

    def with_values(self, values) -> "FourierBesselCoeffs":
        return FourierBesselCoeffs(self.rule, self.Q, values)

    def __add__(self, other):
        return self.with_values(self.values + other.values)

    def __mul__(self, c):
        return self.with_values(self.values * c)

    __rmul__ = __mul__


# -- Fourier evaluation --------------------------------------------------------

def nonuniform_fourier(image: PixelImage, kx, ky, chunk: int = 8192) -> np.ndarray:
    """Trapezoid-rule Fourier transform of ``image`` at arbitrary frequencies.

    Direct summation, ``dx^2 sum_ij A_ij exp(-i k . x_ij)``, organized as a
    matrix product per chunk of points.
    """
    kx = np.asarray(kx, dtype=float)
    ky = np.asarray(ky, dtype=float)
    shape = kx.shape
    kx, ky = kx.ravel(), ky.ravel()
    x = image.coords
    A = image.samples
    out = np.empty(kx.size, dtype=complex)
    for s in range(0, kx.size, chunk):
        ex = np.exp(-1j * np.outer(kx[s:s + chunk], x))
        ey = np.exp(-1j * np.outer(ky[s:s + chunk], x))
        inner = ey @ A.T          # (P, i): sum_j A_ij e^{-i ky y_j}
        out[s:s + chunk] = np.einsum("pi,pi->p", ex, inner)
    return (image.dx ** 2 * out).reshape(shape)


def cartesian_fourier(image: PixelImage, k1d) -> np.ndarray:
    """Trapezoid-rule transform on the tensor grid ``k1d x k1d``; axis 0 is ``kx``."""
    x = image.coords
    E = np.exp(-1j * np.outer(k1d, x))
    return image.dx ** 2 * (E @ image.samples @ E.T)


def polar_fourier(image: PixelImage, K: float | None = None, M: int | None = None,
                  Q: int | None = None, tol: float = 1e-12,
                  rule: QuadratureRule | None = None) -> PolarFourierSamples:
    """Sample the image's Fourier transform on the polar quadrature grid.

    Evaluation is by direct summation, so values are exact to rounding and
    ``tol`` (which must lie in ``[1e-14, 1e-4]``) is always met.
    """
    if not 1e-14 <= tol <= 1e-4:
        raise ValueError("tol must lie in [1e-14, 1e-4]")
    if K is None:
        K = rule.radius if rule is not None else nyquist_frequency(image.n)
    if K > math.pi / image.dx * (1 + 1e-12):
        raise ValueError(f"K={K:g} exceeds the Nyquist frequency {math.pi / image.dx:g}")
    if rule is None:
        rule = gauss_jacobi_rule(M if M is not None else image.n, K)
    elif abs(rule.radius - K) > 1e-12 * K:
        raise ValueError("rule radius does not match K")
    if Q is None:
        Q = default_Q(K)
    psi = np.pi * np.arange(2 * Q) / Q
    k = rule.nodes[:, None]
    vals = nonuniform_fourier(image, k * np.cos(psi), k * np.sin(psi))
    return PolarFourierSamples(rule, Q, vals)


def fb_decompose(samples: PolarFourierSamples) -> FourierBesselCoeffs:
    """Periodic trapezoid rule on each ring via a length-``2Q`` FFT."""
    Q = samples.Q
    vals = np.asarray(samples.values)
    if vals.shape[-1] != 2 * Q:
        raise ValueError("expected 2Q angular samples per ring")
    spec = np.fft.fft(vals, axis=-1) / (2 * Q)
    q = np.arange(-Q, Q + 1)
    return FourierBesselCoeffs(samples.rule, Q, spec[..., q % (2 * Q)])


def translation_phase(samples: PolarFourierSamples, delta) -> np.ndarray:
    """``F(delta, k) = exp(-i delta . k)`` on the polar grid of ``samples``."""
    k = samples.rule.nodes[:, None]
    psi = samples.angles
    return np.exp(-1j * k * (delta[0] * np.cos(psi) + delta[1] * np.sin(psi)))


# -- coefficient-space actions ---------------------------------------------------

def rotate_coeffs(c: FourierBesselCoeffs, gamma: float) -> FourierBesselCoeffs:
    return c.with_values(c.values * np.exp(-1j * c.modes * gamma))


def translation_kernel(delta, k, ell):
    """``J_l(|delta| k) exp(-i l (omega + pi/2))``; broadcasts over ``k`` and ``ell``."""
    d = math.hypot(delta[0], delta[1])
    omega = math.atan2(delta[1], delta[0])
    k, ell = np.broadcast_arrays(np.asarray(k, dtype=float), np.asarray(ell))
    lmax = int(np.abs(ell).max()) if ell.size else 0
    table = bessel_j_all(lmax, d * k)
    la = np.abs(ell)
    J = np.take_along_axis(table, la[None, ...], axis=0)[0]
    J = np.where((ell < 0) & (la % 2 == 1), -J, J)
    out = J * np.exp(-1j * ell * (omega + 0.5 * np.pi))
    return out[()] if out.ndim == 0 else out


def modal_translation_kernel(delta, k, L: int) -> np.ndarray:
    """Kernel values for ``l = -L..L`` at nodes ``k``; shape ``(len(k), 2L + 1)``."""
    d = math.hypot(delta[0], delta[1])
    omega = math.atan2(delta[1], delta[0])
    k = np.asarray(k, dtype=float)
    table = bessel_j_all(L, d * k)                    # (L+1, M)
    ell = np.arange(-L, L + 1)
    J = table[np.abs(ell)].T                          # (M, 2L+1)
    J = J * np.where((ell < 0) & (np.abs(ell) % 2 == 1), -1.0, 1.0)
    return J * np.exp(-1j * ell * (omega + 0.5 * np.pi))


def translate_coeffs(c: FourierBesselCoeffs, delta, L: int | None = None) -> FourierBesselCoeffs:
    """Discrete convolution in ``q`` with the modal translation kernel.

    Modes that fall outside ``|q| <= Q`` are treated as zero.
    """
    if L is None:
        d = math.hypot(delta[0], delta[1])
        L = default_L(shift_wavelengths(d, c.K))
    f = modal_translation_kernel(delta, c.rule.nodes, L)  # (M, 2L+1)
    a = c.values
    ncol = a.shape[-1]
    out = np.zeros(a.shape, dtype=complex)
    for j, ell in enumerate(range(-L, L + 1)):
        if abs(ell) >= ncol:
            continue
        # out[:, q] += f_l * a[:, q - l]
        fl = f[:, j, None]
        if ell >= 0:
            out[..., ell:] += fl * a[..., :ncol - ell]
        else:
            out[..., :ell] += fl * a[..., -ell:]
    return c.with_values(out)


# -- synthetic images ------------------------------------------------------------

def gen_gaussian_blobs(seed: int, n: int, blob_count: int = 5,
                       anisotropy: tuple = (1.0, 1.6),
                       sigma_range: tuple = (0.07, 0.08),
                       center_radius: float = 0.3) -> PixelImage:
    """Sum of random anisotropic Gaussians normalized to unit L2 norm.

    ``sigma_range`` bounds the narrow axis of each blob and ``anisotropy`` the
    ratio of wide to narrow axis.  Centers are uniform in the disk of radius
    ``center_radius`` (``0`` puts every blob at the origin), which with the
    defaults keeps the image numerically supported inside the unit disk.
    """
    if blob_count < 1:
        raise ValueError("blob_count must be at least 1")
    rng = np.random.default_rng(seed)
    x = np.arange(n) * (2.0 / n) - 1.0
    X, Y = np.meshgrid(x, x, indexing="ij")
    img = np.zeros((n, n))
    for _ in range(blob_count):
        r = center_radius * math.sqrt(rng.uniform())
        t = rng.uniform(0, 2 * math.pi)
        cx, cy = r * math.cos(t), r * math.sin(t)
        s1 = rng.uniform(*sigma_range)
        s2 = s1 * rng.uniform(*anisotropy)
        phi = rng.uniform(0, math.pi)
        amp = rng.uniform(0.5, 1.0)
        u = (X - cx) * math.cos(phi) + (Y - cy) * math.sin(phi)
        v = -(X - cx) * math.sin(phi) + (Y - cy) * math.cos(phi)
        img += amp * np.exp(-0.5 * ((u / s2) ** 2 + (v / s1) ** 2))
    img /= np.sqrt(np.sum(img ** 2)) * (2.0 / n)
    return PixelImage(img, {"n": n, "dx": 2.0 / n, "seed": seed})


def transform_image(image: PixelImage, t: RigidTransform) -> PixelImage:
    """Apply ``t`` (translate, then rotate) by spectral interpolation.

    The image's discrete Fourier series is evaluated at the pulled-back
    points ``R_{-gamma} x - delta``, which is the same as rotating and
    phase-shifting its Fourier transform and resampling on the pixel grid.
    """
    n = image.n
    c = np.fft.fft2(image.samples) / (n * n)
    u = np.arange(-n // 2, n // 2 + 1)
    fold = u % n
    C = c[np.ix_(fold, fold)].astype(complex)
    half = np.where(np.abs(u) == n // 2, 0.5, 1.0)
    C *= half[:, None] * half[None, :]

    x = image.coords
    X, Y = np.meshgrid(x, x, indexing="ij")
    ca, sa = math.cos(t.angle), math.sin(t.angle)
    px = ca * X + sa * Y - t.shift[0]
    py = -sa * X + ca * Y - t.shift[1]
    px, py = px.ravel(), py.ravel()
    # the interpolant is periodic; points pulled back outside the square
    # would otherwise pick up content from the opposite edge
    inside = (np.abs(px + 0.5 * image.dx) <= 1.0) & (np.abs(py + 0.5 * image.dx) <= 1.0)
    out = np.empty(px.size)
    chunk = 4096
    for s in range(0, px.size, chunk):
        ex = np.exp(1j * np.pi * np.outer(px[s:s + chunk] + 1.0, u))
        ey = np.exp(1j * np.pi * np.outer(py[s:s + chunk] + 1.0, u))
        out[s:s + chunk] = np.einsum("pu,pu->p", ex @ C, ey).real
    out[~inside] = 0.0
    out = out.reshape(n, n)
    r = np.hypot(X, Y)
    if np.abs(out[r >= 1.0]).max(initial=0.0) > 1e-3 * np.abs(out).max(initial=0.0):
        warnings.warn("transformed image has content outside the unit disk", stacklevel=2)
    meta = dict(image.meta)
    meta.update(shift_x=t.shift[0], shift_y=t.shift[1], angle=t.angle)
    return PixelImage(out, meta)


# -- image files -------------------------------------------------------------------

def save_image(image: PixelImage, path) -> None:
    """Write ``<path>.f64`` (little-endian row-major) and ``<path>.txt`` sidecar."""
    path = Path(path)
    image.samples.astype("<f8").tofile(path.with_suffix(".f64"))
    meta = {"n": image.n, "dx": image.dx}
    meta.update({k: v for k, v in image.meta.items() if k not in ("n", "dx")})
    lines = [f"{k}={_fmt(v)}" for k, v in meta.items()]
    path.with_suffix(".txt").write_text("\n".join(lines) + "\n")


def load_image(path) -> PixelImage:
    path = Path(path)
    meta = read_descriptor(path.with_suffix(".txt"))
    n = int(meta["n"])
    data = np.fromfile(path.with_suffix(".f64"), dtype="<f8")
    if data.size != n * n:
        raise ValueError(f"{path}: expected {n * n} samples, found {data.size}")
    return PixelImage(data.reshape(n, n), meta)


def read_descriptor(path) -> dict:
    meta = {}
    for line in Path(path).read_text().splitlines():
        if not line.strip() or line.startswith("#"):
            continue
        key, _, val = line.partition("=")
        meta[key.strip()] = _parse(val.strip())
    return meta


def _fmt(v) -> str:
    return repr(float(v)) if isinstance(v, (float, np.floating)) else str(v)


def _parse(s: str):
    for cast in (int, float):
        try:
            return cast(s)
        except ValueError:
            pass
    return s
