"""Inner products over shifts and rotations: FTK, BFT, BFR and a direct oracle.

All engines report

    X(delta, gamma) = int_{|k| <= K} exp(-i delta . k) A_hat(k) conj(B_hat(R_gamma k)) dk,

the bandlimited inner product of the template ``A`` moved by ``R_gamma T_delta``
with the image ``B``.  In coefficient space this is

    X = 2 pi sum_q exp(-i q gamma) sum_m w_m a_delta(k_m; q) conj(b(k_m; q)),

with ``a_delta`` the translated coefficients.  For real images ``X`` is real,
so the batched engines only form ``q >= 0`` and take real parts.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy.fft as sfft

from .fourier_bessel import (FourierBesselCoeffs, PixelImage, PolarFourierSamples,
                             cartesian_fourier, fb_decompose, polar_fourier, translate_coeffs)
from .kernel import TranslationKernelSVD
from .special import RadialJacobiBasis


class ResolutionError(RuntimeError):
    """The radial self-test did not converge."""


# -- grids -------------------------------------------------------------------------

@dataclass
class TranslationGrid:
    D: float
    shifts: np.ndarray
    spacing: float
    layout: str = "cartesian"

    @property
    def N(self) -> int:
        return self.shifts.shape[0]

    @property
    def radii(self) -> np.ndarray:
        return np.hypot(self.shifts[:, 0], self.shifts[:, 1])

    @property
    def directions(self) -> np.ndarray:
        return np.arctan2(self.shifts[:, 1], self.shifts[:, 0])

    def lattice_indices(self) -> np.ndarray:
        return np.rint(self.shifts / self.spacing).astype(int)

    def nearest(self, delta) -> int:
        d = self.shifts - np.asarray(delta, dtype=float)
        return int(np.argmin(np.hypot(d[:, 0], d[:, 1])))


@dataclass
class RotationGrid:
    n_gamma: int

    def __post_init__(self):
        if self.n_gamma < 1:
            raise ValueError("need at least one rotation")

    @property
    def angles(self) -> np.ndarray:
        return 2 * np.pi * np.arange(self.n_gamma) / self.n_gamma

    def nearest(self, gamma: float) -> int:
        step = 2 * np.pi / self.n_gamma
        return int(np.rint((gamma % (2 * np.pi)) / step)) % self.n_gamma


@dataclass
class InnerProductGrid:
    """Real ``X[j, r]`` for shift ``j`` and rotation ``r``."""

    values: np.ndarray
    tgrid: TranslationGrid
    rgrid: RotationGrid
    engine: str
    imag_residual: float = 0.0
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.values.shape != (self.tgrid.N, self.rgrid.n_gamma):
            raise ValueError("values do not match the grids")
        if not np.all(np.isfinite(self.values)):
            raise FloatingPointError("inner product grid has non-finite values")


def make_translation_grid(D: float, spacing: float) -> TranslationGrid:
    """Cartesian lattice of pitch ``spacing`` clipped to the disk of radius ``D``.

    Ordered row-major in ``(i_x, i_y)``.
    """
    if not spacing > 0:
        raise ValueError("spacing must be positive")
    if D < 0:
        raise ValueError("D must be non-negative")
    r = D / spacing
    m = int(math.floor(r + 1e-9))
    i = np.arange(-m, m + 1)
    I, J = np.meshgrid(i, i, indexing="ij")
    keep = I ** 2 + J ** 2 <= r * r * (1 + 1e-12) + 1e-12
    shifts = spacing * np.stack([I[keep], J[keep]], axis=1).astype(float)
    return TranslationGrid(D, shifts, spacing, "cartesian")


def explicit_translation_grid(D: float, shifts) -> TranslationGrid:
    shifts = np.atleast_2d(np.asarray(shifts, dtype=float))
    if np.any(np.hypot(shifts[:, 0], shifts[:, 1]) > D * (1 + 1e-12)):
        raise ValueError("shift outside the disk of radius D")
    return TranslationGrid(D, shifts, 0.0, "explicit")


# -- shared pieces ---------------------------------------------------------------------

def _hermitian_weights(Q: int) -> np.ndarray:
    h = np.full(Q + 1, 2.0)
    h[0] = 1.0
    return h


def _synthesize(c, n_gamma: int, q0: int = 0):
    """``sum_j c[..., j] exp(-i (q0 + j) gamma_r)`` on the rotation grid via FFT."""
    c = np.asarray(c)
    nq = c.shape[-1]
    q = (q0 + np.arange(nq)) % n_gamma
    if nq <= n_gamma and q0 >= 0:
        bins = np.zeros(c.shape[:-1] + (n_gamma,), dtype=complex)
        bins[..., q] = c
    else:
        bins = np.zeros(c.shape[:-1] + (n_gamma,), dtype=complex)
        for j in range(nq):
            bins[..., q[j]] += c[..., j]
    return sfft.fft(bins, axis=-1)


def _check_shifts(tgrid: TranslationGrid, D: float):
    if np.any(tgrid.radii > D * (1 + 1e-9)):
        raise ValueError(f"translation grid leaves the plan's shift disk (D={D:g})")


def _stack(coeffs):
    if isinstance(coeffs, FourierBesselCoeffs):
        return coeffs.values[None]
    return np.stack([c.values for c in coeffs])


# -- oracle ------------------------------------------------------------------------------

def direct_inner_product(a: FourierBesselCoeffs, b: FourierBesselCoeffs, delta, gamma: float,
                         L: int | None = None) -> float:
    """Literal triple sum over ``q``, ``l`` and the radial nodes."""
    c = translate_coeffs(a, delta, L)
    w = a.rule.weights
    phase = np.exp(-1j * a.modes * gamma)
    X = 2 * np.pi * np.sum(w[:, None] * c.values * np.conj(b.values) * phase[None, :])
    return float(X.real)


def single_shift_rotations(a: FourierBesselCoeffs, b: FourierBesselCoeffs, delta, n_gamma: int,
                           L: int | None = None, complex_out: bool = False):
    """``X(delta, gamma_r)`` for all rotations at one shift via one angular FFT."""
    c = translate_coeffs(a, delta, L)
    spec = np.einsum("m,mq->q", a.rule.weights, c.values * np.conj(b.values))
    # shift q = -Q..Q to non-negative bins before folding
    X = 2 * np.pi * _synthesize(spec, n_gamma, q0=-a.Q)
    return X if complex_out else X.real


def radial_self_test(A: PixelImage, B: PixelImage, tgrid: TranslationGrid, n_gamma: int,
                     eps: float, M: int | None = None, max_doublings: int = 4,
                     samples: int = 4) -> int:
    """Double the ring count until ``X`` moves by less than ``0.1 eps`` of its peak.

    ``X`` is sampled at a few shifts of ``tgrid`` and all ``n_gamma`` angles.
    Returns the first ``M`` whose doubling passes; raises
    :class:`ResolutionError` if ``max_doublings`` is exhausted.
    """
    M = A.n if M is None else M
    idx = np.linspace(0, tgrid.N - 1, min(samples, tgrid.N)).astype(int)

    def sample(m):
        a = fb_decompose(polar_fourier(A, M=m))
        b = fb_decompose(polar_fourier(B, M=m))
        return np.stack([single_shift_rotations(a, b, tgrid.shifts[j], n_gamma) for j in idx])

    X = sample(M)
    for _ in range(max_doublings):
        X2 = sample(2 * M)
        if np.abs(X2 - X).max() < 0.1 * eps * np.abs(X2).max():
            return M
        M, X = 2 * M, X2
    raise ResolutionError(f"X still changing after doubling M to {M}")


def imaginary_residual(a, b, tgrid: TranslationGrid, rgrid: RotationGrid, scale: float,
                       samples: int = 4) -> float:
    """``max |Im X| / scale`` over a few shifts, from the full ``q`` range."""
    if scale == 0:
        return 0.0
    idx = np.linspace(0, tgrid.N - 1, min(samples, tgrid.N)).astype(int)
    worst = 0.0
    for j in idx:
        X = single_shift_rotations(a, b, tgrid.shifts[j], rgrid.n_gamma, complex_out=True)
        worst = max(worst, float(np.abs(X.imag).max()))
    return worst / scale


# -- BFT -----------------------------------------------------------------------------------

def _phase_blocks(tgrid: TranslationGrid, kx, ky, block: int):
    """Yield ``(slice, exp(-i delta . k))`` for blocks of shifts.

    Cartesian grids reuse per-axis phase tables, which replaces most
    complex exponentials with one multiplication.
    """
    N = tgrid.N
    if tgrid.layout == "cartesian" and N > 1:
        idx = tgrid.lattice_indices()
        m = int(np.abs(idx).max())
        steps = np.arange(-m, m + 1)[:, None, None]
        ex = np.exp(-1j * tgrid.spacing * steps * kx[None])
        ey = np.exp(-1j * tgrid.spacing * steps * ky[None])
        for s in range(0, N, block):
            sl = slice(s, min(N, s + block))
            yield sl, ex[idx[sl, 0] + m] * ey[idx[sl, 1] + m]
    else:
        for s in range(0, N, block):
            sl = slice(s, min(N, s + block))
            d = tgrid.shifts[sl]
            yield sl, np.exp(-1j * (d[:, 0, None, None] * kx[None] + d[:, 1, None, None] * ky[None]))


def bft_batch(template: PolarFourierSamples, images, tgrid: TranslationGrid,
              rgrid: RotationGrid, block: int = 128) -> np.ndarray:
    """BFT values for one template against a batch of images.

    Returns ``X[i, j, r]`` for image ``i``, shift ``j`` and rotation ``r``.
    Per shift, the template's polar samples are phase-shifted and
    decomposed once; the radial contraction against all images is one
    batched matrix product over ``q``.
    """
    B = _stack(images)                          # (nimg, M, 2Q+1)
    Q = template.Q
    w = template.rule.weights
    nimg = B.shape[0]
    Bc = np.conj(B[:, :, Q:]) * w[None, :, None]  # q = 0..Q
    Bc = np.ascontiguousarray(Bc.transpose(2, 1, 0))  # (Q+1, M, nimg)
    h = _hermitian_weights(Q)
    k = template.rule.nodes[:, None]
    psi = template.angles[None, :]
    kx, ky = k * np.cos(psi), k * np.sin(psi)
    out = np.empty((nimg, tgrid.N, rgrid.n_gamma))
    for sl, ph in _phase_blocks(tgrid, kx, ky, block):
        spec = sfft.fft(ph * template.values[None], axis=-1)[..., :Q + 1] / (2 * Q)
        spec = np.ascontiguousarray(spec.transpose(2, 0, 1))  # (Q+1, Nb, M)
        c = np.matmul(spec, Bc)                               # (Q+1, Nb, nimg)
        c = c.transpose(2, 1, 0) * h                          # (nimg, Nb, Q+1)
        out[:, sl, :] = 2 * np.pi * _synthesize(c, rgrid.n_gamma).real
    return out


def bft_align(a_polar: PolarFourierSamples, b_coeffs: FourierBesselCoeffs,
              tgrid: TranslationGrid, rgrid: RotationGrid, a_coeffs=None) -> InnerProductGrid:
    X = bft_batch(a_polar, b_coeffs, tgrid, rgrid)[0]
    res = 0.0
    if a_coeffs is not None:
        res = imaginary_residual(a_coeffs, b_coeffs, tgrid, rgrid, float(np.abs(X).max()))
    return InnerProductGrid(X, tgrid, rgrid, "bft", res)


# -- FTK -------------------------------------------------------------------------------------

@dataclass
class FTKOperators:
    """Plan-dependent factors shared by every pair on a fixed grid.

    ``G[z, m] = w_m Sigma_z V_z(k_m)`` and ``Y[j, z] = U_z(|delta_j|)
    exp(-i l_z (omega_j + pi/2))``, with ``z`` running over retained terms.
    """

    ells: np.ndarray
    G: np.ndarray
    Y: np.ndarray
    Q: int


def ftk_operators(svd: TranslationKernelSVD, rule, Q: int, tgrid: TranslationGrid) -> FTKOperators:
    if abs(rule.radius - svd.K) > 1e-9 * svd.K:
        raise ValueError("radial rule and plan use different K")
    _check_shifts(tgrid, svd.D)
    terms = svd.retained
    H = len(terms)
    G = np.empty((H, rule.size))
    Y = np.empty((tgrid.N, H), dtype=complex)
    ells = np.array([t[0] for t in terms], dtype=int)
    r, om = tgrid.radii, tgrid.directions
    cache = {}
    for z, (ell, eta, s) in enumerate(terms):
        if ell not in cache:
            m = svd.modes[ell]
            cache[ell] = (m.left(r), m.right(rule.nodes))
        u, v = cache[ell]
        G[z] = rule.weights * s * v[:, eta]
        Y[:, z] = u[:, eta] * np.exp(-1j * ell * (om + 0.5 * np.pi))
    return FTKOperators(ells, G, Y, Q)


def ftk_batch(template: FourierBesselCoeffs, images, ops: FTKOperators,
              rgrid: RotationGrid) -> np.ndarray:
    """FTK values ``X[i, j, r]`` for one template against a batch of images.

    Step 1 contracts over the radial nodes for each retained term, step 2
    synthesizes rotations with an FFT over ``q`` and step 3 is one real
    matrix product against the shift factors.
    """
    B = _stack(images)
    Q = ops.Q
    nimg = B.shape[0]
    a = template.values
    M = a.shape[0]
    # a(k; q - l) for q = 0..Q, zero outside |q - l| <= Q
    a_ext = np.concatenate([a, np.zeros((M, 1), dtype=a.dtype)], axis=1)
    idx = Q + np.arange(Q + 1)[:, None] - ops.ells[None, :]     # (Q+1, H)
    idx = np.where((idx >= 0) & (idx <= 2 * Q), idx, 2 * Q + 1)
    T = a_ext[:, idx].transpose(1, 2, 0) * ops.G[None]          # (Q+1, H, M)
    Bc = np.ascontiguousarray(np.conj(B[:, :, Q:]).transpose(2, 1, 0))  # (Q+1, M, nimg)
    Z = np.matmul(T, Bc)                                        # (Q+1, H, nimg)
    Z = Z.transpose(1, 2, 0) * _hermitian_weights(Q)            # (H, nimg, Q+1)
    Zh = _synthesize(Z, rgrid.n_gamma)                          # (H, nimg, ngam)
    H = Zh.shape[0]
    Zr = np.concatenate([Zh.real, Zh.imag], axis=0).reshape(2 * H, -1)
    Yr = np.concatenate([ops.Y.real, -ops.Y.imag], axis=1)      # (N, 2H)
    X = (2 * np.pi) * (Yr @ Zr)                                 # (N, nimg*ngam)
    return X.reshape(-1, nimg, rgrid.n_gamma).transpose(1, 0, 2)


def ftk_align(a_coeffs: FourierBesselCoeffs, b_coeffs: FourierBesselCoeffs,
              svd: TranslationKernelSVD, tgrid: TranslationGrid, rgrid: RotationGrid,
              ops: FTKOperators | None = None) -> InnerProductGrid:
    if ops is None:
        ops = ftk_operators(svd, a_coeffs.rule, a_coeffs.Q, tgrid)
    X = ftk_batch(a_coeffs, b_coeffs, ops, rgrid)[0]
    res = imaginary_residual(a_coeffs, b_coeffs, tgrid, rgrid, float(np.abs(X).max()))
    return InnerProductGrid(X, tgrid, rgrid, "ftk", res, {"H": svd.H})


# -- BFR ----------------------------------------------------------------------------------------

@dataclass
class BFRSetup:
    """Cartesian frequency grid shared by every BFR pair.

    The grid has pitch ``pi/2`` over ``[-K, K]``; an FFT of size ``nfft``
    maps it to shifts with pitch ``4 / nfft``.
    """

    n: int
    K: float
    nfft: int
    k1d: np.ndarray
    inside: np.ndarray
    kr: np.ndarray
    kphi: np.ndarray
    wrap: tuple
    interp: np.ndarray

    @property
    def spacing(self) -> float:
        return 4.0 / self.nfft

    @property
    def dk(self) -> float:
        return 0.5 * np.pi


def bfr_setup(n: int, rule, pad: int = 2) -> BFRSetup:
    K = rule.radius
    dk = 0.5 * np.pi
    J = int(math.floor(K / dk + 1e-9))
    j = np.arange(-J, J + 1)
    k1d = dk * j
    KX, KY = np.meshgrid(k1d, k1d, indexing="ij")
    kr = np.hypot(KX, KY)
    inside = kr <= K * (1 + 1e-12)
    nfft = 2 * n * pad
    if nfft < 2 * J + 1:
        raise ValueError("pad too small for the frequency grid")
    I, Jy = np.meshgrid(j % nfft, j % nfft, indexing="ij")
    wrap = (I[inside], Jy[inside])
    # polynomial interpolation from the Gauss-Jacobi rings to each |k|
    basis = RadialJacobiBasis(K, rule.size)
    proj = basis.evaluate(rule.nodes) * rule.weights             # (M, M)
    interp = basis.evaluate(kr[inside]).T @ proj                 # (npts, M)
    return BFRSetup(n, K, nfft, k1d, inside, kr[inside], np.arctan2(KY, KX)[inside], wrap, interp)


def bfr_template(image: PixelImage, setup: BFRSetup) -> np.ndarray:
    return cartesian_fourier(image, setup.k1d)[setup.inside]


def bfr_image(b: FourierBesselCoeffs, setup: BFRSetup, rgrid: RotationGrid) -> np.ndarray:
    """``conj(B_hat(R_gamma k))`` at the disk points for every rotation; shape ``(ngam, npts)``."""
    radial = setup.interp @ b.values                            # (npts, 2Q+1)
    radial *= np.exp(1j * np.outer(setup.kphi, b.modes))
    rot = np.exp(1j * np.outer(b.modes, rgrid.angles))           # (2Q+1, ngam)
    return np.conj(radial @ rot).T


def bfr_pair(a_cart: np.ndarray, b_rot: np.ndarray, setup: BFRSetup,
             tgrid: TranslationGrid) -> np.ndarray:
    """One 2-D FFT per rotation; values sampled at the lattice shifts of ``tgrid``."""
    if not math.isclose(tgrid.spacing, setup.spacing) or tgrid.layout != "cartesian":
        raise ValueError("BFR needs a Cartesian grid with pitch 4/nfft")
    idx = tgrid.lattice_indices() % setup.nfft
    ngam = b_rot.shape[0]
    out = np.empty((tgrid.N, ngam))
    buf = np.zeros((setup.nfft, setup.nfft), dtype=complex)
    scale = setup.dk ** 2
    for r in range(ngam):
        buf[setup.wrap] = a_cart * b_rot[r]
        F = sfft.fft2(buf)
        out[:, r] = scale * F[idx[:, 0], idx[:, 1]].real
    return out


def bfr_align(A: PixelImage, B: PixelImage, rgrid: RotationGrid, pad: int = 2,
              D: float | None = None, M: int | None = None, Q: int | None = None) -> InnerProductGrid:
    """Brute-force rotations: one zero-padded 2-D FFT per angle.

    The output lattice has pitch ``dx / pad`` and covers the disk of
    radius ``D`` (default: the full lattice inscribed in the unit disk).
    """
    pb = polar_fourier(B, M=M, Q=Q)
    b = fb_decompose(pb)
    setup = bfr_setup(A.n, pb.rule, pad)
    tgrid = make_translation_grid(1.0 if D is None else D, setup.spacing)
    X = bfr_pair(bfr_template(A, setup), bfr_image(b, setup, rgrid), setup, tgrid)
    return InnerProductGrid(X, tgrid, rgrid, "bfr")


# -- results ---------------------------------------------------------------------------------------

def argmax_alignment(grid) -> tuple:
    """``(shift index, rotation index, value)`` of the largest real value.

    Ties resolve to the smallest shift index, then rotation index.
    """
    X = grid.values if isinstance(grid, InnerProductGrid) else np.asarray(grid)
    flat = int(np.argmax(X))
    j, r = np.unravel_index(flat, X.shape)
    return int(j), int(r), float(X[j, r])


def save_grid_csv(grid: InnerProductGrid, path) -> None:
    d = grid.tgrid.shifts
    g = grid.rgrid.angles
    J, R = np.meshgrid(np.arange(d.shape[0]), np.arange(g.size), indexing="ij")
    table = np.column_stack([d[J.ravel(), 0], d[J.ravel(), 1], g[R.ravel()], grid.values.ravel()])
    np.savetxt(path, table, delimiter=",", header="dx,dy,gamma,X", comments="", fmt="%.17g")


def load_grid_csv(path):
    t = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    return t[:, 0], t[:, 1], t[:, 2], t[:, 3]


_END = b"END\n"


def save_grid_binary(grid: InnerProductGrid, path) -> None:
    """Text descriptor, then shifts (``N x 2``) and values (``N x ngam``) as float64."""
    head = (f"engine={grid.engine}\nN={grid.tgrid.N}\nngamma={grid.rgrid.n_gamma}\n"
            f"D={grid.tgrid.D!r}\nspacing={grid.tgrid.spacing!r}\nlayout={grid.tgrid.layout}\n"
            f"imag_residual={grid.imag_residual!r}\n").encode()
    body = np.concatenate([grid.tgrid.shifts.ravel(), grid.values.ravel()]).astype("<f8")
    Path(path).write_bytes(head + _END + body.tobytes())


def load_grid_binary(path) -> InnerProductGrid:
    raw = Path(path).read_bytes()
    cut = raw.index(_END)
    meta = dict(line.split("=", 1) for line in raw[:cut].decode().splitlines())
    N, ng = int(meta["N"]), int(meta["ngamma"])
    data = np.frombuffer(raw[cut + len(_END):], dtype="<f8")
    if data.size != 2 * N + N * ng:
        raise ValueError(f"{path}: payload size does not match descriptor")
    tg = TranslationGrid(float(meta["D"]), data[:2 * N].reshape(N, 2).copy(),
                         float(meta["spacing"]), meta["layout"])
    return InnerProductGrid(data[2 * N:].reshape(N, ng).copy(), tg, RotationGrid(ng),
                            meta["engine"], float(meta["imag_residual"]))
