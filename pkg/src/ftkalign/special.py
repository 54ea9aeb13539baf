"""Bessel functions, Gauss-Jacobi quadrature and the radial Jacobi basis.

Everything here works with the radial area weight ``x dx`` on ``[0, R]``,
which corresponds to Jacobi polynomials with ``alpha=0, beta=1`` after the
affine map ``x = R (1 + t) / 2``.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.linalg import eigh_tridiagonal
from scipy.special import gammaln

ORDER_MAX = 512
ARG_MAX = 4096.0

# the rescaling threshold keeps squares (summed over a few thousand orders)
# well inside the float64 range
_BIG = 1e100


def _start_order(nmax: int, xmax: float) -> int:
    n0 = max(nmax, int(np.ceil(xmax))) + 24 + int(np.ceil(12.0 * max(xmax, 1.0) ** (1 / 3)))
    return n0 + (n0 % 2)


def bessel_j_all(nmax: int, x) -> np.ndarray:
    """Return ``J_0(x), ..., J_nmax(x)`` stacked along a new leading axis.

    Miller's backward recurrence is used for every order, normalized with
    ``J_0^2 + 2 sum_k J_k^2 = 1``; the sign comes from
    ``J_0 + 2 sum_k J_2k = 1``.  Backward recurrence is stable both above
    and below the turning point, so one sweep serves all orders.
    """
    x = np.asarray(x, dtype=float)
    if nmax < 0:
        raise ValueError("nmax must be non-negative")
    if np.any(x < 0) or not np.all(np.isfinite(x)):
        raise ValueError("bessel_j_all requires finite non-negative arguments")
    shape = x.shape
    xf = x.ravel()
    out = np.zeros((nmax + 1, xf.size))
    if xf.size == 0:
        return out.reshape((nmax + 1,) + shape)

    tiny = xf < 1e-8
    xs = np.where(tiny, 1.0, xf)
    n0 = _start_order(nmax, float(xf.max()))

    f_next = np.zeros_like(xs)   # f_{k+1}
    f_cur = np.ones_like(xs)  # f_k at k = n0
    sumsq = np.zeros_like(xs)
    sumev = np.zeros_like(xs)
    for k in range(n0, 0, -1):
        if k <= nmax:
            out[k] = f_cur
        sumsq += 2.0 * f_cur * f_cur
        if k % 2 == 0:
            sumev += 2.0 * f_cur
        f_prev = (2.0 * k / xs) * f_cur - f_next
        f_next, f_cur = f_cur, f_prev
        big = np.abs(f_cur) > _BIG
        if np.any(big):
            f_cur[big] /= _BIG
            f_next[big] /= _BIG
            sumsq[big] /= _BIG * _BIG
            sumev[big] /= _BIG
            out[:, big] /= _BIG
    out[0] = f_cur
    sumsq += f_cur * f_cur
    sumev += f_cur
    scale = np.sign(sumev) / np.sqrt(sumsq)
    out *= scale
    if np.any(tiny):
        # two-term power series; exact to rounding for x < 1e-8
        xt = xf[tiny]
        n = np.arange(nmax + 1)[:, None]
        lead = np.exp(n * np.log(np.maximum(xt, 1e-300) / 2) - gammaln(n + 1))
        lead = np.where(n == 0, 1.0, np.where(xt == 0, 0.0, lead))
        out[:, tiny] = lead * (1.0 - xt * xt / (4.0 * (n + 1)))
    return out.reshape((nmax + 1,) + shape)


def bessel_j(order, x):
    """Bessel function of the first kind ``J_order(x)`` for integer order.

    Supports ``|order| <= 512`` and ``0 <= x <= 4096``; both arguments
    broadcast.  Raises ``ValueError`` outside that domain.
    """
    order = np.asarray(order)
    x = np.asarray(x, dtype=float)
    if not np.issubdtype(order.dtype, np.integer):
        if not np.all(np.equal(np.mod(order, 1), 0)):
            raise ValueError("bessel_j only supports integer orders")
        order = order.astype(int)
    if np.any(np.abs(order) > ORDER_MAX):
        raise ValueError(f"|order| must be <= {ORDER_MAX}")
    if np.any(x < 0) or np.any(x > ARG_MAX) or not np.all(np.isfinite(x)):
        raise ValueError(f"argument must lie in [0, {ARG_MAX:g}]")
    order, x = np.broadcast_arrays(order, x)
    nabs = np.abs(order)
    if order.size == 0:
        return np.zeros(order.shape)
    table = bessel_j_all(int(nabs.max()), x)
    vals = np.take_along_axis(table, nabs[None, ...], axis=0)[0]
    parity = np.where((order < 0) & (nabs % 2 == 1), -1.0, 1.0)
    out = parity * vals
    return out[()] if out.ndim == 0 else out


def _jacobi01_recurrence(n: int):
    """Diagonal and off-diagonal of the orthonormal Jacobi(0, 1) matrix."""
    j = np.arange(n, dtype=float)
    diag = 1.0 / ((2 * j + 1) * (2 * j + 3))
    jj = np.arange(1, n, dtype=float)
    off = np.sqrt(jj * (jj + 1)) / (2 * jj + 1)
    return diag, off


def _orthonormal_values(t, n: int) -> np.ndarray:
    """Orthonormal Jacobi(0,1) polynomials ``p_0..p_{n-1}`` at ``t`` on [-1, 1]."""
    t = np.asarray(t, dtype=float)
    diag, off = _jacobi01_recurrence(n + 1)
    p = np.empty((n,) + t.shape)
    p[0] = 1.0 / np.sqrt(2.0)  # mu_0 = int_{-1}^{1} (1 + t) dt = 2
    if n > 1:
        p[1] = (t - diag[0]) * p[0] / off[0]
    for j in range(1, n - 1):
        p[j + 1] = ((t - diag[j]) * p[j] - off[j - 1] * p[j - 1]) / off[j]
    return p


@dataclass(frozen=True)
class QuadratureRule:
    """Nodes and weights integrating ``g(k) k dk`` over ``[0, radius]``."""

    radius: float
    nodes: np.ndarray
    weights: np.ndarray

    @property
    def size(self) -> int:
        return self.nodes.size

    def integrate(self, values, axis: int = -1):
        """Apply the rule to samples of ``g`` at the nodes along ``axis``."""
        values = np.moveaxis(np.asarray(values), axis, -1)
        return values @ self.weights


@lru_cache(maxsize=64)
def _unit_rule(M: int):
    diag, off = _jacobi01_recurrence(M)
    t = eigh_tridiagonal(diag, off, eigvals_only=True)
    # Christoffel weights are more accurate than squared eigenvector entries
    p = _orthonormal_values(t, M)
    w = 1.0 / np.sum(p * p, axis=0)
    nodes = 0.5 * (1.0 + t)
    weights = 0.25 * w
    nodes.setflags(write=False)
    weights.setflags(write=False)
    return nodes, weights


def gauss_jacobi_rule(M: int, R: float = 1.0) -> QuadratureRule:
    """``M``-point Gauss rule for ``int_0^R g(k) k dk`` (Golub-Welsch).

    Exact for polynomial ``g`` of degree up to ``2M - 1``.
    """
    if int(M) != M or M < 1:
        raise ValueError("gauss_jacobi_rule needs M >= 1")
    if not R > 0:
        raise ValueError("radius must be positive")
    nodes, weights = _unit_rule(int(M))
    return QuadratureRule(float(R), nodes * R, weights * R * R)


@dataclass(frozen=True)
class RadialJacobiBasis:
    """Polynomials orthonormal on ``[0, radius]`` under the weight ``x dx``.

    Element ``j`` has degree exactly ``j``.
    """

    radius: float
    size: int

    def __post_init__(self):
        if self.size < 1:
            raise ValueError("basis size must be at least 1")
        if not self.radius > 0:
            raise ValueError("radius must be positive")

    @property
    def recurrence(self):
        return _jacobi01_recurrence(self.size)

    def evaluate(self, x) -> np.ndarray:
        """All basis functions at ``x``; result has shape ``(size,) + x.shape``."""
        x = np.asarray(x, dtype=float)
        t = 2.0 * x / self.radius - 1.0
        return (2.0 / self.radius) * _orthonormal_values(t, self.size)

    def expand(self, coeffs, x) -> np.ndarray:
        """Evaluate ``sum_j coeffs[j, ...] phi_j(x)``; coeffs may carry trailing axes."""
        coeffs = np.asarray(coeffs)
        phi = self.evaluate(np.ravel(x))
        vals = np.tensordot(phi, coeffs, axes=(0, 0))
        return vals.reshape(np.shape(x) + coeffs.shape[1:])


def jacobi_basis_eval(basis: RadialJacobiBasis, j: int, x):
    """Value of the ``j``-th orthonormal radial polynomial of ``basis`` at ``x``."""
    if not 0 <= j < basis.size:
        raise ValueError(f"index {j} outside basis of size {basis.size}")
    x = np.asarray(x, dtype=float)
    t = 2.0 * x / basis.radius - 1.0
    vals = (2.0 / basis.radius) * _orthonormal_values(t, j + 1)[j]
    return vals[()] if vals.ndim == 0 else vals
