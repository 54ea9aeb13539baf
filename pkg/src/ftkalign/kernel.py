"""Low-rank factorization of the translation kernel ``F(delta, k) = exp(-i delta . k)``.

Each angular mode ``l`` contributes the radial kernel ``J_l(delta k)`` on
``[0, D] x [0, K]`` with weights ``delta d delta`` and ``k dk``.  Its operator
SVD is computed in a product Jacobi basis and truncated at ``eps``; the modal
pieces are then merged into one list ordered by singular value.

Two normalizations appear.  The *modal* singular values ``Sigma`` belong to
the one-dimensional radial operators and drive the ``eps`` truncation.  The
two-dimensional operator with kernel ``F`` has singular values ``2 pi Sigma``
(the angular factors ``exp(i l psi)`` have squared norm ``2 pi``), and the
Hilbert-Schmidt error and energy use those.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .special import RadialJacobiBasis, bessel_j_all, gauss_jacobi_rule


class PlanError(RuntimeError):
    """Raised when a factorization fails its numerical self-checks."""


TAIL_ROWS = 4


def default_basis_size(W: float) -> int:
    return int(math.ceil(2.0 * math.pi * W)) + 48


@dataclass
class ModalSVD:
    """Truncated SVD of ``J_l(delta k)`` for one mode ``l``.

    ``U`` and ``V`` hold Jacobi coefficients (one column per retained term)
    on ``[0, D]`` and ``[0, K]``.  ``sigma_all`` keeps every computed value,
    retained or not, for error accounting.
    """

    ell: int
    D: float
    K: float
    eps: float
    sigma_all: np.ndarray
    U: np.ndarray
    V: np.ndarray
    tail: float = 0.0

    @property
    def H(self) -> int:
        return self.U.shape[1]

    @property
    def sigma(self) -> np.ndarray:
        return self.sigma_all[:self.H]

    @property
    def P(self) -> int:
        return self.U.shape[0]

    def left(self, delta) -> np.ndarray:
        """Retained ``U_eta(delta)``; shape ``delta.shape + (H,)``."""
        return RadialJacobiBasis(self.D, self.P).expand(self.U, delta)

    def right(self, k) -> np.ndarray:
        return RadialJacobiBasis(self.K, self.P).expand(self.V, k)

    def mirrored(self) -> "ModalSVD":
        """SVD for ``-l``, using ``J_{-l} = (-1)^l J_l``."""
        s = -1.0 if self.ell % 2 else 1.0
        return ModalSVD(-self.ell, self.D, self.K, self.eps, self.sigma_all,
                        s * self.U, self.V, self.tail)


def _projection_matrices(ells, D: float, K: float, P: int):
    """Jacobi coefficients of ``J_l(delta k)`` for each ``l`` in ``ells``.

    Uses a ``2P``-point Gauss-Jacobi rule on each axis, which integrates the
    basis products exactly and resolves the kernel's oscillation.
    """
    rd = gauss_jacobi_rule(2 * P, D)
    rk = gauss_jacobi_rule(2 * P, K)
    Bd = RadialJacobiBasis(D, P).evaluate(rd.nodes) * rd.weights   # (P, 2P)
    Bk = RadialJacobiBasis(K, P).evaluate(rk.nodes) * rk.weights
    table = bessel_j_all(int(max(ells)), np.outer(rd.nodes, rk.nodes))
    return {ell: Bd @ table[ell] @ Bk.T for ell in ells}


def _tail_norm(C: np.ndarray) -> float:
    r = TAIL_ROWS
    return float(np.sqrt(np.sum(C[-r:, :] ** 2) + np.sum(C[:-r, -r:] ** 2)))


def _modal_from_matrix(ell, C, D, K, eps) -> ModalSVD:
    tail = _tail_norm(C)
    if tail >= 1e-2 * eps:
        raise PlanError(f"mode {ell}: basis tail {tail:.2e} exceeds 1e-2*eps; "
                        "increase the basis size P")
    U, s, Vt = np.linalg.svd(C)
    H = int(np.sum(s > eps))
    # deterministic signs: positive coefficient sum on the left
    U, V = U[:, :H], Vt[:H].T
    flip = np.sign(np.sum(U, axis=0))
    flip[flip == 0] = 1.0
    return ModalSVD(ell, D, K, eps, s, U * flip, V * flip, tail)


def modal_svd(ell: int, D: float, K: float, eps: float, P: int | None = None) -> ModalSVD:
    """Operator SVD of ``J_ell(delta k)`` truncated to values strictly above ``eps``."""
    if ell < 0:
        return modal_svd(-ell, D, K, eps, P).mirrored()
    if P is None:
        P = default_basis_size(D * K / (2 * math.pi))
    C = _projection_matrices([ell], D, K, P)[ell]
    return _modal_from_matrix(ell, C, D, K, eps)


def rank_bound(ell: int, W: float, eps: float) -> int:
    """Upper bound on the ``eps``-rank of mode ``ell``."""
    if not 0 < eps < 1 or not W > 0:
        raise ValueError("need 0 < eps < 1 and W > 0")
    h = abs(ell) / 2
    v = max(0.0, math.pi * math.e ** 2 * W - h,
            math.log(2 * math.pi * W / eps) + 1.5 - h)
    return int(math.ceil(v))


def total_rank_bound(W: float, eps: float) -> int:
    Hw = max(math.pi * math.e ** 2 * W, math.log(2 * math.pi * W / eps)) + 1.5
    return 2 * int(math.ceil(Hw)) ** 2


def empirical_rank_fit(ell: int, W: float, eps: float) -> float:
    return 2.0 * (W - abs(ell) / (2 * math.pi)) + 0.5 * math.log(1 / eps)


@dataclass
class TranslationKernelSVD:
    """Globally ordered ``eps``-truncated factorization of ``F``.

    ``order`` lists ``(l, eta, Sigma)`` for every computed modal value
    (retained first, then discarded) sorted by ``Sigma``; the first ``H``
    entries form the factorization.
    """

    W: float
    D: float
    K: float
    eps: float
    P: int
    modes: dict
    order: list = field(default_factory=list)

    def __post_init__(self):
        if not self.order:
            self.order = _global_order(self.modes)

    @property
    def H(self) -> int:
        return sum(m.H for m in self.modes.values())

    @property
    def sigma(self) -> np.ndarray:
        return np.array([s for _, _, s in self.order])

    @property
    def retained(self) -> list:
        return self.order[:self.H]

    @property
    def L(self) -> int:
        """Largest ``|l|`` with at least one retained term."""
        used = [abs(l) for l, m in self.modes.items() if m.H > 0]
        return max(used) if used else 0

    def mode_ranks(self) -> dict:
        return {l: m.H for l, m in sorted(self.modes.items())}

    def first_discarded(self) -> float:
        return self.order[self.H][2] if len(self.order) > self.H else 0.0

    def energy(self) -> float:
        """Sum of squared two-dimensional singular values (all computed)."""
        return float(np.sum((2 * math.pi * self.sigma) ** 2))


def _global_order(modes: dict) -> list:
    items = []
    for ell, m in modes.items():
        for eta, s in enumerate(m.sigma_all):
            retained = eta < m.H
            items.append((not retained, -s, abs(ell), ell < 0, eta, ell))
    items.sort()
    return [(it[5], it[4], -it[1]) for it in items]


def assemble_svd(W: float, K: float, eps: float, P: int | None = None) -> TranslationKernelSVD:
    """Modal SVDs for ``|l| <= L_max`` merged into one ordered factorization.

    ``L_max`` is the smallest ``|l|`` whose rank bound vanishes; beyond it
    every modal singular value is below ``eps``.
    """
    if not 0 < eps < 0.5:
        raise ValueError("eps must lie in (0, 0.5)")
    if not W > 0 or not K > 0:
        raise ValueError("W and K must be positive")
    D = 2 * math.pi * W / K
    if P is None:
        P = default_basis_size(W)
    Lmax = 0
    while rank_bound(Lmax, W, eps) > 0:
        Lmax += 1
    ells = list(range(Lmax + 1))
    mats = _projection_matrices(ells, D, K, P)
    modes = {}
    for ell in ells:
        m = _modal_from_matrix(ell, mats[ell], D, K, eps)
        modes[ell] = m
        if ell > 0:
            modes[-ell] = m.mirrored()
    return TranslationKernelSVD(W, D, K, eps, P, modes)


def hs_error(svd: TranslationKernelSVD, Hp: int) -> float:
    """Hilbert-Schmidt norm of ``F`` minus its best rank-``Hp`` part.

    Two-dimensional normalization, so ``Hp = 0`` gives about ``pi D K``.
    """
    s = 2 * math.pi * svd.sigma[Hp:]
    return float(np.sqrt(np.sum(s * s)))


def relative_hs_error(svd: TranslationKernelSVD, Hp: int) -> float:
    return hs_error(svd, Hp) / (math.pi * svd.D * svd.K)


def eval_singular_functions(svd: TranslationKernelSVD, zeta: int, r, angle, side: str = "left"):
    """Evaluate the ``zeta``-th singular function at polar points ``(r, angle)``.

    ``side="left"`` gives ``U_zeta(delta) exp(-i l (omega + pi/2))`` and
    ``side="right"`` gives ``V_zeta(k) exp(i l psi)``.
    """
    ell, eta, _ = svd.order[zeta]
    m = svd.modes[ell]
    if eta >= m.H:
        raise ValueError("singular function was not retained")
    r = np.asarray(r, dtype=float)
    angle = np.asarray(angle, dtype=float)
    if side == "left":
        return m.left(r)[..., eta] * np.exp(-1j * ell * (angle + 0.5 * math.pi))
    if side == "right":
        return m.right(r)[..., eta] * np.exp(1j * ell * angle)
    raise ValueError("side must be 'left' or 'right'")


def reconstruct_kernel(svd: TranslationKernelSVD, delta, k, H: int | None = None) -> np.ndarray:
    """Rank-``H`` approximation of ``exp(-i delta . k)`` for vectors ``delta, k``.

    ``delta`` and ``k`` are ``(..., 2)`` arrays and broadcast against each other.
    """
    delta = np.asarray(delta, dtype=float)
    k = np.asarray(k, dtype=float)
    H = svd.H if H is None else H
    if H > svd.H:
        raise ValueError(f"only {svd.H} terms are retained")
    d, om = np.hypot(delta[..., 0], delta[..., 1]), np.arctan2(delta[..., 1], delta[..., 0])
    kr, ps = np.hypot(k[..., 0], k[..., 1]), np.arctan2(k[..., 1], k[..., 0])
    d, om, kr, ps = np.broadcast_arrays(d, om, kr, ps)
    out = np.zeros(d.shape, dtype=complex)
    cache = {}
    for ell, eta, s in svd.order[:H]:
        if ell not in cache:
            m = svd.modes[ell]
            cache[ell] = (m.left(d), m.right(kr))
        u, v = cache[ell]
        out += u[..., eta] * s * v[..., eta] * np.exp(-1j * ell * (om + 0.5 * math.pi - ps))
    return out


def x_error_bound(svd: TranslationKernelSVD, H: int, a, b) -> float:
    """RMS bound on the inner-product error of a rank-``H`` factorization.

    The ``L2`` error over shifts in the disk of radius ``D`` and all angles is
    at most ``2 pi Sigma_{H+1}`` times
    ``sqrt(int k dk (2 pi sum_q |a|^2)(2 pi sum_q |b|^2))``; dividing by the
    square root of the domain measure ``2 pi * pi D^2`` gives an RMS bound.
    """
    sig = svd.sigma
    s_next = sig[H] if H < sig.size else 0.0
    pa = 2 * math.pi * np.sum(np.abs(a.values) ** 2, axis=-1)
    pb = 2 * math.pi * np.sum(np.abs(b.values) ** 2, axis=-1)
    l2 = 2 * math.pi * s_next * math.sqrt(max(float(a.rule.integrate(pa * pb)), 0.0))
    return l2 / math.sqrt(2 * math.pi * math.pi * svd.D ** 2)


# -- plan cache ------------------------------------------------------------------

_END = b"END\n"


def save_plan(svd: TranslationKernelSVD, path) -> None:
    """Text header followed by a little-endian float64 payload.

    For each ``l >= 0`` the payload holds all ``P`` singular values, then the
    retained ``U`` and ``V`` coefficient matrices in row-major order.
    """
    ells = sorted(l for l in svd.modes if l >= 0)
    ranks = ",".join(f"{l}:{svd.modes[l].H}" for l in ells)
    header = (f"W={svd.W!r}\nD={svd.D!r}\nK={svd.K!r}\neps={svd.eps!r}\n"
              f"P={svd.P}\nH={svd.H}\nranks={ranks}\n").encode()
    parts = []
    for l in ells:
        m = svd.modes[l]
        parts += [m.sigma_all, m.U.ravel(), m.V.ravel()]
    payload = np.concatenate(parts).astype("<f8").tobytes()
    Path(path).write_bytes(header + _END + payload)


def load_plan(path) -> TranslationKernelSVD:
    raw = Path(path).read_bytes()
    cut = raw.index(_END)
    meta = {}
    for line in raw[:cut].decode().splitlines():
        key, _, val = line.partition("=")
        meta[key] = val
    W, D, K, eps = (float(meta[k]) for k in ("W", "D", "K", "eps"))
    P = int(meta["P"])
    data = np.frombuffer(raw[cut + len(_END):], dtype="<f8")
    modes, pos = {}, 0
    for item in meta["ranks"].split(","):
        l, h = (int(t) for t in item.split(":"))
        nsv = P
        s = data[pos:pos + nsv].copy(); pos += nsv
        U = data[pos:pos + P * h].reshape(P, h).copy(); pos += P * h
        V = data[pos:pos + P * h].reshape(P, h).copy(); pos += P * h
        m = ModalSVD(l, D, K, eps, s, U, V)
        modes[l] = m
        if l > 0:
            modes[-l] = m.mirrored()
    if pos != data.size:
        raise ValueError(f"{path}: payload size does not match header")
    svd = TranslationKernelSVD(W, D, K, eps, P, modes)
    if svd.H != int(meta["H"]):
        raise ValueError(f"{path}: rank mismatch")
    return svd


def plan_matches(svd: TranslationKernelSVD, W: float, K: float, eps: float, P: int) -> bool:
    return (math.isclose(svd.W, W) and math.isclose(svd.K, K)
            and math.isclose(svd.eps, eps) and svd.P == P)
