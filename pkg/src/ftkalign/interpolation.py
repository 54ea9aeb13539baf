"""Interpolation baselines over shifts: bilinear, least squares and per-mode GLS.

Every scheme approximates the translation kernel by a weighted sum of its
values at node shifts, ``F(delta, k) ~ sum_z Y_z(delta) F(delta_z, k)``, so its
accuracy is measured on ``F`` itself.  The Gram kernel of ``F`` over the
frequency disk is

    int_{|k| <= K} F(d', k) conj(F(d, k)) dk = 2 pi K^2 J_1(K r) / (K r),

with ``r = |d' - d|``.  Least-squares weights use it normalized to one at
``r = 0``, i.e. ``2 J_1(x)/x``.
"""
from __future__ import annotations

import math

import numpy as np
import scipy.linalg as sla

from .engines import (FTKOperators, InnerProductGrid, RotationGrid, TranslationGrid,
                      bft_batch, explicit_translation_grid, ftk_batch)
from .fourier_bessel import FourierBesselCoeffs, PolarFourierSamples
from .kernel import TranslationKernelSVD
from .special import bessel_j, bessel_j_all, gauss_jacobi_rule


class ConditioningError(np.linalg.LinAlgError):
    """Normal equations are too ill-conditioned for the chosen nodes."""


COND_MAX = 1e12


# -- kernel ---------------------------------------------------------------------------

def ls_kernel(x) -> np.ndarray:
    """``2 J_1(x) / x`` with value 1 at ``x = 0``."""
    x = np.abs(np.asarray(x, dtype=float))
    small = x < 1e-6
    xs = np.where(small, 1.0, x)
    out = np.where(small, 1.0 - x * x / 8.0, 2.0 * bessel_j(1, xs) / xs)
    return out[()] if out.ndim == 0 else out


def ls_kernel_derivative(x) -> np.ndarray:
    """``d/dx [2 J_1(x)/x] = -2 J_2(x)/x``."""
    x = np.abs(np.asarray(x, dtype=float))
    small = x < 1e-6
    xs = np.where(small, 1.0, x)
    out = np.where(small, -x / 4.0, -2.0 * bessel_j(2, xs) / xs)
    return out[()] if out.ndim == 0 else out


def ls_kernel_quadrature(d1, d2, K: float, L: int | None = None, M: int | None = None) -> complex:
    """``sum_l exp(i l (w1 - w2)) int_0^K J_l(|d1| k) J_l(|d2| k) k dk`` by quadrature."""
    r1, r2 = math.hypot(*d1), math.hypot(*d2)
    w1, w2 = math.atan2(d1[1], d1[0]), math.atan2(d2[1], d2[0])
    z = K * max(r1, r2)
    if L is None:
        L = int(math.ceil(z + 10 * max(z, 1) ** (1 / 3))) + 10
    if M is None:
        M = int(math.ceil(z)) + 40
    rule = gauss_jacobi_rule(M, K)
    J1 = bessel_j_all(L, r1 * rule.nodes)
    J2 = bessel_j_all(L, r2 * rule.nodes)
    modal = (J1 * J2) @ rule.weights                     # l = 0..L
    ell = np.arange(1, L + 1)
    return complex(modal[0] + np.sum(2 * modal[1:] * np.cos(ell * (w1 - w2))))


def validate_ls_kernel(K: float, D: float, samples: int = 12, seed: int = 0) -> dict:
    """Compare closed forms with the quadrature oracle up to one global constant.

    Returns the fitted constant and the worst relative misfit for the
    ``J_1(x)/x`` form and for the ``J_0(x) + J_1(x)`` form.
    """
    rng = np.random.default_rng(seed)
    pts = rng.uniform(-D, D, size=(samples, 2, 2)) / math.sqrt(2)
    oracle = np.array([ls_kernel_quadrature(p[0], p[1], K).real for p in pts])
    x = K * np.hypot(*(pts[:, 0] - pts[:, 1]).T)
    out = {}
    for name, vals in (("jinc", ls_kernel(x)), ("j0_plus_j1", bessel_j(0, x) + bessel_j(1, x))):
        c = float(vals @ oracle / (vals @ vals))
        out[name] = (c, float(np.max(np.abs(c * vals - oracle)) / np.max(np.abs(oracle))))
    return out


def _pair_dist(P1, P2):
    d = P1[:, None, :] - P2[None, :, :]
    return np.hypot(d[..., 0], d[..., 1])


# -- node layouts -----------------------------------------------------------------------

def ring_nodes(D: float, count: int) -> np.ndarray:
    """Concentric rings over the disk with counts proportional to circumference.

    Ring ``j`` sits at radius ``j D / R`` and the origin is always a node.
    """
    if count < 1:
        raise ValueError("need at least one node")
    if count == 1:
        return np.zeros((1, 2))
    R = 1
    while 1 + sum(max(1, round(2 * math.pi * j)) for j in range(1, R + 1)) < count:
        R += 1
    raw = np.array([2 * math.pi * j for j in range(1, R + 1)])
    per = np.maximum(1, np.floor(raw * (count - 1) / raw.sum())).astype(int)
    per[-1] += count - 1 - per.sum()
    pts = [np.zeros(2)]
    for j, m in enumerate(per, start=1):
        t = 2 * math.pi * (np.arange(m) + 0.5 * (j % 2)) / m
        r = D * j / R
        pts.extend(np.column_stack([r * np.cos(t), r * np.sin(t)]))
    return np.array(pts)


def lattice_nodes(D: float, h: float) -> np.ndarray:
    """Corners of every lattice cell of pitch ``h`` that meets the disk of radius ``D``."""
    m = int(math.ceil(D / h)) + 1
    i = np.arange(-m, m)
    I, J = np.meshgrid(i, i, indexing="ij")
    # closest point of cell [i h, (i+1) h] x [j h, (j+1) h] to the origin
    cx = np.clip(0.0, I * h, (I + 1) * h)
    cy = np.clip(0.0, J * h, (J + 1) * h)
    hit = cx ** 2 + cy ** 2 <= D * D * (1 + 1e-12)
    corners = set()
    for a, b in zip(I[hit], J[hit]):
        corners.update({(a, b), (a + 1, b), (a, b + 1), (a + 1, b + 1)})
    idx = np.array(sorted(corners))
    return h * idx.astype(float), idx


# -- bilinear ----------------------------------------------------------------------------

def bilinear_corners(delta, h: float):
    """Lattice corner indices ``(Nq, 4, 2)`` and weights ``(Nq, 4)`` for each query."""
    delta = np.atleast_2d(np.asarray(delta, dtype=float))
    u = delta / h
    base = np.floor(u).astype(int)
    t = u - base
    offs = np.array([[0, 0], [1, 0], [0, 1], [1, 1]])
    corners = base[:, None, :] + offs[None]
    wx = np.where(offs[None, :, 0] == 1, t[:, None, 0], 1 - t[:, None, 0])
    wy = np.where(offs[None, :, 1] == 1, t[:, None, 1], 1 - t[:, None, 1])
    return corners, wx * wy


def linear_interp_weights(node_idx: np.ndarray, h: float, queries) -> np.ndarray:
    """Dense ``(Nq, H)`` bilinear weight matrix for lattice nodes ``node_idx``."""
    lookup = {tuple(p): z for z, p in enumerate(node_idx)}
    corners, w = bilinear_corners(queries, h)
    Y = np.zeros((corners.shape[0], len(node_idx)))
    for j in range(corners.shape[0]):
        for c in range(4):
            if w[j, c] == 0.0:
                continue
            key = tuple(corners[j, c])
            if key not in lookup:
                raise ValueError("query needs a node outside the lattice")
            Y[j, lookup[key]] += w[j, c]
    return Y


def linear_interp_align(a_polar: PolarFourierSamples, b_coeffs: FourierBesselCoeffs, h: float,
                        tgrid: TranslationGrid, rgrid: RotationGrid) -> InnerProductGrid:
    """Exact values at lattice nodes of pitch ``h``, bilinear in between."""
    nodes, idx = lattice_nodes(tgrid.D, h)
    ngrid = explicit_translation_grid(np.hypot(*nodes.T).max(), nodes)
    Xn = bft_batch(a_polar, b_coeffs, ngrid, rgrid)[0]
    Y = linear_interp_weights(idx, h, tgrid.shifts)
    return InnerProductGrid(Y @ Xn, tgrid, rgrid, "linear", 0.0, {"nodes": len(idx)})


# -- least squares --------------------------------------------------------------------------

def _solve_spd(Mn: np.ndarray, rhs: np.ndarray) -> np.ndarray:
    cond = np.linalg.cond(Mn)
    if not np.isfinite(cond) or cond > COND_MAX:
        raise ConditioningError(f"normal equations have condition number {cond:.2e}; "
                                "use fewer or better separated nodes")
    return sla.solve(Mn, rhs, assume_a="sym")


def ls_weights(nodes, delta, K: float) -> np.ndarray:
    """Least-squares weights ``Y`` (one column per query) for queries ``delta``."""
    nodes = np.atleast_2d(np.asarray(nodes, dtype=float))
    q = np.atleast_2d(np.asarray(delta, dtype=float))
    if len({tuple(p) for p in np.round(nodes, 14)}) < len(nodes):
        raise ValueError("nodes must be pairwise distinct")
    Mn = ls_kernel(K * _pair_dist(nodes, nodes))
    rhs = ls_kernel(K * _pair_dist(nodes, q))
    Y = _solve_spd(Mn, rhs)
    return Y[:, 0] if np.ndim(delta) == 1 else Y


def ls_residual(nodes, queries, K: float) -> np.ndarray:
    """Relative squared residual ``1 - m^T Y`` of the LS fit at each query."""
    nodes = np.atleast_2d(nodes)
    q = np.atleast_2d(queries)
    rhs = ls_kernel(K * _pair_dist(nodes, q))
    Y = _solve_spd(ls_kernel(K * _pair_dist(nodes, nodes)), rhs)
    return np.maximum(1.0 - np.sum(rhs * Y, axis=0), 0.0)


def disk_rule(D: float, nr: int = 12, nt: int = 24):
    """Polar product rule on the disk: points ``(P, 2)`` and area weights."""
    rr = gauss_jacobi_rule(nr, D)
    t = 2 * np.pi * np.arange(nt) / nt
    R, T = np.meshgrid(rr.nodes, t, indexing="ij")
    pts = np.column_stack([(R * np.cos(T)).ravel(), (R * np.sin(T)).ravel()])
    w = np.repeat(rr.weights * 2 * np.pi / nt, nt)
    return pts, w


def ls_objective(nodes, K: float, samples, weights) -> float:
    r = ls_residual(nodes, samples, K)
    return float(r @ weights / weights.sum())


def ls_objective_grad(nodes, K: float, samples, weights):
    """Objective and its analytic gradient with respect to node positions."""
    nodes = np.atleast_2d(np.asarray(nodes, dtype=float))
    wn = weights / weights.sum()
    Rn = _pair_dist(nodes, nodes)
    Mn = ls_kernel(K * Rn)
    Rs = _pair_dist(nodes, samples)                    # (H, S)
    m = ls_kernel(K * Rs)
    Y = _solve_spd(Mn, m)                              # (H, S)
    J = float(wn @ np.maximum(1.0 - np.sum(m * Y, axis=0), 0.0))
    # dJ/d delta_i = -sum_s w_s [2 Y_si k'(r_is) u_is - 2 Y_si sum_j Y_sj k'(r_ij) u_ij]
    with np.errstate(invalid="ignore", divide="ignore"):
        Us = (nodes[:, None, :] - samples[None, :, :]) / Rs[..., None]
        Un = (nodes[:, None, :] - nodes[None, :, :]) / Rn[..., None]
    Us = np.nan_to_num(Us)
    Un = np.nan_to_num(Un)
    ks = K * ls_kernel_derivative(K * Rs)              # (H, S)
    kn = K * ls_kernel_derivative(K * Rn)              # (H, H)
    term1 = np.einsum("is,is,isd,s->id", Y, ks, Us, wn)
    YY = np.einsum("is,js,s->ij", Y, Y, wn)
    term2 = np.einsum("ij,ij,ijd->id", YY, kn, Un)
    return J, -2.0 * term1 + 2.0 * term2


def ls_node_descent(nodes, K: float, D: float, steps: int = 50, rate: float | None = None,
                    samples=None, weights=None):
    """Projected gradient descent on node positions, keeping nodes in the disk.

    Steps that fail to reduce the objective are rejected and the rate is
    halved, so the returned objective never exceeds the starting one.
    Returns ``(nodes, objective_history)``.
    """
    x = np.array(nodes, dtype=float)
    if samples is None:
        samples, weights = disk_rule(D)
    if rate is None:
        rate = 0.05 * D * D
    J, g = ls_objective_grad(x, K, samples, weights)
    hist = [J]
    for _ in range(steps):
        trial = _project_disk(x - rate * g, D)
        try:
            Jt, gt = ls_objective_grad(trial, K, samples, weights)
        except ConditioningError:
            Jt = np.inf
        if Jt < J:
            x, J, g = trial, Jt, gt
            rate *= 1.2
        else:
            rate *= 0.5
        hist.append(J)
        if rate < 1e-14 * D * D:
            break
    return x, hist


def _project_disk(x, D):
    r = np.hypot(x[:, 0], x[:, 1])
    s = np.where(r > D, D / np.maximum(r, 1e-300), 1.0)
    return x * s[:, None]


def ls_align(a_polar: PolarFourierSamples, b_coeffs: FourierBesselCoeffs, nodes,
             tgrid: TranslationGrid, rgrid: RotationGrid) -> InnerProductGrid:
    K = a_polar.K
    ngrid = explicit_translation_grid(max(tgrid.D, np.hypot(*np.asarray(nodes).T).max()), nodes)
    Xn = bft_batch(a_polar, b_coeffs, ngrid, rgrid)[0]
    Y = ls_weights(nodes, tgrid.shifts, K)                        # (H, N)
    return InnerProductGrid(Y.T @ Xn, tgrid, rgrid, "ls", 0.0, {"nodes": len(nodes)})


# -- generalized least squares ----------------------------------------------------------------

def _radius_groups(nodes, tol=1e-12):
    r = np.hypot(nodes[:, 0], nodes[:, 1])
    order = np.argsort(r, kind="stable")
    groups, radii = [], []
    for i in order:
        if radii and abs(r[i] - radii[-1]) <= tol * max(1.0, r[i]):
            groups[-1].append(i)
        else:
            groups.append([i])
            radii.append(r[i])
    return np.array(radii), groups


def _gls_rule(K, rmax):
    return gauss_jacobi_rule(int(math.ceil(K * rmax)) + 40, K)


def gls_radial(radii, queries_r, ell: int, K: float):
    """Per-mode radial LS: ``U`` solving the Gram system on distinct ``radii``.

    Radii where ``J_ell`` vanishes identically (the origin for ``ell != 0``)
    are given zero weight, and numerically rank-deficient systems get the
    minimum-norm solution.
    """
    radii = np.asarray(radii, dtype=float)
    queries_r = np.atleast_1d(np.asarray(queries_r, dtype=float))
    rule = _gls_rule(K, max(radii.max(initial=0.0), queries_r.max(initial=0.0)))
    la = abs(ell)
    live = radii > 0 if la else np.ones(radii.size, bool)
    U = np.zeros((radii.size, queries_r.size))
    if not live.any():
        return U, rule
    Jn = bessel_j_all(la, np.outer(radii[live], rule.nodes))[la]      # (Hl, Mk)
    Jq = bessel_j_all(la, np.outer(queries_r, rule.nodes))[la]
    Mn = (Jn * rule.weights) @ Jn.T
    rhs = (Jn * rule.weights) @ Jq.T
    U[live] = _pinv_solve(Mn, rhs)
    return U, rule


def _pinv_solve(Mn, rhs, rcond=1e-13):
    # high modes are numerically rank deficient because J_l is tiny on every
    # node; the minimum-norm solution still minimizes the residual
    lam, V = np.linalg.eigh(Mn)
    keep = lam > rcond * max(lam.max(), 0.0)
    if not keep.any():
        return np.zeros((Mn.shape[0],) + rhs.shape[1:])
    return V[:, keep] @ ((V[:, keep].T @ rhs) / lam[keep, None])


def gls_weights(nodes, delta, ell: int, K: float) -> np.ndarray:
    """Complex weights ``Y_z(delta; ell)`` for one mode.

    Nodes sharing a radius give identical radial columns; the minimum-norm
    solution splits that radius' weight evenly among them.
    """
    nodes = np.atleast_2d(np.asarray(nodes, dtype=float))
    delta = np.asarray(delta, dtype=float)
    radii, groups = _radius_groups(nodes)
    r, om = math.hypot(*delta), math.atan2(delta[1], delta[0])
    U, _ = gls_radial(radii, [r], ell, K)
    Y = np.zeros(len(nodes), dtype=complex)
    for g, members in enumerate(groups):
        for z in members:
            wz = math.atan2(nodes[z, 1], nodes[z, 0])
            Y[z] = np.exp(-1j * ell * (om - wz)) * U[g, 0] / len(members)
    return Y


def gls_residual(nodes, queries, K: float, L: int | None = None) -> np.ndarray:
    """Relative squared residual summed over modes ``|l| <= L`` at each query."""
    nodes = np.atleast_2d(nodes)
    q = np.atleast_2d(queries)
    rq = np.hypot(q[:, 0], q[:, 1])
    radii, _ = _radius_groups(nodes)
    if L is None:
        z = K * max(rq.max(), radii.max())
        L = int(math.ceil(z + 10 * max(z, 1) ** (1 / 3))) + 10
    total = np.zeros(q.shape[0])
    for ell in range(L + 1):
        U, rule = gls_radial(radii, rq, ell, K)
        Jq = bessel_j_all(ell, np.outer(rq, rule.nodes))[ell]
        Jn = bessel_j_all(ell, np.outer(radii, rule.nodes))[ell]
        self_ = (Jq * Jq) @ rule.weights
        cross = np.sum(((Jn * rule.weights) @ Jq.T) * U, axis=0)
        total += (1 if ell == 0 else 2) * (self_ - cross)
    return np.maximum(total, 0.0) / (0.5 * K * K)


def gls_operators(nodes, rule, Q: int, tgrid: TranslationGrid, L: int) -> FTKOperators:
    """GLS as a factorized engine: one term per (node, mode) pair."""
    nodes = np.atleast_2d(np.asarray(nodes, dtype=float))
    K = rule.radius
    radii, groups = _radius_groups(nodes)
    rn = np.hypot(nodes[:, 0], nodes[:, 1])
    wn = np.arctan2(nodes[:, 1], nodes[:, 0])
    rq, oq = tgrid.radii, tgrid.directions
    ells, G, Y = [], [], []
    Jk = bessel_j_all(L, np.outer(rn, rule.nodes))                      # (L+1, H, M)
    for ell in range(-L, L + 1):
        la = abs(ell)
        sgn = -1.0 if (ell < 0 and la % 2) else 1.0
        U, _ = gls_radial(radii, rq, la, K)
        # J_{-l} = (-1)^l J_l on both sides leaves U unchanged
        for g, members in enumerate(groups):
            for z in members:
                ells.append(ell)
                G.append(rule.weights * sgn * Jk[la, z] * np.exp(-1j * ell * (wn[z] + 0.5 * np.pi)))
                Y.append(np.exp(-1j * ell * (oq - wn[z])) * U[g] / len(members))
    return FTKOperators(np.array(ells), np.array(G), np.array(Y).T, Q)


def gls_align(a_coeffs: FourierBesselCoeffs, b_coeffs: FourierBesselCoeffs, nodes,
              tgrid: TranslationGrid, rgrid: RotationGrid, L: int) -> InnerProductGrid:
    ops = gls_operators(nodes, a_coeffs.rule, a_coeffs.Q, tgrid, L)
    X = ftk_batch(a_coeffs, b_coeffs, ops, rgrid)[0]
    return InnerProductGrid(X, tgrid, rgrid, "gls", 0.0, {"nodes": len(nodes), "L": L})


# -- error functionals ---------------------------------------------------------------------------

def kernel_gram(r, K: float) -> np.ndarray:
    """``int_{|k|<=K} F(d', k) conj(F(d, k)) dk`` at separation ``r``."""
    return np.pi * K * K * ls_kernel(K * np.asarray(r, dtype=float))


def linear_interp_hs_error(D: float, K: float, h: float, nr: int = 160, nt: int = 256) -> float:
    """Relative Hilbert-Schmidt error of bilinear interpolation with pitch ``h``.

    ``int_{|d|<=D} || sum_z Y_z(d) F(d_z, .) - F(d, .) ||^2 dd`` is evaluated
    with the closed-form Gram kernel and a polar rule, then divided by
    ``||F||_HS^2 = (pi D K)^2``.
    """
    pts, w = disk_rule(D, nr, nt)
    corners, y = bilinear_corners(pts, h)
    cpos = corners * h
    g0 = kernel_gram(0.0, K)
    gc = kernel_gram(_batch_dist(cpos, cpos), K)                      # (P, 4, 4)
    gq = kernel_gram(np.hypot(*(cpos - pts[:, None, :]).transpose(2, 0, 1)), K)  # (P, 4)
    e2 = np.einsum("pa,pab,pb->p", y, gc, y) - 2 * np.sum(y * gq, axis=1) + g0
    return float(math.sqrt(max(w @ e2, 0.0)) / (math.pi * D * K))


def _batch_dist(A, B):
    d = A[:, :, None, :] - B[:, None, :, :]
    return np.hypot(d[..., 0], d[..., 1])


def linear_nodes_for_error(D: float, K: float, target: float = 1e-2,
                           ratio: float = 1.01, **kw) -> tuple:
    """Coarsest lattice pitch meeting ``target`` and its node count.

    Brackets the pitch with coarse geometric steps from ``D`` downward, then
    rescans the bracket with step ``ratio``; returns ``(h, node_count, error)``.
    """
    coarse = 1.25
    h = D
    while linear_interp_hs_error(D, K, h, **kw) > target:
        h /= coarse
        if h < 1e-6 * D:
            raise RuntimeError("target error not reached")
    h *= coarse
    while True:
        err = linear_interp_hs_error(D, K, h, **kw)
        if err <= target:
            return h, len(lattice_nodes(D, h)[1]), err
        h /= ratio


def ftk_terms_for_error(svd: TranslationKernelSVD, target: float = 1e-2) -> int:
    """Smallest ``H'`` whose relative HS error is at most ``target``."""
    s = 2 * np.pi * svd.sigma
    tail = np.sqrt(np.cumsum((s ** 2)[::-1])[::-1]) / (np.pi * svd.D * svd.K)
    ok = np.nonzero(np.append(tail, 0.0) <= target)[0]
    return int(ok[0])


def ftk_shift_error(svd: TranslationKernelSVD, radii, H: int | None = None,
                    omega: float = 0.0) -> np.ndarray:
    """Relative ``||F(d, .) - F_H(d, .)||_2 / ||F(d, .)||_2`` along direction ``omega``.

    Uses per-mode quadrature in ``k``; modes beyond the plan contribute their
    full ``J_l`` energy.  The error does not depend on ``omega``.
    """
    H = svd.H if H is None else H
    radii = np.atleast_1d(np.asarray(radii, dtype=float))
    K = svd.K
    rule = gauss_jacobi_rule(int(math.ceil(K * radii.max())) + 60, K)
    Lcut = int(math.ceil(K * radii.max() + 10 * max(K * radii.max(), 1) ** (1 / 3))) + 10
    Lcut = max(Lcut, max(abs(l) for l in svd.modes))
    table = bessel_j_all(Lcut, np.outer(radii, rule.nodes))         # (L+1, R, M)
    kept = {}
    for ell, eta, s in svd.order[:H]:
        kept.setdefault(ell, []).append((eta, s))
    err2 = np.zeros(radii.size)
    for ell in range(-Lcut, Lcut + 1):
        la = abs(ell)
        sgn = -1.0 if (ell < 0 and la % 2) else 1.0
        f = sgn * table[la]
        if ell in kept:
            m = svd.modes[ell]
            u = m.left(radii)
            v = m.right(rule.nodes)
            for eta, s in kept[ell]:
                f = f - s * np.outer(u[:, eta], v[:, eta])
        err2 += (f * f) @ rule.weights
    return np.sqrt(np.maximum(err2, 0.0) / (0.5 * K * K))


def linear_shift_error(D: float, K: float, h: float, radii, omega: float = 0.0) -> np.ndarray:
    """Relative pointwise kernel error of bilinear interpolation along ``omega``."""
    radii = np.atleast_1d(np.asarray(radii, dtype=float))
    pts = np.column_stack([radii * math.cos(omega), radii * math.sin(omega)])
    corners, y = bilinear_corners(pts, h)
    cpos = corners * h
    g0 = kernel_gram(0.0, K)
    gc = kernel_gram(_batch_dist(cpos, cpos), K)
    gq = kernel_gram(np.hypot(*(cpos - pts[:, None, :]).transpose(2, 0, 1)), K)
    e2 = np.einsum("pa,pab,pb->p", y, gc, y) - 2 * np.sum(y * gq, axis=1) + g0
    return np.sqrt(np.maximum(e2, 0.0) / g0)
