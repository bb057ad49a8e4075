"""Convex subproblems of the alternating optimization.

``solve_beamforming`` solves the relaxed beamforming SDP at fixed antenna
positions; ``solve_position`` moves a single antenna using the quadratic
power surrogates. Both share the rate block:

* ``R[k, i] <= theta_{k,i}(alpha, beta)``  (tangent plane of the rate bound),
* ``log2(1 + 1/(alpha_kk beta_kk)) <= R[k, i]`` for ``s(k) < s(i)``
  (kept exact through exponential cones),
* ``R[k, k] >= R_min``.

Internally every problem is normalised so that noise powers are 1 and the
power budget is 1; results are mapped back to physical units.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from . import noma
from .channel import ChannelGeometry, as_positions
from .conic import Affine, ConicBuilder, ConicSolution, affine_sum, conic_solve
from .noma import SlackPoint, decoding_rank, sic_pairs
from .surrogate import delta_bound, expansion_terms, gamma_gradient, gamma_value, theta_coefficients

log = logging.getLogger(__name__)

LN2 = np.log(2.0)
DEFECT_TOL = 1e-4


def _rate_block(b: ConicBuilder, order, alpha_t, beta_t, rmin, restore: bool):
    """Variables and constraints shared by both subproblems.

    Returns ``(alpha, beta, R, objective)`` where the first three are dicts
    keyed by SIC pair ``(k, i)``.
    """
    pairs = sic_pairs(order)
    rank = decoding_rank(order)
    K = len(order)
    alpha, beta, R = {}, {}, {}
    for k, i in pairs:
        alpha[k, i] = b.var()
        beta[k, i] = b.var()
        R[k, i] = b.var()
        v0, sa, sb = theta_coefficients(alpha_t[k, i], beta_t[k, i])
        b.le(R[k, i], v0 - sa * (alpha[k, i] - alpha_t[k, i]) - sb * (beta[k, i] - beta_t[k, i]))

    # ln(1 + 1/(alpha beta)) <= v  <=>  exp(-v) + exp(-a - b - v) <= 1, a <= ln alpha, b <= ln beta
    for k in range(K):
        later = [i for i in range(K) if rank[i] > rank[k]]
        if not later:
            continue
        la, lb, v, e1, e2 = (b.var() for _ in range(5))
        b.exp(la, 1.0, alpha[k, k])
        b.exp(lb, 1.0, beta[k, k])
        b.exp(-v, 1.0, e1)
        b.exp(-la - lb - v, 1.0, e2)
        b.le(e1 + e2, 1.0)
        for i in later:
            b.ge(LN2 * R[k, i], v)

    own = affine_sum(R[k, k] for k in range(K))
    if restore:
        slack = b.var()
        for k in range(K):
            b.ge(R[k, k] - rmin[k], slack)
        objective = slack
    else:
        for k in range(K):
            b.ge(R[k, k], rmin[k])
        objective = own
    b.maximize(objective)
    return alpha, beta, R, own


def _pair_values(x, table, K):
    out = np.full((K, K), np.nan)
    for (k, i), expr in table.items():
        out[k, i] = expr.value(x)
    return out


# Beamforming ---------------------------------------------------------------------


@dataclass
class SdpSolution:
    W: np.ndarray
    R: np.ndarray
    alpha: np.ndarray
    beta: np.ndarray
    objective: float
    status: str
    order: tuple
    conic: ConicSolution | None = None

    @property
    def total_power(self) -> float:
        return float(np.real(np.trace(self.W, axis1=1, axis2=2)).sum())


def _hermitian_variable(b: ConicBuilder, M: int):
    X = np.empty((M, M), dtype=object)
    Y = np.empty((M, M), dtype=object)
    for r in range(M):
        Y[r, r] = Affine()
        for c in range(r, M):
            X[r, c] = X[c, r] = b.var()
            if c > r:
                y = b.var()
                Y[r, c] = y
                Y[c, r] = -y
    return X, Y


def _real_trace(X, Y, Hm) -> Affine:
    """``Re Tr((X + jY) Hm)`` for Hermitian ``Hm``."""
    M = Hm.shape[0]
    expr = Affine()
    for r in range(M):
        expr = expr + Hm[r, r].real * X[r, r]
        for c in range(r + 1, M):
            expr = expr + 2.0 * Hm[r, c].real * X[r, c] + 2.0 * Hm[r, c].imag * Y[r, c]
    return expr


def solve_beamforming(
    H,
    order,
    slack_t: SlackPoint,
    sigma2,
    P_s: float,
    rmin=0.0,
    tol: float = 1e-9,
    restore: bool = False,
) -> SdpSolution:
    """Relaxed beamforming SDP around the slack expansion point ``slack_t``.

    With ``restore=True`` the minimum-rate constraints are replaced by the
    objective ``max min_k (R[k, k] - rmin[k])``, used to recover a
    QoS-feasible starting point.
    """
    H = np.atleast_2d(np.asarray(H, dtype=complex))
    K, M = H.shape
    order = tuple(int(k) for k in order)
    sigma2 = np.broadcast_to(np.asarray(sigma2, dtype=float), (K,))
    rmin = np.broadcast_to(np.asarray(rmin, dtype=float), (K,))

    if P_s <= 0:
        status = "optimal" if np.all(rmin <= 0) else "infeasible"
        return SdpSolution(
            np.zeros((K, M, M), dtype=complex),
            np.where(np.isnan(_pair_mask(order)), np.nan, 0.0),
            np.full((K, K), np.inf),
            np.tile(sigma2, (K, 1)),
            0.0,
            status,
            order,
        )

    # Normalised units: unit noise, unit power budget.
    scale = P_s / sigma2
    Hn = [scale[i] * np.outer(H[i], H[i].conj()) for i in range(K)]
    alpha_t = slack_t.alpha * sigma2[None, :]
    beta_t = slack_t.beta / sigma2[None, :]

    b = ConicBuilder()
    XY = [_hermitian_variable(b, M) for _ in range(K)]
    alpha, beta, R, own = _rate_block(b, order, alpha_t, beta_t, rmin, restore)
    rank = decoding_rank(order)
    trace = {(k, i): _real_trace(*XY[k], Hn[i]) for k in range(K) for i in range(K)}
    for (k, i) in alpha:
        b.rotated(alpha[k, i], trace[k, i], 1.0)
        later = [j for j in range(K) if rank[j] > rank[k]]
        b.ge(beta[k, i], affine_sum(trace[j, i] for j in later) + 1.0)
    b.le(affine_sum(affine_sum(X[r, r] for r in range(M)) for X, _ in XY), 1.0)
    for X, Y in XY:
        Z = np.empty((2 * M, 2 * M), dtype=object)
        Z[:M, :M] = X
        Z[M:, M:] = X
        Z[M:, :M] = Y
        Z[:M, M:] = -Y
        b.psd(Z)

    sol = conic_solve(b.build(), tol=tol)
    if not sol.optimal:
        return SdpSolution(
            np.zeros((K, M, M), dtype=complex),
            np.full((K, K), np.nan),
            np.full((K, K), np.nan),
            np.full((K, K), np.nan),
            float("nan"),
            "numerical-failure" if sol.status not in ("infeasible",) else "infeasible",
            order,
            sol,
        )
    x = sol.x
    W = np.empty((K, M, M), dtype=complex)
    for k, (X, Y) in enumerate(XY):
        Xv = np.array([[e.value(x) for e in row] for row in X])
        Yv = np.array([[e.value(x) for e in row] for row in Y])
        W[k] = P_s * (Xv + 1j * Yv)
    return SdpSolution(
        W,
        _pair_values(x, R, K),
        _pair_values(x, alpha, K) / sigma2[None, :],
        _pair_values(x, beta, K) * sigma2[None, :],
        own.value(x),
        "optimal",
        order,
        sol,
    )


def _pair_mask(order):
    K = len(order)
    mask = np.full((K, K), np.nan)
    for k, i in sic_pairs(order):
        mask[k, i] = 1.0
    return mask


@dataclass
class BeamformerExtraction:
    W: np.ndarray
    defects: np.ndarray
    randomized: bool = False


def _rayleigh_score(W_mats):
    def score(bf):
        total = 0.0
        for w, Wk in zip(bf, W_mats):
            nrm = np.vdot(w, w).real
            if nrm > 0:
                total += np.vdot(w, Wk @ w).real / nrm
        return total

    return score


def extract_beamformers(
    sol: SdpSolution | np.ndarray,
    score: Callable[[np.ndarray], float] | None = None,
    rng: np.random.Generator | None = None,
    n_samples: int = 100,
    defect_tol: float = DEFECT_TOL,
) -> BeamformerExtraction:
    """Principal-eigenvector beamformers from the SDP matrices.

    When some ``lambda_2 / lambda_1`` exceeds ``defect_tol`` Gaussian
    randomization is run: ``n_samples`` draws ``w_k ~ CN(0, W_k)`` rescaled to
    ``|w_k|^2 = Tr(W_k)``; the best candidate under ``score`` (higher is
    better) wins, the principal-eigenvector candidate included.
    """
    W_mats = sol.W if isinstance(sol, SdpSolution) else np.asarray(sol, dtype=complex)
    K, M, _ = W_mats.shape
    bf = np.zeros((K, M), dtype=complex)
    defects = np.zeros(K)
    roots = []
    for k in range(K):
        Wk = 0.5 * (W_mats[k] + W_mats[k].conj().T)
        lam, vec = np.linalg.eigh(Wk)
        lam = np.clip(lam, 0.0, None)
        top = lam[-1]
        if top > 0:
            bf[k] = np.sqrt(top) * vec[:, -1]
            defects[k] = lam[-2] / top if M > 1 else 0.0
        roots.append(vec * np.sqrt(lam))
    if np.all(defects <= defect_tol):
        return BeamformerExtraction(bf, defects, False)

    score = score or _rayleigh_score(W_mats)
    rng = rng or np.random.default_rng(0)
    powers = np.clip(np.real(np.trace(W_mats, axis1=1, axis2=2)), 0.0, None)
    # every candidate, the principal one included, carries power Tr(W_k)
    norms = np.sum(np.abs(bf) ** 2, axis=1)
    bf = np.where(norms[:, None] > 0, bf * np.sqrt(powers / np.where(norms > 0, norms, 1.0))[:, None], bf)
    best, best_score = bf, score(bf)
    for _ in range(n_samples):
        cand = np.zeros((K, M), dtype=complex)
        for k in range(K):
            z = (rng.standard_normal(M) + 1j * rng.standard_normal(M)) / np.sqrt(2.0)
            w = roots[k] @ z
            nrm = np.vdot(w, w).real
            if nrm > 0:
                cand[k] = w * np.sqrt(powers[k] / nrm)
        s = score(cand)
        if s > best_score:
            best, best_score = cand, s
    return BeamformerExtraction(best, defects, True)


# Antenna position ------------------------------------------------------------------


@dataclass
class PositionSolution:
    u: np.ndarray
    alpha: np.ndarray
    beta: np.ndarray
    R: np.ndarray
    objective: float
    center_objective: float
    status: str
    moved: bool
    diagnostics: dict = field(default_factory=dict)


def position_surrogates(m, apv, W, geoms: Sequence[ChannelGeometry], order):
    """Values, gradients and curvature bounds at antenna ``m``'s position.

    Returns ``(gamma, grad, delta)`` with shapes ``(K, K)``, ``(K, K, 2)`` and
    ``(K, K)`` where entry ``[k, i]`` describes ``|h_i^H w_k|^2``.
    """
    u = as_positions(apv)
    K = len(geoms)
    gamma = np.empty((K, K))
    grad = np.empty((K, K, 2))
    delta = np.empty((K, K))
    for k in range(K):
        for i in range(K):
            t = expansion_terms(m, u, geoms[i], W[k])
            gamma[k, i] = gamma_value(t, u[m])
            grad[k, i] = gamma_gradient(t, u[m])
            delta[k, i] = delta_bound(t)
    return gamma, grad, delta


def solve_position(
    m: int,
    apv,
    W,
    geoms: Sequence[ChannelGeometry],
    order,
    sigma2,
    A: float,
    D: float,
    rmin=0.0,
    slack_t: SlackPoint | None = None,
    tol: float = 1e-9,
    keep_tol: float = 1e-9,
) -> PositionSolution:
    """Move antenna ``m`` by solving the surrogate position problem.

    The other antennas and all beamformers stay fixed. The returned position
    lies in ``[0, A]^2`` and respects the linearised minimum-distance
    constraints. If the surrogate optimum improves the sum rate by less than
    ``keep_tol`` over the centre, the centre is returned unchanged.
    """
    u = as_positions(apv).copy()
    W = np.atleast_2d(np.asarray(W, dtype=complex))
    K = len(geoms)
    order = tuple(int(k) for k in order)
    rank = decoding_rank(order)
    sigma2 = np.broadcast_to(np.asarray(sigma2, dtype=float), (K,))
    rmin = np.broadcast_to(np.asarray(rmin, dtype=float), (K,))
    center = u[m].copy()

    # Unit-noise normalisation.
    ngeoms = [g.scaled(1.0 / np.sqrt(sigma2[i])) for i, g in enumerate(geoms)]
    if slack_t is None:
        from .channel import channel_matrix

        slack_t = noma.slack_from_primal(channel_matrix(u, geoms), W, order, sigma2, sic_consistent=True)
    alpha_t = slack_t.alpha * sigma2[None, :]
    beta_t = slack_t.beta / sigma2[None, :]
    center_obj = float(sum(np.log2(1.0 + 1.0 / (alpha_t[k, k] * beta_t[k, k])) for k in range(K)))

    gamma, grad, delta = position_surrogates(m, u, W, ngeoms, order)
    diagnostics = {"gamma": gamma, "grad": grad, "delta": delta}

    def unchanged(status):
        return PositionSolution(center, slack_t.alpha, slack_t.beta, np.full((K, K), np.nan),
                                center_obj, center_obj, status, False, diagnostics)

    if not np.any(grad) and not np.any(delta):
        return unchanged("optimal")

    b = ConicBuilder()
    d = b.var((2,))
    tau = b.var()
    b.soc(tau + 1.0, [2.0 * d[0], 2.0 * d[1], tau - 1.0])
    alpha, beta, R, own = _rate_block(b, order, alpha_t, beta_t, rmin, restore=False)
    for k, i in alpha:
        q = gamma[k, i] + grad[k, i, 0] * d[0] + grad[k, i, 1] * d[1] - 0.5 * delta[k, i] * tau
        b.rotated(alpha[k, i], q, 1.0)
        later = [j for j in range(K) if rank[j] > rank[k]]
        ups = 1.0 + sum(gamma[j, i] for j in later)
        g_ups = sum((grad[j, i] for j in later), np.zeros(2))
        psi = sum(delta[j, i] for j in later)
        b.ge(beta[k, i], ups + g_ups[0] * d[0] + g_ups[1] * d[1] + 0.5 * psi * tau)
    for n in range(u.shape[0]):
        if n == m:
            continue
        diff = center - u[n]
        b.ge(float(diff @ diff) + 2.0 * diff[0] * d[0] + 2.0 * diff[1] * d[1], D * D)
    for ax in range(2):
        b.ge(d[ax], -center[ax])
        b.le(d[ax], A - center[ax])

    sol = conic_solve(b.build(), tol=tol)
    if not sol.optimal:
        log.warning("position subproblem for antenna %d returned %s; keeping centre", m, sol.status)
        return unchanged("numerical-failure")
    x = sol.x
    obj = own.value(x)
    if obj < center_obj + keep_tol:
        return unchanged("optimal")
    new = np.clip(center + np.array([d[0].value(x), d[1].value(x)]), 0.0, A)
    return PositionSolution(
        new,
        _pair_values(x, alpha, K) / sigma2[None, :],
        _pair_values(x, beta, K) * sigma2[None, :],
        _pair_values(x, R, K),
        obj,
        center_obj,
        "optimal",
        True,
        diagnostics,
    )
