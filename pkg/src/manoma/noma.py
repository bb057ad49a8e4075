"""Downlink NOMA rate algebra.

Conventions (0-based user indices throughout):

* ``H`` is the ``(K, M)`` channel matrix with ``H[k] = h_k``.
* ``W`` is the ``(K, M)`` beamformer matrix with ``W[k] = w_k``.
* A decoding order is a tuple listing users in the order their signals are
  decoded; ``rank[k]`` is the position of user ``k`` in that tuple.
* The signal of user ``k`` is interfered with by every user decoded after it.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, ContractError, DegenerateChannelError, InvalidInputError

FEAS_TOL = 1e-9

DecodingOrder = tuple[int, ...]


def decoding_rank(order) -> np.ndarray:
    order = tuple(int(k) for k in order)
    if sorted(order) != list(range(len(order))):
        raise InvalidInputError(f"decoding order must be a permutation of 0..K-1, got {order}")
    rank = np.empty(len(order), dtype=int)
    rank[list(order)] = np.arange(len(order))
    return rank


def sic_pairs(order) -> list[tuple[int, int]]:
    """All ``(k, i)`` with ``s(k) <= s(i)``: own-rate pairs first, then cross pairs."""
    order = tuple(order)
    own = [(k, k) for k in order]
    cross = [(order[a], order[b]) for a in range(len(order)) for b in range(a + 1, len(order))]
    return own + cross


def _gains(H, W) -> np.ndarray:
    """``G[k, i] = |h_i^H w_k|^2``."""
    return np.abs(np.conj(H) @ W.T).T ** 2


def _check(H, W, sigma2):
    H = np.atleast_2d(np.asarray(H, dtype=complex))
    W = np.atleast_2d(np.asarray(W, dtype=complex))
    if H.shape != W.shape:
        raise InvalidInputError(f"channel shape {H.shape} != beamformer shape {W.shape}")
    sigma2 = np.broadcast_to(np.asarray(sigma2, dtype=float), (H.shape[0],))
    return H, W, sigma2


def _interference(G, rank, k, i) -> float:
    later = rank > rank[k]
    return float(G[later, i].sum())


def sinr_own(k, H, W, order, sigma2) -> float:
    H, W, sigma2 = _check(H, W, sigma2)
    rank = decoding_rank(order)
    G = _gains(H, W)
    return G[k, k] / (_interference(G, rank, k, k) + sigma2[k])


def sinr_cross(k, kbar, H, W, order, sigma2) -> float:
    """SINR at user ``kbar`` when decoding user ``k``'s signal; needs ``s(k) < s(kbar)``."""
    H, W, sigma2 = _check(H, W, sigma2)
    rank = decoding_rank(order)
    if rank[k] >= rank[kbar]:
        raise ContractError(f"user {kbar} does not decode user {k} under order {tuple(order)}")
    G = _gains(H, W)
    return G[k, kbar] / (_interference(G, rank, k, kbar) + sigma2[kbar])


@dataclass
class NomaRates:
    """Own-signal rates and SIC cross-decoding rates in bps/Hz.

    ``cross[k, i]`` is the rate at which user ``i`` decodes user ``k``'s
    signal; entries for pairs with ``s(k) >= s(i)`` are NaN.
    """

    own: np.ndarray
    cross: np.ndarray
    order: DecodingOrder

    @property
    def sum_rate(self) -> float:
        return float(self.own.sum())

    @property
    def effective(self) -> np.ndarray:
        """Largest rate per user that every SIC decoder of that user supports."""
        with np.errstate(invalid="ignore"):
            worst_cross = np.nanmin(np.where(np.isnan(self.cross), np.inf, self.cross), axis=1)
        return np.minimum(self.own, worst_cross)

    @property
    def effective_sum(self) -> float:
        return float(self.effective.sum())

    def assigned(self) -> "NomaRates":
        """Rates with each user's own rate set to its SIC-supported rate."""
        return NomaRates(self.effective, self.cross.copy(), self.order)

    def max_sic_excess(self) -> float:
        """Largest ``R_{k->k} - R_{k->kbar}`` over SIC pairs (<= 0 when SIC holds)."""
        gaps = self.own[:, None] - self.cross
        return float(np.nanmax(gaps)) if np.any(~np.isnan(gaps)) else float("-inf")


def rates(H, W, order, sigma2) -> NomaRates:
    H, W, sigma2 = _check(H, W, sigma2)
    rank = decoding_rank(order)
    K = H.shape[0]
    G = _gains(H, W)
    own = np.empty(K)
    cross = np.full((K, K), np.nan)
    for k in range(K):
        own[k] = np.log2(1.0 + G[k, k] / (_interference(G, rank, k, k) + sigma2[k]))
        for i in range(K):
            if rank[i] > rank[k]:
                cross[k, i] = np.log2(1.0 + G[k, i] / (_interference(G, rank, k, i) + sigma2[i]))
    return NomaRates(own, cross, tuple(int(k) for k in order))


@dataclass
class SicReport:
    ok: bool
    violations: list[tuple] = field(default_factory=list)

    def __bool__(self) -> bool:
        return self.ok


def sic_feasible(r: NomaRates, order, rmin, tol: float = FEAS_TOL) -> SicReport:
    """Check ``R_{k->k} <= R_{k->kbar}`` for every SIC pair and ``R_{k->k} >= rmin``.

    Violations are reported as ``("sic", k, kbar, excess)`` or
    ``("qos", k, shortfall)``.
    """
    rank = decoding_rank(order)
    K = r.own.size
    rmin = np.broadcast_to(np.asarray(rmin, dtype=float), (K,))
    violations = []
    for k in range(K):
        if r.own[k] < rmin[k] - tol:
            violations.append(("qos", k, float(rmin[k] - r.own[k])))
        for kbar in range(K):
            if rank[kbar] > rank[k] and r.own[k] > r.cross[k, kbar] + tol:
                violations.append(("sic", k, kbar, float(r.own[k] - r.cross[k, kbar])))
    return SicReport(not violations, violations)


@dataclass
class SlackPoint:
    """Slack variables: ``1/alpha[k, i]`` lower-bounds ``|h_i^H w_k|^2`` and
    ``beta[k, i]`` upper-bounds interference plus noise at user ``i``."""

    alpha: np.ndarray
    beta: np.ndarray

    def rate_bound(self) -> np.ndarray:
        return np.log2(1.0 + 1.0 / (self.alpha * self.beta))


def slack_from_primal(
    H, W, order, sigma2, sic_consistent: bool = False, gain_floor: float | None = None
) -> SlackPoint:
    """Tight slack point of a primal state.

    With ``sic_consistent=True`` the own-rate slack ``alpha[k, k]`` is raised
    until ``log2(1 + 1/(alpha beta))`` equals the SIC-supported rate of user
    ``k``; this is the tightest point that also satisfies the cross-decoding
    constraints when the own rate exceeds a cross rate.

    A zero power ``|h_i^H w_k|^2`` on a needed pair raises
    :class:`DegenerateChannelError` unless ``gain_floor`` is given, in which
    case powers below it are replaced by it (the result is then only an
    expansion point, not a tight slack).
    """
    H, W, sigma2 = _check(H, W, sigma2)
    rank = decoding_rank(order)
    K = H.shape[0]
    G = _gains(H, W)
    if gain_floor is not None:
        G = np.maximum(G, gain_floor)
    alpha = np.full((K, K), np.inf)
    beta = np.empty((K, K))
    for k in range(K):
        for i in range(K):
            beta[k, i] = _interference(G, rank, k, i) + sigma2[i]
            needed = rank[i] >= rank[k]
            if G[k, i] > 0:
                alpha[k, i] = 1.0 / G[k, i]
            elif needed:
                raise DegenerateChannelError(f"|h_{i}^H w_{k}|^2 = 0")
    if sic_consistent:
        eff = rates(H, W, order, sigma2).effective
        for k in range(K):
            if eff[k] > 0:
                target = 1.0 / (beta[k, k] * np.expm1(eff[k] * np.log(2.0)))
                alpha[k, k] = max(alpha[k, k], target)
    return SlackPoint(alpha, beta)


def enumerate_orders(K: int, cap: int = 4) -> list[DecodingOrder]:
    if K > cap:
        raise ConfigError(f"refusing to enumerate {K}! decoding orders (cap is K <= {cap})")
    return list(itertools.permutations(range(K)))


def heuristic_order(H) -> DecodingOrder:
    """Weaker users (smaller channel norm) are decoded first; ties by index."""
    norms = np.linalg.norm(np.atleast_2d(H), axis=1)
    return tuple(int(k) for k in sorted(range(len(norms)), key=lambda k: (norms[k], k)))
