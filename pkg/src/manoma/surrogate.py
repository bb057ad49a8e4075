"""Successive-convex-approximation bounds.

Three families of tangent bounds are provided:

* an affine lower bound of ``log2(1 + 1/(alpha beta))`` around a point
  ``(alpha_t, beta_t)`` (tangent plane of a jointly convex function);
* concave/convex quadratic bounds of the received power
  ``Gamma_{k,i}(u_m) = |h_i^H w_k|^2`` as a function of one antenna position,
  built from a closed-form gradient and a position-independent curvature
  bound;
* an affine lower bound of the squared inter-antenna distance.

The power expansion used everywhere is::

    Gamma(u) = sum_{l1,l2} |B[l1,l2]| cos(omega[l1,l2](u))
             + sum_l |c[l]| cos(kappa[l](u)) + |zeta|^2

with ``B = |w_m|^2 f f^H``, ``c = 2 conj(w_m) zeta f``,
``omega = arg B + 2 pi (rho_l2 - rho_l1)`` and ``kappa = 2 pi rho_l - arg c``,
where ``zeta`` collects the contribution of all other antennas.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .channel import ChannelGeometry, as_positions, channel_vector
from .errors import ContractError

LOG2E = 1.0 / np.log(2.0)
TWO_PI = 2.0 * np.pi


# Rate bound ------------------------------------------------------------------


def theta_coefficients(alpha_t, beta_t):
    """Value and (negative) slopes of the tangent plane at ``(alpha_t, beta_t)``.

    Returns ``(value, slope_alpha, slope_beta)`` such that the bound is
    ``value - slope_alpha (alpha - alpha_t) - slope_beta (beta - beta_t)``.
    """
    alpha_t = np.asarray(alpha_t, dtype=float)
    beta_t = np.asarray(beta_t, dtype=float)
    if np.any(alpha_t <= 0) or np.any(beta_t <= 0):
        raise ContractError("expansion point must be strictly positive")
    value = np.log2(1.0 + 1.0 / (alpha_t * beta_t))
    slope_alpha = LOG2E / (alpha_t + alpha_t**2 * beta_t)
    slope_beta = LOG2E / (beta_t + beta_t**2 * alpha_t)
    return value, slope_alpha, slope_beta


def theta_bound(alpha, beta, alpha_t, beta_t):
    alpha = np.asarray(alpha, dtype=float)
    beta = np.asarray(beta, dtype=float)
    if np.any(alpha <= 0) or np.any(beta <= 0):
        raise ContractError("theta_bound is defined for positive arguments only")
    value, sa, sb = theta_coefficients(alpha_t, beta_t)
    return value - sa * (alpha - alpha_t) - sb * (beta - beta_t)


# Received-power expansion ----------------------------------------------------------


@dataclass(frozen=True)
class GammaExpansionTerms:
    """Position-independent data of ``Gamma_{k,i}`` seen as a function of ``u_m``."""

    B: np.ndarray
    c: np.ndarray
    zeta: complex
    dir_x: np.ndarray
    dir_y: np.ndarray

    @property
    def residual_power(self) -> float:
        return float(abs(self.zeta) ** 2)

    def _phase_slopes(self):
        # d(omega)/du and d(kappa)/du, each with a trailing axis of size 2.
        dx, dy = self.dir_x, self.dir_y
        d_omega = TWO_PI * np.stack([dx[None, :] - dx[:, None], dy[None, :] - dy[:, None]], axis=-1)
        d_kappa = TWO_PI * np.stack([dx, dy], axis=-1)
        return d_omega, d_kappa

    def _phases(self, u):
        u = np.asarray(u, dtype=float)
        rho = u[..., 0, None] * self.dir_x + u[..., 1, None] * self.dir_y
        omega = np.angle(self.B) + TWO_PI * (rho[..., None, :] - rho[..., :, None])
        kappa = TWO_PI * rho - np.angle(self.c)
        return omega, kappa


def expansion_terms(m: int, apv, geom_i: ChannelGeometry, w_k) -> GammaExpansionTerms:
    """Expansion of ``|h_i^H w_k|^2`` around antenna ``m``; other antennas fixed."""
    u = as_positions(apv)
    w_k = np.asarray(w_k, dtype=complex)
    # conj(h_i[n]) = f_i^H g_i(u_n)
    response = np.conj(channel_vector(u, geom_i))
    others = np.arange(u.shape[0]) != m
    zeta = complex(np.sum(response[others] * w_k[others]))
    f = geom_i.prv
    B = abs(w_k[m]) ** 2 * np.outer(f, f.conj())
    c = 2.0 * np.conj(w_k[m]) * zeta * f
    return GammaExpansionTerms(B, c, zeta, geom_i.dir_x, geom_i.dir_y)


def gamma_value(terms: GammaExpansionTerms, u):
    omega, kappa = terms._phases(u)
    return (
        np.sum(np.abs(terms.B) * np.cos(omega), axis=(-2, -1))
        + np.sum(np.abs(terms.c) * np.cos(kappa), axis=-1)
        + terms.residual_power
    )


def gamma_gradient(terms: GammaExpansionTerms, u) -> np.ndarray:
    omega, kappa = terms._phases(u)
    d_omega, d_kappa = terms._phase_slopes()
    gB = -(np.abs(terms.B) * np.sin(omega))[..., None] * d_omega
    gc = -(np.abs(terms.c) * np.sin(kappa))[..., None] * d_kappa
    return gB.sum(axis=(-3, -2)) + gc.sum(axis=-2)


def gamma_hessian(terms: GammaExpansionTerms, u) -> np.ndarray:
    omega, kappa = terms._phases(u)
    d_omega, d_kappa = terms._phase_slopes()
    outer_omega = d_omega[..., :, None] * d_omega[..., None, :]
    outer_kappa = d_kappa[..., :, None] * d_kappa[..., None, :]
    hB = -(np.abs(terms.B) * np.cos(omega))[..., None, None] * outer_omega
    hc = -(np.abs(terms.c) * np.cos(kappa))[..., None, None] * outer_kappa
    return hB.sum(axis=(-4, -3)) + hc.sum(axis=-3)


def hessian_entry_bounds(terms: GammaExpansionTerms) -> np.ndarray:
    """Entry-wise bound on ``|Hessian|`` valid at every position (cosines -> 1)."""
    d_omega, d_kappa = terms._phase_slopes()
    outer_omega = np.abs(d_omega[..., :, None] * d_omega[..., None, :])
    outer_kappa = np.abs(d_kappa[..., :, None] * d_kappa[..., None, :])
    return (np.abs(terms.B)[..., None, None] * outer_omega).sum(axis=(0, 1)) + (
        np.abs(terms.c)[..., None, None] * outer_kappa
    ).sum(axis=0)


def delta_bound(terms: GammaExpansionTerms) -> float:
    """Global curvature bound: ``delta I >= Hessian(u)`` for every ``u``.

    Frobenius norm of the entry-wise magnitude bounds, which dominates the
    spectral norm of the Hessian everywhere in the plane.
    """
    return float(np.linalg.norm(hessian_entry_bounds(terms)))


def hessian_frobenius(terms: GammaExpansionTerms, u) -> float:
    """Point-wise Frobenius norm of the Hessian (diagnostic only; not a global bound)."""
    return float(np.linalg.norm(gamma_hessian(terms, u)))


def psi_bound(deltas: Sequence[float]) -> float:
    """Curvature bound of a sum of powers: the sum of their bounds."""
    return float(np.sum(deltas)) if len(deltas) else 0.0


# Quadratic surrogates ------------------------------------------------------------


@dataclass(frozen=True)
class QuadraticSurrogate:
    """``value + gradient.(u - center) + sign * curvature/2 * |u - center|^2``.

    ``sign = -1`` gives a concave lower bound, ``+1`` a convex upper bound.
    """

    value_at_center: float
    gradient: np.ndarray
    curvature: float
    center: np.ndarray
    sign: int

    def __call__(self, u):
        d = np.asarray(u, dtype=float) - self.center
        return (
            self.value_at_center
            + d @ self.gradient
            + self.sign * 0.5 * self.curvature * np.sum(d * d, axis=-1)
        )


def gamma_lb(terms: GammaExpansionTerms, center) -> QuadraticSurrogate:
    center = np.asarray(center, dtype=float)
    return QuadraticSurrogate(
        float(gamma_value(terms, center)),
        gamma_gradient(terms, center),
        delta_bound(terms),
        center,
        -1,
    )


def upsilon_ub(later_terms: Sequence[GammaExpansionTerms], noise: float, center) -> QuadraticSurrogate:
    """Convex upper bound of interference-plus-noise ``sum_j Gamma_{j,i} + noise``.

    ``later_terms`` holds the expansions of the users decoded after the
    signal of interest, all evaluated at the receiving user ``i``.
    """
    center = np.asarray(center, dtype=float)
    value = float(noise) + sum(float(gamma_value(t, center)) for t in later_terms)
    grad = sum((gamma_gradient(t, center) for t in later_terms), np.zeros(2))
    psi = psi_bound([delta_bound(t) for t in later_terms])
    return QuadraticSurrogate(value, grad, psi, center, +1)


def upsilon_value(later_terms: Sequence[GammaExpansionTerms], noise: float, u):
    return float(noise) + sum(gamma_value(t, u) for t in later_terms)


def distance_lb(u_m, u_m_t, u_n):
    """Tangent lower bound of ``|u_m - u_n|^2`` around ``u_m_t``."""
    u_m = np.asarray(u_m, dtype=float)
    diff = np.asarray(u_m_t, dtype=float) - np.asarray(u_n, dtype=float)
    return diff @ diff + 2.0 * (u_m - u_m_t) @ diff
