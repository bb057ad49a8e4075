"""Far-field field-response channel model for a 2-D movable-antenna array.

Positions are in wavelengths. For path ``l`` with elevation ``theta`` and
azimuth ``phi`` the propagation difference of an antenna at ``(x, y)`` is
``x sin(theta) cos(phi) + y cos(theta)`` and its field response is
``exp(j 2 pi rho)``. The channel to a user is ``h = G^H f`` where the columns
of ``G`` are the per-antenna field-response vectors and ``f`` is the user's
path-response vector.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .config import ScenarioConfig
from .errors import InvalidInputError


@dataclass(frozen=True)
class PathAngles:
    theta: float
    phi: float


@dataclass(frozen=True)
class ChannelGeometry:
    """Multipath geometry of one user: AoDs, path responses and distance."""

    theta: np.ndarray
    phi: np.ndarray
    prv: np.ndarray
    distance_m: float = float("nan")

    def __post_init__(self) -> None:
        theta = np.atleast_1d(np.asarray(self.theta, dtype=float))
        phi = np.atleast_1d(np.asarray(self.phi, dtype=float))
        prv = np.atleast_1d(np.asarray(self.prv, dtype=complex))
        if theta.ndim != 1 or theta.size == 0:
            raise InvalidInputError("a geometry needs at least one path")
        if phi.shape != theta.shape or prv.shape != theta.shape:
            raise InvalidInputError(
                f"angle/PRV length mismatch: theta {theta.shape}, phi {phi.shape}, prv {prv.shape}"
            )
        object.__setattr__(self, "theta", theta)
        object.__setattr__(self, "phi", phi)
        object.__setattr__(self, "prv", prv)

    @property
    def n_paths(self) -> int:
        return self.theta.size

    @property
    def paths(self) -> list[PathAngles]:
        return [PathAngles(t, p) for t, p in zip(self.theta, self.phi)]

    # Direction cosines entering the propagation difference.
    @property
    def dir_x(self) -> np.ndarray:
        return np.sin(self.theta) * np.cos(self.phi)

    @property
    def dir_y(self) -> np.ndarray:
        return np.cos(self.theta)

    def scaled(self, factor: float) -> "ChannelGeometry":
        """Same geometry with the path responses multiplied by ``factor``."""
        return ChannelGeometry(self.theta, self.phi, self.prv * factor, self.distance_m)

    def to_dict(self) -> dict:
        return {
            "theta": self.theta.tolist(),
            "phi": self.phi.tolist(),
            "prv_re": self.prv.real.tolist(),
            "prv_im": self.prv.imag.tolist(),
            "distance_m": self.distance_m,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ChannelGeometry":
        prv = np.asarray(d["prv_re"], dtype=float) + 1j * np.asarray(d["prv_im"], dtype=float)
        return cls(d["theta"], d["phi"], prv, float(d.get("distance_m", float("nan"))))


def as_positions(apv) -> np.ndarray:
    """Coerce an antenna-position vector to an ``(M, 2)`` float array."""
    u = np.asarray(apv, dtype=float)
    if u.ndim == 1:
        if u.size % 2:
            raise InvalidInputError(f"flat APV must have even length, got {u.size}")
        u = u.reshape(-1, 2)
    if u.ndim != 2 or u.shape[1] != 2:
        raise InvalidInputError(f"APV must have shape (M, 2), got {u.shape}")
    return u


def propagation_difference(u, theta, phi):
    """Path-length difference (in wavelengths) relative to the origin."""
    u = np.asarray(u, dtype=float)
    return u[..., 0] * np.sin(theta) * np.cos(phi) + u[..., 1] * np.cos(theta)


def field_response_vector(u, paths: Sequence[PathAngles] | ChannelGeometry) -> np.ndarray:
    if isinstance(paths, ChannelGeometry):
        theta, phi = paths.theta, paths.phi
    else:
        if len(paths) == 0:
            raise InvalidInputError("field response needs at least one path")
        theta = np.array([p.theta for p in paths], dtype=float)
        phi = np.array([p.phi for p in paths], dtype=float)
    u = np.asarray(u, dtype=float)
    if u.shape != (2,):
        raise InvalidInputError(f"antenna position must be a 2-vector, got shape {u.shape}")
    return np.exp(2j * np.pi * propagation_difference(u, theta, phi))


def field_response_matrix(apv, geom: ChannelGeometry) -> np.ndarray:
    """``L x M`` matrix whose column ``m`` is the FRV of antenna ``m``."""
    u = as_positions(apv)
    rho = np.outer(geom.dir_x, u[:, 0]) + np.outer(geom.dir_y, u[:, 1])
    return np.exp(2j * np.pi * rho)


def channel_vector(apv, geom: ChannelGeometry) -> np.ndarray:
    return field_response_matrix(apv, geom).conj().T @ geom.prv


def channel_matrix(apv, geoms: Sequence[ChannelGeometry]) -> np.ndarray:
    """Stack the user channels as rows: ``H[k] = h_k``, shape ``(K, M)``."""
    return np.stack([channel_vector(apv, g) for g in geoms])


# Sampling -------------------------------------------------------------------


def user_rng(seed: int, trial: int, user: int) -> np.random.Generator:
    """Counter-based stream owned by one (trial, user) pair.

    Streams are independent of how many users or trials exist, so a K=2
    experiment sees exactly the first two users of the K=3 experiment.
    """
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([seed, trial, user])))


def sample_user_geometry(
    rng: np.random.Generator,
    n_paths: int,
    distance_range_m: tuple[float, float],
    pathloss_ref: float,
    pathloss_exponent: float,
) -> ChannelGeometry:
    """Draw one user's geometry.

    AoDs are uniform on ``[0, pi]``; the PRV entries are CSCG with variance
    ``pathloss_ref * d**(-pathloss_exponent) / n_paths``.
    """
    if n_paths < 1:
        raise InvalidInputError("n_paths must be >= 1")
    lo, hi = distance_range_m
    d = float(rng.uniform(lo, hi)) if hi > lo else float(lo)
    theta = rng.uniform(0.0, np.pi, n_paths)
    phi = rng.uniform(0.0, np.pi, n_paths)
    var = pathloss_ref * d ** (-pathloss_exponent) / n_paths
    prv = np.sqrt(var / 2.0) * (rng.standard_normal(n_paths) + 1j * rng.standard_normal(n_paths))
    return ChannelGeometry(theta, phi, prv, d)


def sample_geometry(cfg: ScenarioConfig, trial: int = 0) -> list[ChannelGeometry]:
    """The ``cfg.K`` user geometries of Monte-Carlo trial ``trial``."""
    return [
        sample_user_geometry(
            user_rng(cfg.seed, trial, k),
            cfg.L,
            cfg.distance_range_m,
            cfg.pathloss_ref,
            cfg.pathloss_exponent,
        )
        for k in range(cfg.K)
    ]
