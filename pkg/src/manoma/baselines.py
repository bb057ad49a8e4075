"""Fixed-position comparison schemes.

* ``fpa_noma``: the same alternating optimizer with the array frozen at the
  initial uniform planar layout (beamforming steps only).
* ``oma_fpa``: equal-length time slots, one user per slot, full power and
  matched-filter beamforming in each slot. Minimum rates are not imposed.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .channel import ChannelGeometry, channel_matrix
from .config import ScenarioConfig
from .optimizer import SolveRecord, run_best_order, upa_positions

SCHEMES = ("MA-NOMA", "FPA-NOMA", "OMA-FPA")


@dataclass
class BaselineResult:
    scheme: str
    sum_rate: float
    per_user_rates: np.ndarray
    status: str = "ok"
    details: dict = field(default_factory=dict)

    @property
    def feasible(self) -> bool:
        return self.status != "infeasible"


def upa(cfg: ScenarioConfig) -> np.ndarray:
    """Fixed array layout shared by the baselines and the optimizer start point."""
    return upa_positions(cfg.M, cfg.A, max(0.5, cfg.D))


def fpa_noma(cfg: ScenarioConfig, geoms: Sequence[ChannelGeometry], record: SolveRecord | None = None) -> BaselineResult:
    """NOMA with a fixed array; ``record`` may pass a precomputed frozen-array run."""
    rec = record or run_best_order(cfg, geoms, move_antennas=False)
    rates = rec.final_rates.own if rec.final_rates is not None else np.full(cfg.K, np.nan)
    status = "infeasible" if not rec.feasible else rec.status
    return BaselineResult("FPA-NOMA", rec.objective if rec.feasible else float("nan"), rates, status,
                          {"order": rec.order, "record": rec})


def oma_rates(H, P_s: float, sigma2) -> np.ndarray:
    """Per-user time-averaged rates ``(1/K) log2(1 + P_s |h_k|^2 / sigma_k^2)``."""
    H = np.atleast_2d(H)
    K = H.shape[0]
    gain = np.sum(np.abs(H) ** 2, axis=1)
    return np.log2(1.0 + P_s * gain / np.asarray(sigma2, dtype=float)) / K


def oma_fpa(cfg: ScenarioConfig, geoms: Sequence[ChannelGeometry]) -> BaselineResult:
    H = channel_matrix(upa(cfg), geoms)
    r = oma_rates(H, cfg.power_mw, cfg.noise_mw)
    return BaselineResult("OMA-FPA", float(r.sum()), r)
