"""Scenario configuration, unit conversions and config-file I/O.

All array geometry is expressed in carrier wavelengths (lambda = 1).
Powers are handled internally in mW; the config stores them in dBm.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Any

import yaml

from .errors import ConfigError

ORDER_POLICIES = ("auto", "enumerate", "heuristic")


def dbm_to_mw(dbm: float) -> float:
    return 10.0 ** (dbm / 10.0)


def db_to_linear(db: float) -> float:
    return 10.0 ** (db / 10.0)


FLOAT_FIELDS = ("A", "D", "P_s", "sigma2", "R_min", "pathloss_ref_db", "pathloss_exponent", "eps",
                "solver_tol", "feas_tol")


@dataclass(frozen=True)
class ScenarioConfig:
    """Physical and algorithmic parameters of one simulation scenario.

    Defaults follow the published simulation setup where one exists
    (A = 3, D = 1/2, noise -80 dBm, R_min = 0.25 bps/Hz, reference path loss
    -30 dB, exponent 2.8, distances 50-100 m). The remaining values (L, eps,
    T_max, trial count) are documented assumptions.
    """

    M: int = 4
    K: int = 3
    L: int = 5
    A: float = 3.0
    D: float = 0.5
    P_s: float = 10.0
    sigma2: float = -80.0
    R_min: float = 0.25
    pathloss_ref_db: float = -30.0
    pathloss_exponent: float = 2.8
    distance_range_m: tuple[float, float] = (50.0, 100.0)
    trials: int = 50
    seed: int = 2024
    order_policy: str = "auto"
    enum_cap: int = 4
    eps: float = 1e-3
    T_max: int = 150
    solver_tol: float = 1e-9
    feas_tol: float = 1e-9

    def __post_init__(self) -> None:
        object.__setattr__(self, "distance_range_m", tuple(float(d) for d in self.distance_range_m))
        # 10 and 10.0 must describe (and hash to) the same scenario
        for name in FLOAT_FIELDS:
            value = getattr(self, name)
            if isinstance(value, (int, float)) and not isinstance(value, bool):
                object.__setattr__(self, name, float(value))
        self.validate()

    def validate(self) -> None:
        for name in ("M", "K", "L", "trials", "T_max", "enum_cap"):
            value = getattr(self, name)
            if not isinstance(value, int) or isinstance(value, bool) or value < 1:
                raise ConfigError(f"{name} must be a positive integer, got {value!r}")
        if not (self.A > 0 and math.isfinite(self.A)):
            raise ConfigError(f"A must be positive, got {self.A}")
        if not (self.D > 0 and math.isfinite(self.D)):
            raise ConfigError(f"D must be positive, got {self.D}")
        for name in ("P_s", "sigma2", "R_min", "pathloss_ref_db", "pathloss_exponent"):
            if not math.isfinite(getattr(self, name)):
                raise ConfigError(f"{name} must be finite")
        if self.R_min < 0:
            raise ConfigError("R_min must be nonnegative")
        if len(self.distance_range_m) != 2 or not (0 < self.distance_range_m[0] <= self.distance_range_m[1]):
            raise ConfigError(f"distance_range_m must be (min, max) with 0 < min <= max, got {self.distance_range_m}")
        if self.order_policy not in ORDER_POLICIES:
            raise ConfigError(f"order_policy must be one of {ORDER_POLICIES}, got {self.order_policy!r}")
        if not (self.eps > 0 and self.solver_tol > 0 and self.feas_tol > 0):
            raise ConfigError("eps, solver_tol and feas_tol must be positive")
        if not (0 <= self.seed < 2**64):
            raise ConfigError("seed must be a 64-bit unsigned integer")

    # Derived linear quantities ------------------------------------------------

    @property
    def power_mw(self) -> float:
        return dbm_to_mw(self.P_s)

    @property
    def noise_mw(self) -> float:
        return dbm_to_mw(self.sigma2)

    @property
    def pathloss_ref(self) -> float:
        return db_to_linear(self.pathloss_ref_db)

    def replace(self, **changes: Any) -> "ScenarioConfig":
        return dataclasses.replace(self, **changes)

    def to_dict(self) -> dict[str, Any]:
        d = dataclasses.asdict(self)
        d["distance_range_m"] = list(self.distance_range_m)
        return d

    def config_hash(self) -> str:
        """Short digest of all fields; independent of key order."""
        blob = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()[:16]

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "ScenarioConfig":
        names = {f.name for f in dataclasses.fields(cls)}
        unknown = set(data) - names
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        kwargs = dict(data)
        for name in ("M", "K", "L", "trials", "T_max", "enum_cap", "seed"):
            if name in kwargs and isinstance(kwargs[name], float) and kwargs[name].is_integer():
                kwargs[name] = int(kwargs[name])
        try:
            return cls(**kwargs)
        except TypeError as exc:
            raise ConfigError(str(exc)) from exc


def load_config(path: str | Path) -> ScenarioConfig:
    """Read a YAML (or JSON) key-value file whose keys are ScenarioConfig fields."""
    path = Path(path)
    try:
        data = yaml.safe_load(path.read_text())
    except (OSError, yaml.YAMLError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    if data is None:
        data = {}
    if not isinstance(data, dict):
        raise ConfigError(f"config {path} must be a key-value mapping")
    return ScenarioConfig.from_dict(data)


def save_config(cfg: ScenarioConfig, path: str | Path) -> None:
    Path(path).write_text(yaml.safe_dump(cfg.to_dict(), sort_keys=False))

