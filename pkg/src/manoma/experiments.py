"""Seeded Monte-Carlo experiments over channel realizations.

Every scheme and sweep point of one experiment sees the same channel draws
(trial ``t`` always uses the streams derived from ``(seed, t, user)``), so
comparisons are paired. Trials run in a process pool; results are reduced in
trial order, which makes aggregates independent of the worker count.

Infeasible trials (minimum rates unreachable) and trials that raised are
excluded from means and counted in the report metadata.
"""

from __future__ import annotations

import csv
import json
import logging
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Iterable, Sequence

import numpy as np

from . import noma
from .baselines import SCHEMES, fpa_noma, oma_fpa
from .channel import ChannelGeometry, channel_matrix, sample_geometry
from .config import ScenarioConfig
from .errors import ManomaError
from .optimizer import SolveRecord, min_pair_distance, run_best_order

log = logging.getLogger(__name__)


# Per-trial work ---------------------------------------------------------------------


def summarize_record(rec: SolveRecord, cfg: ScenarioConfig) -> dict[str, Any]:
    defects = np.asarray(rec.defects, dtype=float)
    return {
        "status": rec.status,
        "sum_rate": rec.objective if rec.feasible else None,
        "order": list(rec.order),
        "iterations": rec.iterations,
        "trace": list(rec.objective_trace),
        "per_user_rates": rec.final_rates.own.tolist() if rec.final_rates is not None else None,
        "violations": [list(v) for v in rec.feasibility_violations],
        "min_distance": min_pair_distance(rec.final_apv) if cfg.M > 1 else None,
        "max_defect": float(defects.max()) if defects.size else 0.0,
        "median_defect": float(np.median(defects)) if defects.size else 0.0,
        "defects_over_tol": int(np.sum(defects > 1e-4)),
        "n_defects": int(defects.size),
        "max_sic_excess": rec.max_sic_excess,
        "solves": rec.solves,
        "seconds": float(sum(rec.iteration_seconds)),
        "events": len(rec.events),
    }


def evaluate_trial(cfg_dict: dict, trial: int, scheme: str) -> dict[str, Any]:
    """Run one scheme on the channel draw of ``trial``; returns a JSON-ready summary."""
    cfg = ScenarioConfig.from_dict(cfg_dict)
    try:
        geoms = sample_geometry(cfg, trial)
        if scheme == "MA-NOMA":
            return summarize_record(run_best_order(cfg, geoms), cfg)
        if scheme == "FPA-NOMA":
            return summarize_record(fpa_noma(cfg, geoms).details["record"], cfg)
        if scheme == "OMA-FPA":
            res = oma_fpa(cfg, geoms)
            return {"status": "ok", "sum_rate": res.sum_rate, "per_user_rates": res.per_user_rates.tolist()}
        raise ValueError(f"unknown scheme {scheme!r}")
    except (ManomaError, ArithmeticError, np.linalg.LinAlgError) as exc:
        log.warning("trial %d, %s failed: %s", trial, scheme, exc)
        return {"status": "error", "sum_rate": None, "error": str(exc)}


def _job(args):
    return evaluate_trial(*args)


def _job_key(job) -> tuple:
    # the trial count does not change what one trial computes
    cfg_dict, trial, scheme = job
    return (ScenarioConfig.from_dict({**cfg_dict, "trials": 1}).config_hash(), trial, scheme)


def run_trials(jobs: list[tuple], threads: int = 1, cache: dict | None = None) -> list[dict]:
    """Evaluate ``(cfg_dict, trial, scheme)`` jobs; results keep the job order.

    ``cache`` (optional, mutated) memoizes results by config hash, trial and
    scheme so that experiments sharing a configuration reuse runs.
    """
    cache = {} if cache is None else cache
    keys = [_job_key(j) for j in jobs]
    todo = [(k, j) for k, j in zip(keys, jobs) if k not in cache]
    todo = list(dict((k, j) for k, j in todo).items())
    if threads <= 1 or len(todo) <= 1:
        results = [_job(j) for _, j in todo]
    else:
        with ProcessPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(_job, [j for _, j in todo], chunksize=1))
    for (k, _), res in zip(todo, results):
        cache[k] = res
    return [cache[k] for k in keys]


def _group(jobs, results) -> list[dict]:
    """Collect per-scheme results into one record per (sweep point, trial)."""
    grouped: dict[tuple, dict] = {}
    for (cfg_dict, trial, scheme), res in zip(jobs, results):
        key = (json.dumps(cfg_dict, sort_keys=True), trial)
        entry = grouped.setdefault(key, {"trial": trial, "schemes": {}})
        entry["schemes"][scheme] = res
    return list(grouped.values())


# Aggregation ------------------------------------------------------------------------


def mean_stderr(values: Iterable[float]) -> tuple[float, float, int]:
    v = np.asarray([x for x in values if x is not None and math.isfinite(x)], dtype=float)
    if v.size == 0:
        return float("nan"), float("nan"), 0
    se = float(v.std(ddof=1) / math.sqrt(v.size)) if v.size > 1 else 0.0
    return float(v.mean()), se, int(v.size)


def _ok(res: dict) -> bool:
    return res.get("status") not in ("infeasible", "error") and res.get("sum_rate") is not None


@dataclass
class ExperimentReport:
    name: str
    columns: list[str]
    rows: list[dict]
    trials: list[dict] = field(default_factory=list)
    metadata: dict = field(default_factory=dict)

    def write(self, out_dir: str | Path) -> list[Path]:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        csv_path = out / f"{self.name}.csv"
        with csv_path.open("w", newline="") as fh:
            w = csv.DictWriter(fh, fieldnames=self.columns)
            w.writeheader()
            for row in self.rows:
                w.writerow({c: row[c] for c in self.columns})
        json_path = out / f"{self.name}.json"
        json_path.write_text(dumps({"metadata": self.metadata, "trials": self.trials}))
        return [csv_path, json_path]

    @property
    def systemic_failure(self) -> bool:
        """True when no trial of any sweep point produced a usable result."""
        return bool(self.trials) and not any(
            _ok(res) for t in self.trials for res in t.get("schemes", {}).values()
        )


def _metadata(cfg: ScenarioConfig, outcomes: list[dict], wall: float, threads: int, **extra) -> dict:
    counts: dict[str, dict[str, int]] = {}
    solves = 0
    defects_over, defects_total = 0, 0
    for t in outcomes:
        for scheme, res in t.get("schemes", {}).items():
            c = counts.setdefault(scheme, {"ok": 0, "infeasible": 0, "error": 0})
            status = res.get("status")
            c["infeasible" if status == "infeasible" else "error" if status == "error" else "ok"] += 1
            solves += res.get("solves", 0)
            defects_over += res.get("defects_over_tol", 0)
            defects_total += res.get("n_defects", 0)
    return {
        "config": cfg.to_dict(),
        "config_hash": cfg.config_hash(),
        "seed": cfg.seed,
        "trials": cfg.trials,
        "threads": threads,
        "wall_time_s": wall,
        "status_counts": counts,
        "solver": {"conic_solves": solves, "rank_defects_over_1e-4": defects_over, "beamformers": defects_total},
        **extra,
    }


# Commands ---------------------------------------------------------------------------


def cmd_convergence(cfg: ScenarioConfig, Ms: Sequence[int] = (2, 3, 4), threads: int = 1,
                    cache: dict | None = None) -> ExperimentReport:
    """Mean objective versus iteration for each array size."""
    tic = time.perf_counter()
    jobs, keys = [], []
    for M in Ms:
        c = cfg.replace(M=int(M))
        for t in range(cfg.trials):
            jobs.append((c.to_dict(), t, "MA-NOMA"))
            keys.append(int(M))
    results = run_trials(jobs, threads, cache)
    outcomes = _group(jobs, results)
    rows, per_M = [], {}
    for M in Ms:
        res = [r for r, k in zip(results, keys) if k == M]
        good = [r for r in res if _ok(r)]
        traces = [r["trace"] for r in good]
        length = max((len(tr) for tr in traces), default=0)
        padded = np.array([tr + [tr[-1]] * (length - len(tr)) for tr in traces]) if traces else np.empty((0, 0))
        for it in range(length):
            mean, se, _ = mean_stderr(padded[:, it])
            rows.append({"M": int(M), "iteration": it, "mean_sum_rate": mean, "stderr": se})
        iters = [r["iterations"] for r in good]
        per_M[int(M)] = {
            "n_trials": len(good),
            "converged_fraction": float(np.mean([r["status"] == "converged" for r in good])) if good else None,
            "median_iterations": float(np.median(iters)) if iters else None,
            "mean_final_sum_rate": mean_stderr(tr[-1] for tr in traces)[0] if traces else None,
        }
    for o, k in zip(outcomes, keys):  # one scheme, so one job per outcome
        o["M"] = k
    meta = _metadata(cfg, outcomes, time.perf_counter() - tic, threads, per_M=per_M)
    return ExperimentReport("convergence", ["M", "iteration", "mean_sum_rate", "stderr"], rows, outcomes, meta)


def _sweep(cfg, points, point_cols, name, threads, schemes=SCHEMES, cache=None):
    tic = time.perf_counter()
    jobs, keys = [], []
    for point in points:
        c = cfg.replace(**point["changes"])
        for t in range(cfg.trials):
            for scheme in schemes:
                jobs.append((c.to_dict(), t, scheme))
                keys.append((point["key"], scheme))
    results = run_trials(jobs, threads, cache)
    rows = []
    for point in points:
        for scheme in schemes:
            group = [r for r, k in zip(results, keys) if k == (point["key"], scheme)]
            mean, se, n = mean_stderr(r["sum_rate"] for r in group if _ok(r))
            rows.append({**point["key_dict"], "scheme": scheme, "mean_sum_rate": mean, "stderr": se, "n_trials": n})
    outcomes = _group(jobs, results)
    point_of = {}
    for (cfg_dict, t, _), k in zip(jobs, keys):
        point_of[(json.dumps(cfg_dict, sort_keys=True), t)] = list(k[0])
    for o, key in zip(outcomes, point_of.values()):
        o["point"] = key
    meta = _metadata(cfg, outcomes, time.perf_counter() - tic, threads)
    return ExperimentReport(name, point_cols + ["scheme", "mean_sum_rate", "stderr", "n_trials"], rows, outcomes, meta)


def cmd_sweep_power(cfg: ScenarioConfig, powers: Sequence[float], threads: int = 1,
                    schemes: Sequence[str] = SCHEMES, cache: dict | None = None) -> ExperimentReport:
    if not powers:
        raise ValueError("powers must be non-empty")
    points = [{"changes": {"P_s": float(p)}, "key": (float(p),), "key_dict": {"P_s_dbm": float(p)}} for p in powers]
    return _sweep(cfg, points, ["P_s_dbm"], "sweep_power", threads, schemes, cache)


def cmd_sweep_antennas(cfg: ScenarioConfig, Ms: Sequence[int], Ks: Sequence[int], threads: int = 1,
                       schemes: Sequence[str] = SCHEMES, cache: dict | None = None) -> ExperimentReport:
    if not Ms or not Ks:
        raise ValueError("Ms and Ks must be non-empty")
    points = [
        {"changes": {"M": int(M), "K": int(K)}, "key": (int(M), int(K)), "key_dict": {"M": int(M), "K": int(K)}}
        for K in Ks for M in Ms
    ]
    return _sweep(cfg, points, ["M", "K"], "sweep_antennas", threads, schemes, cache)


def cmd_single(cfg: ScenarioConfig, trial: int = 0) -> dict[str, Any]:
    """Full deterministic dump of one trial (no wall-clock fields)."""
    geoms = sample_geometry(cfg, trial)
    rec = run_best_order(cfg, geoms, keep_history=True)
    fpa = fpa_noma(cfg, geoms)
    oma = oma_fpa(cfg, geoms)
    hist = rec.history[1:]
    dump = {
        "config": cfg.to_dict(),
        "config_hash": cfg.config_hash(),
        "trial": trial,
        "geometry": [g.to_dict() for g in geoms],
        "order": list(rec.order),
        "status": rec.status,
        "iterations": rec.iterations,
        "objective_trace": rec.objective_trace,
        "initial_apv": rec.history[0].apv if rec.history else None,
        "initial_bf": rec.history[0].bf if rec.history else None,
        "positions": [[h.apv[m] for h in hist] for m in range(cfg.M)],
        "beamformers": [h.bf for h in hist],
        "rates": [h.rates for h in hist],
        "slack": [{"alpha": h.slack.alpha, "beta": h.slack.beta} for h in hist if h.slack is not None],
        "surrogates": [h.diagnostics for h in hist],
        "final": {
            "apv": rec.final_apv,
            "bf": rec.final_bf,
            "sum_rate": rec.objective,
            "rates": rec.final_rates.own if rec.final_rates is not None else None,
        },
        "violations": rec.feasibility_violations,
        "events": rec.events,
        "baselines": {"FPA-NOMA": fpa.sum_rate, "OMA-FPA": oma.sum_rate},
    }
    return dump


def rates_from_dump(dump: dict) -> float:
    """Recompute the final sum rate from a (decoded) single-trial dump."""
    cfg = ScenarioConfig.from_dict(dump["config"])
    geoms = [ChannelGeometry.from_dict(g) for g in dump["geometry"]]
    apv = np.asarray(dump["final"]["apv"], dtype=float)
    bf = decode_complex(dump["final"]["bf"])
    H = channel_matrix(apv, geoms)
    return noma.rates(H, bf, dump["order"], cfg.noise_mw).effective_sum


# JSON -------------------------------------------------------------------------------


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        if np.iscomplexobj(obj):
            return {"re": _jsonable(obj.real.tolist()), "im": _jsonable(obj.imag.tolist())}
        return _jsonable(obj.tolist())
    if isinstance(obj, (complex, np.complexfloating)):
        return {"re": float(obj.real), "im": float(obj.imag)}
    if isinstance(obj, (np.floating, float)):
        x = float(obj)
        return x if math.isfinite(x) else ("inf" if x > 0 else "-inf" if x < 0 else "nan")
    if isinstance(obj, np.integer):
        return int(obj)
    return obj


def dumps(obj) -> str:
    return json.dumps(_jsonable(obj), indent=1, sort_keys=True, allow_nan=False)


def decode_complex(obj) -> np.ndarray:
    return np.asarray(obj["re"], dtype=float) + 1j * np.asarray(obj["im"], dtype=float)
