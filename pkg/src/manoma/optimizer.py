"""Alternating optimization of beamformers and antenna positions.

One iteration solves the beamforming SDP at fixed positions and then moves
each antenna in index order, every subproblem expanded at the latest exact
state. A candidate update is accepted only if the exact constraints hold and
the exact objective does not decrease, so recorded traces are monotone and
every recorded iterate is feasible.

The objective is the sum of assigned rates: each user's rate is the largest
rate that its own receiver and every SIC receiver can decode, i.e.
``min(R_{k->k}, R_{k->kbar})``.
"""

from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import noma
from .channel import ChannelGeometry, channel_matrix
from .config import ScenarioConfig
from .errors import ConfigError, DegenerateChannelError, InvalidInputError
from .noma import NomaRates, SlackPoint
from .subproblems import extract_beamformers, solve_beamforming, solve_position

log = logging.getLogger(__name__)

QOS_MARGIN = 1e-7
GAIN_FLOOR = 1e-6  # relative to noise power; expansion point for switched-off users
INACTIVE_POWER = 1e-12  # relative to P_s
RESTORE_ITERS = 30


# Initialization -------------------------------------------------------------------


def upa_positions(M: int, A: float, spacing: float = 0.5) -> np.ndarray:
    """Square-ish planar grid (ceil(sqrt M) columns) centred in ``[0, A]^2``."""
    cols = math.ceil(math.sqrt(M))
    rows = math.ceil(M / cols)
    width = (cols - 1) * spacing
    height = (rows - 1) * spacing
    if width > A + 1e-12 or height > A + 1e-12:
        raise ConfigError(f"{M} antennas at spacing {spacing} do not fit in a region of side {A}")
    x0 = 0.5 * (A - width)
    y0 = 0.5 * (A - height)
    idx = np.arange(M)
    return np.stack([x0 + (idx % cols) * spacing, y0 + (idx // cols) * spacing], axis=1)


def matched_filter(H, P_s: float) -> np.ndarray:
    """``sqrt(P_s / K) h_k / |h_k|`` for every user."""
    H = np.atleast_2d(H)
    norms = np.linalg.norm(H, axis=1)
    if np.any(norms == 0):
        raise DegenerateChannelError("a user has an all-zero channel")
    return np.sqrt(P_s / H.shape[0]) * H / norms[:, None]


def initialize(cfg: ScenarioConfig, geoms: Sequence[ChannelGeometry], order=None):
    """Initial ``(apv, bf, slack)``: centred UPA, equal-power matched filters.

    The grid spacing is ``max(1/2, D)`` so that the layout also respects the
    minimum distance.
    """
    apv = upa_positions(cfg.M, cfg.A, max(0.5, cfg.D))
    H = channel_matrix(apv, geoms)
    bf = matched_filter(H, cfg.power_mw)
    order = noma.heuristic_order(H) if order is None else tuple(order)
    slack = noma.slack_from_primal(H, bf, order, cfg.noise_mw, sic_consistent=True)
    return apv, bf, slack


# Exact feasibility ------------------------------------------------------------------


def min_pair_distance(apv) -> float:
    u = np.atleast_2d(apv)
    if u.shape[0] < 2:
        return math.inf
    diff = u[:, None, :] - u[None, :, :]
    dist = np.sqrt((diff**2).sum(axis=-1))
    return float(dist[np.triu_indices(u.shape[0], 1)].min())


def check_state(apv, bf, geoms, order, cfg: ScenarioConfig, box: bool = True) -> list[tuple]:
    """Exact constraint check of a primal state; returns a list of violations.

    Rates are assigned rates, so the SIC inequalities hold by construction and
    the QoS check is made against them.
    """
    tol = cfg.feas_tol
    out = []
    power = float(np.sum(np.abs(bf) ** 2))
    if power > cfg.power_mw * (1 + tol) + tol:
        out.append(("power", power - cfg.power_mw))
    u = np.atleast_2d(apv)
    if box and (np.any(u < -tol) or np.any(u > cfg.A + tol)):
        out.append(("box", float(max(-u.min(), u.max() - cfg.A))))
    if u.shape[0] > 1:
        dmin = min_pair_distance(u)
        if dmin < cfg.D - tol:
            out.append(("distance", cfg.D - dmin))
    r = noma.rates(channel_matrix(u, geoms), bf, order, cfg.noise_mw).assigned()
    rep = noma.sic_feasible(r, order, cfg.R_min, tol)
    out.extend(rep.violations)
    return out


# Records ----------------------------------------------------------------------------


@dataclass
class IterationRecord:
    iteration: int
    objective: float
    rates: np.ndarray
    apv: np.ndarray
    seconds: float
    bf: np.ndarray | None = None
    slack: SlackPoint | None = None
    diagnostics: dict | None = None


@dataclass
class SolveRecord:
    """Outcome of one alternating-optimization run for a fixed decoding order."""

    objective_trace: list[float]
    final_rates: NomaRates | None
    final_apv: np.ndarray
    final_bf: np.ndarray
    order: tuple
    iterations: int
    status: str
    iteration_seconds: list[float] = field(default_factory=list)
    initial_objective: float = float("nan")
    events: list[str] = field(default_factory=list)
    defects: list[float] = field(default_factory=list)
    history: list[IterationRecord] = field(default_factory=list)
    feasibility_violations: list[tuple] = field(default_factory=list)
    max_sic_excess: float = float("-inf")
    solves: int = 0

    @property
    def objective(self) -> float:
        return self.objective_trace[-1] if self.objective_trace else float("nan")

    @property
    def feasible(self) -> bool:
        return self.status != "infeasible"


# The algorithm ----------------------------------------------------------------------


class _State:
    """Mutable current iterate of one run with its exact objective."""

    def __init__(self, apv, bf, geoms, order, cfg):
        self.apv = np.array(apv, dtype=float)
        self.bf = np.array(bf, dtype=complex)
        self.geoms = geoms
        self.order = order
        self.cfg = cfg
        self.refresh()

    def refresh(self):
        self.H = channel_matrix(self.apv, self.geoms)
        self.rates = noma.rates(self.H, self.bf, self.order, self.cfg.noise_mw)
        self.assigned = self.rates.effective
        self.objective = float(self.assigned.sum())


def _score(geoms, apv, order, cfg, rmin_floor):
    H = channel_matrix(apv, geoms)

    def score(bf):
        eff = noma.rates(H, bf, order, cfg.noise_mw).effective
        if np.any(eff < rmin_floor - cfg.feas_tol):
            return -math.inf
        return float(eff.sum())

    return score


def _cap_power(bf, P_s):
    total = float(np.sum(np.abs(bf) ** 2))
    if total > P_s:
        bf = bf * math.sqrt(P_s / total)
    return bf


def _expansion_slack(state: _State) -> SlackPoint:
    cfg = state.cfg
    return noma.slack_from_primal(
        state.H, state.bf, state.order, cfg.noise_mw, sic_consistent=True, gain_floor=GAIN_FLOOR * cfg.noise_mw
    )


def _restore(state: _State, record: SolveRecord) -> bool:
    """Raise every assigned rate to at least ``R_min`` by max-min SDP steps."""
    cfg = state.cfg
    target = cfg.R_min + QOS_MARGIN
    rng = np.random.default_rng(0)
    for it in range(RESTORE_ITERS):
        worst = float(np.min(state.assigned - target))
        if worst >= 0:
            return True
        try:
            slack = _expansion_slack(state)
        except DegenerateChannelError as exc:
            record.events.append(f"restore {it}: {exc}")
            return False
        sol = solve_beamforming(state.H, state.order, slack, cfg.noise_mw, cfg.power_mw, target,
                                tol=cfg.solver_tol, restore=True)
        record.solves += 1
        if sol.status != "optimal":
            record.events.append(f"restore {it}: sdp {sol.status}")
            return False

        def score(bf, H=state.H):
            return float(np.min(noma.rates(H, bf, state.order, cfg.noise_mw).effective - target))

        ext = extract_beamformers(sol, score=score, rng=rng)
        bf = _cap_power(ext.W, cfg.power_mw)
        new = score(bf)
        if new <= worst + 1e-9:
            record.events.append(f"restore {it}: stalled at min rate gap {worst:.3g}")
            return bool(worst >= -QOS_MARGIN)
        state.bf = bf
        state.refresh()
    return bool(np.min(state.assigned - cfg.R_min) >= 0)


def _beamforming_step(state: _State, record: SolveRecord, rng) -> bool:
    cfg = state.cfg
    try:
        slack = _expansion_slack(state)
    except DegenerateChannelError as exc:
        record.events.append(f"beamforming skipped: {exc}")
        return False
    rmin = np.minimum(cfg.R_min + QOS_MARGIN, state.assigned)
    sol = solve_beamforming(state.H, state.order, slack, cfg.noise_mw, cfg.power_mw, rmin, tol=cfg.solver_tol)
    record.solves += 1
    if sol.status != "optimal":
        record.events.append(f"beamforming sdp {sol.status}; kept previous beamformers")
        return False
    ext = extract_beamformers(sol, score=_score(state.geoms, state.apv, state.order, cfg, cfg.R_min), rng=rng)
    record.defects.extend(ext.defects.tolist())
    if ext.randomized:
        record.events.append("gaussian randomization used")
    bf = _cap_power(ext.W, cfg.power_mw)
    cand = _State(state.apv, bf, state.geoms, state.order, cfg)
    if check_state(cand.apv, cand.bf, state.geoms, state.order, cfg) or cand.objective < state.objective:
        record.events.append("beamforming update rejected")
        return False
    state.bf, state.H, state.rates, state.assigned, state.objective = (
        cand.bf, cand.H, cand.rates, cand.assigned, cand.objective)
    return True


def _active_users(state: _State) -> list[int]:
    p = np.sum(np.abs(state.bf) ** 2, axis=1)
    return [k for k in range(p.size) if p[k] > INACTIVE_POWER * state.cfg.power_mw]


def _position_step(state: _State, m: int, record: SolveRecord, diagnostics=None) -> bool:
    cfg = state.cfg
    active = _active_users(state)
    if not active:
        return False
    # Switched-off users neither receive nor interfere; drop them from the subproblem.
    order = tuple(active.index(k) for k in state.order if k in active)
    geoms = [state.geoms[k] for k in active]
    W = state.bf[active]
    rmin = np.minimum(cfg.R_min + QOS_MARGIN, state.assigned[active])
    try:
        sol = solve_position(m, state.apv, W, geoms, order, cfg.noise_mw, cfg.A, cfg.D, rmin, tol=cfg.solver_tol)
    except DegenerateChannelError as exc:
        record.events.append(f"position {m} skipped: {exc}")
        return False
    record.solves += 1
    if diagnostics is not None:
        diagnostics[m] = {"status": sol.status, "delta": sol.diagnostics.get("delta"),
                          "grad": sol.diagnostics.get("grad")}
    if sol.status != "optimal":
        record.events.append(f"position {m}: {sol.status}; kept centre")
    if not sol.moved:
        return False
    centre = state.apv[m].copy()
    step = sol.u - centre
    for _ in range(30):
        apv = state.apv.copy()
        apv[m] = np.clip(centre + step, 0.0, cfg.A)
        cand = _State(apv, state.bf, state.geoms, state.order, cfg)
        if not check_state(apv, state.bf, state.geoms, state.order, cfg) and cand.objective >= state.objective:
            state.apv, state.H, state.rates, state.assigned, state.objective = (
                cand.apv, cand.H, cand.rates, cand.assigned, cand.objective)
            return True
        if min_pair_distance(apv) >= cfg.D - cfg.feas_tol:
            break
        step = 0.5 * step
        record.events.append(f"position {m}: distance repair")
    record.events.append(f"position {m} update rejected")
    return False


def run(
    cfg: ScenarioConfig,
    geoms: Sequence[ChannelGeometry],
    order=None,
    move_antennas: bool = True,
    keep_history: bool = False,
    init=None,
) -> SolveRecord:
    """Alternating optimization for one decoding order.

    ``order`` defaults to the heuristic order at the initial positions.
    ``move_antennas=False`` freezes the array at its initial layout.
    ``init`` optionally overrides ``(apv, bf)``.
    """
    if len(geoms) != cfg.K:
        raise InvalidInputError(f"expected {cfg.K} user geometries, got {len(geoms)}")
    if init is None:
        apv, bf, _ = initialize(cfg, geoms, order)
    else:
        apv, bf = init
    H0 = channel_matrix(apv, geoms)
    order = noma.heuristic_order(H0) if order is None else tuple(int(k) for k in order)
    noma.decoding_rank(order)
    state = _State(apv, bf, geoms, order, cfg)
    record = SolveRecord([], None, state.apv.copy(), state.bf.copy(), order, 0, "max-iter")
    rng = np.random.default_rng(0)

    if check_state(state.apv, state.bf, geoms, order, cfg):
        record.events.append("initial point violates QoS; running restoration")
        if not _restore(state, record) or check_state(state.apv, state.bf, geoms, order, cfg):
            record.status = "infeasible"
            record.final_rates = state.rates
            record.final_apv, record.final_bf = state.apv.copy(), state.bf.copy()
            record.feasibility_violations = check_state(state.apv, state.bf, geoms, order, cfg)
            return record

    record.initial_objective = state.objective
    record.objective_trace.append(state.objective)
    if keep_history:
        record.history.append(IterationRecord(0, state.objective, state.assigned.copy(), state.apv.copy(), 0.0,
                                              state.bf.copy(), _expansion_slack(state)))

    for t in range(1, cfg.T_max + 1):
        tic = time.perf_counter()
        prev = state.objective
        _beamforming_step(state, record, rng)
        diagnostics = {} if keep_history else None
        if move_antennas:
            for m in range(cfg.M):
                _position_step(state, m, record, diagnostics)
        elapsed = time.perf_counter() - tic
        record.iterations = t
        record.iteration_seconds.append(elapsed)
        record.objective_trace.append(state.objective)
        record.feasibility_violations.extend(check_state(state.apv, state.bf, geoms, order, cfg))
        if keep_history:
            record.history.append(IterationRecord(t, state.objective, state.assigned.copy(), state.apv.copy(),
                                                  elapsed, state.bf.copy(), _expansion_slack(state), diagnostics))
        if (state.objective - prev) / max(prev, 1e-12) < cfg.eps:
            record.status = "converged"
            break

    record.final_rates = state.rates.assigned()
    record.final_apv = state.apv.copy()
    record.final_bf = state.bf.copy()
    record.max_sic_excess = state.rates.max_sic_excess()
    return record


def candidate_orders(cfg: ScenarioConfig, H) -> list[tuple]:
    policy = cfg.order_policy
    if policy == "auto":
        policy = "enumerate" if cfg.K <= 3 else "heuristic"
    if policy == "enumerate":
        return noma.enumerate_orders(cfg.K, cfg.enum_cap)
    return [noma.heuristic_order(H)]


def run_best_order(cfg: ScenarioConfig, geoms: Sequence[ChannelGeometry], move_antennas: bool = True,
                   keep_history: bool = False) -> SolveRecord:
    """Run every candidate decoding order and keep the best feasible record.

    Objectives within 1e-6 count as ties, resolved towards the
    lexicographically smallest order. If no order is feasible the record of
    the first order is returned with status ``infeasible``.
    """
    apv, bf, _ = initialize(cfg, geoms, order=tuple(range(cfg.K)))
    best = None
    first = None
    for order in sorted(candidate_orders(cfg, channel_matrix(apv, geoms))):
        rec = run(cfg, geoms, order, move_antennas=move_antennas, keep_history=keep_history, init=(apv, bf))
        first = first or rec
        if not rec.feasible:
            continue
        if best is None or rec.objective > best.objective + 1e-6:
            best = rec
    return best if best is not None else first
