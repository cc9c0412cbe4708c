"""Outer alternating loops and benchmark variants.

``run_aobo`` alternates exact subproblem solutions (SDR beamforming, binary
phase programs, closed-form relay power); ``run_lcaobs`` swaps the two
exponential phase programs for the penalty iteration and the successive
refinement.  The first iteration defers weak-user coverage to the relay
stage (the broadcast-side residual constraint is dropped until a relay
power has been computed); afterwards the residual is derived from the
previous relay power, which keeps every recorded objective non-increasing.
Recorded objectives may only rise on iterations where the penalty
projection broke a constraint; those indices are flagged.
"""

from __future__ import annotations

import time
import zlib
from dataclasses import dataclass, field

import numpy as np

from ris_cnoma.channel import ChannelSet, Scenario
from ris_cnoma.ct_stage import (build_ct_quadratics, relay_power,
                                solve_ct_phases_optimal,
                                solve_ct_phases_refinement)
from ris_cnoma.dt_stage import (build_dt_quadratics, penalty_phase_solve,
                                extract_phases, solve_active_beamforming,
                                solve_dt_phases_optimal,
                                solve_dt_phases_penalty, _extract_rank_one)
from ris_cnoma.errors import StageInfeasible, UncoverableError
from ris_cnoma.phase_program import SizeGuardError
from ris_cnoma.sdp import SdpConstraint, SdpProblem, solve_sdp
from ris_cnoma.signal_model import (JointSolution, PhaseConfig, RateReport,
                                    check_feasibility, phase_set, sinr_floor)

VARIANTS = ("aobo", "lcaobs", "conti-ris-cnoma", "random-ris-cnoma",
            "dt-lcaobs", "ct-lcaobs", "cnoma-noris", "ris-noma")

MAX_RESTARTS = 3


@dataclass
class AlgorithmConfig:
    variant: str = "lcaobs"
    max_outer_iters: int = 20
    rel_tol: float = 1e-4
    sdp_tol: float = 1e-7
    guard: bool = True

    def __post_init__(self):
        if self.rel_tol <= 0 or self.sdp_tol <= 0:
            raise ValueError("tolerances must be positive")
        if self.variant not in VARIANTS:
            raise ValueError(f"unknown variant {self.variant!r}; "
                             f"valid: {', '.join(VARIANTS)}")


@dataclass
class RunResult:
    solution: JointSolution | None
    power_trace: list
    trace_flags: list
    iterations: int
    status: str
    rank_fallbacks: int
    restarts: int
    wall_time: float
    variant: str
    report: RateReport | None = field(default=None)

    @property
    def total_power(self) -> float:
        return self.power_trace[-1] if self.power_trace else float("nan")


def _restart_rng(scenario: Scenario, variant: str) -> np.random.Generator:
    key = zlib.crc32(variant.encode("ascii"))
    ss = np.random.SeedSequence(entropy=scenario.rng_seed, spawn_key=(key, 0xA5))
    return np.random.Generator(np.random.Philox(ss))


def run_aobo(channels: ChannelSet, scenario: Scenario,
             config: AlgorithmConfig | None = None) -> RunResult:
    cfg = config or AlgorithmConfig(variant="aobo")
    return _run_cnoma(channels, scenario, cfg, "aobo", dt_mode="ilp",
                      ct_mode="ilp", continuous=False)


def run_lcaobs(channels: ChannelSet, scenario: Scenario,
               config: AlgorithmConfig | None = None) -> RunResult:
    cfg = config or AlgorithmConfig(variant="lcaobs")
    return _run_cnoma(channels, scenario, cfg, "lcaobs", dt_mode="penalty",
                      ct_mode="refine", continuous=False)


def run_baseline(variant: str, channels: ChannelSet, scenario: Scenario,
                 config: AlgorithmConfig | None = None) -> RunResult:
    cfg = config or AlgorithmConfig(variant=variant)
    if variant == "aobo":
        return run_aobo(channels, scenario, cfg)
    if variant == "lcaobs":
        return run_lcaobs(channels, scenario, cfg)
    if variant == "conti-ris-cnoma":
        return _run_cnoma(channels, scenario, cfg, variant, dt_mode="penalty",
                          ct_mode="refine", continuous=True)
    if variant == "random-ris-cnoma":
        return _run_cnoma(channels, scenario, cfg, variant, dt_mode="random",
                          ct_mode="random", continuous=False)
    if variant == "dt-lcaobs":
        return _run_cnoma(channels, scenario, cfg, variant, dt_mode="penalty",
                          ct_mode="random", continuous=False)
    if variant == "ct-lcaobs":
        return _run_cnoma(channels, scenario, cfg, variant, dt_mode="random",
                          ct_mode="refine", continuous=False)
    if variant == "cnoma-noris":
        return _run_cnoma(channels.without_ris(), scenario, cfg, variant,
                          dt_mode="none", ct_mode="none", continuous=False)
    if variant == "ris-noma":
        return _run_ris_noma(channels, scenario, cfg)
    raise ValueError(f"unknown variant {variant!r}; valid: {', '.join(VARIANTS)}")


def _run_cnoma(channels, scenario, cfg, variant, dt_mode, ct_mode, continuous):
    t_start = time.perf_counter()
    rng = _restart_rng(scenario, variant)
    omega = phase_set(scenario.bits)
    l_ris = scenario.l_ris

    def fresh_phases(randomize_dt, randomize_ct):
        th1 = rng.choice(omega, l_ris) if randomize_dt else np.zeros(l_ris)
        th2 = rng.choice(omega, l_ris) if randomize_ct else np.zeros(l_ris)
        return th1, th2

    theta1, theta2 = fresh_phases(dt_mode == "random", ct_mode == "random")
    p_s_state = None  # relay-deferred first iteration
    trace, flags = [], []
    snapshot = None
    restarts = fallbacks = 0
    status = "max_iters"
    t = 0
    while t < cfg.max_outer_iters:
        t += 1
        try:
            phases = PhaseConfig(theta1, theta2, scenario.bits, continuous)
            bf = solve_active_beamforming(channels, phases, p_s_state,
                                          scenario)
            fallbacks += bf.rank_fallback
            flagged = False
            if dt_mode == "ilp":
                quad = build_dt_quadratics(channels, bf.lifted_ws, bf.lifted_ww,
                                           p_s_state, theta2, scenario)
                res = solve_dt_phases_optimal(quad, scenario, guard=cfg.guard)
                if not _acceptable(res, scenario):
                    raise StageInfeasible("dt phases")
                theta1 = res.theta
            elif dt_mode == "penalty":
                res = solve_dt_phases_penalty(channels, bf.lifted_ws,
                                              bf.lifted_ww, p_s_state, theta2,
                                              scenario, continuous=continuous,
                                              sdp_tol=cfg.sdp_tol,
                                              theta1_incumbent=theta1)
                theta1 = res.theta
                flagged = res.violated
                phases = PhaseConfig(theta1, theta2, scenario.bits, continuous)
                bf = solve_active_beamforming(channels, phases, p_s_state,
                                              scenario)
                fallbacks += bf.rank_fallback

            phases = PhaseConfig(theta1, theta2, scenario.bits, continuous)
            p_s = relay_power(channels, phases, bf.w_s, bf.w_w, scenario)
            if p_s > 0.0 and ct_mode in ("ilp", "refine"):
                ct = build_ct_quadratics(channels, bf.w_s, bf.w_w, theta1,
                                         scenario)
                if ct_mode == "ilp":
                    res = solve_ct_phases_optimal(ct, p_s, scenario,
                                                  guard=cfg.guard)
                    if not _acceptable(res, scenario):
                        raise StageInfeasible("ct phases")
                    theta2 = res.theta
                else:
                    res = solve_ct_phases_refinement(ct, theta2, scenario,
                                                     continuous=continuous)
                    theta2 = res.theta
            p_s_state = p_s
            obj = bf.objective + p_s
        except (StageInfeasible, SizeGuardError, UncoverableError) as exc:
            if isinstance(exc, SizeGuardError):
                raise
            restarts += 1
            if restarts > MAX_RESTARTS:
                return RunResult(None, trace, flags, t, "infeasible",
                                 fallbacks, restarts,
                                 time.perf_counter() - t_start, variant)
            theta1, theta2 = fresh_phases(True, True)
            p_s_state = None
            trace, flags, snapshot = [], [], None
            t = 0
            continue

        if trace and not flagged and obj > trace[-1]:
            # numerically stalled alternation: revert and stop
            bf, theta1, theta2, p_s = snapshot
            status = "converged"
            break
        snapshot = (bf, theta1.copy(), theta2.copy(), p_s)
        trace.append(obj)
        flags.append(flagged)
        if len(trace) >= 2 and abs(trace[-2] - trace[-1]) \
                <= cfg.rel_tol * max(abs(trace[-2]), 1e-300):
            status = "converged"
            break

    if snapshot is None:
        return RunResult(None, trace, flags, t, "infeasible", fallbacks,
                         restarts, time.perf_counter() - t_start, variant)
    bf, theta1, theta2, p_s = snapshot
    phases = PhaseConfig(theta1, theta2, scenario.bits, continuous)
    solution = JointSolution(bf.w_s, bf.w_w, p_s, phases,
                             lifted_ws=bf.lifted_ws, lifted_ww=bf.lifted_ww)
    report = check_feasibility(channels, solution, scenario)
    if status == "converged" and not report.feasible:
        status = "max_iters"
    return RunResult(solution, trace, flags, len(trace), status, fallbacks,
                     restarts, time.perf_counter() - t_start, variant, report)


def _acceptable(res, scenario) -> bool:
    """Accept exact phase steps whose worst slack is negligible vs noise."""
    if res.feasible:
        return True
    tol = 1e-6 * min(scenario.sigma2_s, scenario.sigma2_w)
    return np.isfinite(res.slack) and res.slack >= -tol


def _run_ris_noma(channels, scenario, cfg):
    """Non-cooperative single-stage comparator (reconstructed baseline).

    One full-duration stage: no relaying, no 1/2 rate pre-log.  The strong
    user decodes with interference-free SINR after SIC; the weak user
    treats the strong user's signal as noise.  Solved by alternating the
    two-constraint SDR with penalty phase steps on the single phase vector.
    """
    t_start = time.perf_counter()
    variant = "ris-noma"
    rng = _restart_rng(scenario, variant)
    r_s = sinr_floor(scenario.qos_bits[0], prelog=1.0)
    r_w = sinr_floor(scenario.qos_bits[1], prelog=1.0)
    s2s, s2w = scenario.sigma2_s, scenario.sigma2_w
    omega = phase_set(scenario.bits)
    l_ris = scenario.l_ris
    n = scenario.n_t

    theta1 = np.zeros(l_ris)
    trace, flags = [], []
    snapshot = None
    restarts = fallbacks = 0
    status = "max_iters"
    t = 0
    while t < cfg.max_outer_iters:
        t += 1
        try:
            hb_s = (channels.g_rs.conj() * np.exp(1j * theta1)) @ channels.f_br \
                + channels.h_bs.conj()
            hb_w = (channels.g_rw.conj() * np.exp(1j * theta1)) @ channels.f_br \
                + channels.h_bw.conj()
            hh_s = np.outer(hb_s.conj(), hb_s)
            hh_w = np.outer(hb_w.conj(), hb_w)
            cons = [
                SdpConstraint({0: hh_s}, ">=", r_s * s2s),
                SdpConstraint({0: -r_w * hh_w, 1: hh_w}, ">=", r_w * s2w),
            ]
            sol = solve_sdp(SdpProblem([n, n], [np.eye(n), np.eye(n)], cons),
                            tol=cfg.sdp_tol)
            if sol.status == "infeasible":
                raise StageInfeasible("ris-noma beamforming")
            w_s, fb_s, _ = _extract_rank_one(sol.blocks[0])
            w_w, fb_w, _ = _extract_rank_one(sol.blocks[1])
            fallbacks += fb_s or fb_w
            w_s, w_w = _rescale_ris_noma(w_s, w_w, hb_s, hb_w, r_s, r_w,
                                         s2s, s2w)
            lifted_ws = np.outer(w_s, w_s.conj())
            lifted_ww = np.outer(w_w, w_w.conj())

            e_s = np.vstack([np.diag(channels.g_rs.conj()) @ channels.f_br,
                             channels.h_bs.conj()])
            e_w = np.vstack([np.diag(channels.g_rw.conj()) @ channels.f_br,
                             channels.h_bw.conj()])
            b_mats = [e_s @ lifted_ws @ e_s.conj().T,
                      e_w @ (lifted_ww - r_w * lifted_ws) @ e_w.conj().T]
            b_mats = [0.5 * (b + b.conj().T) for b in b_mats]
            rhss = [r_s * s2s, r_w * s2w]
            v, _ = penalty_phase_solve(b_mats, rhss, l_ris, scenario.bits,
                                       sdp_tol=cfg.sdp_tol,
                                       incumbent=np.append(
                                           np.exp(-1j * theta1), 1.0),
                                       incumbent_tol=1e-6 * min(s2s, s2w))
            theta1 = extract_phases(v, scenario.bits)
            vbar = np.append(np.exp(-1j * theta1), 1.0)
            flagged = any(
                float(np.real(vbar.conj() @ b @ vbar)) < rhs - 1e-6 * min(s2s, s2w)
                for b, rhs in zip(b_mats, rhss))
            hb_s2 = (channels.g_rs.conj() * np.exp(1j * theta1)) @ channels.f_br \
                + channels.h_bs.conj()
            hb_w2 = (channels.g_rw.conj() * np.exp(1j * theta1)) @ channels.f_br \
                + channels.h_bw.conj()
            hh_s2 = np.outer(hb_s2.conj(), hb_s2)
            hh_w2 = np.outer(hb_w2.conj(), hb_w2)
            cons = [
                SdpConstraint({0: hh_s2}, ">=", r_s * s2s),
                SdpConstraint({0: -r_w * hh_w2, 1: hh_w2}, ">=", r_w * s2w),
            ]
            sol = solve_sdp(SdpProblem([n, n], [np.eye(n), np.eye(n)], cons),
                            tol=cfg.sdp_tol)
            if sol.status == "infeasible":
                raise StageInfeasible("ris-noma beamforming")
            w_s, fb_s, _ = _extract_rank_one(sol.blocks[0])
            w_w, fb_w, _ = _extract_rank_one(sol.blocks[1])
            fallbacks += fb_s or fb_w
            w_s, w_w = _rescale_ris_noma(w_s, w_w, hb_s2, hb_w2, r_s, r_w,
                                         s2s, s2w)
            obj = float(np.linalg.norm(w_s) ** 2 + np.linalg.norm(w_w) ** 2)
        except StageInfeasible:
            restarts += 1
            if restarts > MAX_RESTARTS:
                return RunResult(None, trace, flags, t, "infeasible",
                                 fallbacks, restarts,
                                 time.perf_counter() - t_start, variant)
            theta1 = rng.choice(omega, l_ris)
            trace, flags, snapshot = [], [], None
            t = 0
            continue

        if trace and not flagged and obj > trace[-1]:
            w_s, w_w, theta1 = snapshot
            status = "converged"
            break
        snapshot = (w_s, w_w, theta1.copy())
        trace.append(obj)
        flags.append(flagged)
        if len(trace) >= 2 and abs(trace[-2] - trace[-1]) \
                <= cfg.rel_tol * max(abs(trace[-2]), 1e-300):
            status = "converged"
            break

    if snapshot is None:
        return RunResult(None, trace, flags, t, "infeasible", fallbacks,
                         restarts, time.perf_counter() - t_start, variant)
    w_s, w_w, theta1 = snapshot
    phases = PhaseConfig(theta1, np.zeros(l_ris), scenario.bits)
    solution = JointSolution(w_s, w_w, 0.0, phases)
    # single-stage rate check (no 1/2 pre-log)
    hb_s = (channels.g_rs.conj() * np.exp(1j * theta1)) @ channels.f_br \
        + channels.h_bs.conj()
    hb_w = (channels.g_rw.conj() * np.exp(1j * theta1)) @ channels.f_br \
        + channels.h_bw.conj()
    rate_s = np.log2(1.0 + np.abs(hb_s @ w_s) ** 2 / s2s)
    sinr_w = np.abs(hb_w @ w_w) ** 2 / (np.abs(hb_w @ w_s) ** 2 + s2w)
    rate_w = np.log2(1.0 + sinr_w)
    ok = (rate_s >= scenario.qos_bits[0] - 1e-6
          and rate_w >= scenario.qos_bits[1] - 1e-6)
    if status == "converged" and not ok:
        status = "max_iters"
    return RunResult(solution, trace, flags, len(trace), status, fallbacks,
                     restarts, time.perf_counter() - t_start, variant)


def _rescale_ris_noma(w_s, w_w, hb_s, hb_w, r_s, r_w, s2s, s2w):
    g_ss = np.abs(hb_s @ w_s) ** 2
    g_ws = np.abs(hb_w @ w_s) ** 2
    g_ww = np.abs(hb_w @ w_w) ** 2
    if g_ss <= 0.0 or g_ww <= 0.0:
        raise StageInfeasible("ris-noma beamforming", "degenerate directions")
    scale_s = max(1.0, r_s * s2s / g_ss)
    scale_w = max(1.0, r_w * (scale_s * g_ws + s2w) / g_ww)
    return w_s * np.sqrt(scale_s), w_w * np.sqrt(scale_w)
