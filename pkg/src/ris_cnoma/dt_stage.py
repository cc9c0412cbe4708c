"""Broadcast-stage subproblems: SDR beamforming and RIS phase updates.

Active beamforming is solved through the lifted trace form (semidefinite
relaxation); the relaxation is provably tight here, so rank-one solutions
are expected and a power-rescaled principal-eigenvector fallback covers the
numerically degenerate remainder.  Phase updates come in two flavours: the
exact one-hot binary program, and the low-complexity eigenvalue-penalty
iteration on the lifted phase matrix followed by projection onto the
discrete alphabet.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ris_cnoma.channel import ChannelSet, Scenario
from ris_cnoma.errors import StageInfeasible
from ris_cnoma.phase_program import (IlpProblem, linearize_quadratic,
                                     quadratic_value, solve_binary_feasibility)
from ris_cnoma.sdp import SdpConstraint, SdpProblem, max_eigpair, solve_sdp
from ris_cnoma.signal_model import (PhaseConfig, effective_dt_channel,
                                    project_phase, sinr_floor)

RANK_RATIO_TOL = 1e-6
PENALTY_STOP = 1e-6
PENALTY_MAX_ITERS = 30

# rank-one certification needs a duality gap well below RANK_RATIO_TOL, so
# beamforming solves run tighter than the generic 1e-7 solver default
BEAMFORMING_SDP_TOL = 1e-9


@dataclass
class BeamformingResult:
    w_s: np.ndarray
    w_w: np.ndarray
    lifted_ws: np.ndarray
    lifted_ww: np.ndarray
    objective: float
    rank_fallback: bool
    rank_ratio: float = 0.0  # worst second-to-first eigenvalue ratio of the SDR blocks


@dataclass
class DtQuadratics:
    """Quadratic-form data of the phase feasibility program.

    ``x[(i, k)]``/``y[(i, k)]``/``const[(i, k)]`` expand
    ``|(g_i^H Theta F + h_i^H) w_k|^2`` into
    ``v^H X v + 2 Re(v^H y) + const`` with ``[v]_m = exp(-j theta_m)``.
    """

    x: dict
    y: dict
    const: dict
    eta: float
    alpha1: float
    alpha2: float
    r_s_min: float
    r_w_min: float
    sigma2_s: float
    sigma2_w: float


@dataclass
class LiftedPhaseMatrix:
    """Unit-diagonal PSD matrix over the extended phase vector."""

    v: np.ndarray

    def __post_init__(self):
        if np.max(np.abs(np.diag(self.v).real - 1.0)) > 1e-8:
            raise ValueError("lifted phase matrix diagonal deviates from one")
        if np.linalg.eigvalsh(self.v)[0] < -1e-8:
            raise ValueError("lifted phase matrix is not PSD")


@dataclass
class PhaseStepResult:
    theta: np.ndarray
    feasible: bool
    slack: float
    violated: bool = False
    objective_trace: list = field(default_factory=list)


def ct_combined_channel(channels: ChannelSet, theta2: np.ndarray) -> complex:
    """Relay-stage combined channel (RIS path plus direct strong-to-weak)."""
    theta2 = np.asarray(theta2, float)
    return complex((channels.gt_rw.conj() * np.exp(1j * theta2)) @ channels.f_sr
                   + channels.h_sw)


def dt_eta(channels: ChannelSet, theta2, p_s, scenario: Scenario) -> float:
    """Residual weak-user SINR the broadcast stage must still provide.

    ``p_s=None`` marks the relay-deferred first iteration: the relay stage
    is assumed to cover the weak user, so the broadcast-side constraint is
    dropped (equivalent to a non-positive residual).
    """
    r_w = sinr_floor(scenario.qos_bits[1])
    if p_s is None:
        return -np.inf
    gain = abs(ct_combined_channel(channels, theta2)) ** 2
    return r_w - p_s * gain / scenario.sigma2_w


def solve_active_beamforming(channels: ChannelSet, phases: PhaseConfig,
                             p_s, scenario: Scenario,
                             sdp_tol: float = BEAMFORMING_SDP_TOL) -> BeamformingResult:
    """Minimum-power beamformers for fixed phases and relay power.

    Solves the lifted trace relaxation and extracts rank-one beamformers.
    Raises :class:`StageInfeasible` when the QoS set is empty.
    """
    hb_s = effective_dt_channel(channels, phases.theta1, "s")
    hb_w = effective_dt_channel(channels, phases.theta1, "w")
    hh_s = np.outer(hb_s.conj(), hb_s)
    hh_w = np.outer(hb_w.conj(), hb_w)
    r_s = sinr_floor(scenario.qos_bits[0])
    r_w = sinr_floor(scenario.qos_bits[1])
    s2s, s2w = scenario.sigma2_s, scenario.sigma2_w
    eta = dt_eta(channels, phases.theta2, p_s, scenario)

    n = scenario.n_t
    cons = [
        SdpConstraint({0: hh_s}, ">=", r_s * s2s),
        SdpConstraint({0: -r_w * hh_s, 1: hh_s}, ">=", r_w * s2s),
    ]
    if eta > 0.0:
        cons.append(SdpConstraint({0: -eta * hh_w, 1: hh_w}, ">=", eta * s2w))
    problem = SdpProblem([n, n], [np.eye(n), np.eye(n)], cons)
    sol = solve_sdp(problem, tol=sdp_tol)
    if sol.status == "infeasible":
        raise StageInfeasible("beamforming")
    if sol.status != "optimal" and (sol.pinfeas > 1e-4 or sol.dinfeas > 1e-4
                                    or sol.gap > 1e-3):
        # best-effort iterate too far from the central path to trust;
        # anything closer is accepted because extraction re-validates the
        # QoS constraints and rescales if needed
        raise StageInfeasible("beamforming", f"solver status {sol.status}")

    w_s, fb_s, ratio_s = _extract_rank_one(sol.blocks[0])
    w_w, fb_w, ratio_w = _extract_rank_one(sol.blocks[1])
    fallback = fb_s or fb_w
    if fallback or _violates_qos(w_s, w_w, hb_s, hb_w, r_s, r_w, eta, s2s, s2w):
        w_s, w_w = _rescale_feasible(w_s, w_w, hb_s, hb_w, r_s, r_w, eta,
                                     s2s, s2w)
    lifted_ws = np.outer(w_s, w_s.conj())
    lifted_ww = np.outer(w_w, w_w.conj())
    objective = float(np.linalg.norm(w_s) ** 2 + np.linalg.norm(w_w) ** 2)
    return BeamformingResult(w_s, w_w, lifted_ws, lifted_ww, objective,
                             fallback, max(ratio_s, ratio_w))


def _extract_rank_one(w_mat: np.ndarray) -> tuple:
    vals, vecs = np.linalg.eigh(0.5 * (w_mat + w_mat.conj().T))
    lead = float(max(vals[-1], 0.0))
    if lead <= 1e-14:
        return np.zeros(w_mat.shape[0], complex), False, 0.0
    ratio = float(max(vals[-2], 0.0) / lead) if len(vals) > 1 else 0.0
    w = np.sqrt(lead) * vecs[:, -1]
    pivot = np.argmax(np.abs(w))
    if np.abs(w[pivot]) > 0:
        w = w * np.exp(-1j * np.angle(w[pivot]))
    return w, ratio > RANK_RATIO_TOL, ratio


def _violates_qos(w_s, w_w, hb_s, hb_w, r_s, r_w, eta, s2s, s2w) -> bool:
    tol_s, tol_w = 1e-7 * s2s, 1e-7 * s2w
    g_ss = np.abs(hb_s @ w_s) ** 2
    if g_ss < r_s * s2s - tol_s:
        return True
    if np.abs(hb_s @ w_w) ** 2 < r_w * (g_ss + s2s) - tol_s:
        return True
    if eta > 0.0:
        g_ws = np.abs(hb_w @ w_s) ** 2
        if np.abs(hb_w @ w_w) ** 2 < eta * (g_ws + s2w) - tol_w:
            return True
    return False


def _rescale_feasible(w_s, w_w, hb_s, hb_w, r_s, r_w, eta, s2s, s2w):
    """Restore feasibility of extracted directions by scaling powers."""
    g_ss = np.abs(hb_s @ w_s) ** 2
    g_sw = np.abs(hb_s @ w_w) ** 2
    g_ws = np.abs(hb_w @ w_s) ** 2
    g_ww = np.abs(hb_w @ w_w) ** 2
    if g_ss <= 0.0 or g_sw <= 0.0 or (eta > 0.0 and g_ww <= 0.0):
        raise StageInfeasible("beamforming", "degenerate extraction directions")
    scale_s = max(1.0, r_s * s2s / g_ss)
    need_w = r_w * (scale_s * g_ss + s2s) / g_sw
    if eta > 0.0:
        need_w = max(need_w, eta * (scale_s * g_ws + s2w) / g_ww)
    scale_w = max(1.0, need_w)
    return w_s * np.sqrt(scale_s), w_w * np.sqrt(scale_w)


def build_dt_quadratics(channels: ChannelSet, lifted_ws, lifted_ww, p_s,
                        theta2, scenario: Scenario) -> DtQuadratics:
    """Expand the broadcast QoS constraints in the phase variables."""
    r_s = sinr_floor(scenario.qos_bits[0])
    r_w = sinr_floor(scenario.qos_bits[1])
    s2s, s2w = scenario.sigma2_s, scenario.sigma2_w
    eta = dt_eta(channels, theta2, p_s, scenario)
    x, y, const = {}, {}, {}
    lifted = {"s": lifted_ws, "w": lifted_ww}
    for i, (g, h) in (("s", (channels.g_rs, channels.h_bs)),
                      ("w", (channels.g_rw, channels.h_bw))):
        dg = np.diag(g.conj())
        for k in ("s", "w"):
            w_mat = lifted[k]
            fw = channels.f_br @ w_mat
            x[i, k] = dg @ fw @ channels.f_br.conj().T @ dg.conj().T
            y[i, k] = dg @ fw @ h
            const[i, k] = float(np.real(h.conj() @ w_mat @ h))
    quad = DtQuadratics(
        x=x, y=y, const=const, eta=eta,
        alpha1=r_w * (const["s", "s"] + s2s) - const["s", "w"],
        alpha2=(eta * (const["w", "s"] + s2w) - const["w", "w"]
                if np.isfinite(eta) else -np.inf),
        r_s_min=r_s, r_w_min=r_w, sigma2_s=s2s, sigma2_w=s2w,
    )
    if __debug__:
        _self_check(quad, channels, lifted_ws, lifted_ww, scenario)
    return quad


def _self_check(quad, channels, lifted_ws, lifted_ww, scenario):
    """Verify the quadratic expansion against direct evaluation."""
    rng = np.random.default_rng(0)
    lifted = {"s": lifted_ws, "w": lifted_ww}
    for key, x in quad.x.items():
        vals = np.linalg.eigvalsh(x)
        assert vals[0] >= -1e-9 * max(vals[-1], 1e-300), \
            ("quadratic form not PSD", key)
    for _ in range(3):
        theta = rng.uniform(0, 2 * np.pi, channels.l_ris)
        for i in ("s", "w"):
            hb = effective_dt_channel(channels, theta, i)
            for k in ("s", "w"):
                direct = float(np.real(hb @ lifted[k] @ hb.conj()))
                expanded = quadratic_value(quad.x[i, k], quad.y[i, k],
                                           quad.const[i, k], theta)
                assert abs(direct - expanded) <= 1e-8 * max(1e-300, abs(direct)) + 1e-30, \
                    ("phase quadratic expansion mismatch", i, k, direct, expanded)


def dt_phase_constraints(quad: DtQuadratics, bits: int) -> list:
    """Linearized one-hot constraints of the exact phase program."""
    cons = [
        linearize_quadratic(quad.x["s", "s"], quad.y["s", "s"],
                            quad.r_s_min * quad.sigma2_s - quad.const["s", "s"],
                            bits),
        linearize_quadratic(
            quad.x["s", "w"] - quad.r_w_min * quad.x["s", "s"],
            quad.y["s", "w"] - quad.r_w_min * quad.y["s", "s"],
            quad.alpha1, bits),
    ]
    if quad.eta > 0.0:
        cons.append(linearize_quadratic(
            quad.x["w", "w"] - quad.eta * quad.x["w", "s"],
            quad.y["w", "w"] - quad.eta * quad.y["w", "s"],
            quad.alpha2, bits))
    return cons


def solve_dt_phases_optimal(quad: DtQuadratics, scenario: Scenario,
                            guard: bool = True) -> PhaseStepResult:
    """Exact phase update: max-min-slack point of the binary program."""
    problem = IlpProblem(scenario.l_ris, scenario.bits,
                         dt_phase_constraints(quad, scenario.bits))
    res = solve_binary_feasibility(problem, guard=guard)
    if __debug__ and res.feasible:
        forms = [(quad.x["s", "s"], quad.y["s", "s"], quad.const["s", "s"])]
        forms.append((quad.x["s", "w"] - quad.r_w_min * quad.x["s", "s"],
                      quad.y["s", "w"] - quad.r_w_min * quad.y["s", "s"], 0.0))
        if quad.eta > 0.0:
            forms.append((quad.x["w", "w"] - quad.eta * quad.x["w", "s"],
                          quad.y["w", "w"] - quad.eta * quad.y["w", "s"], 0.0))
        for ilp_con, (a, b, _) in zip(problem.constraints, forms):
            psi_val = problem.psi(ilp_con, res.indices)
            direct = quadratic_value(a, b, 0.0, res.theta)
            assert abs(psi_val - direct) <= 1e-8 * max(1e-300, abs(direct)) + 1e-30, \
                ("psi/direct mismatch", psi_val, direct)
            assert psi_val >= ilp_con.rhs - 1e-9 * ilp_con.norm
    return PhaseStepResult(res.theta, res.feasible, res.slack)


def penalty_phase_solve(b_mats: list, rhss: list, l_ris: int, bits: int,
                        continuous: bool = False,
                        sdp_tol: float = 1e-7,
                        max_iters: int = PENALTY_MAX_ITERS,
                        incumbent: np.ndarray | None = None,
                        incumbent_tol: float = 0.0) -> tuple:
    """Eigenvalue-penalty iteration for lifted phase feasibility problems.

    ``b_mats``/``rhss`` define trace constraints <B_i, V> >= rhs_i on the
    (L+1)-dimensional lifted matrix V with unit diagonal.  Returns
    ``(v_bar, objective_trace)`` where ``objective_trace`` logs the penalty
    value tr(V) - lambda_max(V) per iteration (non-increasing).

    At alternation fixed points the feasible set can have an empty interior
    (the incumbent phases sit exactly on the constraint boundary) and the
    initialization solve stalls; in that case the known-feasible lifted
    ``incumbent`` vector is used as the starting point instead.  Raises
    :class:`StageInfeasible` when no unit-diagonal PSD point exists.
    """
    dim = l_ris + 1
    cons = [SdpConstraint({0: b}, ">=", r) for b, r in zip(b_mats, rhss)]
    base = SdpProblem([dim], [None], cons, fixed_diag=[np.ones(dim)])
    sol = solve_sdp(base, tol=sdp_tol, max_iters=60)
    if sol.status == "infeasible":
        raise StageInfeasible("dt phases (penalty init)")
    if sol.status == "optimal":
        v = sol.blocks[0]
    else:
        v = _feasible_fallback(incumbent, b_mats, rhss, incumbent_tol,
                               "dt phases (penalty init)", sol.status)

    trace = []
    lam, vec = max_eigpair(v)
    trace.append(float(np.trace(v).real - lam))
    for _ in range(max_iters):
        cost = np.eye(dim, dtype=complex) - np.outer(vec, vec.conj())
        step = SdpProblem([dim], [cost], cons, fixed_diag=[np.ones(dim)])
        sol = solve_sdp(step, tol=sdp_tol, max_iters=60)
        if sol.status != "optimal":
            break
        v_new = sol.blocks[0]
        lam_new, vec_new = max_eigpair(v_new)
        value = float(np.trace(v_new).real - lam_new)
        if value > trace[-1] + 1e-9 * max(1.0, abs(trace[-1])):
            break  # inexact step; keep the previous (better) iterate
        v, lam, vec = v_new, lam_new, vec_new
        trace.append(value)
        if trace[-2] - trace[-1] < PENALTY_STOP:
            break
    return v, trace


def _feasible_fallback(incumbent, b_mats, rhss, tol, stage, status):
    """Use the incumbent rank-one point when the init solve stalled."""
    if incumbent is None:
        raise StageInfeasible(stage, f"status {status}")
    v = np.outer(incumbent, incumbent.conj())
    worst = min(float(np.real(np.vdot(b, v))) - r for b, r in zip(b_mats, rhss))
    if worst < -tol:
        raise StageInfeasible(stage, f"status {status}, incumbent slack {worst:.3e}")
    return v


def extract_phases(v_bar: np.ndarray, bits: int,
                   continuous: bool = False) -> np.ndarray:
    """Rank-one extraction of phases from a lifted matrix.

    The principal eigenvector is normalized so its reference (last) entry is
    real positive, then each leading entry's angle is mapped back to a phase
    and projected onto the alphabet (skipped in continuous mode).
    """
    _, vec = max_eigpair(v_bar)
    ref = vec[-1]
    if abs(ref) > 1e-12:
        vec = vec * (ref.conj() / abs(ref))
    theta = np.mod(-np.angle(vec[:-1]), 2.0 * np.pi)
    if continuous:
        return theta
    return np.array([project_phase(t, bits) for t in theta])


def solve_dt_phases_penalty(channels: ChannelSet, lifted_ws, lifted_ww, p_s,
                            theta2, scenario: Scenario,
                            continuous: bool = False,
                            sdp_tol: float = 1e-7,
                            theta1_incumbent=None) -> PhaseStepResult:
    """Low-complexity phase update via the penalty iteration.

    The projected point may violate a constraint at finite resolution; that
    is reported through ``violated`` and absorbed by the outer loop, which
    re-solves the beamforming before recording the objective.
    ``theta1_incumbent`` (the phases the beamformers were solved against)
    seeds the iteration when the initialization solve stalls.
    """
    r_s = sinr_floor(scenario.qos_bits[0])
    r_w = sinr_floor(scenario.qos_bits[1])
    s2s, s2w = scenario.sigma2_s, scenario.sigma2_w
    eta = dt_eta(channels, theta2, p_s, scenario)
    e_s = np.vstack([np.diag(channels.g_rs.conj()) @ channels.f_br,
                     channels.h_bs.conj()])
    e_w = np.vstack([np.diag(channels.g_rw.conj()) @ channels.f_br,
                     channels.h_bw.conj()])
    b_mats = [e_s @ lifted_ws @ e_s.conj().T,
              e_s @ (lifted_ww - r_w * lifted_ws) @ e_s.conj().T]
    rhss = [r_s * s2s, r_w * s2s]
    if eta > 0.0:
        b_mats.append(e_w @ (lifted_ww - eta * lifted_ws) @ e_w.conj().T)
        rhss.append(eta * s2w)
    b_mats = [0.5 * (b + b.conj().T) for b in b_mats]

    incumbent = None
    if theta1_incumbent is not None:
        incumbent = np.append(np.exp(-1j * np.asarray(theta1_incumbent, float)),
                              1.0)
    v, trace = penalty_phase_solve(b_mats, rhss, scenario.l_ris, scenario.bits,
                                   continuous=continuous, sdp_tol=sdp_tol,
                                   incumbent=incumbent,
                                   incumbent_tol=1e-6 * min(s2s, s2w))
    LiftedPhaseMatrix(_renormalize_diag(v))
    theta = extract_phases(v, scenario.bits, continuous=continuous)

    vbar = np.append(np.exp(-1j * theta), 1.0)
    violated = False
    slack = np.inf
    for b, r in zip(b_mats, rhss):
        val = float(np.real(vbar.conj() @ b @ vbar))
        norm_slack = (val - r) / max(s2s, s2w)
        slack = min(slack, norm_slack)
        if norm_slack < -1e-6:
            violated = True
    return PhaseStepResult(theta, True, float(slack), violated, trace)


def _renormalize_diag(v: np.ndarray) -> np.ndarray:
    d = np.sqrt(np.clip(np.diag(v).real, 1e-12, None))
    return v / np.outer(d, d)
