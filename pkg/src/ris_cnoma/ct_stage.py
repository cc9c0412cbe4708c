"""Relay-stage subproblems: closed-form power and RIS phase updates.

The relay power has a closed form (zero whenever the broadcast stage
already meets the weak user's SINR target, otherwise exactly the deficit
divided by the combined relay channel gain).  Phases are optimized either
exactly through the one-hot binary program or by cyclic per-element
alignment, which maximizes the combined channel gain coordinate-wise and is
monotone by construction.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ris_cnoma.channel import ChannelSet, Scenario
from ris_cnoma.errors import UncoverableError
from ris_cnoma.phase_program import (IlpProblem, linearize_quadratic,
                                     quadratic_value, solve_binary_feasibility)
from ris_cnoma.sdp import max_eigpair
from ris_cnoma.signal_model import (PhaseConfig, dt_metrics, project_phase,
                                    sinr_floor)

REFINEMENT_STOP = 1e-9
REFINEMENT_MAX_SWEEPS = 50


@dataclass
class CtQuadratics:
    """Rank-one quadratic expansion of the combined relay channel gain."""

    z_w: np.ndarray
    u_w: np.ndarray
    h_sw: complex
    rho: float

    def gain_at(self, theta2: np.ndarray) -> float:
        return quadratic_value(self.z_w, self.u_w, abs(self.h_sw) ** 2, theta2)


@dataclass
class CtPhaseResult:
    theta: np.ndarray
    feasible: bool
    slack: float
    objective_trace: list = field(default_factory=list)


def combined_ct_gain(channels: ChannelSet, theta2) -> float:
    """|g_tilde^H Theta_2 f + h_sw|^2, the relay-stage combined channel gain."""
    theta2 = np.asarray(theta2, float)
    combined = (channels.gt_rw.conj() * np.exp(1j * theta2)) @ channels.f_sr \
        + channels.h_sw
    return float(np.abs(combined) ** 2)


def build_ct_quadratics(channels: ChannelSet, w_s, w_w, theta1,
                        scenario: Scenario) -> CtQuadratics:
    """Expansion data plus the residual weak-user SINR after the DT stage."""
    a = channels.gt_rw.conj() * channels.f_sr
    z_w = np.outer(a, a.conj())
    u_w = a * np.conj(channels.h_sw)
    phases = PhaseConfig(theta1, np.zeros(channels.l_ris), scenario.bits,
                         continuous=True)
    met = dt_metrics(channels, phases, w_s, w_w,
                     (scenario.sigma2_s, scenario.sigma2_w))
    rho = sinr_floor(scenario.qos_bits[1]) - met["sinr_w_dt"]
    return CtQuadratics(z_w, u_w, channels.h_sw, float(rho))


def relay_power(channels: ChannelSet, phases: PhaseConfig, w_s, w_w,
                scenario: Scenario, lifted_ws=None, lifted_ww=None) -> float:
    """Closed-form optimal relay power for fixed beams and phases.

    With the lifted matrices supplied, the DT SINR is evaluated in trace
    form (identical for rank-one lifts).  Zero whenever the DT stage already
    meets the weak user's target.
    """
    if lifted_ws is not None and lifted_ww is not None:
        hb_w = _effective_weak_channel(channels, phases.theta1)
        num = float(np.real(hb_w @ lifted_ww @ hb_w.conj()))
        den = float(np.real(hb_w @ lifted_ws @ hb_w.conj())) + scenario.sigma2_w
        sinr1 = num / den
    else:
        met = dt_metrics(channels, phases, w_s, w_w,
                         (scenario.sigma2_s, scenario.sigma2_w))
        sinr1 = met["sinr_w_dt"]
    r_w = sinr_floor(scenario.qos_bits[1])
    if sinr1 >= r_w:
        return 0.0
    gain = combined_ct_gain(channels, phases.theta2)
    if gain <= 0.0:
        raise UncoverableError(
            "weak user below target after DT stage and relay channel is zero")
    return float(scenario.sigma2_w * (r_w - sinr1) / gain)


def _effective_weak_channel(channels, theta1):
    return (channels.g_rw.conj() * np.exp(1j * np.asarray(theta1, float))) \
        @ channels.f_br + channels.h_bw.conj()


def solve_ct_phases_optimal(ct: CtQuadratics, p_s: float, scenario: Scenario,
                            guard: bool = True) -> CtPhaseResult:
    """Exact relay-phase update via the single-constraint binary program."""
    if p_s <= 0.0:
        raise ValueError("relay-phase update requires positive relay power")
    rhs = scenario.sigma2_w * ct.rho / p_s - abs(ct.h_sw) ** 2
    con = linearize_quadratic(ct.z_w, ct.u_w, rhs, scenario.bits)
    problem = IlpProblem(len(ct.u_w), scenario.bits, [con])
    res = solve_binary_feasibility(problem, guard=guard)
    if __debug__ and res.feasible:
        psi_val = problem.psi(con, res.indices)
        direct = ct.gain_at(res.theta) - abs(ct.h_sw) ** 2
        assert abs(psi_val - direct) <= 1e-8 * max(1e-300, abs(direct)) + 1e-30
    return CtPhaseResult(res.theta, res.feasible, res.slack)


def solve_ct_phases_refinement(ct: CtQuadratics, theta2_init,
                               scenario: Scenario,
                               continuous: bool = False,
                               max_sweeps: int = REFINEMENT_MAX_SWEEPS) -> CtPhaseResult:
    """Cyclic per-element phase alignment maximizing the combined gain.

    Each update sets one phase to the alphabet point closest (circularly) to
    the alignment angle of its residual coefficient, which is the exact
    coordinate-wise maximizer; the objective is therefore non-decreasing at
    every single-element update and bounded, so the sweep converges.
    """
    l_ris = len(ct.u_w)
    theta = np.asarray(theta2_init, float).copy()
    if theta.shape != (l_ris,):
        raise ValueError("phase vector length mismatch")
    bound = (l_ris * max_eigpair(ct.z_w)[0] + 2.0 * np.abs(ct.u_w).sum()
             + abs(ct.h_sw) ** 2)
    obj = ct.gain_at(theta)
    trace = [obj]
    scale = max(bound, abs(obj), 1e-300)
    for _ in range(max_sweeps):
        start = obj
        for l in range(l_ris):
            phasor = np.exp(-1j * theta)
            alpha = ct.z_w[l] @ phasor - ct.z_w[l, l] * phasor[l] + ct.u_w[l]
            if abs(alpha) == 0.0:
                continue
            target = float(np.mod(-np.angle(alpha), 2.0 * np.pi))
            theta[l] = target if continuous else project_phase(target,
                                                               scenario.bits)
            new_obj = ct.gain_at(theta)
            assert new_obj >= obj - 1e-9 * scale, \
                ("refinement objective decreased", obj, new_obj)
            assert new_obj <= bound + 1e-9 * scale, \
                ("refinement objective exceeds bound", new_obj, bound)
            obj = new_obj
        trace.append(obj)
        if obj - start < REFINEMENT_STOP * scale:
            break
    return CtPhaseResult(theta, True, np.inf, trace)
