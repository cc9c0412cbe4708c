"""Rate and SINR expressions of the two-stage relaying protocol.

The protocol splits each frame into a broadcast (DT) stage and a relaying
(CT) stage, hence every achievable rate carries a 1/2 pre-log.  A rate
target R therefore translates to the SINR floor ``2**(R / prelog) - 1``
with ``prelog = 0.5``; the non-cooperative single-stage baseline uses
``prelog = 1``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

from ris_cnoma.channel import ChannelSet, Scenario

#: feasibility tolerance in bit/s/Hz, dominating solver tolerances
RATE_TOL = 1e-6

#: tolerance for membership of a phase in the discrete set
PHASE_TOL = 1e-9


def sinr_floor(rate_min: float, prelog: float = 0.5) -> float:
    """SINR threshold implied by a rate requirement under a pre-log factor."""
    return 2.0 ** (rate_min / prelog) - 1.0


def phase_set(bits: int) -> np.ndarray:
    """The discrete phase alphabet {0, 2*pi/Q, ..., 2*pi*(Q-1)/Q}."""
    q = 2 ** bits
    return 2.0 * np.pi * np.arange(q) / q


def phases_in_set(theta: np.ndarray, bits: int, tol: float = PHASE_TOL) -> bool:
    q = 2 ** bits
    steps = np.asarray(theta) * q / (2.0 * np.pi)
    return bool(np.all(np.abs(steps - np.round(steps)) <= tol * q / (2.0 * np.pi) + 1e-12))


def project_phase(angle: float, bits: int) -> float:
    """Nearest alphabet point in circular distance; ties pick the smaller phase."""
    q = 2 ** bits
    omega = phase_set(bits)
    diff = np.abs(np.angle(np.exp(1j * (omega - angle))))
    best = np.flatnonzero(diff <= diff.min() + 1e-12)
    return float(omega[best[0]])


@dataclass(frozen=True)
class PhaseConfig:
    """RIS phase vectors for the two stages.

    ``continuous=True`` relaxes the alphabet to [0, 2*pi) for the
    continuous-phase baseline.
    """

    theta1: np.ndarray
    theta2: np.ndarray
    bits: int
    continuous: bool = False

    def __post_init__(self):
        object.__setattr__(self, "theta1", np.asarray(self.theta1, float))
        object.__setattr__(self, "theta2", np.asarray(self.theta2, float))
        if self.theta1.shape != self.theta2.shape or self.theta1.ndim != 1:
            raise ValueError("phase vectors must be 1-D and equally long")

    def valid(self) -> bool:
        if self.continuous:
            both = np.concatenate([self.theta1, self.theta2])
            return bool(np.all((both >= -PHASE_TOL) & (both < 2.0 * np.pi + PHASE_TOL)))
        return (phases_in_set(self.theta1, self.bits)
                and phases_in_set(self.theta2, self.bits))

    def with_theta1(self, theta1) -> "PhaseConfig":
        return PhaseConfig(np.asarray(theta1, float), self.theta2, self.bits,
                           self.continuous)

    def with_theta2(self, theta2) -> "PhaseConfig":
        return PhaseConfig(self.theta1, np.asarray(theta2, float), self.bits,
                           self.continuous)


@dataclass(frozen=True)
class JointSolution:
    """Beamformers, relay power and phases describing one operating point."""

    w_s: np.ndarray
    w_w: np.ndarray
    p_s: float
    phases: PhaseConfig
    lifted_ws: np.ndarray | None = None
    lifted_ww: np.ndarray | None = None

    def __post_init__(self):
        if self.p_s < 0.0:
            raise ValueError("relay power must be non-negative")
        for m in (self.lifted_ws, self.lifted_ww):
            if m is None:
                continue
            scale = max(1.0, float(np.max(np.abs(m))))
            if np.max(np.abs(m - m.conj().T)) > 1e-10 * scale:
                raise ValueError("lifted beamforming matrix is not Hermitian")
            if np.min(np.linalg.eigvalsh(m)) < -1e-8 * scale:
                raise ValueError("lifted beamforming matrix is not PSD")


@dataclass(frozen=True)
class RateReport:
    """Achieved rates/SINRs and per-constraint slacks of a solution."""

    r_s: float
    r_s_to_w: float
    sinr_w_dt: float
    sinr_w_ct: float
    r_mrc_w: float
    r_w_final: float
    feasible: bool
    slacks: Mapping[str, float] = field(default_factory=dict)


def effective_dt_channel(channels: ChannelSet, theta1: np.ndarray,
                         user: str) -> np.ndarray:
    """Combined BS->user row channel through the RIS plus the direct path."""
    theta1 = np.asarray(theta1, float)
    if theta1.shape != (channels.l_ris,):
        raise ValueError("phase vector length mismatch")
    g = channels.g_rs if user == "s" else channels.g_rw
    h = channels.h_bs if user == "s" else channels.h_bw
    return (g.conj() * np.exp(1j * theta1)) @ channels.f_br + h.conj()


def dt_metrics(channels: ChannelSet, phases: PhaseConfig, w_s: np.ndarray,
               w_w: np.ndarray, noise: tuple) -> dict:
    """Broadcast-stage rates: R_s, R_{s->w} and the weak user's DT SINR."""
    sigma2_s, sigma2_w = noise
    if sigma2_s <= 0.0 or sigma2_w <= 0.0:
        raise ValueError("noise powers must be positive")
    hb_s = effective_dt_channel(channels, phases.theta1, "s")
    hb_w = effective_dt_channel(channels, phases.theta1, "w")
    p_ss = np.abs(hb_s @ w_s) ** 2
    p_sw = np.abs(hb_s @ w_w) ** 2
    p_ws = np.abs(hb_w @ w_s) ** 2
    p_ww = np.abs(hb_w @ w_w) ** 2
    return {
        "r_s": 0.5 * np.log2(1.0 + p_ss / sigma2_s),
        "r_s_to_w": 0.5 * np.log2(1.0 + p_sw / (p_ss + sigma2_s)),
        "sinr_w_dt": p_ww / (p_ws + sigma2_w),
    }


def ct_sinr(channels: ChannelSet, theta2: np.ndarray, p_s: float,
            noise_w: float) -> float:
    """Relay-stage SINR at the weak user."""
    if p_s < 0.0:
        raise ValueError("relay power must be non-negative")
    theta2 = np.asarray(theta2, float)
    combined = (channels.gt_rw.conj() * np.exp(1j * theta2)) @ channels.f_sr \
        + channels.h_sw
    return p_s * np.abs(combined) ** 2 / noise_w


def weak_user_rates(sinr_dt: float, sinr_ct: float, r_s_to_w: float) -> dict:
    """MRC rate of the weak user and its final decode-and-forward rate."""
    if sinr_dt < 0.0 or sinr_ct < 0.0:
        raise ValueError("SINRs must be non-negative")
    r_mrc = 0.5 * np.log2(1.0 + sinr_dt + sinr_ct)
    return {"r_mrc_w": r_mrc, "r_w": min(r_s_to_w, r_mrc)}


def check_feasibility(channels: ChannelSet, solution: JointSolution,
                      scenario: Scenario) -> RateReport:
    """Evaluate the QoS constraints of the master problem at a solution."""
    met = dt_metrics(channels, solution.phases, solution.w_s, solution.w_w,
                     (scenario.sigma2_s, scenario.sigma2_w))
    s_ct = ct_sinr(channels, solution.phases.theta2, solution.p_s,
                   scenario.sigma2_w)
    weak = weak_user_rates(met["sinr_w_dt"], s_ct, met["r_s_to_w"])
    r_s_min, r_w_min = scenario.qos_bits
    slacks = {
        "r_s": met["r_s"] - r_s_min,
        "r_s_to_w": met["r_s_to_w"] - r_w_min,
        "r_mrc_w": weak["r_mrc_w"] - r_w_min,
    }
    feasible = all(v >= -RATE_TOL for v in slacks.values()) \
        and solution.phases.valid()
    return RateReport(
        r_s=met["r_s"],
        r_s_to_w=met["r_s_to_w"],
        sinr_w_dt=met["sinr_w_dt"],
        sinr_w_ct=s_ct,
        r_mrc_w=weak["r_mrc_w"],
        r_w_final=weak["r_w"],
        feasible=bool(feasible),
        slacks=slacks,
    )


def total_power(solution: JointSolution) -> float:
    """Objective of the master problem: BS beam powers plus relay power."""
    return float(np.linalg.norm(solution.w_s) ** 2
                 + np.linalg.norm(solution.w_w) ** 2 + solution.p_s)
