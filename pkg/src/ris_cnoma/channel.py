"""Scenario definition and seeded Rician channel generation.

All links use distance-dependent path loss ``rho * d**(-alpha)`` on top of
normalized Rician small-scale fading.  Channel draws are reproducible: every
link owns a counter-based substream keyed by the link name, so adding a link
never perturbs the draws of existing ones.
"""

from __future__ import annotations

import zlib
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Mapping

import numpy as np

# Link keys: BS->strong, BS->weak, BS->RIS, RIS->strong, RIS->weak,
# strong->RIS, strong->weak.
LINKS = ("b_s", "b_w", "b_r", "r_s", "r_w", "s_r", "s_w")

DEFAULT_EXPONENTS = {
    "b_s": 3.5,
    "b_w": 4.0,
    "b_r": 2.2,
    "r_s": 3.5,
    "r_w": 2.2,
    "s_r": 3.5,
    "s_w": 3.5,
}

DEFAULT_RICIAN = {
    "b_s": 0.0,
    "b_w": 0.0,
    "b_r": 2.0,
    "r_s": 0.0,
    "r_w": 2.0,
    "s_r": 0.0,
    "s_w": 0.0,
}


def dbm_to_watt(dbm: float) -> float:
    return 10.0 ** (dbm / 10.0) / 1000.0


def watt_to_dbm(watt: float) -> float:
    if watt <= 0.0:
        return -np.inf
    return 10.0 * np.log10(watt * 1000.0)


@dataclass(frozen=True)
class Scenario:
    """Physical layout, QoS targets and radio parameters of one instance.

    Positions are 3D coordinates in meters, noise powers in dBm, QoS targets
    in bit/s/Hz.  ``bits`` is the phase resolution B of the RIS elements
    (Q = 2**B levels per element).
    """

    bs_pos: tuple = (0.0, 10.0, 0.0)
    ris_pos: tuple = (80.0, 10.0, 0.0)
    user_s_pos: tuple = (40.0, 0.0, 0.0)
    user_w_pos: tuple = (80.0, 0.0, 0.0)
    pathloss_exponents: Mapping[str, float] = field(
        default_factory=lambda: dict(DEFAULT_EXPONENTS))
    rician_factors: Mapping[str, float] = field(
        default_factory=lambda: dict(DEFAULT_RICIAN))
    ref_loss_db: float = -30.0
    n_t: int = 4
    l_ris: int = 20
    bits: int = 5
    noise_power_dbm: tuple = (-90.0, -90.0)
    qos_bits: tuple = (1.0, 2.0)
    rng_seed: int = 0
    extras: Mapping[str, float] = field(default_factory=dict)

    def __post_init__(self):
        if self.n_t < 1 or self.l_ris < 1:
            raise ValueError("n_t and l_ris must be >= 1")
        if self.bits < 1:
            raise ValueError("bits must be >= 1")
        for link in LINKS:
            if link not in self.pathloss_exponents:
                raise ValueError(f"missing path loss exponent for link {link!r}")
            if self.rician_factors.get(link, 0.0) < 0.0:
                raise ValueError(f"negative Rician factor for link {link!r}")
        for a, b in (("bs_pos", "ris_pos"), ("bs_pos", "user_s_pos"),
                     ("bs_pos", "user_w_pos"), ("ris_pos", "user_s_pos"),
                     ("ris_pos", "user_w_pos"), ("user_s_pos", "user_w_pos")):
            if self._dist(getattr(self, a), getattr(self, b)) <= 0.0:
                raise ValueError(f"positions {a} and {b} coincide")

    @staticmethod
    def _dist(p, q) -> float:
        return float(np.linalg.norm(np.asarray(p, float) - np.asarray(q, float)))

    @property
    def q_levels(self) -> int:
        return 2 ** self.bits

    @property
    def sigma2_s(self) -> float:
        return dbm_to_watt(self.noise_power_dbm[0])

    @property
    def sigma2_w(self) -> float:
        return dbm_to_watt(self.noise_power_dbm[1])

    def link_distance(self, link: str) -> float:
        ends = {
            "b_s": (self.bs_pos, self.user_s_pos),
            "b_w": (self.bs_pos, self.user_w_pos),
            "b_r": (self.bs_pos, self.ris_pos),
            "r_s": (self.ris_pos, self.user_s_pos),
            "r_w": (self.ris_pos, self.user_w_pos),
            "s_r": (self.user_s_pos, self.ris_pos),
            "s_w": (self.user_s_pos, self.user_w_pos),
        }
        a, b = ends[link]
        return self._dist(a, b)

    def link_gain(self, link: str) -> float:
        return path_loss(self.link_distance(link),
                         self.pathloss_exponents[link], self.ref_loss_db)

    def with_updates(self, **kwargs) -> "Scenario":
        return replace(self, **kwargs)


@dataclass(frozen=True)
class ChannelSet:
    """One realization of all eight channels of the two-stage protocol.

    ``h_bs``/``h_bw`` are BS-to-user vectors (length n_t), ``f_br`` the
    BS-to-RIS matrix (l_ris x n_t), ``g_rs``/``g_rw`` the RIS-to-user vectors
    for the broadcast stage, ``f_sr``/``gt_rw`` the relay-stage vectors
    through the RIS and ``h_sw`` the scalar strong-to-weak direct channel.
    """

    h_bs: np.ndarray
    h_bw: np.ndarray
    f_br: np.ndarray
    g_rs: np.ndarray
    g_rw: np.ndarray
    f_sr: np.ndarray
    gt_rw: np.ndarray
    h_sw: complex

    def __post_init__(self):
        l_ris, n_t = self.f_br.shape
        if self.h_bs.shape != (n_t,) or self.h_bw.shape != (n_t,):
            raise ValueError("BS-user channel dimension mismatch")
        for name in ("g_rs", "g_rw", "f_sr", "gt_rw"):
            if getattr(self, name).shape != (l_ris,):
                raise ValueError(f"{name} dimension mismatch")
        for name in ("h_bs", "h_bw", "f_br", "g_rs", "g_rw", "f_sr", "gt_rw"):
            if not np.all(np.isfinite(getattr(self, name))):
                raise ValueError(f"{name} has non-finite entries")
        if not np.isfinite(self.h_sw):
            raise ValueError("h_sw is non-finite")

    @property
    def n_t(self) -> int:
        return self.f_br.shape[1]

    @property
    def l_ris(self) -> int:
        return self.f_br.shape[0]

    def without_ris(self) -> "ChannelSet":
        """Copy with every RIS-coupled channel zeroed (no-RIS baseline)."""
        zl = np.zeros(self.l_ris, complex)
        return ChannelSet(self.h_bs, self.h_bw,
                          np.zeros_like(self.f_br), zl, zl.copy(),
                          zl.copy(), zl.copy(), self.h_sw)


def path_loss(distance_m: float, exponent: float, ref_loss_db: float) -> float:
    """Linear power gain ``rho * d**(-alpha)`` with rho the 1 m reference."""
    if distance_m <= 0.0:
        raise ValueError("distance must be positive")
    return 10.0 ** (ref_loss_db / 10.0) * distance_m ** (-exponent)


def steering_vector(n: int, azimuth: float) -> np.ndarray:
    """Half-wavelength ULA steering phases for a given azimuth angle."""
    return np.exp(1j * np.pi * np.arange(n) * np.sin(azimuth))


def rician_sample(rows: int, cols: int, kappa: float, rng: np.random.Generator,
                  aoa: float = 0.0, aod: float = 0.0) -> np.ndarray:
    """Normalized Rician fading matrix with per-entry unit mean power.

    The deterministic LoS part is the outer product of ULA steering vectors
    at the two ends (angles ``aoa`` on the row side, ``aod`` on the column
    side); the NLoS part is i.i.d. circularly-symmetric complex Gaussian.
    """
    if kappa < 0.0:
        raise ValueError("Rician factor must be non-negative")
    los = np.outer(steering_vector(rows, aoa), steering_vector(cols, aod).conj())
    nlos = (rng.standard_normal((rows, cols))
            + 1j * rng.standard_normal((rows, cols))) / np.sqrt(2.0)
    return np.sqrt(kappa / (1.0 + kappa)) * los + np.sqrt(1.0 / (1.0 + kappa)) * nlos


def link_rng(seed: int, link: str) -> np.random.Generator:
    """Counter-based substream for one link, keyed by the link name."""
    key = zlib.crc32(link.encode("ascii"))
    ss = np.random.SeedSequence(entropy=seed, spawn_key=(key,))
    return np.random.Generator(np.random.Philox(ss))


def _azimuth(p, q) -> float:
    d = np.asarray(q, float) - np.asarray(p, float)
    return float(np.arctan2(d[1], d[0]))


def generate_channels(scenario: Scenario,
                      seed: int | None = None) -> ChannelSet:
    """Draw one seeded realization of all channels for a scenario.

    Identical (scenario, seed) pairs produce bit-identical output.  The seed
    defaults to ``scenario.rng_seed``.
    """
    if seed is None:
        seed = scenario.rng_seed
    kap = scenario.rician_factors
    pos = {"b": scenario.bs_pos, "r": scenario.ris_pos,
           "s": scenario.user_s_pos, "w": scenario.user_w_pos}

    def vec(link, stream, n, array_end, other_end):
        amp = np.sqrt(scenario.link_gain(link))
        az = _azimuth(pos[array_end], pos[other_end])
        return amp * rician_sample(n, 1, kap[link], link_rng(seed, stream),
                                   aoa=az)[:, 0]

    h_bs = vec("b_s", "b_s", scenario.n_t, "b", "s")
    h_bw = vec("b_w", "b_w", scenario.n_t, "b", "w")
    g_rs = vec("r_s", "r_s", scenario.l_ris, "r", "s")
    g_rw = vec("r_w", "r_w", scenario.l_ris, "r", "w")
    f_sr = vec("s_r", "s_r", scenario.l_ris, "r", "s")
    gt_rw = vec("r_w", "r_w_ct", scenario.l_ris, "r", "w")

    f_br = np.sqrt(scenario.link_gain("b_r")) * rician_sample(
        scenario.l_ris, scenario.n_t, kap["b_r"], link_rng(seed, "b_r"),
        aoa=_azimuth(pos["r"], pos["b"]), aod=_azimuth(pos["b"], pos["r"]))

    h_sw = np.sqrt(scenario.link_gain("s_w")) * rician_sample(
        1, 1, kap["s_w"], link_rng(seed, "s_w"))[0, 0]

    return ChannelSet(h_bs, h_bw, f_br, g_rs, g_rw, f_sr, gt_rw, complex(h_sw))


# ---------------------------------------------------------------------------
# flat key=value config files
# ---------------------------------------------------------------------------

def parse_kv_file(path) -> dict:
    """Parse a flat ``key = value`` file; '#' starts a comment."""
    out = {}
    text = Path(path).read_text()
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"{path}:{lineno}: expected 'key = value'")
        key, value = line.split("=", 1)
        out[key.strip()] = value.strip()
    return out


def _parse_floats(text: str) -> tuple:
    return tuple(float(t) for t in text.replace(",", " ").split())


def scenario_from_dict(raw: Mapping[str, str],
                       base: Scenario | None = None) -> Scenario:
    """Build a Scenario from flat string keys (dotted keys for per-link maps).

    Unknown keys are kept in ``extras`` as metadata.
    """
    base = base or Scenario()
    kw = {
        "pathloss_exponents": dict(base.pathloss_exponents),
        "rician_factors": dict(base.rician_factors),
        "extras": dict(base.extras),
    }
    noise = list(base.noise_power_dbm)
    qos = list(base.qos_bits)
    for key, value in raw.items():
        if key in ("bs_pos", "ris_pos", "user_s_pos", "user_w_pos"):
            kw[key] = _parse_floats(value)
        elif key in ("ref_loss_db",):
            kw[key] = float(value)
        elif key in ("n_t", "l_ris", "bits", "rng_seed"):
            kw[key] = int(value)
        elif key.startswith("pathloss_exponents."):
            kw["pathloss_exponents"][key.split(".", 1)[1]] = float(value)
        elif key.startswith("rician_factors."):
            kw["rician_factors"][key.split(".", 1)[1]] = float(value)
        elif key == "noise_power_dbm":
            noise = list(_parse_floats(value))
        elif key == "noise_power_dbm.s":
            noise[0] = float(value)
        elif key == "noise_power_dbm.w":
            noise[1] = float(value)
        elif key == "qos_bits":
            qos = list(_parse_floats(value))
        elif key == "qos_bits.s":
            qos[0] = float(value)
        elif key == "qos_bits.w":
            qos[1] = float(value)
        else:
            kw["extras"][key] = value
    kw["noise_power_dbm"] = tuple(noise)
    kw["qos_bits"] = tuple(qos)
    for fld in ("bs_pos", "ris_pos", "user_s_pos", "user_w_pos", "ref_loss_db",
                "n_t", "l_ris", "bits", "rng_seed"):
        kw.setdefault(fld, getattr(base, fld))
    return Scenario(**kw)


def load_scenario(path, base: Scenario | None = None) -> Scenario:
    return scenario_from_dict(parse_kv_file(path), base=base)
