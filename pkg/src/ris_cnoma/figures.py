"""Render sweep CSVs to matplotlib figures.

Plots the aggregate rows of a sweep: mean total transmit power (dBm) versus
the sweep axis per variant, with a second panel for the mean relay power
whenever some variant relays.  Files are written, never shown.
"""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402

from ris_cnoma.channel import watt_to_dbm  # noqa: E402
from ris_cnoma.harness import read_csv  # noqa: E402

AXIS_LABELS = {
    "iterations": "Iteration number",
    "bits": "Phase resolution bits B",
    "l_ris": "Number of RIS elements",
    "r_w_min": "Weak-user rate target (bit/s/Hz)",
    "x_ris": "RIS x-position (m)",
    "x_weak": "Weak-user x-position (m)",
}

_MARKERS = "os^vdP*X"


def render_sweep_csv(csv_path, out_path=None) -> Path:
    """Plot aggregate sweep rows; returns the written figure path."""
    rows = [r for r in read_csv(csv_path) if r["row_type"] == "aggregate"]
    if not rows:
        raise ValueError(f"no aggregate rows found in {csv_path}")
    axis = rows[0]["axis"]
    variants = sorted({r["variant"] for r in rows})
    out_path = Path(out_path) if out_path else Path(csv_path).with_suffix(".png")

    any_relay = any(float(r["p_s_w"]) > 0 for r in rows if r["p_s_w"] not in ("", "nan"))
    n_panels = 2 if any_relay else 1
    fig, axes = plt.subplots(n_panels, 1, figsize=(6.4, 3.2 * n_panels),
                             sharex=True, squeeze=False)
    ax_power = axes[0][0]
    for i, variant in enumerate(variants):
        sel = sorted((float(r["axis_value"]), float(r["total_power_dbm"]),
                      float(r["p_s_w"])) for r in rows if r["variant"] == variant)
        xs = [s[0] for s in sel]
        ax_power.plot(xs, [s[1] for s in sel], marker=_MARKERS[i % len(_MARKERS)],
                      label=variant)
        if any_relay:
            ps_dbm = [watt_to_dbm(s[2]) if s[2] > 0 else float("nan") for s in sel]
            axes[1][0].plot(xs, ps_dbm, marker=_MARKERS[i % len(_MARKERS)],
                            label=variant)
    ax_power.set_ylabel("Mean total transmit power (dBm)")
    ax_power.grid(True, alpha=0.4)
    ax_power.legend(fontsize=8)
    if any_relay:
        axes[1][0].set_ylabel("Mean relay power (dBm)")
        axes[1][0].grid(True, alpha=0.4)
    axes[-1][0].set_xlabel(AXIS_LABELS.get(axis, axis))
    fig.tight_layout()
    fig.savefig(out_path, dpi=150)
    plt.close(fig)
    return out_path
