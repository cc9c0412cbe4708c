"""Monte-Carlo sweeps over scenario axes with CSV output.

One experiment sweeps a single axis (resolution bits, RIS size, weak-user
QoS, RIS or weak-user x-position, or the iteration index for convergence
traces) over a list of variants with ``n_trials`` seeded channel draws per
point.  Output is a fixed-schema CSV with one row per (variant, axis value,
trial) plus aggregate rows carrying means and normal-approximation 95%
confidence half-widths.  Floats are written with 9 significant digits so
re-running a spec reproduces the file byte for byte.
"""

from __future__ import annotations

import csv
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from ris_cnoma.channel import (Scenario, generate_channels, parse_kv_file,
                               scenario_from_dict, watt_to_dbm)
from ris_cnoma.orchestrator import AlgorithmConfig, run_baseline

AXES = ("iterations", "bits", "l_ris", "r_w_min", "x_ris", "x_weak")

CSV_HEADER = ["row_type", "variant", "axis", "axis_value", "trial", "seed",
              "total_power_w", "total_power_dbm", "p_s_w", "iterations",
              "status", "rank_fallbacks", "ci95_total_power_w", "ci95_p_s_w"]

_SPEC_KEYS = ("axis", "values", "variants", "n_trials", "base_seed", "out",
              "max_outer_iters", "rel_tol", "workers")


@dataclass
class ExperimentSpec:
    axis: str
    values: list
    variants: list
    n_trials: int = 1
    base_seed: int = 0
    out: str = "sweep.csv"
    scenario_overrides: dict = field(default_factory=dict)
    max_outer_iters: int = 20
    rel_tol: float = 1e-4
    workers: int = 0  # 0 = cpu count

    def __post_init__(self):
        if self.axis not in AXES:
            raise ValueError(f"unknown sweep axis {self.axis!r}; valid: {AXES}")
        if self.n_trials < 1:
            raise ValueError("n_trials must be >= 1")
        if not self.values:
            raise ValueError("axis values must be non-empty")
        if sorted(self.values) != list(self.values):
            raise ValueError("axis values must be sorted")


def load_experiment_spec(path) -> ExperimentSpec:
    raw = parse_kv_file(path)
    overrides = {k: v for k, v in raw.items() if k not in _SPEC_KEYS}
    return ExperimentSpec(
        axis=raw["axis"],
        values=[float(v) for v in raw["values"].replace(",", " ").split()],
        variants=[v.strip() for v in raw["variants"].split(",")],
        n_trials=int(raw.get("n_trials", 1)),
        base_seed=int(raw.get("base_seed", 0)),
        out=raw.get("out", "sweep.csv"),
        scenario_overrides=overrides,
        max_outer_iters=int(raw.get("max_outer_iters", 20)),
        rel_tol=float(raw.get("rel_tol", 1e-4)),
        workers=int(raw.get("workers", 0)),
    )


def apply_axis(scenario: Scenario, axis: str, value: float) -> Scenario:
    if axis == "bits":
        return scenario.with_updates(bits=int(value))
    if axis == "l_ris":
        return scenario.with_updates(l_ris=int(value))
    if axis == "r_w_min":
        return scenario.with_updates(qos_bits=(scenario.qos_bits[0], float(value)))
    if axis == "x_ris":
        y, z = scenario.ris_pos[1], scenario.ris_pos[2]
        return scenario.with_updates(ris_pos=(float(value), y, z))
    if axis == "x_weak":
        y, z = scenario.user_w_pos[1], scenario.user_w_pos[2]
        return scenario.with_updates(user_w_pos=(float(value), y, z))
    return scenario  # iterations axis leaves the scenario untouched


def _run_job(args):
    """One (variant, trial) unit of work; returns per-axis-value rows."""
    spec_axis, values, variant, trial, seed, scenario, max_iters, rel_tol = args
    rows = []
    cfg = AlgorithmConfig(variant=variant, max_outer_iters=max_iters,
                          rel_tol=rel_tol)
    if spec_axis == "iterations":
        sc = scenario.with_updates(rng_seed=seed)
        channels = generate_channels(sc)
        cfg = replace(cfg, max_outer_iters=max(int(max(values)), max_iters))
        result = run_baseline(variant, channels, sc, cfg)
        for v in values:
            k = int(v)
            if result.power_trace:
                power = result.power_trace[min(k, len(result.power_trace)) - 1]
            else:
                power = float("nan")
            rows.append(_data_row(variant, spec_axis, v, trial, seed, power,
                                  result))
        return rows
    for v in values:
        sc = apply_axis(scenario, spec_axis, v).with_updates(rng_seed=seed)
        channels = generate_channels(sc)
        result = run_baseline(variant, channels, sc, cfg)
        power = result.total_power if result.solution is not None else float("nan")
        rows.append(_data_row(variant, spec_axis, v, trial, seed, power, result))
    return rows


def _data_row(variant, axis, value, trial, seed, power, result):
    p_s = result.solution.p_s if result.solution is not None else float("nan")
    return {
        "row_type": "trial",
        "variant": variant,
        "axis": axis,
        "axis_value": value,
        "trial": trial,
        "seed": seed,
        "total_power_w": power,
        "total_power_dbm": watt_to_dbm(power) if np.isfinite(power) else float("nan"),
        "p_s_w": p_s,
        "iterations": result.iterations,
        "status": result.status,
        "rank_fallbacks": result.rank_fallbacks,
        "ci95_total_power_w": "",
        "ci95_p_s_w": "",
    }


def _aggregate(rows, variant, axis, value):
    sel = [r for r in rows
           if r["variant"] == variant and r["axis_value"] == value
           and r["row_type"] == "trial"]
    powers = np.array([r["total_power_w"] for r in sel], float)
    ps = np.array([r["p_s_w"] for r in sel], float)
    ok = np.isfinite(powers)
    n = int(ok.sum())
    mean_p = float(powers[ok].mean()) if n else float("nan")
    mean_ps = float(ps[ok].mean()) if n else float("nan")
    ci_p = _ci95(powers[ok])
    ci_ps = _ci95(ps[ok])
    return {
        "row_type": "aggregate",
        "variant": variant,
        "axis": axis,
        "axis_value": value,
        "trial": "",
        "seed": "",
        "total_power_w": mean_p,
        "total_power_dbm": watt_to_dbm(mean_p) if np.isfinite(mean_p) else float("nan"),
        "p_s_w": mean_ps,
        "iterations": float(np.mean([r["iterations"] for r in sel])),
        "status": f"{n}/{len(sel)}",
        "rank_fallbacks": int(sum(r["rank_fallbacks"] for r in sel)),
        "ci95_total_power_w": ci_p,
        "ci95_p_s_w": ci_ps,
    }


def _ci95(x: np.ndarray) -> float:
    if x.size < 2:
        return 0.0
    return float(1.96 * x.std(ddof=1) / np.sqrt(x.size))


def run_experiment(spec: ExperimentSpec,
                   base_scenario: Scenario | None = None) -> list:
    """Execute a sweep; returns all rows and writes the CSV (if out set)."""
    scenario = scenario_from_dict(spec.scenario_overrides, base=base_scenario)
    jobs = []
    for variant in spec.variants:
        for trial in range(spec.n_trials):
            seed = spec.base_seed + trial
            jobs.append((spec.axis, tuple(spec.values), variant, trial, seed,
                         scenario, spec.max_outer_iters, spec.rel_tol))
    workers = spec.workers if spec.workers > 0 else (os.cpu_count() or 1)
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_run_job, jobs, chunksize=1))
    else:
        results = [_run_job(j) for j in jobs]

    rows = [row for chunk in results for row in chunk]
    rows.sort(key=lambda r: (spec.variants.index(r["variant"]),
                             r["axis_value"], r["trial"]))
    aggregates = [
        _aggregate(rows, variant, spec.axis, v)
        for variant in spec.variants for v in spec.values
    ]
    all_rows = rows + aggregates
    if spec.out:
        write_csv(spec.out, all_rows)
    return all_rows


def _fmt(value) -> str:
    if isinstance(value, float):
        return format(value, ".9g")
    return str(value)


def write_csv(path, rows):
    path = Path(path)
    if path.parent and not path.parent.exists():
        path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(CSV_HEADER)
        for row in rows:
            writer.writerow([_fmt(row[col]) for col in CSV_HEADER])


def read_csv(path) -> list:
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))
