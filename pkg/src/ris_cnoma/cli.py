"""Command line interface: single runs, sweeps, and oracle cross-checks.

Exit codes: 0 success, 1 infeasible single run (or failed oracle check),
2 usage error.
"""

from __future__ import annotations

import argparse
import sys

import numpy as np

from ris_cnoma.channel import (Scenario, generate_channels, load_scenario,
                               watt_to_dbm)
from ris_cnoma.ct_stage import (build_ct_quadratics, solve_ct_phases_optimal,
                                solve_ct_phases_refinement)
from ris_cnoma.dt_stage import (build_dt_quadratics, dt_phase_constraints,
                                solve_active_beamforming)
from ris_cnoma.harness import load_experiment_spec, run_experiment
from ris_cnoma.orchestrator import VARIANTS, AlgorithmConfig, run_baseline
from ris_cnoma.phase_program import (IlpProblem, SizeGuardError,
                                     brute_force_phase_search, quadratic_value,
                                     solve_binary_feasibility)
from ris_cnoma.signal_model import PhaseConfig, phase_set


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ris-cnoma",
        description="Transmit power minimization in a RIS-assisted "
                    "cooperative NOMA downlink")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="solve a single channel instance")
    p_run.add_argument("--config", help="scenario config file (key = value)")
    p_run.add_argument("--variant", default="lcaobs",
                       help=f"one of: {', '.join(VARIANTS)}")
    p_run.add_argument("--seed", type=int, help="channel seed override")
    p_run.add_argument("--out", help="also write the report to this file")
    p_run.add_argument("--max-iters", type=int, default=20)
    p_run.add_argument("--rel-tol", type=float, default=1e-4)

    p_sweep = sub.add_parser("sweep", help="run a Monte-Carlo sweep spec")
    p_sweep.add_argument("spec", help="experiment spec file")
    p_sweep.add_argument("--out", help="output CSV path override")
    p_sweep.add_argument("--seed", type=int, help="base seed override")
    p_sweep.add_argument("--workers", type=int, help="worker pool size")
    p_sweep.add_argument("--plot", action="store_true",
                         help="render a PNG figure next to the CSV")

    p_oracle = sub.add_parser("oracle",
                              help="exhaustive cross-checks at desk scale")
    p_oracle.add_argument("--config", help="scenario config (small sizes)")
    p_oracle.add_argument("--seed", type=int, default=0)
    p_oracle.add_argument("--trials", type=int, default=10)

    p_plot = sub.add_parser("plot", help="render a sweep CSV to a figure")
    p_plot.add_argument("csv", help="sweep CSV produced by the sweep command")
    p_plot.add_argument("--out", help="figure path (default: CSV with .png)")
    return parser


def cmd_run(args) -> int:
    scenario = load_scenario(args.config) if args.config else Scenario()
    if args.seed is not None:
        scenario = scenario.with_updates(rng_seed=args.seed)
    if args.variant not in VARIANTS:
        print(f"error: unknown variant {args.variant!r}; valid: "
              f"{', '.join(VARIANTS)}", file=sys.stderr)
        return 2
    channels = generate_channels(scenario)
    cfg = AlgorithmConfig(variant=args.variant,
                          max_outer_iters=args.max_iters,
                          rel_tol=args.rel_tol)
    result = run_baseline(args.variant, channels, scenario, cfg)
    lines = [
        f"variant     : {args.variant}",
        f"status      : {result.status}",
        f"iterations  : {result.iterations}",
        f"restarts    : {result.restarts}",
        f"rank fallbk : {result.rank_fallbacks}",
    ]
    if result.solution is None:
        lines.append("no feasible solution found")
    else:
        total = result.total_power
        p_s = result.solution.p_s
        ps_dbm = watt_to_dbm(p_s) if p_s > 0 else float("-inf")
        lines.append(f"total power : {total:.9g} W ({watt_to_dbm(total):.4f} dBm)")
        lines.append(f"relay power : {p_s:.9g} W ({ps_dbm:.4f} dBm)")
        if result.report is not None:
            rep = result.report
            lines.append(f"rate strong : {rep.r_s:.6f} bit/s/Hz")
            lines.append(f"rate s->w   : {rep.r_s_to_w:.6f} bit/s/Hz")
            lines.append(f"rate MRC w  : {rep.r_mrc_w:.6f} bit/s/Hz")
            lines.append(f"rate weak   : {rep.r_w_final:.6f} bit/s/Hz")
            lines.append(f"feasible    : {rep.feasible}")
            for name, slack in rep.slacks.items():
                lines.append(f"  slack {name:8s}: {slack:.3e}")
    text = "\n".join(lines)
    print(text)
    if args.out:
        from pathlib import Path
        Path(args.out).write_text(text + "\n")
    return 0 if result.solution is not None and result.status != "infeasible" else 1


def cmd_sweep(args) -> int:
    spec = load_experiment_spec(args.spec)
    if args.out:
        spec.out = args.out
    if args.seed is not None:
        spec.base_seed = args.seed
    if args.workers is not None:
        spec.workers = args.workers
    unknown = [v for v in spec.variants if v not in VARIANTS]
    if unknown:
        print(f"error: unknown variant(s) {', '.join(unknown)}; valid: "
              f"{', '.join(VARIANTS)}", file=sys.stderr)
        return 2
    rows = run_experiment(spec)
    n_trial = sum(1 for r in rows if r["row_type"] == "trial")
    print(f"wrote {spec.out}: {n_trial} data rows, "
          f"{len(rows) - n_trial} aggregate rows")
    if args.plot:
        from ris_cnoma.figures import render_sweep_csv
        out = render_sweep_csv(spec.out)
        print(f"wrote {out}")
    return 0


def cmd_oracle(args) -> int:
    """Cross-check the exact phase programs against exhaustive enumeration."""
    if args.config:
        scenario = load_scenario(args.config)
    else:
        scenario = Scenario(n_t=2, l_ris=3, bits=1)
    if scenario.q_levels ** scenario.l_ris > 10 ** 6:
        print("error: oracle requires a desk-scale config (Q^L <= 1e6)",
              file=sys.stderr)
        return 2
    rng = np.random.default_rng(args.seed)
    checks = []

    dt_ok = ct_ok = ident_ok = refine_ok = True
    for trial in range(args.trials):
        sc = scenario.with_updates(rng_seed=args.seed + trial)
        channels = generate_channels(sc)
        phases = PhaseConfig(np.zeros(sc.l_ris), np.zeros(sc.l_ris), sc.bits)
        bf = solve_active_beamforming(channels, phases, None, sc)
        quad = build_dt_quadratics(channels, bf.lifted_ws, bf.lifted_ww,
                                   None, phases.theta2, sc)
        cons = dt_phase_constraints(quad, sc.bits)
        problem = IlpProblem(sc.l_ris, sc.bits, cons)
        res = solve_binary_feasibility(problem)
        forms = [(quad.x["s", "s"], quad.y["s", "s"], 0.0,
                  quad.r_s_min * quad.sigma2_s - quad.const["s", "s"]),
                 (quad.x["s", "w"] - quad.r_w_min * quad.x["s", "s"],
                  quad.y["s", "w"] - quad.r_w_min * quad.y["s", "s"], 0.0,
                  quad.alpha1)]
        _, _, best = brute_force_phase_search(forms, sc.bits, sc.l_ris,
                                              mode="feasibility")
        dt_ok &= abs(res.slack - best) <= 1e-9 * max(1.0, abs(best))

        ct = build_ct_quadratics(channels, bf.w_s, bf.w_w, res.theta, sc)
        if ct.rho > 0:
            p_s = 1e-3 * (1.0 + rng.random())
            ct_res = solve_ct_phases_optimal(ct, p_s, sc)
            rhs = sc.sigma2_w * ct.rho / p_s - abs(ct.h_sw) ** 2
            _, _, ct_best = brute_force_phase_search(
                [(ct.z_w, ct.u_w, 0.0, rhs)], sc.bits, sc.l_ris,
                mode="feasibility")
            ct_ok &= abs(ct_res.slack - ct_best) <= 1e-9 * max(1.0, abs(ct_best))
            ref = solve_ct_phases_refinement(ct, np.zeros(sc.l_ris), sc)
            _, _, exh = brute_force_phase_search(
                (ct.z_w, ct.u_w, abs(ct.h_sw) ** 2), sc.bits, sc.l_ris)
            refine_ok &= ref.objective_trace[-1] <= exh * (1 + 1e-9)

        idx = rng.integers(0, sc.q_levels, sc.l_ris)
        theta = 2 * np.pi * idx / sc.q_levels
        for key in (("s", "s"), ("w", "w")):
            direct = quadratic_value(quad.x[key], quad.y[key],
                                     quad.const[key], theta)
            psi = problem.psi(cons[0], idx) if key == ("s", "s") else None
            if psi is not None:
                ident_ok &= abs(psi - (direct - quad.const[key])) \
                    <= 1e-8 * max(1e-300, abs(direct))

    checks.append(("dt binary program vs enumeration", dt_ok))
    checks.append(("ct binary program vs enumeration", ct_ok))
    checks.append(("refinement bounded by exhaustive optimum", refine_ok))
    checks.append(("one-hot linearization identity", ident_ok))

    failed = False
    for name, ok in checks:
        print(f"{'PASS' if ok else 'FAIL'}  {name}")
        failed |= not ok
    return 1 if failed else 0


def cmd_plot(args) -> int:
    from ris_cnoma.figures import render_sweep_csv
    out = render_sweep_csv(args.csv, args.out)
    print(f"wrote {out}")
    return 0


def cli_main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 2 if exc.code not in (0, None) else 0
    handlers = {"run": cmd_run, "sweep": cmd_sweep, "oracle": cmd_oracle,
                "plot": cmd_plot}
    try:
        return handlers[args.command](args)
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (ValueError, KeyError, SizeGuardError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


def main() -> None:
    sys.exit(cli_main())


if __name__ == "__main__":
    main()
