"""Command-line interface.

Subcommands: precompute, init, simulate, reduce, compare, verify, gamma.
Exit codes: 0 success, 2 config rejection, 3 numerical abort, 4 verify
failures present.
"""

from __future__ import annotations

import argparse
import sys

from . import io
from .config import ConfigRejection, parse_config
from .tdgl import SimulationAbort


def _add_common(p):
    p.add_argument("--config", required=True, help="path to the JSON config")
    p.add_argument("--out", default=None, help="output directory "
                                               "(default: config out_dir)")
    p.add_argument("--threads", type=int, default=1)
    p.add_argument("--strict", action="store_true",
                   help="reject unknown config keys")


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="glvortex")
    sub = parser.add_subparsers(dest="command", required=True)

    for name in ("precompute", "init", "simulate", "reduce", "compare",
                 "verify"):
        p = sub.add_parser(name)
        _add_common(p)
        if name == "simulate":
            p.add_argument("--accelerated", action="store_true",
                           help="interpret time.T in accelerated units")
        if name == "verify":
            p.add_argument("--corrupt", action="store_true",
                           help="seeded-corruption self-test of the suite")

    p = sub.add_parser("gamma")
    p.add_argument("--radius", type=float, default=20.0)
    p.add_argument("--points", type=int, default=4000)

    args = parser.parse_args(argv)

    if args.command == "gamma":
        from .energetics import compute_gamma
        print(f"gamma = {compute_gamma(args.radius, args.points):.10f}")
        return 0

    try:
        cfg = parse_config(args.config, strict=args.strict)
    except ConfigRejection as e:
        print(f"config rejected: {e}", file=sys.stderr)
        return 2
    out_dir = args.out or cfg.out_dir

    from . import harness

    try:
        if args.command == "precompute":
            prep = harness.prepare(cfg)
            g = prep.grid
            for name, field in (("h0", prep.pre.h0), ("f0", prep.pre.f0),
                                ("f1", prep.pre.f1), ("f", prep.pre.f)):
                io.write_field_snapshot(out_dir, name, "node", field.values, g)
            io.write_field_snapshot(out_dir, "z_x", "edge-x", prep.pre.Z.x, g)
            io.write_field_snapshot(out_dir, "z_y", "edge-y", prep.pre.Z.y, g)
            io.write_manifest(out_dir)
            print(f"precompute: wrote potentials to {out_dir} "
                  f"(sup_Z={prep.pre.sup_Z:.6g}, regime={prep.regime.regime})")
            if prep.regime.validity_warning:
                print(f"warning: {prep.regime.validity_warning}",
                      file=sys.stderr)
            return 0

        if args.command == "init":
            from .tdgl import InitSpec, init_well_prepared
            from . import vortex
            prep = harness.prepare(cfg)
            state = init_well_prepared(
                InitSpec(vortices=cfg.vortices, relax_steps=cfg.relax_steps,
                         C0=cfg.C0),
                prep.pre, prep.grid, prep.stepcfg, prep.solver)
            g = prep.grid
            io.write_field_snapshot(out_dir, "v_re_initial", "node",
                                    state.v.real, g)
            io.write_field_snapshot(out_dir, "v_im_initial", "node",
                                    state.v.imag, g)
            io.write_field_snapshot(out_dir, "b_x_initial", "edge-x",
                                    state.bx, g)
            io.write_field_snapshot(out_dir, "b_y_initial", "edge-y",
                                    state.by, g)
            dets = vortex.detect(state)
            io.write_csv(f"{out_dir}/detections.csv",
                         ["vortex_id", "x", "y", "degree"],
                         [(k, d.x, d.y, d.degree)
                          for k, d in enumerate(dets)])
            io.write_manifest(out_dir)
            print(f"init: {len(dets)} vortices detected, wrote {out_dir}")
            return 0

        if args.command == "simulate":
            if args.accelerated:
                cfg.accelerated = True
            result, prep, monitors, _ = harness.simulate(cfg, out_dir)
            if result.aborted:
                print(f"numerical abort: {result.abort_reason}",
                      file=sys.stderr)
                return 3
            bad = [m for m in monitors if not m.verdict]
            print(f"simulate: {len(result.rows)} ledger rows -> {out_dir}; "
                  f"{len(bad)} monitor violations")
            return 0

        if args.command == "reduce":
            samples, t_star, _ = harness.reduce_run(cfg, out_dir)
            print(f"reduce: integrated to tau={t_star:.6g} "
                  f"({len(samples)} samples) -> {out_dir}")
            return 0

        if args.command == "compare":
            report = harness.compare(cfg, out_dir, threads=args.threads)
            for m in report.members:
                flag = " (aborted)" if m.aborted else ""
                print(f"eps={m.epsilon:g}: D={m.D:.6g} over tau<="
                      f"{m.tau_max:g}{flag}")
            print(f"monotone decrease: {report.monotone}")
            if any(m.aborted for m in report.members):
                return 3
            return 0

        if args.command == "verify":
            items = harness.verify(cfg, corrupt=args.corrupt)
            io.write_csv(f"{out_dir}/verify.csv",
                         ["name", "measured", "threshold", "passed"],
                         harness.verify_report_rows(items))
            failures = [i for i in items if not i.passed]
            for i in items:
                mark = "pass" if i.passed else "FAIL"
                print(f"[{mark}] {i.name}: measured={i.measured:.3e} "
                      f"threshold={i.threshold:.3e}")
            return 4 if failures else 0
    except SimulationAbort as e:
        print(f"numerical abort: {e}", file=sys.stderr)
        return 3
    return 0


if __name__ == "__main__":
    sys.exit(main())
