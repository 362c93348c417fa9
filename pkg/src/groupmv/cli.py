"""Command-line entry point: sweep, partition-demo, synth, selftest."""
from __future__ import annotations

import argparse
import logging
import sys

import numpy as np

from .circuit import depth
from .experiment import ConfigError, TopologySpec, load_config, run_partition_demo, run_sweep, write_outputs
from .partition import PartitionError
from .synth import Method, SynthError, SynthRequest, randomized_search
from .topology import TopologyError

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME = 0, 1, 2


def _odd_l(text: str) -> int:
    v = int(text)
    if v < 1 or v % 2 == 0:
        raise argparse.ArgumentTypeError(f"L={v} disallowed (must be odd and >= 1)")
    return v


def cmd_sweep(args) -> int:
    cfg = load_config(args.config)
    if args.out:
        from pathlib import Path
        cfg.output_dir = Path(args.out)
    for d in cfg.defaults_applied:
        print(f"default applied: {d}")
    kept: dict = {}
    rows = run_sweep(cfg, kept if (cfg.dump_circuits or cfg.dump_plans) else None)
    for path in write_outputs(cfg, rows, kept):
        print(f"wrote {path}")
    failed = [r for r in rows if r.error]
    for r in rows:
        tag = f"ERROR {r.error}" if r.error else f"w={r.w_mean:.4f}+/-{r.w_std:.4f}"
        print(f"{r.topology:9s} N={r.n:<4d} {r.method:12s} L={r.l_requested} {tag}")
    if failed:
        print(f"{len(failed)} point(s) recorded errors", file=sys.stderr)
    return EXIT_OK


def cmd_partition_demo(args) -> int:
    demo = run_partition_demo(args.topology, args.n, args.k, args.l, args.seed, args.attempts)
    print(demo.report())
    if args.dump:
        with open(args.dump, "w") as fh:
            fh.write(demo.plan.to_json() + "\n")
    return EXIT_OK


def cmd_synth(args) -> int:
    spec = TopologySpec.parse(args.topology)
    g = spec.graph(args.n)
    req = SynthRequest(g, args.n, args.k, args.l, Method.parse(args.method), args.restarts, args.seed)
    circ, plan, stats = randomized_search(req)
    text = circ.dumps()
    if args.output:
        with open(args.output, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    d = depth(circ)
    print(f"# two_qubit_depth={d.two_qubit_depth} total_depth={d.total_depth} cx={d.cx_count} "
          f"measure={d.measure_count} {plan.summary()}", file=sys.stderr)
    if args.plan:
        with open(args.plan, "w") as fh:
            fh.write(plan.to_json() + "\n")
    return EXIT_OK


def cmd_selftest(args) -> int:
    from .analysis import estimate_witness
    from .sim.dense import enumerate_branches, ghz_overlap
    from .sim.engine import Basis, NoiseModel, run_shots
    from .topology import make_grid, make_heavy_hex, make_ring

    ok = True
    graphs = {"grid": make_grid(2, 4), "ring": make_ring(8), "heavy_hex": make_heavy_hex(1, 1)}
    for name, g in graphs.items():
        for m in Method:
            for l in ((1, 3) if m is Method.GROUP_MV else (1,)):
                n = 8
                circ, plan, _ = randomized_search(SynthRequest(g, n, 4, l, m, 2, args.seed))
                worst = min(ghz_overlap(b.vector) for b in enumerate_branches(circ))
                z = run_shots(circ, NoiseModel.ideal(), Basis.Z, 2000, args.seed)
                x = run_shots(circ, NoiseModel.ideal(), Basis.X, 2000, args.seed + 1)
                w = estimate_witness(z, x, None).w
                good = abs(worst - 1) < 1e-10 and abs(w - 1) < 0.02
                ok &= good
                print(f"{'ok ' if good else 'BAD'} {name:9s} {m.value:12s} L={l} "
                      f"min overlap={worst:.12f} w={w:.4f} {plan.summary()}")
    print("selftest passed" if ok else "selftest FAILED")
    return EXIT_OK if ok else EXIT_RUNTIME


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="groupmv", description="GHZ preparation with majority-vote fusion")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("sweep", help="run a configured sweep")
    s.add_argument("config")
    s.add_argument("--out", help="override output directory")
    s.set_defaults(func=cmd_sweep)

    s = sub.add_parser("partition-demo", help="partition and plan links without simulating")
    s.add_argument("--topology", default="heavy_hex")
    s.add_argument("--n", type=int, default=1000)
    s.add_argument("--k", type=int, default=125)
    s.add_argument("--l", type=_odd_l, default=3)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--attempts", type=int, default=8)
    s.add_argument("--dump", help="write the plan as JSON")
    s.set_defaults(func=cmd_partition_demo)

    s = sub.add_parser("synth", help="synthesize and dump one circuit")
    s.add_argument("--topology", default="heavy_hex")
    s.add_argument("--n", type=int, required=True)
    s.add_argument("--method", default="group_mv")
    s.add_argument("--k", type=int, default=20)
    s.add_argument("--l", type=_odd_l, default=3)
    s.add_argument("--restarts", type=int, default=8)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("-o", "--output")
    s.add_argument("--plan", help="write the plan as JSON")
    s.set_defaults(func=cmd_synth)

    s = sub.add_parser("selftest", help="oracle cross-checks on small instances")
    s.add_argument("--seed", type=int, default=1)
    s.set_defaults(func=cmd_selftest)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code else EXIT_OK
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    np.seterr(all="ignore")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (SynthError, TopologyError, PartitionError, OSError, RuntimeError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
