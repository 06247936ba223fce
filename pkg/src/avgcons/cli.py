"""Command-line interface.

Subcommands:

* ``run``           -- one trial, trace dumped as JSON-Lines.
* ``sweep``         -- Monte Carlo batch from a JSON config; writes
                       per-trial records (JSONL) and a summary (JSON).
* ``verify-graph``  -- graph-product property suites.
* ``verify-bounds`` -- sampling concentration checks.
* ``report``        -- render a summary JSON to CSV.

Exit codes: 0 when everything checked passes, 1 when some claim fails,
2 on usage errors.  The master seed comes from --seed, falling back to
the AVGCONS_SEED environment variable, then 0.
"""
from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

from . import harness
from .engine import dump_trace_jsonl, run_trial

_SCHEDULE_KINDS = ("csc", "ring", "complete", "delayed", "c_connected", "blocking")


def _default_seed() -> int:
    return int(os.environ.get("AVGCONS_SEED", "0"))


def _parse_schedule(spec: str) -> tuple[str, int | None]:
    kind, _, arg = spec.partition(":")
    if kind not in _SCHEDULE_KINDS:
        raise ValueError(f"unknown schedule {spec!r} (kinds: {', '.join(_SCHEDULE_KINDS)})")
    if kind in ("delayed", "c_connected", "blocking"):
        if not arg:
            raise ValueError(f"schedule {kind!r} needs a parameter, e.g. {kind}:3")
        return kind, int(arg)
    return kind, None


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="avgcons")
    sub = parser.add_subparsers(dest="command", required=True)

    run_p = sub.add_parser("run", help="run one trial and dump its trace")
    run_p.add_argument("--protocol", required=True, choices=("min", "r", "rbar", "rbard"))
    run_p.add_argument("--n", type=int, required=True)
    run_p.add_argument("--epsilon", type=float, default=0.3)
    run_p.add_argument("--eta", type=float, default=0.2)
    run_p.add_argument("--a", type=float, default=0.0)
    run_p.add_argument("--b", type=float, default=1.0)
    run_p.add_argument("--bigN", type=int, default=None, help="network size bound (rbard)")
    run_p.add_argument("--schedule", default="csc", help="csc|ring|complete|delayed:T|c_connected:C|blocking:L")
    run_p.add_argument("--t-max", type=int, default=None)
    run_p.add_argument("--seed", type=int, default=None)
    run_p.add_argument("--s-max", type=int, default=0)
    run_p.add_argument("--out", type=Path, default=None, help="trace path (default: stdout)")

    sweep_p = sub.add_parser("sweep", help="Monte Carlo batch from a JSON config")
    sweep_p.add_argument("--config", type=Path, required=True)
    sweep_p.add_argument("--out", type=Path, required=True, help="output directory")
    sweep_p.add_argument("--seed", type=int, default=None, help="override config seed")
    sweep_p.add_argument("--trials", type=int, default=None, help="override trial count")

    vg = sub.add_parser("verify-graph", help="graph-lemma property suites")
    vg.add_argument("--seed", type=int, default=None)
    vg.add_argument("--cases", type=int, default=500, help="product-lemma cases")
    vg.add_argument("--c-cases", type=int, default=200, help="cases per (n, c) pair")

    vb = sub.add_parser("verify-bounds", help="concentration-bound checks")
    vb.add_argument("--seed", type=int, default=None)
    vb.add_argument("--reps", type=int, default=10_000)

    rep = sub.add_parser("report", help="render a summary JSON to CSV")
    rep.add_argument("--summary", type=Path, required=True)
    rep.add_argument("--out", type=Path, default=None, help="CSV path (default: stdout)")

    return parser


def _cmd_run(args: argparse.Namespace) -> int:
    kind, param = _parse_schedule(args.schedule)
    seed = args.seed if args.seed is not None else _default_seed()
    cfg = harness.ExperimentConfig(
        protocol=args.protocol,
        trials=1,
        n=args.n,
        seed=seed,
        epsilon=args.epsilon,
        eta=args.eta,
        a=args.a,
        b=args.b,
        size_bound=args.bigN,
        schedule_kind=kind,
        delay=param if kind == "delayed" else None,
        c=param if kind == "c_connected" else None,
        ell=param if kind == "blocking" else None,
        s_max=args.s_max,
        t_max=args.t_max,
    )
    trace = run_trial(harness.trial_config(cfg, 0))
    if args.out is None:
        dump_trace_jsonl(trace, sys.stdout)
    else:
        with open(args.out, "w") as fp:
            dump_trace_jsonl(trace, fp)
        print(f"trace written to {args.out}")
    return 0


def _cmd_sweep(args: argparse.Namespace) -> int:
    with open(args.config) as fp:
        obj = json.load(fp)
    if args.seed is not None:
        obj["seed"] = args.seed
    if args.trials is not None:
        obj["trials"] = args.trials
    cfg = harness.experiment_from_json(obj)

    outdir = args.out
    outdir.mkdir(parents=True, exist_ok=True)
    summary = harness.monte_carlo(
        cfg, records_path=outdir / "records.jsonl", summary_path=outdir / "summary.json"
    )
    for name, claim in summary.claims.items():
        state = "PASS" if claim["passed"] else "FAIL"
        print(f"[{state}] {name}: observed {claim['observed']:.4f} {claim['op']} {claim['bound']:.4f}")
    print(f"records: {outdir / 'records.jsonl'}\nsummary: {outdir / 'summary.json'}")
    return 0 if summary.all_passed else 1


def _print_claims(results) -> int:
    ok = True
    for r in results:
        print(f"[{'PASS' if r.passed else 'FAIL'}] {r.name}: {r.detail}")
        ok &= r.passed
    return 0 if ok else 1


def _cmd_verify_graph(args: argparse.Namespace) -> int:
    seed = args.seed if args.seed is not None else _default_seed()
    return _print_claims(
        harness.verify_graph_claims(seed, product_cases=args.cases, c_cases=args.c_cases)
    )


def _cmd_verify_bounds(args: argparse.Namespace) -> int:
    seed = args.seed if args.seed is not None else _default_seed()
    return _print_claims(harness.verify_bound_claims(seed, reps=args.reps))


def _cmd_report(args: argparse.Namespace) -> int:
    with open(args.summary) as fp:
        summary = harness.summary_from_json(json.load(fp))
    csv = harness.render_csv(summary)
    if args.out is None:
        sys.stdout.write(csv)
    else:
        args.out.write_text(csv)
        print(f"report written to {args.out}")
    return 0


def cli(argv: list[str] | None = None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # argparse reports usage errors via exit
        return exc.code if isinstance(exc.code, int) else 2
    handlers = {
        "run": _cmd_run,
        "sweep": _cmd_sweep,
        "verify-graph": _cmd_verify_graph,
        "verify-bounds": _cmd_verify_bounds,
        "report": _cmd_report,
    }
    try:
        return handlers[args.command](args)
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


def main() -> None:
    sys.exit(cli())
