"""Command-line front end.

Subcommands wire the library into reproducible file-to-file workflows:
``plan`` searches a parallelization, ``simulate`` replays a plan through
the pipeline simulator, ``cp-distribute`` compares context-parallel
distribution policies on a mask, ``gantt`` renders a trace as SVG, and
``gen`` writes synthetic fixtures. Identical inputs always produce
byte-identical outputs; diagnostics go to stderr.

Exit codes: 0 success, 2 parse error (missing/malformed input file),
3 validation or invariant error, 4 no feasible plan, 5 exact-search
budget exceeded.
"""

from __future__ import annotations

import argparse
import json
import sys

from . import balance, gantt, gen, mask as mask_mod, model as model_mod
from . import planner as planner_mod
from . import schedule as schedule_mod
from .partition import DEFAULT_OPTIMIZER_MULTIPLIER

EXIT_OK = 0
EXIT_PARSE = 2
EXIT_INVALID = 3
EXIT_NO_PLAN = 4
EXIT_BUDGET = 5

REPORT_SCHEMA_VERSION = 1


def _write_json(doc: dict, path: str | None) -> None:
    text = json.dumps(doc, indent=2, sort_keys=True) + "\n"
    if path is None or path == "-":
        sys.stdout.write(text)
    else:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(text)


def _load_json(path: str) -> dict:
    with open(path, "r", encoding="utf-8") as fh:
        return json.load(fh)


def cmd_plan(args: argparse.Namespace) -> int:
    model = model_mod.parse_model_spec(_load_json(args.model))
    cluster = planner_mod.parse_cluster_spec(_load_json(args.cluster))
    result = planner_mod.plan(
        model,
        cluster,
        num_microbatches=args.microbatches,
        microbatch_size=args.microbatch_size,
        p2p_latency_ms=args.p2p_latency_ms,
        optimizer_multiplier=args.optimizer_multiplier,
        frozen_unaware=args.frozen_unaware,
    )
    _write_json(planner_mod.plan_to_doc(result), args.output)
    print(
        f"mode={result.modality_mode} stages={result.total_stages} "
        f"iteration={result.iteration_time_ms:.3f}ms "
        f"throughput={result.throughput:.3f}/s bubble={result.bubble_ratio:.4f}",
        file=sys.stderr,
    )
    return EXIT_OK


def cmd_simulate(args: argparse.Namespace) -> int:
    plan = planner_mod.plan_from_doc(_load_json(args.plan))
    trace = planner_mod.simulate_plan(
        plan, num_microbatches=args.microbatches, p2p_latency_ms=args.p2p_latency_ms
    )
    _write_json(schedule_mod.trace_to_doc(trace), args.output)
    summary = {
        "iteration_time_ms": trace.iteration_time_ms,
        "bubble_ratio": trace.bubble_ratio,
        "k_if": dict(sorted(trace.peak_inflight.items())),
    }
    print(json.dumps(summary, sort_keys=True), file=sys.stderr)
    return EXIT_OK


def cmd_cp_distribute(args: argparse.Namespace) -> int:
    mask = mask_mod.load_mask(args.mask)
    work = mask_mod.block_workloads(mask, args.block_size)
    workloads = list(work.workloads)
    report = balance.balance_report(
        workloads,
        num_gpus=args.gpus,
        compute_units=args.compute_units,
        subblock_size=args.subblock_size,
        alpha=args.alpha,
        beta=args.beta,
    )
    doc = {
        "schema_version": REPORT_SCHEMA_VERSION,
        "block_size": work.block_size,
        "workloads": workloads,
        "gpus": args.gpus,
        "compute_units": args.compute_units,
        "subblock_size": args.subblock_size,
        "alpha": args.alpha,
        "beta": args.beta,
        "policies": report,
    }
    if args.ilp:
        optimal = balance.ilp_optimal(workloads, args.gpus)
        doc["ilp_optimal"] = {
            "loads": list(optimal.loads),
            "makespan": optimal.makespan,
            "imbalance": optimal.imbalance,
        }
    _write_json(doc, args.output)
    return EXIT_OK


def cmd_gantt(args: argparse.Namespace) -> int:
    trace = schedule_mod.trace_from_doc(_load_json(args.trace))
    svg = gantt.render_gantt(trace)
    if args.output is None or args.output == "-":
        sys.stdout.write(svg)
    else:
        with open(args.output, "w", encoding="utf-8") as fh:
            fh.write(svg)
    return EXIT_OK


def cmd_gen(args: argparse.Namespace) -> int:
    if args.kind == "model":
        model = gen.random_model(
            args.seed,
            num_encoders=args.encoders,
            frozen_setup=args.frozen_setup,
        )
        _write_json(model_mod.model_spec_to_doc(model), args.output)
    else:
        segments = gen.random_segments(args.seed, num_modalities=args.encoders)
        _write_json(mask_mod.segments_to_doc(segments), args.output)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="mmplan",
        description="planning and simulation toolkit for distributed multimodal-LLM training",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("plan", help="search a parallelization plan for a model on a cluster")
    p.add_argument("--model", required=True, help="model document (JSON)")
    p.add_argument("--cluster", required=True, help="cluster document (JSON)")
    p.add_argument("--microbatches", type=int, default=8)
    p.add_argument("--microbatch-size", type=int, default=1)
    p.add_argument("--p2p-latency-ms", type=float, default=0.0)
    p.add_argument("--optimizer-multiplier", type=float, default=DEFAULT_OPTIMIZER_MULTIPLIER)
    p.add_argument("--frozen-unaware", action="store_true",
                   help="balance stages as if every parameter were trainable (baseline)")
    p.add_argument("--output", "-o", default=None, help="plan document path (default stdout)")
    p.set_defaults(func=cmd_plan)

    p = sub.add_parser("simulate", help="simulate a plan document under 1F1B")
    p.add_argument("--plan", required=True, help="plan document (JSON)")
    p.add_argument("--microbatches", type=int, default=None,
                   help="override the plan's microbatch count")
    p.add_argument("--p2p-latency-ms", type=float, default=0.0)
    p.add_argument("--output", "-o", default=None, help="trace document path (default stdout)")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("cp-distribute",
                       help="compare context-parallel distribution policies on a mask")
    p.add_argument("--mask", required=True, help="mask document (segments or descriptors)")
    p.add_argument("--gpus", "-g", type=int, default=4)
    p.add_argument("--block-size", type=int, default=mask_mod.DEFAULT_BLOCK_SIZE)
    p.add_argument("--compute-units", "-c", type=int, default=4)
    p.add_argument("--subblock-size", "-s", type=int, default=2)
    p.add_argument("--alpha", type=float, default=balance.DEFAULT_ALPHA,
                   help="aggregation cost per extra subblock")
    p.add_argument("--beta", type=float, default=balance.DEFAULT_BETA,
                   help="aggregation cost per split query block")
    p.add_argument("--ilp", action="store_true",
                   help="also solve the exact assignment (small instances only)")
    p.add_argument("--output", "-o", default=None, help="report path (default stdout)")
    p.set_defaults(func=cmd_cp_distribute)

    p = sub.add_parser("gantt", help="render a trace document as an SVG timeline")
    p.add_argument("--trace", required=True, help="trace document (JSON)")
    p.add_argument("--output", "-o", default=None, help="SVG path (default stdout)")
    p.set_defaults(func=cmd_gantt)

    p = sub.add_parser("gen", help="generate synthetic fixtures")
    p.add_argument("kind", choices=("model", "mask"))
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--encoders", type=int, default=2)
    p.add_argument("--frozen-setup", default="projector-only",
                   choices=("projector-only", "all-trainable", "random"))
    p.add_argument("--output", "-o", default=None)
    p.set_defaults(func=cmd_gen)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (FileNotFoundError, IsADirectoryError, json.JSONDecodeError) as exc:
        print(f"error: cannot read input: {exc}", file=sys.stderr)
        return EXIT_PARSE
    except planner_mod.NoFeasiblePlanError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NO_PLAN
    except balance.BudgetError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_BUDGET
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
