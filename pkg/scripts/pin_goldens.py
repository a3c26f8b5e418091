#!/usr/bin/env python3
"""Regenerate the golden CLI outputs pinned under tests/golden/.

Run after an intentional behavior change, then review the diff.
"""

import pathlib
import sys

ROOT = pathlib.Path(__file__).resolve().parent.parent
sys.path.insert(0, str(ROOT / "src"))

from mmplan.cli import main  # noqa: E402

GOLDEN = ROOT / "tests" / "golden"
FIXTURES = ROOT / "fixtures"


def run(args):
    code = main(args)
    if code != 0:
        raise SystemExit(f"command failed ({code}): {args}")


def main_():
    GOLDEN.mkdir(exist_ok=True)
    plan_path = GOLDEN / "plan_vlm_small.json"
    trace_path = GOLDEN / "trace_vlm_small.json"
    run([
        "plan",
        "--model", str(FIXTURES / "vlm-small.json"),
        "--cluster", str(FIXTURES / "cluster-2x4.json"),
        "--microbatches", "8", "--microbatch-size", "4",
        "-o", str(plan_path),
    ])
    run(["simulate", "--plan", str(plan_path), "-o", str(trace_path)])
    run(["gantt", "--trace", str(trace_path), "-o", str(GOLDEN / "gantt_vlm_small.svg")])
    run([
        "cp-distribute",
        "--mask", str(FIXTURES / "mask-two-encoders.json"),
        "-g", "4", "-c", "2", "-s", "2", "--ilp",
        "-o", str(GOLDEN / "report_two_encoders.json"),
    ])
    run([
        "gen", "model", "--seed", "7", "--encoders", "2",
        "-o", str(GOLDEN / "gen_model_seed7.json"),
    ])
    print(f"goldens written to {GOLDEN}")


if __name__ == "__main__":
    main_()
