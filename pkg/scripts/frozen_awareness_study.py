#!/usr/bin/env python3
"""Frozen-status awareness study.

Plans a batch of random projector-only-training models twice (with the
frozen-aware cost model and with the all-trainable baseline), re-costs the
baseline plan at true costs, and reports how often awareness strictly
shortens the iteration.

Usage: frozen_awareness_study.py [instances] [seed]
"""

import pathlib
import sys

ROOT = pathlib.Path(__file__).resolve().parent.parent
sys.path.insert(0, str(ROOT / "src"))

from mmplan.gen import random_model  # noqa: E402
from mmplan.planner import ClusterSpec, plan, recost_plan  # noqa: E402


def main():
    instances = int(sys.argv[1]) if len(sys.argv) > 1 else 25
    seed = int(sys.argv[2]) if len(sys.argv) > 2 else 20260810
    cluster = ClusterSpec(num_nodes=3, gpus_per_node=2, gpu_memory_bytes=1 << 44)

    strict = ties = 0
    ratios = []
    print(f"{'seed':>8} {'aware ms':>12} {'unaware ms':>12} {'speedup':>8}")
    for i in range(instances):
        model = random_model(seed + i, num_encoders=2,
                             encoder_layers=(6, 12), llm_layers=(8, 16),
                             frozen_setup="projector-only")
        aware = plan(model, cluster, num_microbatches=16, microbatch_size=1)
        unaware = plan(model, cluster, num_microbatches=16, microbatch_size=1,
                       frozen_unaware=True)
        unaware_true = recost_plan(model, unaware)
        ratio = unaware_true.iteration_time_ms / aware.iteration_time_ms
        ratios.append(ratio)
        if ratio > 1 + 1e-9:
            strict += 1
        else:
            ties += 1
        print(f"{seed + i:>8} {aware.iteration_time_ms:>12.3f} "
              f"{unaware_true.iteration_time_ms:>12.3f} {ratio:>8.3f}x")

    print(f"\nstrictly faster with awareness: {strict}/{instances} "
          f"(ties {ties}), max speedup {max(ratios):.3f}x, "
          f"mean {sum(ratios) / len(ratios):.3f}x")


if __name__ == "__main__":
    main()
