#!/usr/bin/env python3
"""Compare context-parallel distribution policies across GPU counts.

Runs the four policies (causal zigzag, inter-GPU balance only, intra-GPU
balance only, both) on the bundled packed mask and on a pure-causal mask
of the same length, printing makespans and totals.
"""

import pathlib
import sys

ROOT = pathlib.Path(__file__).resolve().parent.parent
sys.path.insert(0, str(ROOT / "src"))

from mmplan.balance import balance_report  # noqa: E402
from mmplan.mask import block_workloads, build_bitfield, load_mask  # noqa: E402


def show(title, workloads, gpus, cu=4, s=2):
    report = balance_report(workloads, gpus, cu, s)
    print(f"\n{title}  (W={list(workloads)}, G={gpus}, CU={cu}, s={s})")
    header = f"{'policy':<12} {'loads':<24} {'makespan':>8} {'imbal':>7} {'total':>8}"
    print(header)
    print("-" * len(header))
    for name in ("causal", "inter_only", "intra_only", "balanced"):
        row = report[name]
        print(
            f"{name:<12} {str(row['loads']):<24} {row['makespan']:>8} "
            f"{row['imbalance']:>7.3f} {row['total']:>8.2f}"
        )


def main():
    mask = load_mask(str(ROOT / "fixtures" / "mask-two-encoders.json"))
    packed = block_workloads(mask, 128).workloads
    causal = block_workloads(build_bitfield([("text", 1024)]), 128).workloads
    for gpus in (2, 4):
        show("packed two-encoder mask", packed, gpus)
        show("pure causal mask", causal, gpus)


if __name__ == "__main__":
    main()
