#!/usr/bin/env python3
"""Regenerate the bundled fixtures deterministically.

Writes fixtures/vlm-small.json (a small vision-language model profile:
32-layer frozen vision encoder, trainable projector, 16-layer frozen LLM),
two cluster descriptions, and a packed two-encoder mask whose eight block
workloads are deliberately irregular.
"""

import json
import pathlib
import random
import sys

ROOT = pathlib.Path(__file__).resolve().parent.parent
sys.path.insert(0, str(ROOT / "src"))

from mmplan.mask import segments_to_doc  # noqa: E402

TP_DEGREES = (1, 2, 4)
FIXTURES = ROOT / "fixtures"


def layer_doc(rng, base_fwd_ms, param_bytes, activation_bytes):
    jitter = rng.uniform(0.92, 1.08)
    fwd = base_fwd_ms * jitter
    bwd_data = fwd * 1.05
    bwd_weight = fwd * 1.0
    out = {"forward_time": {}, "bwd_data_time": {}, "bwd_weight_time": {}}
    for tp in TP_DEGREES:
        scale = tp ** 0.9  # sublinear TP speedup
        out["forward_time"][str(tp)] = round(fwd / scale, 4)
        out["bwd_data_time"][str(tp)] = round(bwd_data / scale, 4)
        out["bwd_weight_time"][str(tp)] = round(bwd_weight / scale, 4)
    out["param_bytes"] = param_bytes
    out["activation_bytes"] = activation_bytes
    return out


def vlm_small():
    rng = random.Random(0x564C4D)  # stable jitter across regenerations
    # 1280-hidden vision layers: ~19.7M params at 2 bytes each
    vision_layers = [
        layer_doc(rng, 1.15, 39_321_600, 3_276_800) for _ in range(32)
    ]
    projector = [layer_doc(rng, 0.08, 5_242_880, 2_359_296)]
    # 2048-hidden LLM layers: ~50.3M params at 2 bytes each
    llm_layers = [layer_doc(rng, 2.35, 100_663_296, 8_388_608) for _ in range(16)]
    return {
        "schema_version": 1,
        "encoders": [
            {
                "name": "vision",
                "encoder": {"layers": vision_layers, "frozen": [True] * 32},
                "projector": {"layers": projector, "frozen": [False]},
            }
        ],
        "llm": {"layers": llm_layers, "frozen": [True] * 16},
        "sample": {"text_tokens": 1024, "per_encoder_tokens": {"vision": 576}},
    }


def cluster(num_nodes):
    return {
        "schema_version": 1,
        "num_nodes": num_nodes,
        "gpus_per_node": 4,
        "gpu_memory_bytes": 48 * (1 << 30),
    }


def packed_mask():
    # eight 128-token blocks: text, vision x2, text x2, audio x2, text
    segments = [
        ("text", 128),
        ("vision", 256),
        ("text", 256),
        ("audio", 256),
        ("text", 128),
    ]
    return segments_to_doc(segments)


def write(name, doc):
    path = FIXTURES / name
    path.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")
    print(f"wrote {path}")


def main():
    FIXTURES.mkdir(exist_ok=True)
    write("vlm-small.json", vlm_small())
    write("cluster-2x4.json", cluster(2))
    write("cluster-6x4.json", cluster(6))
    write("mask-two-encoders.json", packed_mask())


if __name__ == "__main__":
    main()
