"""Seeded generators for synthetic models, masks, and scheduling instances.

Property tests and demo fixtures share these so every random instance is
reproducible from an explicit 64-bit seed. No ambient randomness anywhere.
"""

from __future__ import annotations

import random
from typing import Sequence

from .model import EncoderStack, LayerProfile, ModelSpec, ModuleSpec, SampleTokens

DEFAULT_TP_DEGREES = (1, 2, 4)


def _layer(
    rng: random.Random,
    base_forward_ms: float,
    tp_degrees: Sequence[int],
    param_bytes_range: tuple[int, int] = (1 << 20, 64 << 20),
    activation_bytes_range: tuple[int, int] = (1 << 18, 8 << 20),
) -> LayerProfile:
    fwd = base_forward_ms * rng.uniform(0.6, 1.4)
    # backward roughly twice forward, split unevenly between data and weights
    data_frac = rng.uniform(0.3, 0.7)
    bwd_total = fwd * rng.uniform(1.6, 2.4)
    forward, bwd_data, bwd_weight = {}, {}, {}
    for tp in tp_degrees:
        # sublinear speedup from tensor parallelism
        speedup = tp ** rng.uniform(0.75, 0.95)
        forward[tp] = round(fwd / speedup, 4)
        bwd_data[tp] = round(bwd_total * data_frac / speedup, 4)
        bwd_weight[tp] = round(bwd_total * (1 - data_frac) / speedup, 4)
    return LayerProfile(
        forward_time=forward,
        bwd_data_time=bwd_data,
        bwd_weight_time=bwd_weight,
        param_bytes=rng.randrange(*param_bytes_range),
        activation_bytes=rng.randrange(*activation_bytes_range),
    )


def _module(
    rng: random.Random,
    name: str,
    kind: str,
    num_layers: int,
    base_forward_ms: float,
    frozen: bool | None,
    tp_degrees: Sequence[int],
) -> ModuleSpec:
    layers = tuple(_layer(rng, base_forward_ms, tp_degrees) for _ in range(num_layers))
    if frozen is None:
        flags = tuple(rng.random() < 0.5 for _ in range(num_layers))
    else:
        flags = (frozen,) * num_layers
    return ModuleSpec(name=name, kind=kind, layers=layers, frozen=flags)


def random_model(
    seed: int,
    num_encoders: int = 2,
    encoder_layers: tuple[int, int] = (2, 6),
    llm_layers: tuple[int, int] = (4, 8),
    frozen_setup: str = "projector-only",
    tp_degrees: Sequence[int] = DEFAULT_TP_DEGREES,
) -> ModelSpec:
    """A random multimodal model.

    ``frozen_setup`` picks the training regime: ``projector-only`` freezes
    encoders and LLM (the common pretrained-model recipe), ``all-trainable``
    freezes nothing, and ``random`` flips a coin per layer.
    """
    rng = random.Random(seed)
    setups = {
        "projector-only": (True, False, True),
        "all-trainable": (False, False, False),
        "random": (None, None, None),
    }
    enc_frozen, proj_frozen, llm_frozen = setups[frozen_setup]

    stacks = []
    for i in range(num_encoders):
        name = f"enc{i}"
        stacks.append(
            EncoderStack(
                name=name,
                encoder=_module(
                    rng, f"{name}.encoder", "encoder",
                    rng.randint(*encoder_layers), rng.uniform(0.5, 3.0),
                    enc_frozen, tp_degrees,
                ),
                projector=_module(
                    rng, f"{name}.projector", "projector",
                    1, rng.uniform(0.05, 0.3), proj_frozen, tp_degrees,
                ),
            )
        )
    llm = _module(
        rng, "llm", "llm", rng.randint(*llm_layers), rng.uniform(1.0, 4.0),
        llm_frozen, tp_degrees,
    )
    model = ModelSpec(
        encoders=tuple(stacks),
        llm=llm,
        sample=SampleTokens(
            text_tokens=rng.randrange(256, 2048),
            per_encoder_tokens={s.name: rng.randrange(64, 1024) for s in stacks},
        ),
    )
    model.validate()
    return model


def random_segments(
    seed: int,
    num_modalities: int = 2,
    max_segments: int = 8,
    max_tokens_per_segment: int = 64,
) -> list[tuple[str, int]]:
    """A random packed-sequence segment list mixing text and modalities."""
    rng = random.Random(seed)
    names = [chr(ord("A") + i) for i in range(num_modalities)]
    segments = []
    for _ in range(rng.randint(1, max_segments)):
        modality = rng.choice(["text"] + names)
        segments.append((modality, rng.randint(1, max_tokens_per_segment)))
    return segments


def random_workloads(seed: int, max_blocks: int = 64, max_workload: int = 64) -> list[int]:
    """Random per-block workload counts for scheduling experiments."""
    rng = random.Random(seed)
    return [rng.randint(1, max_workload) for _ in range(rng.randint(1, max_blocks))]
