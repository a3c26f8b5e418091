"""Small builders shared by the tests."""

from __future__ import annotations

import random
from typing import Sequence

from mmplan.model import (
    EncoderStack,
    LayerProfile,
    ModelSpec,
    ModuleSpec,
    SampleTokens,
)


def layer(
    fwd: float,
    bwd_data: float,
    bwd_weight: float,
    tp_degrees: Sequence[int] = (1,),
    param_bytes: int = 1 << 20,
    activation_bytes: int = 1 << 16,
) -> LayerProfile:
    """A layer whose time simply divides by the TP degree."""
    return LayerProfile(
        forward_time={tp: fwd / tp for tp in tp_degrees},
        bwd_data_time={tp: bwd_data / tp for tp in tp_degrees},
        bwd_weight_time={tp: bwd_weight / tp for tp in tp_degrees},
        param_bytes=param_bytes,
        activation_bytes=activation_bytes,
    )


def module(
    name: str,
    kind: str,
    layers: Sequence[LayerProfile],
    frozen: Sequence[bool],
) -> ModuleSpec:
    return ModuleSpec(name=name, kind=kind, layers=tuple(layers), frozen=tuple(frozen))


def tiny_model(
    encoder_layers: Sequence[LayerProfile],
    encoder_frozen: Sequence[bool],
    projector_layers: Sequence[LayerProfile],
    projector_frozen: Sequence[bool],
    llm_layers: Sequence[LayerProfile],
    llm_frozen: Sequence[bool],
    extra_encoders: Sequence[tuple] = (),
) -> ModelSpec:
    """One-or-more-encoder model with explicit layers and frozen flags."""
    stacks = [
        EncoderStack(
            name="enc0",
            encoder=module("enc0.encoder", "encoder", encoder_layers, encoder_frozen),
            projector=module("enc0.projector", "projector", projector_layers, projector_frozen),
        )
    ]
    for i, (e_layers, e_frozen, p_layers, p_frozen) in enumerate(extra_encoders, start=1):
        stacks.append(
            EncoderStack(
                name=f"enc{i}",
                encoder=module(f"enc{i}.encoder", "encoder", e_layers, e_frozen),
                projector=module(f"enc{i}.projector", "projector", p_layers, p_frozen),
            )
        )
    model = ModelSpec(
        encoders=tuple(stacks),
        llm=module("llm", "llm", llm_layers, llm_frozen),
        sample=SampleTokens(
            text_tokens=128,
            per_encoder_tokens={s.name: 64 for s in stacks},
        ),
    )
    model.validate()
    return model


def random_profile_chain(
    rng: random.Random, n_layers: int, tp_degrees: Sequence[int] = (1,)
) -> tuple[list[LayerProfile], list[bool], list[bool]]:
    """Random layers with random frozen and p flags (flags are independent)."""
    layers = [
        layer(
            rng.uniform(0.1, 5.0),
            rng.uniform(0.1, 5.0),
            rng.uniform(0.1, 5.0),
            tp_degrees,
        )
        for _ in range(n_layers)
    ]
    frozen = [rng.random() < 0.5 for _ in range(n_layers)]
    p = [rng.random() < 0.5 for _ in range(n_layers)]
    return layers, frozen, p
