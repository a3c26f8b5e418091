"""Multimodal model graph: per-layer cost profiles, frozen status, trainability.

A model is a fan-in graph: each modality encoder feeds a projector, and all
projectors feed a single LLM. Costs are profiler-style inputs (milliseconds
per microbatch, keyed by tensor-parallel degree); nothing here is derived
from architecture hyperparameters.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Mapping, Sequence

MODEL_SCHEMA_VERSION = 1

MODULE_KINDS = ("encoder", "projector", "llm")


class ModelSpecError(ValueError):
    """Raised when a model document violates the schema or an invariant."""


def _is_power_of_two(n: int) -> bool:
    return n >= 1 and (n & (n - 1)) == 0


@dataclass(frozen=True)
class LayerProfile:
    """Measured costs of one layer.

    The three time fields are maps from tensor-parallel degree (a positive
    power of two) to milliseconds per microbatch. Backward time is split
    into the gradient-for-data part and the gradient-for-parameters part so
    that frozen layers can be costed precisely. Byte counts are whole-layer
    totals; ``activation_bytes`` is per in-flight microbatch.
    """

    forward_time: Mapping[int, float]
    bwd_data_time: Mapping[int, float]
    bwd_weight_time: Mapping[int, float]
    param_bytes: int
    activation_bytes: int

    def validate(self, where: str = "layer") -> None:
        keys = set(self.forward_time)
        for name, table in (
            ("forward_time", self.forward_time),
            ("bwd_data_time", self.bwd_data_time),
            ("bwd_weight_time", self.bwd_weight_time),
        ):
            if not table:
                raise ModelSpecError(f"{where}: {name} has no TP degrees")
            if set(table) != keys:
                raise ModelSpecError(
                    f"{where}: TP degrees of {name} differ from forward_time"
                )
            for tp, ms in table.items():
                if not _is_power_of_two(tp):
                    raise ModelSpecError(
                        f"{where}: TP degree {tp!r} is not a positive power of two"
                    )
                if ms < 0:
                    raise ModelSpecError(f"{where}: {name}[{tp}] is negative")
        for name, count in (
            ("param_bytes", self.param_bytes),
            ("activation_bytes", self.activation_bytes),
        ):
            if not isinstance(count, int) or count < 0:
                raise ModelSpecError(f"{where}: {name} must be a non-negative integer")

    @property
    def tp_degrees(self) -> tuple[int, ...]:
        return tuple(sorted(self.forward_time))


@dataclass(frozen=True)
class ModuleSpec:
    """One module of the graph: an encoder, a projector, or the LLM."""

    name: str
    kind: str
    layers: tuple[LayerProfile, ...]
    frozen: tuple[bool, ...]

    def validate(self) -> None:
        if self.kind not in MODULE_KINDS:
            raise ModelSpecError(f"module {self.name}: unknown kind {self.kind!r}")
        if not self.layers:
            raise ModelSpecError(f"module {self.name}: layers must be nonempty")
        if len(self.frozen) != len(self.layers):
            raise ModelSpecError(
                f"module {self.name}: frozen list has {len(self.frozen)} entries "
                f"for {len(self.layers)} layers"
            )
        for i, layer in enumerate(self.layers):
            layer.validate(f"module {self.name}, layer {i}")

    @property
    def tp_degrees(self) -> tuple[int, ...]:
        """TP degrees profiled for every layer of this module."""
        common = set(self.layers[0].forward_time)
        for layer in self.layers[1:]:
            common &= set(layer.forward_time)
        return tuple(sorted(common))


@dataclass(frozen=True)
class EncoderStack:
    """A modality encoder together with its projector."""

    name: str
    encoder: ModuleSpec
    projector: ModuleSpec


@dataclass(frozen=True)
class SampleTokens:
    """Token counts of one representative training sample."""

    text_tokens: int
    per_encoder_tokens: Mapping[str, int]


@dataclass(frozen=True)
class ModelSpec:
    """The full multimodal model: encoder stacks fanning into one LLM."""

    encoders: tuple[EncoderStack, ...]
    llm: ModuleSpec
    sample: SampleTokens

    def validate(self) -> None:
        if not self.encoders:
            raise ModelSpecError("model must have at least one encoder")
        names = [stack.name for stack in self.encoders]
        if len(set(names)) != len(names):
            raise ModelSpecError(f"duplicate encoder names: {names}")
        for stack in self.encoders:
            stack.encoder.validate()
            stack.projector.validate()
        self.llm.validate()
        if self.sample.text_tokens < 0:
            raise ModelSpecError("sample.text_tokens must be non-negative")
        missing = set(names) - set(self.sample.per_encoder_tokens)
        if missing:
            raise ModelSpecError(f"sample.per_encoder_tokens missing {sorted(missing)}")

    def chain(self, encoder_name: str) -> tuple[tuple[LayerProfile, ...], tuple[bool, ...]]:
        """Layers and frozen flags of one encoder chain (encoder then projector)."""
        stack = self.stack(encoder_name)
        layers = stack.encoder.layers + stack.projector.layers
        frozen = stack.encoder.frozen + stack.projector.frozen
        return layers, frozen

    def stack(self, encoder_name: str) -> EncoderStack:
        for stack in self.encoders:
            if stack.name == encoder_name:
                return stack
        raise KeyError(encoder_name)


@dataclass(frozen=True)
class TrainabilityMap:
    """Per-layer ``p`` flags: does any trainable parameter precede this layer?

    "Precede" is inclusive of the layer itself and follows dataflow order,
    which crosses module boundaries: encoder -> projector -> LLM, with the
    LLM taking the OR over every incoming chain.
    """

    per_module: Mapping[str, tuple[bool, ...]]

    def of(self, module_name: str) -> tuple[bool, ...]:
        return self.per_module[module_name]


def compute_trainability(model: ModelSpec) -> TrainabilityMap:
    """Propagate trainability forward through the model graph.

    Within a chain, p(layer 0) is True iff layer 0 is trainable, and
    p(layer l) = p(layer l-1) or not frozen(layer l). The first LLM layer
    starts from the OR over the final p of every encoder/projector chain:
    one trainable encoder forces the whole LLM to compute input gradients.
    """
    per_module: dict[str, tuple[bool, ...]] = {}

    def walk(frozen: Sequence[bool], carry: bool) -> tuple[list[bool], bool]:
        flags = []
        for f in frozen:
            carry = carry or not f
            flags.append(carry)
        return flags, carry

    into_llm = False
    for stack in model.encoders:
        enc_flags, carry = walk(stack.encoder.frozen, False)
        proj_flags, carry = walk(stack.projector.frozen, carry)
        per_module[stack.encoder.name] = tuple(enc_flags)
        per_module[stack.projector.name] = tuple(proj_flags)
        into_llm = into_llm or carry

    llm_flags, _ = walk(model.llm.frozen, into_llm)
    per_module[model.llm.name] = tuple(llm_flags)
    return TrainabilityMap(per_module=per_module)


def effective_backward_time(
    layer: LayerProfile, frozen: bool, p: bool, tp: int
) -> float:
    """Backward time of one layer given its frozen status and position.

    Gradient-for-parameters work is skipped when the layer is frozen;
    gradient-for-data work is needed iff some trainable parameter precedes
    the layer (the ``p`` flag), because the gradient must flow through.
    """
    if tp not in layer.forward_time:
        raise ModelSpecError(
            f"layer not profiled for tp={tp} (have {sorted(layer.forward_time)})"
        )
    time = 0.0
    if not frozen:
        time += layer.bwd_weight_time[tp]
    if p:
        time += layer.bwd_data_time[tp]
    return time


# --- document I/O ---------------------------------------------------------

def _parse_time_table(obj: object, where: str) -> dict[int, float]:
    if not isinstance(obj, dict) or not obj:
        raise ModelSpecError(f"{where}: expected a non-empty {{tp: ms}} map")
    table: dict[int, float] = {}
    for key, value in obj.items():
        try:
            tp = int(key)
        except (TypeError, ValueError):
            raise ModelSpecError(f"{where}: bad TP degree key {key!r}") from None
        if not isinstance(value, (int, float)) or isinstance(value, bool):
            raise ModelSpecError(f"{where}: time for tp={key} must be a number")
        table[tp] = float(value)
    return table


def _parse_layer(obj: object, where: str) -> LayerProfile:
    if not isinstance(obj, dict):
        raise ModelSpecError(f"{where}: expected an object")
    for fld in ("forward_time", "bwd_data_time", "bwd_weight_time",
                "param_bytes", "activation_bytes"):
        if fld not in obj:
            raise ModelSpecError(f"{where}: missing field {fld!r}")
    for fld in ("param_bytes", "activation_bytes"):
        if not isinstance(obj[fld], int) or isinstance(obj[fld], bool):
            raise ModelSpecError(f"{where}: {fld} must be an integer")
    return LayerProfile(
        forward_time=_parse_time_table(obj["forward_time"], f"{where}.forward_time"),
        bwd_data_time=_parse_time_table(obj["bwd_data_time"], f"{where}.bwd_data_time"),
        bwd_weight_time=_parse_time_table(obj["bwd_weight_time"], f"{where}.bwd_weight_time"),
        param_bytes=obj["param_bytes"],
        activation_bytes=obj["activation_bytes"],
    )


def _parse_module(obj: object, name: str, kind: str) -> ModuleSpec:
    where = f"module {name}"
    if not isinstance(obj, dict):
        raise ModelSpecError(f"{where}: expected an object")
    if "layers" not in obj or "frozen" not in obj:
        raise ModelSpecError(f"{where}: needs 'layers' and 'frozen'")
    raw_layers = obj["layers"]
    raw_frozen = obj["frozen"]
    if not isinstance(raw_layers, list):
        raise ModelSpecError(f"{where}: 'layers' must be a list")
    if not isinstance(raw_frozen, list) or not all(isinstance(f, bool) for f in raw_frozen):
        raise ModelSpecError(f"{where}: 'frozen' must be a list of booleans")
    layers = tuple(
        _parse_layer(item, f"{where}, layer {i}") for i, item in enumerate(raw_layers)
    )
    return ModuleSpec(name=name, kind=kind, layers=layers, frozen=tuple(raw_frozen))


def parse_model_spec(doc: dict) -> ModelSpec:
    """Build a validated :class:`ModelSpec` from a parsed document."""
    if not isinstance(doc, dict):
        raise ModelSpecError("model document must be an object")
    for fld in ("encoders", "llm", "sample"):
        if fld not in doc:
            raise ModelSpecError(f"model document: missing field {fld!r}")
    if not isinstance(doc["encoders"], list) or not doc["encoders"]:
        raise ModelSpecError("model document: 'encoders' must be a non-empty list")

    stacks = []
    for i, entry in enumerate(doc["encoders"]):
        if not isinstance(entry, dict) or "name" not in entry:
            raise ModelSpecError(f"encoders[{i}]: needs a 'name'")
        name = entry["name"]
        if not isinstance(name, str) or not name:
            raise ModelSpecError(f"encoders[{i}]: 'name' must be a non-empty string")
        if "encoder" not in entry or "projector" not in entry:
            raise ModelSpecError(f"encoder {name}: needs 'encoder' and 'projector'")
        stacks.append(
            EncoderStack(
                name=name,
                encoder=_parse_module(entry["encoder"], f"{name}.encoder", "encoder"),
                projector=_parse_module(entry["projector"], f"{name}.projector", "projector"),
            )
        )

    llm = _parse_module(doc["llm"], "llm", "llm")

    sample_obj = doc["sample"]
    if not isinstance(sample_obj, dict) or "text_tokens" not in sample_obj:
        raise ModelSpecError("sample: needs 'text_tokens'")
    per_encoder = sample_obj.get("per_encoder_tokens", {})
    if not isinstance(per_encoder, dict):
        raise ModelSpecError("sample.per_encoder_tokens must be an object")
    sample = SampleTokens(
        text_tokens=int(sample_obj["text_tokens"]),
        per_encoder_tokens={k: int(v) for k, v in per_encoder.items()},
    )

    model = ModelSpec(encoders=tuple(stacks), llm=llm, sample=sample)
    model.validate()
    return model


def load_model_spec(path: str) -> ModelSpec:
    """Load and validate a model document from a JSON file."""
    with open(path, "r", encoding="utf-8") as fh:
        doc = json.load(fh)
    return parse_model_spec(doc)


def _layer_to_doc(layer: LayerProfile) -> dict:
    return {
        "forward_time": {str(tp): ms for tp, ms in sorted(layer.forward_time.items())},
        "bwd_data_time": {str(tp): ms for tp, ms in sorted(layer.bwd_data_time.items())},
        "bwd_weight_time": {str(tp): ms for tp, ms in sorted(layer.bwd_weight_time.items())},
        "param_bytes": layer.param_bytes,
        "activation_bytes": layer.activation_bytes,
    }


def _module_to_doc(module: ModuleSpec) -> dict:
    return {
        "layers": [_layer_to_doc(layer) for layer in module.layers],
        "frozen": list(module.frozen),
    }


def model_spec_to_doc(model: ModelSpec) -> dict:
    """Serialize a model back into its document form."""
    return {
        "schema_version": MODEL_SCHEMA_VERSION,
        "encoders": [
            {
                "name": stack.name,
                "encoder": _module_to_doc(stack.encoder),
                "projector": _module_to_doc(stack.projector),
            }
            for stack in model.encoders
        ],
        "llm": _module_to_doc(model.llm),
        "sample": {
            "text_tokens": model.sample.text_tokens,
            "per_encoder_tokens": dict(sorted(model.sample.per_encoder_tokens.items())),
        },
    }
