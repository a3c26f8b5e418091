"""Bitfield attention masks for packed multimodal sequences.

Instead of a dense seq x seq matrix, each token carries a 64-bit
descriptor: bit 0 marks text (LLM) tokens, bits 1..60 mark modality
encoders in registration order, and the top three bits are reserved
control bits that must be zero.

Materialization rule (the single source of mask semantics):

- text query (bit 0 set): attends key ``k`` iff ``k <= q`` and the two
  descriptors share a bit -- causal over everything the token may see.
  Text descriptors carry the bit of every registered modality, so the
  causal test alone decides which earlier tokens are visible.
- pure modality query (bit 0 clear): attends key ``k`` iff the
  descriptors are identical -- bidirectional within the modality, no
  causality.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Iterable, Sequence

MASK_SCHEMA_VERSION = 1

TEXT = "text"
TEXT_BIT = 1
MAX_MODALITIES = 60
CONTROL_MASK = 0b111 << 61

SKIP = "skip"
FULL = "full"
PARTIAL = "partial"

DEFAULT_BLOCK_SIZE = 128


class MaskError(ValueError):
    """Raised for invalid descriptors or segment specs."""


@dataclass(frozen=True)
class BitfieldMask:
    """Per-token descriptors for one packed sequence."""

    descriptors: tuple[int, ...]
    modalities: tuple[str, ...]  # registration order; modality i uses bit i+1

    def __len__(self) -> int:
        return len(self.descriptors)

    def validate(self) -> None:
        if len(self.modalities) > MAX_MODALITIES:
            raise MaskError(
                f"{len(self.modalities)} modalities exceed the {MAX_MODALITIES} limit"
            )
        for t, desc in enumerate(self.descriptors):
            if not (0 <= desc < 1 << 64):
                raise MaskError(f"token {t}: descriptor out of 64-bit range")
            if desc & CONTROL_MASK:
                raise MaskError(f"token {t}: reserved control bits set")
            if desc == 0:
                raise MaskError(f"token {t}: no modality bit set")
            if not desc & TEXT_BIT and bin(desc).count("1") != 1:
                raise MaskError(
                    f"token {t}: pure modality token must set exactly one bit"
                )


def build_bitfield(segments: Sequence[tuple[str, int]]) -> BitfieldMask:
    """Build descriptors for a packed sequence of (modality, token count) runs.

    Modalities are registered in order of first appearance; ``"text"``
    marks LLM tokens. Text tokens get bit 0 plus the bit of every
    registered modality in the sequence.
    """
    if not segments:
        raise MaskError("segments must be nonempty")
    modalities: list[str] = []
    for modality, count in segments:
        if count < 1:
            raise MaskError(f"segment {modality!r}: count must be >= 1")
        if modality != TEXT and modality not in modalities:
            modalities.append(modality)
    if len(modalities) > MAX_MODALITIES:
        raise MaskError(
            f"{len(modalities)} modalities exceed the {MAX_MODALITIES} limit"
        )

    bit_of = {name: 1 << (i + 1) for i, name in enumerate(modalities)}
    text_desc = TEXT_BIT
    for b in bit_of.values():
        text_desc |= b

    descriptors: list[int] = []
    for modality, count in segments:
        desc = text_desc if modality == TEXT else bit_of[modality]
        descriptors.extend([desc] * count)

    mask = BitfieldMask(descriptors=tuple(descriptors), modalities=tuple(modalities))
    mask.validate()
    return mask


def materialize(mask: BitfieldMask, q: int, k: int) -> bool:
    """Whether query token ``q`` attends key token ``k``."""
    dq = mask.descriptors[q]
    dk = mask.descriptors[k]
    if dq & TEXT_BIT:
        return k <= q and (dq & dk) != 0
    return dk == dq


@dataclass(frozen=True)
class BlockWorkload:
    """Blockwise classification of the mask and per-query-block work."""

    block_size: int
    classes: tuple[tuple[str, ...], ...]  # [query block][key block]
    workloads: tuple[int, ...]  # non-skip key blocks per query block

    @property
    def num_blocks(self) -> int:
        return len(self.workloads)


def _block_ranges(length: int, block_size: int) -> list[tuple[int, int]]:
    return [(lo, min(lo + block_size, length)) for lo in range(0, length, block_size)]


def _classify_pair(
    mask: BitfieldMask, qr: tuple[int, int], kr: tuple[int, int]
) -> str:
    descs = mask.descriptors
    q_or = 0
    for q in range(*qr):
        q_or |= descs[q]
    k_or = 0
    for k in range(*kr):
        k_or |= descs[k]
    # no shared bit anywhere: text queries need overlap, modality queries equality
    if q_or & k_or == 0:
        return SKIP
    # uniform pure-modality blocks of the same modality attend fully
    q0, k0 = descs[qr[0]], descs[kr[0]]
    if (
        not q0 & TEXT_BIT
        and q0 == k0
        and all(descs[q] == q0 for q in range(*qr))
        and all(descs[k] == k0 for k in range(*kr))
    ):
        return FULL

    allowed = 0
    total = (qr[1] - qr[0]) * (kr[1] - kr[0])
    for q in range(*qr):
        for k in range(*kr):
            if materialize(mask, q, k):
                allowed += 1
    if allowed == 0:
        return SKIP
    if allowed == total:
        return FULL
    return PARTIAL


def block_workloads(mask: BitfieldMask, block_size: int = DEFAULT_BLOCK_SIZE) -> BlockWorkload:
    """Classify every (query block, key block) pair and count work per row.

    A pair is ``skip`` when fully masked, ``full`` when fully unmasked, and
    ``partial`` otherwise; only non-skip pairs contribute to the row's
    workload (skipped blocks cost nothing, full blocks skip mask
    materialization but still compute attention).
    """
    if block_size < 1:
        raise MaskError("block_size must be >= 1")
    mask.validate()
    ranges = _block_ranges(len(mask), block_size)
    classes = []
    workloads = []
    for qr in ranges:
        row = tuple(_classify_pair(mask, qr, kr) for kr in ranges)
        classes.append(row)
        workloads.append(sum(1 for c in row if c != SKIP))
    return BlockWorkload(
        block_size=block_size, classes=tuple(classes), workloads=tuple(workloads)
    )


# --- documents -------------------------------------------------------------

def mask_to_doc(mask: BitfieldMask) -> dict:
    return {
        "schema_version": MASK_SCHEMA_VERSION,
        "modalities": list(mask.modalities),
        "descriptors": list(mask.descriptors),
    }


def segments_to_doc(segments: Sequence[tuple[str, int]]) -> dict:
    return {
        "schema_version": MASK_SCHEMA_VERSION,
        "segments": [{"modality": m, "count": c} for m, c in segments],
    }


def mask_from_doc(doc: dict) -> BitfieldMask:
    """Load a mask from a segments document or a raw-descriptor document."""
    if not isinstance(doc, dict):
        raise MaskError("mask document must be an object")
    if "segments" in doc:
        raw = doc["segments"]
        if not isinstance(raw, list) or not raw:
            raise MaskError("'segments' must be a non-empty list")
        segments = []
        for i, entry in enumerate(raw):
            if not isinstance(entry, dict) or "modality" not in entry or "count" not in entry:
                raise MaskError(f"segments[{i}]: needs 'modality' and 'count'")
            segments.append((str(entry["modality"]), int(entry["count"])))
        return build_bitfield(segments)
    if "descriptors" in doc:
        descriptors = tuple(int(d) for d in doc["descriptors"])
        modalities = tuple(str(m) for m in doc.get("modalities", ()))
        mask = BitfieldMask(descriptors=descriptors, modalities=modalities)
        mask.validate()
        return mask
    raise MaskError("mask document needs 'segments' or 'descriptors'")


def load_mask(path: str) -> BitfieldMask:
    with open(path, "r", encoding="utf-8") as fh:
        return mask_from_doc(json.load(fh))


def _run_length(row: Iterable[str]) -> list[list]:
    encoded: list[list] = []
    for cls in row:
        if encoded and encoded[-1][1] == cls:
            encoded[-1][0] += 1
        else:
            encoded.append([1, cls])
    return encoded


def workload_to_doc(work: BlockWorkload) -> dict:
    return {
        "schema_version": MASK_SCHEMA_VERSION,
        "block_size": work.block_size,
        "workloads": list(work.workloads),
        "classes_rle": [_run_length(row) for row in work.classes],
    }
