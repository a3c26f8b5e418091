"""Pipeline-stage partitioning balanced on one-forward-plus-one-backward time.

The partitioner is exact: dynamic programming over contiguous boundaries
minimizing the maximum per-stage (forward + effective backward) time, with
ties broken toward the lexicographically earliest boundary vector so plans
are byte-reproducible.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

from .model import LayerProfile, effective_backward_time

DEFAULT_OPTIMIZER_MULTIPLIER = 2.0
DEFAULT_BYTES_PER_PARAM = 2


class PartitionError(ValueError):
    """Raised when a partition request is infeasible."""


@dataclass(frozen=True)
class Stage:
    """One pipeline stage: a contiguous layer range and its aggregate costs."""

    layer_range: tuple[int, int]  # half-open indices into the partitioned chain
    forward_ms: float
    backward_ms: float
    param_bytes: int
    trainable_param_bytes: int
    grad_bytes: int
    optimizer_bytes: int
    activation_bytes_per_microbatch: int

    @property
    def time_ms(self) -> float:
        """1F+1B time, the balancing objective."""
        return self.forward_ms + self.backward_ms


@dataclass(frozen=True)
class StagePlan:
    """A partition of one module (or fused module set) into pipeline stages."""

    modules: tuple[str, ...]
    tp: int
    stages: tuple[Stage, ...]

    @property
    def num_stages(self) -> int:
        return len(self.stages)

    @property
    def max_stage_time_ms(self) -> float:
        return max(stage.time_ms for stage in self.stages)

    @property
    def boundaries(self) -> tuple[int, ...]:
        """Interior boundary indices, one per stage cut."""
        return tuple(stage.layer_range[1] for stage in self.stages[:-1])


@dataclass(frozen=True)
class MemoryEstimate:
    """Bytes one stage needs: model state plus in-flight activations."""

    model_bytes: int
    data_bytes: int
    k_if: int

    @property
    def total_bytes(self) -> int:
        return self.model_bytes + self.data_bytes


def layer_costs(
    layers: Sequence[LayerProfile],
    frozen: Sequence[bool],
    p: Sequence[bool],
    tp: int,
    frozen_unaware: bool = False,
) -> tuple[list[float], list[float]]:
    """Per-layer forward and backward times at the given TP degree.

    With ``frozen_unaware`` the backward time is the all-trainable value
    (weight + data gradients for every layer), the assumption existing
    profilers bake in; otherwise the frozen status and position decide.
    """
    for i, layer in enumerate(layers):
        if tp not in layer.forward_time:
            raise PartitionError(
                f"layer {i} not profiled for tp={tp} (have {sorted(layer.forward_time)})"
            )
    fwd = [layer.forward_time[tp] for layer in layers]
    if frozen_unaware:
        bwd = [layer.bwd_weight_time[tp] + layer.bwd_data_time[tp] for layer in layers]
    else:
        bwd = [
            effective_backward_time(layer, f, pp, tp)
            for layer, f, pp in zip(layers, frozen, p)
        ]
    return fwd, bwd


def best_contiguous_partition(times: Sequence[float], num_stages: int) -> list[int]:
    """Boundary indices minimizing the maximum contiguous segment sum.

    Returns the interior boundaries (length ``num_stages - 1``); among all
    optimal partitions the lexicographically smallest boundary vector is
    chosen. O(num_stages * n^2) exact dynamic programming.
    """
    n = len(times)
    if num_stages > n:
        raise PartitionError(f"cannot split {n} layers into {num_stages} stages")
    # span[i][j - i] = sum(times[i:j]) by left-to-right accumulation, so the
    # objective is bit-identical to naive segment summation
    spans: list[list[float]] = []
    for i in range(n + 1):
        row = [0.0]
        acc = 0.0
        for j in range(i, n):
            acc += times[j]
            row.append(acc)
        spans.append(row)

    def span(i: int, j: int) -> float:
        return spans[i][j - i]

    # best[s][i]: minimal max segment sum splitting layers[i:] into s stages
    INF = float("inf")
    best = [[INF] * (n + 1) for _ in range(num_stages + 1)]
    best[1] = [span(i, n) for i in range(n + 1)]
    best[1][n] = INF  # a stage may not be empty
    for s in range(2, num_stages + 1):
        for i in range(n - s + 1, -1, -1):
            acc = INF
            # first stage is layers[i:j); at least one layer per remaining stage
            for j in range(i + 1, n - s + 2):
                cand = max(span(i, j), best[s - 1][j])
                if cand < acc:
                    acc = cand
            best[s][i] = acc

    # earliest-boundary walk: smallest cut that can still meet the optimum
    target = best[num_stages][0]
    boundaries = []
    i = 0
    for s in range(num_stages, 1, -1):
        for j in range(i + 1, n - s + 2):
            if max(span(i, j), best[s - 1][j]) <= target:
                boundaries.append(j)
                i = j
                break
        else:  # pragma: no cover - the DP guarantees a feasible cut
            raise PartitionError("internal error: no feasible boundary")
    return boundaries


def stage_plan_from_boundaries(
    layers: Sequence[LayerProfile],
    frozen: Sequence[bool],
    p: Sequence[bool],
    boundaries: Sequence[int],
    tp: int,
    modules: Sequence[str] = ("module",),
    optimizer_multiplier: float = DEFAULT_OPTIMIZER_MULTIPLIER,
    frozen_unaware: bool = False,
) -> StagePlan:
    """Aggregate per-stage costs for a given boundary vector.

    Byte accounting always uses the true frozen flags (gradients and
    optimizer state exist only for trainable layers); ``frozen_unaware``
    switches the recorded times to the all-trainable cost model.
    """
    fwd, bwd = layer_costs(layers, frozen, p, tp, frozen_unaware=frozen_unaware)
    bounds = [0, *boundaries, len(layers)]
    stages = []
    for lo, hi in zip(bounds, bounds[1:]):
        if hi <= lo:
            raise PartitionError(f"empty stage in boundary vector {boundaries}")
        param = sum(layer.param_bytes for layer in layers[lo:hi])
        trainable = sum(
            layer.param_bytes for layer, f in zip(layers[lo:hi], frozen[lo:hi]) if not f
        )
        stages.append(
            Stage(
                layer_range=(lo, hi),
                forward_ms=sum(fwd[lo:hi]),
                backward_ms=sum(bwd[lo:hi]),
                param_bytes=param,
                trainable_param_bytes=trainable,
                grad_bytes=trainable,
                optimizer_bytes=int(optimizer_multiplier * trainable),
                activation_bytes_per_microbatch=sum(
                    layer.activation_bytes for layer in layers[lo:hi]
                ),
            )
        )
    return StagePlan(modules=tuple(modules), tp=tp, stages=tuple(stages))


def partition_stages(
    layers: Sequence[LayerProfile],
    frozen: Sequence[bool],
    p: Sequence[bool],
    num_stages: int,
    tp: int,
    modules: Sequence[str] = ("module",),
    optimizer_multiplier: float = DEFAULT_OPTIMIZER_MULTIPLIER,
    frozen_unaware: bool = False,
) -> StagePlan:
    """Partition a layer chain into ``num_stages`` balanced pipeline stages.

    ``frozen_unaware`` switches both the balancing objective and the
    recorded times to the all-trainable cost model (the baseline existing
    profilers implement); byte accounting is unaffected.
    """
    if num_stages < 1:
        raise PartitionError("num_stages must be >= 1")
    if num_stages > len(layers):
        raise PartitionError(
            f"num_stages={num_stages} exceeds layer count {len(layers)}"
        )
    fwd, bwd = layer_costs(layers, frozen, p, tp, frozen_unaware=frozen_unaware)
    totals = [f + b for f, b in zip(fwd, bwd)]
    cuts = best_contiguous_partition(totals, num_stages)
    return stage_plan_from_boundaries(
        layers, frozen, p, cuts, tp,
        modules=modules,
        optimizer_multiplier=optimizer_multiplier,
        frozen_unaware=frozen_unaware,
    )


def boundary_variants(
    layers: Sequence[LayerProfile],
    frozen: Sequence[bool],
    p: Sequence[bool],
    num_stages: int,
    tp: int,
) -> list[tuple[int, ...]]:
    """The candidate boundary vectors the planner hedges across.

    One balanced on effective frozen-aware times, one balanced as if all
    parameters were trainable; deduplicated when they coincide.
    """
    variants: list[tuple[int, ...]] = []
    for unaware in (False, True):
        fwd, bwd = layer_costs(layers, frozen, p, tp, frozen_unaware=unaware)
        totals = [f + b for f, b in zip(fwd, bwd)]
        cuts = tuple(best_contiguous_partition(totals, num_stages))
        if cuts not in variants:
            variants.append(cuts)
    return variants


def estimate_memory(
    stage: Stage,
    k_if: int,
    optimizer_multiplier: float = DEFAULT_OPTIMIZER_MULTIPLIER,
) -> MemoryEstimate:
    """Memory requirement of one stage.

    Model state is parameters plus, for the trainable fraction, gradients
    (at parameter width) and optimizer state; data memory is the per-
    microbatch activation footprint held for each in-flight microbatch.
    """
    if k_if < 1:
        raise PartitionError("k_if must be >= 1")
    model_bytes = stage.param_bytes + int(
        stage.trainable_param_bytes * (1 + optimizer_multiplier)
    )
    data_bytes = stage.activation_bytes_per_microbatch * k_if
    return MemoryEstimate(model_bytes=model_bytes, data_bytes=data_bytes, k_if=k_if)
