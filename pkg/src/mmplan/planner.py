"""Two-step parallelization search over a cluster description.

Step 1 enumerates LLM configurations: for every node count n in 1..N-1 and
every (tensor, pipeline) degree pair covering those nodes, the LLM is
partitioned into balanced stages. Step 2 places the modality encoders on
the remaining nodes, either colocated (all encoders fused and partitioned
jointly) or parallel (each encoder on its own devices). Every glued
configuration is simulated and memory-checked; the plan with the highest
predicted throughput wins, with deterministic tie-breaking.

``plan`` enumerates the encoder (tp, pp) combinations exhaustively instead
of committing to the single closest-to-target fit, and evaluates each
combination under two stage-boundary variants (balanced on effective
frozen-aware times, and balanced as if everything were trainable). The
space is small at planning scale, the argmax can only improve, and it
makes the search space independent of the cost model: a planner run with
the frozen-unaware cost model picks from the same configurations, so its
choice can never beat the frozen-aware argmax at true cost.
``fit_encoders`` remains the standalone closest-to-target fitting step.
"""

from __future__ import annotations

import itertools
import json
from dataclasses import dataclass, replace
from typing import Sequence

from .layout import Layout, SimStage, inflight_microbatches
from .model import ModelSpec, compute_trainability, effective_backward_time
from .partition import (
    DEFAULT_OPTIMIZER_MULTIPLIER,
    Stage,
    StagePlan,
    boundary_variants,
    estimate_memory,
    partition_stages,
    stage_plan_from_boundaries,
)
from .schedule import ScheduleTrace, simulate_1f1b

PLAN_SCHEMA_VERSION = 1

COLOCATED = "colocated"
PARALLEL = "parallel"
MODES = (COLOCATED, PARALLEL)


class ClusterError(ValueError):
    """Raised for invalid cluster descriptions."""


class NoFeasiblePlanError(ValueError):
    """Raised when no configuration fits the cluster."""


@dataclass(frozen=True)
class ClusterSpec:
    num_nodes: int
    gpus_per_node: int
    gpu_memory_bytes: int
    allowed_tp: tuple[int, ...] | None = None

    def validate(self) -> None:
        if self.num_nodes < 2:
            raise ClusterError(
                "num_nodes must be >= 2: the search reserves at least one node "
                "for the encoders and one for the LLM"
            )
        if self.gpus_per_node < 1:
            raise ClusterError("gpus_per_node must be >= 1")
        if self.gpu_memory_bytes <= 0:
            raise ClusterError("gpu_memory_bytes must be positive")
        for tp in self.tp_degrees:
            if tp < 1 or tp & (tp - 1) or self.gpus_per_node % tp:
                raise ClusterError(
                    f"allowed TP degree {tp} must be a power of two dividing "
                    f"gpus_per_node={self.gpus_per_node} (TP may not cross nodes)"
                )

    @property
    def tp_degrees(self) -> tuple[int, ...]:
        if self.allowed_tp is not None:
            return tuple(sorted(self.allowed_tp))
        degrees = []
        tp = 1
        while tp <= self.gpus_per_node:
            if self.gpus_per_node % tp == 0:
                degrees.append(tp)
            tp *= 2
        return tuple(degrees)


@dataclass(frozen=True)
class PlannedStage:
    """One stage of the final plan: partition data plus placement and memory."""

    layer_range: tuple[int, int]
    devices: tuple[int, ...]
    forward_ms: float
    backward_ms: float
    model_bytes: int
    data_bytes: int
    k_if: int


@dataclass(frozen=True)
class PlannedModule:
    name: str
    tp: int
    stages: tuple[PlannedStage, ...]


@dataclass(frozen=True)
class ParallelPlan:
    modality_mode: str
    modules: tuple[PlannedModule, ...]
    num_microbatches: int
    microbatch_size: int
    iteration_time_ms: float
    throughput: float  # samples per second
    bubble_ratio: float

    @property
    def total_stages(self) -> int:
        return sum(len(m.stages) for m in self.modules)

    def module(self, name: str) -> PlannedModule:
        for m in self.modules:
            if m.name == name:
                return m
        raise KeyError(name)


@dataclass(frozen=True)
class LLMCandidate:
    nodes: int
    tp: int
    pp: int
    plan: StagePlan


@dataclass(frozen=True)
class FittedEncoder:
    name: str
    plan: StagePlan
    first_gpu: int  # offset within the encoder device pool


@dataclass(frozen=True)
class EncoderFit:
    mode: str
    encoders: tuple[FittedEncoder, ...]


def _chain_flags(model: ModelSpec, trainability) -> dict[str, tuple]:
    """Per-encoder (layers, frozen, p) for the encoder+projector chain."""
    chains = {}
    for stack in model.encoders:
        layers, frozen = model.chain(stack.name)
        p = trainability.of(stack.encoder.name) + trainability.of(stack.projector.name)
        chains[stack.name] = (layers, frozen, p)
    return chains


def _packing_order(model: ModelSpec, chains: dict[str, tuple]) -> list[str]:
    """Encoders by descending compute (forward time at the smallest degree).

    Forward time is independent of the frozen status, so both cost models
    pack encoders onto devices in the same order.
    """

    def forward_compute(name: str) -> float:
        layers = chains[name][0]
        common = set.intersection(*(set(l.forward_time) for l in layers))
        if not common:
            return 0.0
        ref = min(common)
        return sum(l.forward_time[ref] for l in layers)

    return sorted(
        (stack.name for stack in model.encoders),
        key=lambda name: (-forward_compute(name), name),
    )


def enumerate_llm_configs(
    model: ModelSpec,
    cluster: ClusterSpec,
    frozen_unaware: bool = False,
    optimizer_multiplier: float = DEFAULT_OPTIMIZER_MULTIPLIER,
) -> list[LLMCandidate]:
    """All (node count, tp, pp) LLM partitions the cluster supports."""
    cluster.validate()
    model.validate()
    trainability = compute_trainability(model)
    p_llm = trainability.of(model.llm.name)
    profiled = set(model.llm.tp_degrees)

    candidates = []
    for n in range(1, cluster.num_nodes):
        gpus = n * cluster.gpus_per_node
        for tp in cluster.tp_degrees:
            if tp not in profiled or gpus % tp:
                continue
            pp = gpus // tp
            if pp > len(model.llm.layers):
                continue
            plan = partition_stages(
                model.llm.layers,
                model.llm.frozen,
                p_llm,
                pp,
                tp,
                modules=(model.llm.name,),
                optimizer_multiplier=optimizer_multiplier,
                frozen_unaware=frozen_unaware,
            )
            candidates.append(LLMCandidate(nodes=n, tp=tp, pp=pp, plan=plan))
    if not candidates:
        raise NoFeasiblePlanError(
            "no feasible (tp, pp) combination for the LLM on this cluster"
        )
    return candidates


def _fused_stage_time(plans: Sequence[StagePlan], index: int) -> float:
    return sum(plan.stages[index].time_ms for plan in plans)


def fit_encoders(
    model: ModelSpec,
    target_stage_time_ms: float,
    nodes_available: int,
    mode: str,
    cluster: ClusterSpec,
    frozen_unaware: bool = False,
    optimizer_multiplier: float = DEFAULT_OPTIMIZER_MULTIPLIER,
) -> EncoderFit:
    """Fit encoder parallelization so stage times track the LLM's.

    Colocated: every encoder chain is partitioned into the same number of
    stages at a common TP degree and the stages are fused index-by-index;
    the (tp, pp) whose worst fused stage is closest to the target wins.
    Parallel: encoders are fitted independently (largest compute first) on
    disjoint device subsets, each minimizing its own distance to the
    target. Ties prefer fewer stages, then lower TP.
    """
    if mode not in MODES:
        raise ValueError(f"mode must be one of {MODES}")
    if nodes_available < 1:
        raise NoFeasiblePlanError("no nodes left for the encoders")
    trainability = compute_trainability(model)
    chains = _chain_flags(model, trainability)
    pool = nodes_available * cluster.gpus_per_node

    def candidate_plans(names, tp, pp):
        plans = []
        for name in names:
            layers, frozen, p = chains[name]
            plans.append(
                partition_stages(
                    layers, frozen, p, pp, tp,
                    modules=(name,),
                    optimizer_multiplier=optimizer_multiplier,
                    frozen_unaware=frozen_unaware,
                )
            )
        return plans

    if mode == COLOCATED:
        names = [stack.name for stack in model.encoders]
        profiled = set(cluster.tp_degrees)
        for stack in model.encoders:
            profiled &= set(stack.encoder.tp_degrees) & set(stack.projector.tp_degrees)
        max_pp = min(len(chains[name][0]) for name in names)
        best = None
        best_key = None
        for tp in sorted(profiled):
            for pp in range(1, max_pp + 1):
                if tp * pp > pool:
                    continue
                plans = candidate_plans(names, tp, pp)
                worst = max(_fused_stage_time(plans, i) for i in range(pp))
                key = (abs(worst - target_stage_time_ms), pp, tp)
                if best_key is None or key < best_key:
                    best_key = key
                    best = (tp, pp, plans)
        if best is None:
            raise NoFeasiblePlanError(
                f"no (tp, pp) fits the fused encoders on {pool} GPUs"
            )
        tp, pp, plans = best
        fitted = tuple(
            FittedEncoder(name=name, plan=plan, first_gpu=0)
            for name, plan in zip(names, plans)
        )
        return EncoderFit(mode=COLOCATED, encoders=fitted)

    # parallel: pack encoders one by one, biggest compute first, always
    # reserving one GPU for each encoder not yet placed
    order = _packing_order(model, chains)
    placed: dict[str, FittedEncoder] = {}
    offset = 0
    for idx, name in enumerate(order):
        layers, frozen, p = chains[name]
        profiled = set(cluster.tp_degrees)
        for layer in layers:
            profiled &= set(layer.forward_time)
        reserve = len(order) - idx - 1
        best = None
        best_key = None
        for tp in sorted(profiled):
            aligned = -(-offset // tp) * tp  # TP groups stay inside nodes
            for pp in range(1, len(layers) + 1):
                if aligned + tp * pp > pool - reserve:
                    break
                plan = candidate_plans([name], tp, pp)[0]
                key = (abs(plan.max_stage_time_ms - target_stage_time_ms), pp, tp)
                if best_key is None or key < best_key:
                    best_key = key
                    best = (plan, aligned)
        if best is None:
            raise NoFeasiblePlanError(
                f"encoder {name} does not fit on the remaining "
                f"{pool - offset - reserve} of {pool} encoder GPUs"
            )
        plan, aligned = best
        placed[name] = FittedEncoder(name=name, plan=plan, first_gpu=aligned)
        offset = aligned + plan.tp * plan.num_stages

    fitted = tuple(placed[stack.name] for stack in model.encoders)
    return EncoderFit(mode=PARALLEL, encoders=fitted)


@dataclass(frozen=True)
class _Evaluation:
    plan: ParallelPlan
    worst_overflow: int
    worst_stage: str

    @property
    def feasible(self) -> bool:
        return self.worst_overflow <= 0


def _build_layout(
    candidate: LLMCandidate,
    fit: EncoderFit,
    cluster: ClusterSpec,
    p2p_latency_ms: float,
) -> tuple[Layout, dict[str, tuple[int, ...]]]:
    """Stage graph plus stage-name -> device-group mapping."""
    llm_base = (cluster.num_nodes - candidate.nodes) * cluster.gpus_per_node
    devices: dict[str, tuple[int, ...]] = {}

    llm_stages = []
    for j, stage in enumerate(candidate.plan.stages):
        name = f"llm/{j}"
        group = tuple(range(llm_base + j * candidate.tp, llm_base + (j + 1) * candidate.tp))
        devices[name] = group
        llm_stages.append(
            SimStage(name=name, device=group[0], forward_ms=stage.forward_ms,
                     backward_ms=stage.backward_ms)
        )

    if fit.mode == COLOCATED:
        pp = fit.encoders[0].plan.num_stages
        tp = fit.encoders[0].plan.tp
        fused = []
        for i in range(pp):
            name = f"encoders/{i}"
            group = tuple(range(i * tp, (i + 1) * tp))
            devices[name] = group
            fused.append(
                SimStage(
                    name=name,
                    device=group[0],
                    forward_ms=sum(f.plan.stages[i].forward_ms for f in fit.encoders),
                    backward_ms=sum(f.plan.stages[i].backward_ms for f in fit.encoders),
                )
            )
        layout = Layout(chains=(), trunk=tuple(fused + llm_stages),
                        p2p_latency_ms=p2p_latency_ms)
        return layout, devices

    chains = []
    for fitted in fit.encoders:
        chain = []
        for i, stage in enumerate(fitted.plan.stages):
            name = f"{fitted.name}/{i}"
            start = fitted.first_gpu + i * fitted.plan.tp
            group = tuple(range(start, start + fitted.plan.tp))
            devices[name] = group
            chain.append(
                SimStage(name=name, device=group[0], forward_ms=stage.forward_ms,
                         backward_ms=stage.backward_ms)
            )
        chains.append(tuple(chain))
    layout = Layout(chains=tuple(chains), trunk=tuple(llm_stages),
                    p2p_latency_ms=p2p_latency_ms)
    return layout, devices


def _evaluate(
    candidate: LLMCandidate,
    fit: EncoderFit,
    cluster: ClusterSpec,
    num_microbatches: int,
    microbatch_size: int,
    p2p_latency_ms: float,
    optimizer_multiplier: float,
) -> _Evaluation:
    layout, devices = _build_layout(candidate, fit, cluster, p2p_latency_ms)
    k_if = inflight_microbatches(layout)
    trace = simulate_1f1b(layout, num_microbatches)

    def stage_memory(stages: Sequence[Stage], sim_name: str) -> tuple[int, int]:
        model_bytes = 0
        data_bytes = 0
        for stage in stages:
            est = estimate_memory(stage, k_if[sim_name], optimizer_multiplier)
            model_bytes += est.model_bytes
            data_bytes += est.data_bytes
        return model_bytes, data_bytes

    worst_overflow = -cluster.gpu_memory_bytes
    worst_stage = ""
    modules = []

    def overflow(total: int, sim_name: str) -> None:
        nonlocal worst_overflow, worst_stage
        over = total - cluster.gpu_memory_bytes
        if over > worst_overflow:
            worst_overflow = over
            worst_stage = sim_name

    for fitted in fit.encoders:
        planned = []
        for i, stage in enumerate(fitted.plan.stages):
            sim_name = (
                f"encoders/{i}" if fit.mode == COLOCATED else f"{fitted.name}/{i}"
            )
            est = estimate_memory(stage, k_if[sim_name], optimizer_multiplier)
            planned.append(
                PlannedStage(
                    layer_range=stage.layer_range,
                    devices=devices[sim_name],
                    forward_ms=stage.forward_ms,
                    backward_ms=stage.backward_ms,
                    model_bytes=est.model_bytes,
                    data_bytes=est.data_bytes,
                    k_if=k_if[sim_name],
                )
            )
        modules.append(PlannedModule(name=fitted.name, tp=fitted.plan.tp,
                                     stages=tuple(planned)))
    if fit.mode == COLOCATED:
        # the fused stage is the memory unit: all encoders share its devices
        pp = fit.encoders[0].plan.num_stages
        for i in range(pp):
            total_model, total_data = 0, 0
            for fitted in fit.encoders:
                est = estimate_memory(
                    fitted.plan.stages[i], k_if[f"encoders/{i}"], optimizer_multiplier
                )
                total_model += est.model_bytes
                total_data += est.data_bytes
            overflow(total_model + total_data, f"encoders/{i}")
    else:
        for fitted in fit.encoders:
            for i, stage in enumerate(fitted.plan.stages):
                est = estimate_memory(stage, k_if[f"{fitted.name}/{i}"],
                                      optimizer_multiplier)
                overflow(est.model_bytes + est.data_bytes, f"{fitted.name}/{i}")

    llm_planned = []
    for j, stage in enumerate(candidate.plan.stages):
        est = estimate_memory(stage, k_if[f"llm/{j}"], optimizer_multiplier)
        overflow(est.model_bytes + est.data_bytes, f"llm/{j}")
        llm_planned.append(
            PlannedStage(
                layer_range=stage.layer_range,
                devices=devices[f"llm/{j}"],
                forward_ms=stage.forward_ms,
                backward_ms=stage.backward_ms,
                model_bytes=est.model_bytes,
                data_bytes=est.data_bytes,
                k_if=k_if[f"llm/{j}"],
            )
        )
    modules.append(
        PlannedModule(name="llm", tp=candidate.tp, stages=tuple(llm_planned))
    )

    throughput = (
        num_microbatches * microbatch_size / (trace.iteration_time_ms / 1000.0)
    )
    plan = ParallelPlan(
        modality_mode=fit.mode,
        modules=tuple(modules),
        num_microbatches=num_microbatches,
        microbatch_size=microbatch_size,
        iteration_time_ms=trace.iteration_time_ms,
        throughput=throughput,
        bubble_ratio=trace.bubble_ratio,
    )
    return _Evaluation(plan=plan, worst_overflow=worst_overflow, worst_stage=worst_stage)


def _plan_sort_key(plan: ParallelPlan):
    device_vector = tuple(
        dev for module in plan.modules for stage in module.stages for dev in stage.devices
    )
    return (-plan.throughput, plan.total_stages, device_vector, plan.modality_mode)


def _llm_combos(
    model: ModelSpec,
    cluster: ClusterSpec,
    p_llm,
    frozen_unaware: bool,
    optimizer_multiplier: float,
) -> list[LLMCandidate]:
    """Every (nodes, tp, pp) x boundary-variant LLM partition."""
    llm = model.llm
    profiled = set(llm.tp_degrees)
    combos = []
    for n in range(1, cluster.num_nodes):
        gpus = n * cluster.gpus_per_node
        for tp in cluster.tp_degrees:
            if tp not in profiled or gpus % tp:
                continue
            pp = gpus // tp
            if pp > len(llm.layers):
                continue
            for cuts in boundary_variants(llm.layers, llm.frozen, p_llm, pp, tp):
                plan = stage_plan_from_boundaries(
                    llm.layers, llm.frozen, p_llm, cuts, tp,
                    modules=(llm.name,),
                    optimizer_multiplier=optimizer_multiplier,
                    frozen_unaware=frozen_unaware,
                )
                combos.append(LLMCandidate(nodes=n, tp=tp, pp=pp, plan=plan))
    return combos


def _encoder_placements(
    model: ModelSpec,
    chains: dict[str, tuple],
    mode: str,
    pool: int,
    cluster: ClusterSpec,
    frozen_unaware: bool,
    optimizer_multiplier: float,
) -> list[EncoderFit]:
    """Every encoder configuration of one mode that fits the device pool."""
    names = [stack.name for stack in model.encoders]
    fits: list[EncoderFit] = []

    def build_plans(selected: dict[str, tuple[int, int]], variant: bool):
        plans = {}
        for name, (tp, pp) in selected.items():
            layers, frozen, p = chains[name]
            variants = boundary_variants(layers, frozen, p, pp, tp)
            cuts = variants[-1] if variant and len(variants) > 1 else variants[0]
            plans[name] = stage_plan_from_boundaries(
                layers, frozen, p, cuts, tp,
                modules=(name,),
                optimizer_multiplier=optimizer_multiplier,
                frozen_unaware=frozen_unaware,
            )
        return plans

    if mode == COLOCATED:
        degrees = set(cluster.tp_degrees)
        for stack in model.encoders:
            degrees &= set(stack.encoder.tp_degrees) & set(stack.projector.tp_degrees)
        max_pp = min(len(chains[name][0]) for name in names)
        for tp in sorted(degrees):
            for pp in range(1, max_pp + 1):
                if tp * pp > pool:
                    continue
                seen = set()
                for variant in (False, True):
                    plans = build_plans({name: (tp, pp) for name in names}, variant)
                    key = tuple(plans[name].boundaries for name in names)
                    if key in seen:
                        continue
                    seen.add(key)
                    fits.append(
                        EncoderFit(
                            mode=COLOCATED,
                            encoders=tuple(
                                FittedEncoder(name=name, plan=plans[name], first_gpu=0)
                                for name in names
                            ),
                        )
                    )
        return fits

    order = _packing_order(model, chains)
    per_encoder_options = []
    for name in order:
        layers, _, _ = chains[name]
        degrees = set(cluster.tp_degrees)
        for layer in layers:
            degrees &= set(layer.forward_time)
        options = [
            (tp, pp)
            for tp in sorted(degrees)
            for pp in range(1, len(layers) + 1)
            if tp * pp <= pool
        ]
        if not options:
            return []
        per_encoder_options.append(options)

    for combo in itertools.product(*per_encoder_options):
        # place in packing order with TP-group alignment
        offset = 0
        placement = {}
        for name, (tp, pp) in zip(order, combo):
            aligned = -(-offset // tp) * tp
            if aligned + tp * pp > pool:
                placement = None
                break
            placement[name] = aligned
            offset = aligned + tp * pp
        if placement is None:
            continue
        selected = dict(zip(order, combo))
        seen = set()
        for variant in (False, True):
            plans = build_plans(selected, variant)
            key = tuple(plans[name].boundaries for name in names)
            if key in seen:
                continue
            seen.add(key)
            fits.append(
                EncoderFit(
                    mode=PARALLEL,
                    encoders=tuple(
                        FittedEncoder(
                            name=name, plan=plans[name], first_gpu=placement[name]
                        )
                        for name in names
                    ),
                )
            )
    return fits


def plan(
    model: ModelSpec,
    cluster: ClusterSpec,
    num_microbatches: int,
    microbatch_size: int,
    p2p_latency_ms: float = 0.0,
    optimizer_multiplier: float = DEFAULT_OPTIMIZER_MULTIPLIER,
    frozen_unaware: bool = False,
) -> ParallelPlan:
    """Search all glued configurations and return the throughput argmax.

    Raises :class:`NoFeasiblePlanError` when nothing fits, naming the
    tightest memory violation observed.
    """
    if num_microbatches < 1 or microbatch_size < 1:
        raise ValueError("num_microbatches and microbatch_size must be >= 1")
    cluster.validate()
    model.validate()
    trainability = compute_trainability(model)
    chains = _chain_flags(model, trainability)
    candidates = _llm_combos(
        model, cluster, trainability.of(model.llm.name),
        frozen_unaware, optimizer_multiplier,
    )
    if not candidates:
        raise NoFeasiblePlanError(
            "no feasible (tp, pp) combination for the LLM on this cluster"
        )

    evaluations: list[_Evaluation] = []
    infeasible: list[_Evaluation] = []
    placements_cache: dict[tuple[str, int], list[EncoderFit]] = {}
    for candidate in candidates:
        pool = (cluster.num_nodes - candidate.nodes) * cluster.gpus_per_node
        for mode in MODES:
            cache_key = (mode, pool)
            if cache_key not in placements_cache:
                placements_cache[cache_key] = _encoder_placements(
                    model, chains, mode, pool, cluster,
                    frozen_unaware, optimizer_multiplier,
                )
            for fit in placements_cache[cache_key]:
                evaluation = _evaluate(
                    candidate, fit, cluster, num_microbatches, microbatch_size,
                    p2p_latency_ms, optimizer_multiplier,
                )
                (evaluations if evaluation.feasible else infeasible).append(evaluation)

    if not evaluations:
        if infeasible:
            tightest = min(infeasible, key=lambda e: e.worst_overflow)
            raise NoFeasiblePlanError(
                f"no feasible plan: every configuration exceeds GPU memory; "
                f"tightest is stage {tightest.worst_stage} over by "
                f"{tightest.worst_overflow} bytes"
            )
        raise NoFeasiblePlanError("no feasible plan: encoders fit nowhere")

    best = min(evaluations, key=lambda e: _plan_sort_key(e.plan))
    return best.plan


# --- plan documents and re-evaluation --------------------------------------

def plan_to_doc(plan: ParallelPlan) -> dict:
    return {
        "schema_version": PLAN_SCHEMA_VERSION,
        "modality_mode": plan.modality_mode,
        "num_microbatches": plan.num_microbatches,
        "microbatch_size": plan.microbatch_size,
        "modules": [
            {
                "name": module.name,
                "tp": module.tp,
                "stages": [
                    {
                        "layer_range": list(stage.layer_range),
                        "devices": list(stage.devices),
                        "fwd_ms": stage.forward_ms,
                        "bwd_ms": stage.backward_ms,
                        "model_bytes": stage.model_bytes,
                        "data_bytes": stage.data_bytes,
                        "k_if": stage.k_if,
                    }
                    for stage in module.stages
                ],
            }
            for module in plan.modules
        ],
        "iteration_time_ms": plan.iteration_time_ms,
        "throughput": plan.throughput,
        "bubble_ratio": plan.bubble_ratio,
    }


def plan_from_doc(doc: dict) -> ParallelPlan:
    try:
        modules = tuple(
            PlannedModule(
                name=str(m["name"]),
                tp=int(m["tp"]),
                stages=tuple(
                    PlannedStage(
                        layer_range=(int(s["layer_range"][0]), int(s["layer_range"][1])),
                        devices=tuple(int(d) for d in s["devices"]),
                        forward_ms=float(s["fwd_ms"]),
                        backward_ms=float(s["bwd_ms"]),
                        model_bytes=int(s["model_bytes"]),
                        data_bytes=int(s["data_bytes"]),
                        k_if=int(s["k_if"]),
                    )
                    for s in m["stages"]
                ),
            )
            for m in doc["modules"]
        )
        return ParallelPlan(
            modality_mode=str(doc["modality_mode"]),
            modules=modules,
            num_microbatches=int(doc["num_microbatches"]),
            microbatch_size=int(doc["microbatch_size"]),
            iteration_time_ms=float(doc["iteration_time_ms"]),
            throughput=float(doc["throughput"]),
            bubble_ratio=float(doc["bubble_ratio"]),
        )
    except (KeyError, TypeError, ValueError, IndexError) as exc:
        raise ValueError(f"malformed plan document: {exc}") from exc


def load_plan(path: str) -> ParallelPlan:
    with open(path, "r", encoding="utf-8") as fh:
        return plan_from_doc(json.load(fh))


def dump_plan(plan: ParallelPlan, path: str) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(plan_to_doc(plan), fh, indent=2, sort_keys=True)
        fh.write("\n")


def layout_from_plan(plan: ParallelPlan, p2p_latency_ms: float = 0.0) -> Layout:
    """Rebuild the simulator's stage graph from a plan document."""
    encoder_modules = [m for m in plan.modules if m.name != "llm"]
    llm_module = plan.module("llm")
    llm_stages = tuple(
        SimStage(name=f"llm/{j}", device=stage.devices[0],
                 forward_ms=stage.forward_ms, backward_ms=stage.backward_ms)
        for j, stage in enumerate(llm_module.stages)
    )
    if plan.modality_mode == COLOCATED:
        if encoder_modules:
            pp = len(encoder_modules[0].stages)
            for m in encoder_modules[1:]:
                if len(m.stages) != pp or any(
                    a.devices != b.devices
                    for a, b in zip(m.stages, encoder_modules[0].stages)
                ):
                    raise ValueError(
                        "malformed plan document: colocated encoder modules "
                        "must share stage count and devices"
                    )
            fused = tuple(
                SimStage(
                    name=f"encoders/{i}",
                    device=encoder_modules[0].stages[i].devices[0],
                    forward_ms=sum(m.stages[i].forward_ms for m in encoder_modules),
                    backward_ms=sum(m.stages[i].backward_ms for m in encoder_modules),
                )
                for i in range(pp)
            )
        else:
            fused = ()
        return Layout(chains=(), trunk=fused + llm_stages,
                      p2p_latency_ms=p2p_latency_ms)
    chains = tuple(
        tuple(
            SimStage(name=f"{m.name}/{i}", device=stage.devices[0],
                     forward_ms=stage.forward_ms, backward_ms=stage.backward_ms)
            for i, stage in enumerate(m.stages)
        )
        for m in encoder_modules
    )
    return Layout(chains=chains, trunk=llm_stages, p2p_latency_ms=p2p_latency_ms)


def simulate_plan(plan: ParallelPlan, num_microbatches: int | None = None,
                  p2p_latency_ms: float = 0.0) -> ScheduleTrace:
    """Simulate a plan document's layout with its recorded stage times."""
    layout = layout_from_plan(plan, p2p_latency_ms=p2p_latency_ms)
    return simulate_1f1b(layout, num_microbatches or plan.num_microbatches)


def recost_plan(model: ModelSpec, plan: ParallelPlan) -> ParallelPlan:
    """Recompute stage times from the model with true frozen-aware costs.

    Placement, ranges, and TP degrees are kept; only the per-stage forward
    and backward times (and derived summary numbers, via re-simulation) are
    refreshed. This is how a plan produced under the frozen-unaware flag is
    judged at its real cost.
    """
    trainability = compute_trainability(model)
    chains = _chain_flags(model, trainability)

    new_modules = []
    for module in plan.modules:
        if module.name == "llm":
            layers, frozen = model.llm.layers, model.llm.frozen
            p = trainability.of(model.llm.name)
        else:
            layers, frozen, p = chains[module.name]
        stages = []
        for stage in module.stages:
            lo, hi = stage.layer_range
            fwd = sum(layer.forward_time[module.tp] for layer in layers[lo:hi])
            bwd = sum(
                effective_backward_time(layer, f, pq, module.tp)
                for layer, f, pq in zip(layers[lo:hi], frozen[lo:hi], p[lo:hi])
            )
            stages.append(replace(stage, forward_ms=fwd, backward_ms=bwd))
        new_modules.append(replace(module, stages=tuple(stages)))

    recosted = replace(plan, modules=tuple(new_modules))
    trace = simulate_plan(recosted)
    throughput = (
        plan.num_microbatches * plan.microbatch_size
        / (trace.iteration_time_ms / 1000.0)
    )
    return replace(
        recosted,
        iteration_time_ms=trace.iteration_time_ms,
        throughput=throughput,
        bubble_ratio=trace.bubble_ratio,
    )


def parse_cluster_spec(doc: dict) -> ClusterSpec:
    if not isinstance(doc, dict):
        raise ClusterError("cluster document must be an object")
    for fld in ("num_nodes", "gpus_per_node", "gpu_memory_bytes"):
        if fld not in doc:
            raise ClusterError(f"cluster document: missing field {fld!r}")
    allowed = doc.get("allowed_tp")
    cluster = ClusterSpec(
        num_nodes=int(doc["num_nodes"]),
        gpus_per_node=int(doc["gpus_per_node"]),
        gpu_memory_bytes=int(doc["gpu_memory_bytes"]),
        allowed_tp=tuple(int(t) for t in allowed) if allowed is not None else None,
    )
    cluster.validate()
    return cluster


def load_cluster_spec(path: str) -> ClusterSpec:
    with open(path, "r", encoding="utf-8") as fh:
        return parse_cluster_spec(json.load(fh))
