"""Discrete-event simulation of 1F1B pipeline schedules on stage graphs.

Each stage executes the classic 1F1B task order: ``min(M, k_if - 1)``
warm-up forwards, then strict forward/backward alternation, then cool-down
backwards. The event loop only resolves *when* tasks run, honoring
dataflow dependencies across the stage graph; the order on each device is
fixed up front, which is what makes the in-flight bound exactly ``k_if``
for any stage durations.

Backward tasks are scheduled even with zero duration so that fully frozen
stages still propagate the backward dependency chain.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

from .layout import Layout, SimStage, inflight_microbatches

TRACE_SCHEMA_VERSION = 1

FORWARD = "forward"
BACKWARD = "backward"


class SimulationError(ValueError):
    """Raised for inputs the simulator cannot schedule."""


@dataclass(frozen=True)
class TraceEvent:
    device: int
    kind: str
    stage: str
    microbatch: int
    start_ms: float
    end_ms: float


@dataclass(frozen=True)
class ScheduleTrace:
    """Timestamped tasks per device plus iteration-level summary numbers."""

    events: tuple[TraceEvent, ...]  # per-device execution order, devices in display order
    devices: tuple[int, ...]
    iteration_time_ms: float
    bubble_ratio: float
    peak_inflight: dict[str, int]

    def events_by_device(self) -> dict[int, list[TraceEvent]]:
        grouped: dict[int, list[TraceEvent]] = {d: [] for d in self.devices}
        for ev in self.events:
            grouped[ev.device].append(ev)
        return grouped


@dataclass
class _Task:
    stage: SimStage
    kind: str
    microbatch: int
    deps: list[tuple[int, bool]]  # (task id, crosses a stage boundary)
    release_ms: float = 0.0
    start_ms: float = -1.0
    end_ms: float = -1.0

    @property
    def scheduled(self) -> bool:
        return self.start_ms >= 0.0


def _stage_task_order(num_microbatches: int, k_if: int) -> list[tuple[str, int]]:
    """The fixed 1F1B task sequence of one stage."""
    warmup = min(num_microbatches, k_if - 1)
    order: list[tuple[str, int]] = [(FORWARD, m) for m in range(warmup)]
    for m in range(warmup, num_microbatches):
        order.append((FORWARD, m))
        order.append((BACKWARD, m - warmup))
    order.extend((BACKWARD, m) for m in range(num_microbatches - warmup, num_microbatches))
    return order


def simulate_1f1b(layout: Layout, num_microbatches: int) -> ScheduleTrace:
    """Simulate one training iteration of the layout under 1F1B.

    Encoder chains shallower than the deepest one delay their first forward
    so microbatch 0 reaches the trunk join exactly when every sibling does,
    matching the staggered warm-up of graph pipelines.
    """
    if num_microbatches < 1:
        raise SimulationError("num_microbatches must be >= 1")
    layout.validate()
    k_if = inflight_microbatches(layout)
    p2p = layout.p2p_latency_ms

    # forward predecessors / backward successors per stage
    fwd_pred: dict[str, list[SimStage]] = {}
    bwd_succ: dict[str, list[SimStage]] = {}
    for chain in layout.chains:
        for idx, stage in enumerate(chain):
            fwd_pred[stage.name] = [chain[idx - 1]] if idx > 0 else []
            bwd_succ[stage.name] = [chain[idx + 1]] if idx + 1 < len(chain) else [layout.trunk[0]]
    for idx, stage in enumerate(layout.trunk):
        if idx == 0:
            fwd_pred[stage.name] = [chain[-1] for chain in layout.chains]
        else:
            fwd_pred[stage.name] = [layout.trunk[idx - 1]]
        bwd_succ[stage.name] = [layout.trunk[idx + 1]] if idx + 1 < len(layout.trunk) else []

    # microbatch-0 alignment: delay shallow chains to the deepest join time
    release: dict[str, float] = {}
    if layout.chains:
        paths = [sum(s.forward_ms for s in chain) + p2p * len(chain) for chain in layout.chains]
        deepest = max(paths)
        for chain, path in zip(layout.chains, paths):
            release[chain[0].name] = deepest - path

    tasks: list[_Task] = []
    task_id: dict[tuple[str, str, int], int] = {}
    per_device_order: dict[int, list[int]] = {}
    for stage in layout.all_stages():
        order = _stage_task_order(num_microbatches, k_if[stage.name])
        for kind, m in order:
            tid = len(tasks)
            tasks.append(_Task(stage=stage, kind=kind, microbatch=m, deps=[]))
            task_id[(stage.name, kind, m)] = tid
            per_device_order.setdefault(stage.device, []).append(tid)

    for (stage_name, kind, m), tid in task_id.items():
        task = tasks[tid]
        stage = task.stage
        if kind == FORWARD:
            for pred in fwd_pred[stage_name]:
                task.deps.append((task_id[(pred.name, FORWARD, m)], True))
            if m == 0 and stage_name in release:
                task.release_ms = release[stage_name]
        else:
            task.deps.append((task_id[(stage_name, FORWARD, m)], False))
            for succ in bwd_succ[stage_name]:
                task.deps.append((task_id[(succ.name, BACKWARD, m)], True))

    # replay each device's fixed order once dependencies resolve
    devices = layout.devices()
    cursor = {d: 0 for d in devices}
    device_free = {d: 0.0 for d in devices}
    remaining = len(tasks)
    while remaining:
        progressed = False
        for d in devices:
            while cursor[d] < len(per_device_order[d]):
                task = tasks[per_device_order[d][cursor[d]]]
                if not all(tasks[dep].scheduled for dep, _ in task.deps):
                    break
                start = max(device_free[d], task.release_ms)
                for dep, crosses in task.deps:
                    bound = tasks[dep].end_ms + (p2p if crosses else 0.0)
                    if bound > start:
                        start = bound
                task.start_ms = start
                duration = task.stage.forward_ms if task.kind == FORWARD else task.stage.backward_ms
                task.end_ms = start + duration
                device_free[d] = task.end_ms
                cursor[d] += 1
                remaining -= 1
                progressed = True
        if not progressed:
            raise SimulationError("deadlock: layout dependency graph is cyclic")

    events = tuple(
        TraceEvent(
            device=d,
            kind=tasks[tid].kind,
            stage=tasks[tid].stage.name,
            microbatch=tasks[tid].microbatch,
            start_ms=tasks[tid].start_ms,
            end_ms=tasks[tid].end_ms,
        )
        for d in devices
        for tid in per_device_order[d]
    )
    iteration = max(ev.end_ms for ev in events)
    busy = {d: 0.0 for d in devices}
    for ev in events:
        busy[ev.device] += ev.end_ms - ev.start_ms
    total_device_time = iteration * len(devices)
    bubble = 0.0
    if total_device_time > 0:
        bubble = sum(iteration - b for b in busy.values()) / total_device_time

    return ScheduleTrace(
        events=events,
        devices=devices,
        iteration_time_ms=iteration,
        bubble_ratio=bubble,
        peak_inflight=_peak_from_events(events),
    )


def _peak_from_events(events) -> dict[str, int]:
    peak: dict[str, int] = {}
    count: dict[str, int] = {}
    for ev in events:
        delta = 1 if ev.kind == FORWARD else -1
        count[ev.stage] = count.get(ev.stage, 0) + delta
        peak[ev.stage] = max(peak.get(ev.stage, 0), count[ev.stage])
    return peak


def measured_peak_inflight(trace: ScheduleTrace) -> dict[str, int]:
    """Peak of (forwards completed - backwards completed) per stage.

    Events of one stage all run on one device, so trace order is execution
    order; a running count over it is the in-flight occupancy.
    """
    return _peak_from_events(trace.events)


def steady_phase_idle(trace: ScheduleTrace) -> dict[int, float]:
    """Idle time per device between its first backward end and last forward start.

    Ramp-up (before the device's first backward completes) and ramp-down
    (after its last forward starts) are excluded; in a globally balanced
    layout the remaining window has no gaps.
    """
    idle: dict[int, float] = {}
    for device, events in trace.events_by_device().items():
        first_bwd_end = None
        last_fwd_start = None
        for ev in events:
            if ev.kind == BACKWARD and first_bwd_end is None:
                first_bwd_end = ev.end_ms
            if ev.kind == FORWARD:
                last_fwd_start = ev.start_ms
        gap = 0.0
        if first_bwd_end is not None and last_fwd_start is not None:
            prev_end = None
            for ev in events:
                if prev_end is not None and ev.start_ms > prev_end:
                    lo = max(prev_end, first_bwd_end)
                    hi = min(ev.start_ms, last_fwd_start)
                    if hi > lo:
                        gap += hi - lo
                prev_end = ev.end_ms
        idle[device] = gap
    return idle


# --- trace documents ------------------------------------------------------

def trace_to_doc(trace: ScheduleTrace) -> dict:
    return {
        "schema_version": TRACE_SCHEMA_VERSION,
        "devices": list(trace.devices),
        "events": [
            {
                "device": ev.device,
                "task_kind": ev.kind,
                "stage": ev.stage,
                "microbatch": ev.microbatch,
                "start_ms": ev.start_ms,
                "end_ms": ev.end_ms,
            }
            for ev in trace.events
        ],
        "summary": {
            "iteration_time_ms": trace.iteration_time_ms,
            "bubble_ratio": trace.bubble_ratio,
            "peak_inflight": dict(sorted(trace.peak_inflight.items())),
        },
    }


def trace_from_doc(doc: dict) -> ScheduleTrace:
    try:
        events = tuple(
            TraceEvent(
                device=int(ev["device"]),
                kind=str(ev["task_kind"]),
                stage=str(ev["stage"]),
                microbatch=int(ev["microbatch"]),
                start_ms=float(ev["start_ms"]),
                end_ms=float(ev["end_ms"]),
            )
            for ev in doc["events"]
        )
        devices = tuple(int(d) for d in doc["devices"])
        summary = doc["summary"]
        trace = ScheduleTrace(
            events=events,
            devices=devices,
            iteration_time_ms=float(summary["iteration_time_ms"]),
            bubble_ratio=float(summary["bubble_ratio"]),
            peak_inflight={},
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise SimulationError(f"malformed trace document: {exc}") from exc
    return ScheduleTrace(
        events=trace.events,
        devices=trace.devices,
        iteration_time_ms=trace.iteration_time_ms,
        bubble_ratio=trace.bubble_ratio,
        peak_inflight=measured_peak_inflight(trace),
    )


def dump_trace(trace: ScheduleTrace, path: str) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(trace_to_doc(trace), fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_trace(path: str) -> ScheduleTrace:
    with open(path, "r", encoding="utf-8") as fh:
        return trace_from_doc(json.load(fh))
