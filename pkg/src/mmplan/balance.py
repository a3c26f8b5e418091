"""Workload-balanced context parallelism: inter-GPU and intra-GPU schedulers.

Inter-GPU distribution assigns query blocks to GPUs: ``lpt_distribute`` is
the production policy (longest-processing-time-first), ``zigzag_distribute``
is the causal-attention baseline, and ``ilp_optimal`` is an exact
branch-and-bound oracle for small instances.

Intra-GPU scheduling models how one GPU's blocks map onto compute units:
each block's work is split into subblocks of at most ``s`` key blocks and
list-scheduled greedily, with a linear cost model for the aggregation pass
that recombines split blocks.
"""

from __future__ import annotations

import heapq
from dataclasses import dataclass
from typing import Sequence

DEFAULT_ALPHA = 0.25
DEFAULT_BETA = 0.5

ILP_MAX_BLOCKS = 14
ILP_MAX_GPUS = 4


class BudgetError(ValueError):
    """Raised when an exact-search instance exceeds the oracle budget."""


@dataclass(frozen=True)
class BlockAssignment:
    """Query blocks mapped to GPUs, with per-GPU load bookkeeping."""

    gpu_blocks: tuple[tuple[int, ...], ...]
    loads: tuple[int, ...]

    @property
    def makespan(self) -> int:
        return max(self.loads)

    @property
    def imbalance(self) -> float:
        """Makespan relative to the perfectly balanced load."""
        total = sum(self.loads)
        if total == 0:
            return 1.0
        return self.makespan / (total / len(self.loads))


def _assignment(gpu_blocks: Sequence[Sequence[int]], workloads: Sequence[int]) -> BlockAssignment:
    return BlockAssignment(
        gpu_blocks=tuple(tuple(blocks) for blocks in gpu_blocks),
        loads=tuple(sum(workloads[b] for b in blocks) for blocks in gpu_blocks),
    )


def lpt_distribute(workloads: Sequence[int], num_gpus: int) -> BlockAssignment:
    """Assign blocks to GPUs, heaviest first, each to the least-loaded GPU.

    Ties break deterministically: equal workloads by lower block id, equal
    loads by lower GPU id.
    """
    if num_gpus < 1:
        raise ValueError("num_gpus must be >= 1")
    if not workloads:
        raise ValueError("workloads must be nonempty")
    order = sorted(range(len(workloads)), key=lambda b: (-workloads[b], b))
    heap = [(0, g) for g in range(num_gpus)]
    heapq.heapify(heap)
    gpu_blocks: list[list[int]] = [[] for _ in range(num_gpus)]
    for b in order:
        load, g = heapq.heappop(heap)
        gpu_blocks[g].append(b)
        heapq.heappush(heap, (load + workloads[b], g))
    return _assignment(gpu_blocks, workloads)


def zigzag_distribute(workloads: Sequence[int], num_gpus: int) -> BlockAssignment:
    """The causal-attention baseline: GPU i gets chunks i and 2G-1-i.

    The block list is cut into 2G contiguous chunks (counts as equal as
    possible; trailing chunks are empty when there are fewer blocks than
    chunks, which is the zero-workload padding case).
    """
    if num_gpus < 1:
        raise ValueError("num_gpus must be >= 1")
    if not workloads:
        raise ValueError("workloads must be nonempty")
    n = len(workloads)
    num_chunks = 2 * num_gpus
    base, extra = divmod(n, num_chunks)
    chunks: list[list[int]] = []
    cursor = 0
    for i in range(num_chunks):
        size = base + (1 if i < extra else 0)
        chunks.append(list(range(cursor, cursor + size)))
        cursor += size
    gpu_blocks = [
        chunks[i] + chunks[num_chunks - 1 - i] for i in range(num_gpus)
    ]
    return _assignment(gpu_blocks, workloads)


def _feasible(jobs: Sequence[int], loads: list[int], limit: int) -> bool:
    """Can the remaining jobs be packed so no load exceeds ``limit``?"""
    if not jobs:
        return True
    job, rest = jobs[0], jobs[1:]
    tried: set[int] = set()
    for g in range(len(loads)):
        if loads[g] in tried:  # identical loads are symmetric
            continue
        tried.add(loads[g])
        if loads[g] + job <= limit:
            loads[g] += job
            if _feasible(rest, loads, limit):
                loads[g] -= job
                return True
            loads[g] -= job
    return False


def ilp_optimal(workloads: Sequence[int], num_gpus: int) -> BlockAssignment:
    """Provably optimal makespan assignment (exact search, small instances).

    Vanilla makespan minimization: every block assigned exactly once, GPU
    loads bounded by the objective. Branch-and-bound finds the optimal
    value, then a second pass extracts the lexicographically smallest
    assignment vector achieving it (block id -> lowest feasible GPU id).
    """
    if not workloads:
        raise ValueError("workloads must be nonempty")
    if len(workloads) > ILP_MAX_BLOCKS or num_gpus > ILP_MAX_GPUS:
        raise BudgetError(
            f"instance ({len(workloads)} blocks, {num_gpus} GPUs) exceeds the "
            f"exact-search budget ({ILP_MAX_BLOCKS} blocks, {ILP_MAX_GPUS} GPUs)"
        )
    if num_gpus < 1:
        raise ValueError("num_gpus must be >= 1")

    jobs = sorted(workloads, reverse=True)
    total = sum(jobs)
    lower = max(jobs[0], -(-total // num_gpus))

    # any assignment has makespan <= total, so this bound is never wrong
    best = total

    def search(idx: int, loads: list[int]) -> None:
        nonlocal best
        if best == lower:
            return
        if idx == len(jobs):
            best = min(best, max(loads))
            return
        tried: set[int] = set()
        for g in range(num_gpus):
            if loads[g] in tried:  # identical loads are symmetric
                continue
            tried.add(loads[g])
            if loads[g] + jobs[idx] >= best:
                continue
            loads[g] += jobs[idx]
            search(idx + 1, loads)
            loads[g] -= jobs[idx]

    search(0, [0] * num_gpus)
    optimum = best

    # lexicographic extraction in block-id order against the proven optimum
    order_by_size = sorted(range(len(workloads)), key=lambda b: (-workloads[b], b))
    assignment = [-1] * len(workloads)
    loads = [0] * num_gpus
    for b in range(len(workloads)):
        placed = False
        for g in range(num_gpus):
            if loads[g] + workloads[b] > optimum:
                continue
            loads[g] += workloads[b]
            assignment[b] = g
            remaining = [workloads[j] for j in order_by_size if assignment[j] == -1]
            if _feasible(remaining, loads, optimum):
                placed = True
                break
            loads[g] -= workloads[b]
            assignment[b] = -1
        if not placed:  # pragma: no cover - optimum is feasible by construction
            raise RuntimeError("internal error: optimal makespan not extractable")
    gpu_blocks: list[list[int]] = [[] for _ in range(num_gpus)]
    for b, g in enumerate(assignment):
        gpu_blocks[g].append(b)
    return _assignment(gpu_blocks, workloads)


@dataclass(frozen=True)
class Subblock:
    """A slice of one query block's key-block work, at most ``s`` blocks."""

    block: int
    index: int
    size: int


@dataclass(frozen=True)
class IntraGpuSchedule:
    """Subblocks of one GPU's query blocks scheduled onto compute units."""

    unit_tasks: tuple[tuple[Subblock, ...], ...]
    compute_makespan: int
    aggregation_cost: float

    @property
    def total(self) -> float:
        return self.compute_makespan + self.aggregation_cost


def split_block(workload: int, subblock_size: int) -> list[int]:
    """Sizes of the ceil(W/s) subblocks: all ``s`` except one remainder."""
    full, rem = divmod(workload, subblock_size)
    return [subblock_size] * full + ([rem] if rem else [])


def intra_schedule(
    workloads: Sequence[int],
    compute_units: int,
    subblock_size: int,
    alpha: float = DEFAULT_ALPHA,
    beta: float = DEFAULT_BETA,
) -> IntraGpuSchedule:
    """Split blocks into subblocks and list-schedule them onto compute units.

    Subblocks go to the least-loaded unit in descending size order. Every
    block split into k >= 2 subblocks pays ``alpha * (k - 1) + beta`` for
    the aggregation pass that recombines its partial outputs; unsplit
    blocks pay nothing.
    """
    if compute_units < 1:
        raise ValueError("compute_units must be >= 1")
    if subblock_size < 1:
        raise ValueError("subblock_size must be >= 1")

    pieces: list[Subblock] = []
    aggregation = 0.0
    for b, w in enumerate(workloads):
        sizes = split_block(w, subblock_size)
        pieces.extend(Subblock(block=b, index=i, size=sz) for i, sz in enumerate(sizes))
        if len(sizes) >= 2:
            aggregation += alpha * (len(sizes) - 1) + beta

    pieces.sort(key=lambda sb: (-sb.size, sb.block, sb.index))
    heap = [(0, u) for u in range(compute_units)]
    heapq.heapify(heap)
    unit_tasks: list[list[Subblock]] = [[] for _ in range(compute_units)]
    loads = [0] * compute_units
    for piece in pieces:
        load, u = heapq.heappop(heap)
        unit_tasks[u].append(piece)
        loads[u] = load + piece.size
        heapq.heappush(heap, (loads[u], u))

    return IntraGpuSchedule(
        unit_tasks=tuple(tuple(tasks) for tasks in unit_tasks),
        compute_makespan=max(loads),
        aggregation_cost=aggregation,
    )


POLICIES = ("causal", "inter_only", "intra_only", "balanced")


def balance_report(
    workloads: Sequence[int],
    num_gpus: int,
    compute_units: int,
    subblock_size: int,
    alpha: float = DEFAULT_ALPHA,
    beta: float = DEFAULT_BETA,
) -> dict:
    """Compare the four distribution policies on one mask's block workloads.

    Policies cross inter-GPU distribution {zigzag, LPT} with intra-GPU
    scheduling {whole-block, subblocked}: ``causal`` is zigzag+whole-block,
    ``inter_only`` LPT+whole-block, ``intra_only`` zigzag+subblocked, and
    ``balanced`` LPT+subblocked.
    """
    whole = max(workloads) if workloads else 1
    whole = max(whole, 1)
    policies = {
        "causal": (zigzag_distribute, whole),
        "inter_only": (lpt_distribute, whole),
        "intra_only": (zigzag_distribute, subblock_size),
        "balanced": (lpt_distribute, subblock_size),
    }
    report: dict[str, dict] = {}
    for name, (distribute, s) in policies.items():
        assignment = distribute(workloads, num_gpus)
        per_gpu = [
            intra_schedule(
                [workloads[b] for b in blocks], compute_units, s, alpha, beta
            )
            for blocks in assignment.gpu_blocks
        ]
        report[name] = {
            "loads": list(assignment.loads),
            "makespan": assignment.makespan,
            "imbalance": assignment.imbalance,
            "compute_makespan": max(sched.compute_makespan for sched in per_gpu),
            "aggregation_cost": max(sched.aggregation_cost for sched in per_gpu),
            "total": max(sched.total for sched in per_gpu),
        }
    return report
