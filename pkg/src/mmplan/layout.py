"""Pipeline layouts: the stage graph a schedule runs on.

A layout is either a plain chain (``trunk`` only, the encoder-colocated
case) or a fan-in graph of encoder chains joining a shared trunk of LLM
stages. In-flight microbatch counts are derived here by viewing the graph
as one sequential pipeline per encoder chain.
"""

from __future__ import annotations

from dataclasses import dataclass


class LayoutError(ValueError):
    """Raised for malformed pipeline layouts."""


@dataclass(frozen=True)
class SimStage:
    """One pipeline stage as the simulator sees it."""

    name: str
    device: int
    forward_ms: float
    backward_ms: float


@dataclass(frozen=True)
class Layout:
    """Stage graph: zero or more encoder chains feeding a trunk."""

    chains: tuple[tuple[SimStage, ...], ...]
    trunk: tuple[SimStage, ...]
    p2p_latency_ms: float = 0.0

    def validate(self) -> None:
        if not self.trunk and not self.chains:
            raise LayoutError("layout has no stages")
        if self.chains and not self.trunk:
            raise LayoutError("encoder chains need a trunk to join")
        names = [s.name for s in self.all_stages()]
        if len(set(names)) != len(names):
            raise LayoutError(f"duplicate stage names: {names}")

    def all_stages(self) -> tuple[SimStage, ...]:
        flat: list[SimStage] = []
        for chain in self.chains:
            flat.extend(chain)
        flat.extend(self.trunk)
        return tuple(flat)

    def devices(self) -> tuple[int, ...]:
        """Devices in display order (encoder chains above the trunk)."""
        seen: dict[int, None] = {}
        for stage in self.all_stages():
            seen.setdefault(stage.device, None)
        return tuple(seen)


def chain_layout(
    stages: tuple[SimStage, ...] | list[SimStage], p2p_latency_ms: float = 0.0
) -> Layout:
    """A plain chain pipeline (single module or colocated encoders)."""
    return Layout(chains=(), trunk=tuple(stages), p2p_latency_ms=p2p_latency_ms)


def inflight_microbatches(layout: Layout) -> dict[str, int]:
    """In-flight microbatch count per stage under steady-state 1F1B.

    Each encoder chain plus the trunk forms one sequential pipeline of N
    stages in which position p holds N - p microbatches. Trunk stages are
    shared by all pipelines; the count every pipeline assigns them must
    agree, which is asserted rather than assumed.
    """
    layout.validate()
    k_if: dict[str, int] = {}
    trunk_len = len(layout.trunk)

    if not layout.chains:
        n = trunk_len
        for p, stage in enumerate(layout.trunk):
            k_if[stage.name] = n - p
        return k_if

    trunk_counts: dict[str, set[int]] = {s.name: set() for s in layout.trunk}
    for chain in layout.chains:
        n = len(chain) + trunk_len
        for p, stage in enumerate(chain):
            k_if[stage.name] = n - p
        for j, stage in enumerate(layout.trunk):
            trunk_counts[stage.name].add(n - len(chain) - j)

    for stage in layout.trunk:
        counts = trunk_counts[stage.name]
        if len(counts) != 1:
            raise LayoutError(
                f"inconsistent in-flight count for trunk stage {stage.name}: "
                f"{sorted(counts)}"
            )
        k_if[stage.name] = counts.pop()
    return k_if
