"""Deterministic SVG timeline rendering of schedule traces.

One row per device (encoder chains above the trunk, matching trace order),
forward and backward tasks in distinct fills, microbatch index printed on
each task wide enough to hold it. Output bytes depend only on the trace.
"""

from __future__ import annotations

from .schedule import FORWARD, ScheduleTrace

ROW_HEIGHT = 28
ROW_GAP = 8
MARGIN_LEFT = 70
MARGIN_TOP = 24
MARGIN_BOTTOM = 28
WIDTH = 960

FORWARD_FILL = "#4c78a8"
BACKWARD_FILL = "#f58518"


def _fmt(x: float) -> str:
    return f"{x:.3f}".rstrip("0").rstrip(".")


def render_gantt(trace: ScheduleTrace) -> str:
    """Render the trace as an SVG document string."""
    rows = trace.devices
    height = MARGIN_TOP + len(rows) * (ROW_HEIGHT + ROW_GAP) + MARGIN_BOTTOM
    span = max(trace.iteration_time_ms, 1e-9)
    scale = (WIDTH - MARGIN_LEFT - 10) / span

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{height}" '
        f'font-family="monospace" font-size="11">',
        f'<text x="{MARGIN_LEFT}" y="14">iteration {_fmt(trace.iteration_time_ms)} ms, '
        f'bubble {_fmt(trace.bubble_ratio)}</text>',
    ]

    row_y = {d: MARGIN_TOP + i * (ROW_HEIGHT + ROW_GAP) for i, d in enumerate(rows)}
    for d, y in row_y.items():
        parts.append(
            f'<text x="4" y="{y + ROW_HEIGHT // 2 + 4}">dev {d}</text>'
        )
        parts.append(
            f'<line x1="{MARGIN_LEFT}" y1="{y + ROW_HEIGHT}" x2="{WIDTH - 10}" '
            f'y2="{y + ROW_HEIGHT}" stroke="#ddd"/>'
        )

    for ev in trace.events:
        x = MARGIN_LEFT + ev.start_ms * scale
        w = max((ev.end_ms - ev.start_ms) * scale, 0.5)
        y = row_y[ev.device]
        fill = FORWARD_FILL if ev.kind == FORWARD else BACKWARD_FILL
        parts.append(
            f'<rect x="{_fmt(x)}" y="{y}" width="{_fmt(w)}" height="{ROW_HEIGHT}" '
            f'fill="{fill}" stroke="#fff" stroke-width="0.5">'
            f'<title>{ev.stage} {ev.kind} mb{ev.microbatch} '
            f'[{_fmt(ev.start_ms)}, {_fmt(ev.end_ms)}]</title></rect>'
        )
        if w >= 14:
            parts.append(
                f'<text x="{_fmt(x + w / 2)}" y="{y + ROW_HEIGHT // 2 + 4}" '
                f'text-anchor="middle" fill="#fff">{ev.microbatch}</text>'
            )

    axis_y = MARGIN_TOP + len(rows) * (ROW_HEIGHT + ROW_GAP) + 4
    parts.append(
        f'<line x1="{MARGIN_LEFT}" y1="{axis_y}" x2="{WIDTH - 10}" y2="{axis_y}" '
        f'stroke="#333"/>'
    )
    parts.append(f'<text x="{MARGIN_LEFT}" y="{axis_y + 16}">0</text>')
    parts.append(
        f'<text x="{WIDTH - 10}" y="{axis_y + 16}" text-anchor="end">'
        f'{_fmt(trace.iteration_time_ms)} ms</text>'
    )
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def write_gantt(trace: ScheduleTrace, path: str) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(render_gantt(trace))
