"""Plain-text command timelines (used for the golden four-request scenario)."""
from __future__ import annotations

from typing import Iterable

from .dram import Command, CommandKind


def render_timeline(title: str, commands: Iterable[Command], span: int) -> str:
    lines = [f"# {title}", f"{'cycle':>5} {'kind':<8} {'bank':>4} {'subarray':>8} {'row':>4}"]
    for c in commands:
        sa = "-" if c.kind == CommandKind.PRE_ALL else str(c.subarray)
        row = str(c.row) if c.row >= 0 else "-"
        lines.append(f"{c.cycle:>5} {c.kind.name:<8} {c.bank:>4} {sa:>8} {row:>4}")
    lines.append(f"span {span}")
    return "\n".join(lines) + "\n"


def render_result(title: str, result) -> str:
    return render_timeline(title, result.command_list(), result.span)
