"""Independent checker for recorded command streams.

Pure Python, no numba: replays the stream against the declarative
constraint table from :func:`salpsim.dram.build_timing_table` by checking
every pair of commands inside a sliding window, then separately checks the
four-activation window, data-bus occupancy, command-bus conflicts and the
per-mode bank state machine. None of the fast-path legality kernels are
used here.
"""
from __future__ import annotations

import csv
from collections import defaultdict, deque
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, FrozenSet, Iterable, List, Optional, Sequence, TextIO, Tuple, Union

from .config import Geometry, Mode, TimingParams
from .dram import Command, CommandKind, Constraint, Scope, build_timing_table

K = CommandKind
LOG_HEADER = ("cycle", "kind", "channel", "rank", "bank", "subarray", "row", "column")


@dataclass(frozen=True)
class Violation:
    cycle: int
    rule: str
    second: Command
    first: Optional[Command] = None

    def __str__(self):
        pair = f"{_fmt(self.first)} -> {_fmt(self.second)}" if self.first else _fmt(self.second)
        return f"@{self.cycle} {self.rule}: {pair}"


def _fmt(c: Command) -> str:
    return (f"{c.kind.name}@{c.cycle}(ch{c.channel} r{c.rank} b{c.bank} sa{c.subarray}"
            + (f" row{c.row}" if c.row >= 0 else "") + ")")


def rule_name(c: Constraint) -> str:
    """Name of the timing parameter behind a table entry."""
    p, n, s = c.prev, c.next, c.scope
    if p == K.ACT and n in (K.RD, K.WR, K.SA_SEL):
        return "tRCD"
    if p == K.ACT and n == K.PRE:
        return "tRAS"
    if p == K.PRE and n == K.ACT:
        return "tPA" if s == Scope.OTHER_SUBARRAY else "tRP"
    if p == K.ACT and n == K.ACT:
        return "tRC" if s in (Scope.SAME_SUBARRAY, Scope.SAME_BANK) else "tRRD"
    if p == K.RD and n == K.PRE:
        return "tRTP"
    if p == K.WR and n == K.PRE:
        return "tWR"
    if p == K.WR and n == K.RD and s == Scope.SAME_RANK:
        return "tWTR"
    if p == K.RD and n == K.WR:
        # RD->WR carries both tCCD and tRTW; _rule_names splits them
        return "tRTW"
    if p == K.SA_SEL:
        return "tSCD"
    return "tCCD"


def _rule_names(table: FrozenSet[Constraint]) -> Dict[Constraint, str]:
    names = {c: rule_name(c) for c in table}
    rdwr = [c for c in table if c.prev == K.RD and c.next == K.WR]
    if len(rdwr) == 2:
        lo, hi = sorted(rdwr, key=lambda c: c.min_gap)
        names[lo], names[hi] = "tCCD", "tRTW"
    return names


def _caps(mode: Mode, g: Geometry) -> int:
    if mode is Mode.SALP2:
        return 2
    if mode is Mode.MASA:
        return g.subarrays_per_bank
    return 1


def _related(scope: str, a: Command, sa_a: FrozenSet[int], b: Command, sa_b: FrozenSet[int]) -> bool:
    if scope == Scope.SAME_CHANNEL:
        return a.channel == b.channel
    same_rank = a.channel == b.channel and a.rank == b.rank
    if scope == Scope.SAME_RANK:
        return same_rank
    if scope == Scope.OTHER_BANK:
        return same_rank and a.bank != b.bank
    if not (same_rank and a.bank == b.bank):
        return False
    if scope == Scope.SAME_BANK:
        return True
    if scope == Scope.SAME_SUBARRAY:
        return bool(sa_a & sa_b)
    if scope == Scope.OTHER_SUBARRAY:
        return any(x != y for x in sa_a for y in sa_b)
    raise ValueError(f"unknown scope {scope!r}")


def verify_stream(commands: Iterable[Command], geometry: Geometry, timing: TimingParams,
                  mode: Union[Mode, str]) -> List[Violation]:
    """All rule violations in a time-ordered command stream (empty if legal).

    Coordinates are those the controller drives, so for IDEAL they refer to
    the transformed geometry (more banks, one subarray each).
    """
    mode = Mode.parse(mode)
    g = geometry.ideal() if mode is Mode.IDEAL else geometry
    t = timing
    table = build_timing_table(t, mode)
    names = _rule_names(table)
    by_pair: Dict[Tuple[K, K], List[Constraint]] = defaultdict(list)
    for c in table:
        by_pair[(c.prev, c.next)].append(c)
    horizon = max([c.min_gap for c in table] + [t.tFAW, t.tCL + t.tBL, t.tCWL + t.tBL, 1])
    cap = _caps(mode, g)

    out: List[Violation] = []
    window: deque = deque()  # (cmd, subarray set, table kind)
    open_rows: Dict[Tuple[int, int, int], Dict[int, int]] = defaultdict(dict)
    designated: Dict[Tuple[int, int, int], Optional[int]] = {}
    acts: Dict[Tuple[int, int], deque] = defaultdict(deque)
    bursts: Dict[int, deque] = defaultdict(deque)
    last_cmd: Dict[int, Command] = {}
    prev_cycle = None

    for cmd in commands:
        def flag(rule, other=None):
            out.append(Violation(cmd.cycle, rule, cmd, other))

        if prev_cycle is not None and cmd.cycle < prev_cycle:
            flag("order")
        prev_cycle = cmd.cycle if prev_cycle is None else max(prev_cycle, cmd.cycle)

        if not (0 <= cmd.channel < g.channels and 0 <= cmd.rank < g.ranks_per_channel
                and 0 <= cmd.bank < g.banks_per_rank):
            flag("coordinate")
            continue
        if cmd.kind != K.PRE_ALL and not 0 <= cmd.subarray < g.subarrays_per_bank:
            flag("coordinate")
            continue
        if cmd.kind in (K.ACT, K.RD, K.WR) and not 0 <= cmd.row < g.rows_per_subarray:
            flag("coordinate")
            continue

        # command bus: one command per channel per cycle
        lc = last_cmd.get(cmd.channel)
        if lc is not None and lc.cycle == cmd.cycle:
            flag("command-bus", lc)
        last_cmd[cmd.channel] = cmd

        bkey = (cmd.channel, cmd.rank, cmd.bank)
        rows = open_rows[bkey]

        # subarrays a command touches; PRE_ALL touches whatever is open now
        if cmd.kind == K.PRE_ALL:
            sset = frozenset(rows)
        else:
            sset = frozenset((cmd.subarray,))
        tkind = K.PRE if cmd.kind == K.PRE_ALL else cmd.kind

        # pairwise timing over the window
        while window and window[0][0].cycle < cmd.cycle - horizon:
            window.popleft()
        for prev, psset, pkind in window:
            for c in by_pair.get((pkind, tkind), ()):
                if cmd.cycle - prev.cycle < c.min_gap and _related(c.scope, prev, psset, cmd, sset):
                    flag(names[c], prev)
        window.append((cmd, sset, tkind))

        # rolling four-activation window
        if cmd.kind == K.ACT:
            rk = (cmd.channel, cmd.rank)
            hist = acts[rk]
            while hist and hist[0].cycle <= cmd.cycle - t.tFAW:
                hist.popleft()
            recent = [a for a in hist if t.act_window_same_bank or a.bank != cmd.bank]
            if len(recent) >= 4:
                flag("tFAW", recent[-4])
            hist.append(cmd)

        # data bus
        if cmd.kind in (K.RD, K.WR):
            start = cmd.cycle + (t.tCL if cmd.kind == K.RD else t.tCWL)
            end = start + t.tBL
            bq = bursts[cmd.channel]
            while bq and bq[0][2] <= cmd.cycle:
                bq.popleft()
            for other, s0, e0 in bq:
                if s0 < end and start < e0:
                    flag("data-bus", other)
            bq.append((cmd, start, end))

        # state machine replay
        des = designated.get(bkey)
        if cmd.kind == K.ACT:
            if cmd.subarray in rows:
                flag("act-open-subarray")
            elif len(rows) >= cap:
                flag("activation-cap")
            else:
                if not rows:
                    designated[bkey] = cmd.subarray
                rows[cmd.subarray] = cmd.row
        elif cmd.kind == K.PRE:
            if cmd.subarray not in rows:
                flag("precharge-closed")
            else:
                del rows[cmd.subarray]
                if des == cmd.subarray:
                    designated[bkey] = None
        elif cmd.kind == K.PRE_ALL:
            if not rows:
                flag("precharge-closed")
            rows.clear()
            designated[bkey] = None
        elif cmd.kind in (K.RD, K.WR):
            if cmd.subarray not in rows:
                flag("column-closed")
            elif rows[cmd.subarray] != cmd.row:
                flag("column-row-mismatch")
            elif mode is Mode.MASA:
                if des != cmd.subarray:
                    flag("designation")
            elif len(rows) != 1:
                flag("single-driver")
        elif cmd.kind == K.SA_SEL:
            if mode is not Mode.MASA:
                flag("sa-sel-mode")
            elif cmd.subarray not in rows:
                flag("sa-sel-closed")
            else:
                designated[bkey] = cmd.subarray
    return out


# ---------------------------------------------------------------------------
# command-log CSV


def write_command_log(commands: Iterable[Command], fh: TextIO):
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(LOG_HEADER)
    for c in commands:
        w.writerow((c.cycle, c.kind.name, c.channel, c.rank, c.bank, c.subarray, c.row, c.column))


def read_command_log(source: Union[str, Path, TextIO]) -> List[Command]:
    if isinstance(source, (str, Path)):
        with open(source, newline="") as fh:
            return read_command_log(fh)
    reader = csv.reader(source)
    header = next(reader, None)
    if header is None or tuple(h.strip() for h in header) != LOG_HEADER:
        raise ValueError(f"command log must start with header {','.join(LOG_HEADER)}")
    out = []
    for lineno, row in enumerate(reader, 2):
        if not row:
            continue
        if len(row) != len(LOG_HEADER):
            raise ValueError(f"line {lineno}: expected {len(LOG_HEADER)} fields")
        try:
            kind = K[row[1].strip().upper()]
            cycle, ch, rank, bank, sa, r, col = (int(row[i]) for i in (0, 2, 3, 4, 5, 6, 7))
        except (KeyError, ValueError):
            raise ValueError(f"line {lineno}: malformed command {row!r}") from None
        out.append(Command(kind, ch, rank, bank, sa, r, col, cycle))
    return out


def format_violations(violations: Sequence[Violation]) -> str:
    return "\n".join(str(v) for v in violations)
