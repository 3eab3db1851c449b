"""Bank/subarray state machine and timing constraints.

Dynamic state lives in small int64 tables so the same kernels serve the
Python API (:class:`DramState`) and the jitted simulation loop.
"""
from __future__ import annotations

from dataclasses import dataclass
from enum import IntEnum
from typing import List, NamedTuple, Optional, Tuple

import numpy as np

from ._jit import njit
from .config import ConfigError, Geometry, Mode, TimingParams


class SimulationIntegrityError(RuntimeError):
    """A command was issued in violation of the state machine or timing."""


class IllegalCommandError(ValueError):
    """The command can never be legal in this mode/geometry (not a timing matter)."""


class CommandKind(IntEnum):
    ACT = 0
    PRE = 1
    PRE_ALL = 2
    RD = 3
    WR = 4
    SA_SEL = 5


class SubarrayStatus(IntEnum):
    PRECHARGED = 0
    ACTIVATING = 1
    ACTIVATED = 2
    PRECHARGING = 3


@dataclass(frozen=True)
class Command:
    kind: CommandKind
    channel: int = 0
    rank: int = 0
    bank: int = 0
    subarray: int = 0
    row: int = -1
    column: int = -1
    cycle: int = 0

    def at(self, cycle: int) -> "Command":
        return Command(self.kind, self.channel, self.rank, self.bank,
                       self.subarray, self.row, self.column, cycle)


# kernel mode codes
BASELINE, SALP1, SALP2, MASA = 0, 1, 2, 3

NEG = -(1 << 40)
NEVER = -1

# timing vector layout
T_RCD, T_RP, T_RAS, T_CL, T_CWL, T_BL, T_RTP, T_WR, T_CCD, T_RRD, T_FAW = range(11)
T_WTR, T_RTW, T_PA, T_SCD, T_RC, T_WRREC, T_WR2RD, T_SAMEBANK = range(11, 19)
N_TIMING = 19

# geometry vector layout
G_CH, G_RK, G_BK, G_SA = range(4)

# per-subarray fields
SA_ROW, SA_ACT, SA_PRE, SA_RD, SA_WR, SA_ACC = range(6)
N_SA = 6

# per-bank fields; H0..H3 ring of the last four ACT cycles
(BK_DES, BK_ACT, BK_PRE, BK_RD, BK_WR, BK_SASEL, BK_OPEN, BK_LASTCHG,
 BK_BYPASS, BK_H0, BK_H1, BK_H2, BK_H3, BK_HPTR) = range(14)
N_BK = 14

RK_ACT, RK_WR, RK_H0, RK_H1, RK_H2, RK_H3, RK_HPTR = range(7)
N_RK = 7

# per-channel fields; BS/BE = ring of the last four data-bus intervals
(CH_CMD, CH_COL, CH_RD, CH_WR, CH_BS0, CH_BS1, CH_BS2, CH_BS3,
 CH_BE0, CH_BE1, CH_BE2, CH_BE3, CH_BPTR) = range(13)
N_CH = 13

# run counters
(C_EXTRA, C_ACT, C_PREOPS, C_PRE, C_PREALL, C_RD, C_WR, C_SASEL) = range(8)
N_CTR = 8


def timing_vector(t: TimingParams) -> np.ndarray:
    v = np.zeros(N_TIMING, dtype=np.int64)
    v[T_RCD], v[T_RP], v[T_RAS] = t.tRCD, t.tRP, t.tRAS
    v[T_CL], v[T_CWL], v[T_BL] = t.tCL, t.tCWL, t.tBL
    v[T_RTP], v[T_WR], v[T_CCD] = t.tRTP, t.tWR, t.tCCD
    v[T_RRD], v[T_FAW], v[T_WTR] = t.tRRD, t.tFAW, t.tWTR
    v[T_RTW], v[T_PA], v[T_SCD] = t.tRTW, t.tPA, t.tSCD
    v[T_RC] = t.tRC
    v[T_WRREC] = t.write_recovery
    v[T_WR2RD] = t.write_to_read
    v[T_SAMEBANK] = 1 if t.act_window_same_bank else 0
    return v


def geometry_vector(g: Geometry) -> np.ndarray:
    return np.array([g.channels, g.ranks_per_channel, g.banks_per_rank,
                     g.subarrays_per_bank], dtype=np.int64)


def new_state_tables(g: Geometry):
    sa = np.zeros((g.n_subarrays, N_SA), dtype=np.int64)
    sa[:, :] = NEG
    sa[:, SA_ROW] = -1
    sa[:, SA_ACC] = 0
    bk = np.full((g.n_banks, N_BK), NEG, dtype=np.int64)
    bk[:, BK_DES] = -1
    bk[:, BK_OPEN] = 0
    bk[:, BK_LASTCHG] = 0
    bk[:, BK_BYPASS] = 0
    bk[:, BK_HPTR] = 0
    rk = np.full((g.n_ranks, N_RK), NEG, dtype=np.int64)
    rk[:, RK_HPTR] = 0
    ch = np.full((g.channels, N_CH), NEG, dtype=np.int64)
    ch[:, CH_BPTR] = 0
    ctr = np.zeros(N_CTR, dtype=np.int64)
    return sa, bk, rk, ch, ctr


# ---------------------------------------------------------------------------
# kernels


@njit
def _faw_bound(tp, geo, bk_st, rk_st, rank_id, bank_id):
    if tp[T_SAMEBANK] != 0:
        oldest = rk_st[rank_id, RK_H0]
        for k in range(1, 4):
            if rk_st[rank_id, RK_H0 + k] < oldest:
                oldest = rk_st[rank_id, RK_H0 + k]
        return oldest + tp[T_FAW]
    # fourth most recent ACT among the other banks of the rank
    top0 = NEG
    top1 = NEG
    top2 = NEG
    top3 = NEG
    nb = geo[G_BK]
    for b in range(rank_id * nb, rank_id * nb + nb):
        if b == bank_id:
            continue
        for k in range(4):
            v = bk_st[b, BK_H0 + k]
            if v > top3:
                if v > top0:
                    top3, top2, top1, top0 = top2, top1, top0, v
                elif v > top1:
                    top3, top2, top1 = top2, top1, v
                elif v > top2:
                    top3, top2 = top2, v
                else:
                    top3 = v
    return top3 + tp[T_FAW]


@njit
def _rrd_bound(tp, geo, bk_st, rk_st, rank_id, bank_id):
    if tp[T_SAMEBANK] != 0:
        return rk_st[rank_id, RK_ACT] + tp[T_RRD]
    last = NEG
    nb = geo[G_BK]
    for b in range(rank_id * nb, rank_id * nb + nb):
        if b != bank_id and bk_st[b, BK_ACT] > last:
            last = bk_st[b, BK_ACT]
    return last + tp[T_RRD]


@njit
def _pre_bound_sa(tp, sa_st, sid):
    e = sa_st[sid, SA_ACT] + tp[T_RAS]
    v = sa_st[sid, SA_RD] + tp[T_RTP]
    if v > e:
        e = v
    v = sa_st[sid, SA_WR] + tp[T_WRREC]
    if v > e:
        e = v
    return e


@njit
def _pre_bound_bank(tp, bk_st, bank_id):
    e = bk_st[bank_id, BK_ACT] + tp[T_RAS]
    v = bk_st[bank_id, BK_RD] + tp[T_RTP]
    if v > e:
        e = v
    v = bk_st[bank_id, BK_WR] + tp[T_WRREC]
    if v > e:
        e = v
    return e


@njit
def earliest_issue(tp, mode, geo, sa_st, bk_st, rk_st, ch_st,
                   kind, ch, rank_id, bank_id, sa, row):
    """Earliest legal cycle for a command, or NEVER if the current state forbids it."""
    S = geo[G_SA]
    base = bank_id * S
    sid = base + sa
    e = ch_st[ch, CH_CMD] + 1
    if kind == 0:  # ACT
        if sa_st[sid, SA_ROW] >= 0:
            return NEVER
        n_open = bk_st[bank_id, BK_OPEN]
        if mode == 2:
            if n_open >= 2:
                return NEVER
        elif mode == 3:
            if n_open >= S:
                return NEVER
        elif n_open >= 1:
            return NEVER
        if mode == 0:
            v = bk_st[bank_id, BK_PRE] + tp[T_RP]
            if v > e:
                e = v
            v = bk_st[bank_id, BK_ACT] + tp[T_RC]
            if v > e:
                e = v
        else:
            v = sa_st[sid, SA_PRE] + tp[T_RP]
            if v > e:
                e = v
            v = sa_st[sid, SA_ACT] + tp[T_RC]
            if v > e:
                e = v
            for o in range(S):
                if o == sa:
                    continue
                v = sa_st[base + o, SA_PRE] + tp[T_PA]
                if v > e:
                    e = v
                if tp[T_SAMEBANK] != 0:
                    v = sa_st[base + o, SA_ACT] + tp[T_RRD]
                    if v > e:
                        e = v
        v = _rrd_bound(tp, geo, bk_st, rk_st, rank_id, bank_id)
        if v > e:
            e = v
        v = _faw_bound(tp, geo, bk_st, rk_st, rank_id, bank_id)
        if v > e:
            e = v
    elif kind == 1:  # PRE one subarray
        if sa_st[sid, SA_ROW] < 0:
            return NEVER
        if mode == 0:
            v = _pre_bound_bank(tp, bk_st, bank_id)
        else:
            v = _pre_bound_sa(tp, sa_st, sid)
        if v > e:
            e = v
    elif kind == 2:  # PRE_ALL
        if bk_st[bank_id, BK_OPEN] == 0:
            return NEVER
        if mode == 0:
            v = _pre_bound_bank(tp, bk_st, bank_id)
            if v > e:
                e = v
        else:
            for o in range(S):
                if sa_st[base + o, SA_ROW] >= 0:
                    v = _pre_bound_sa(tp, sa_st, base + o)
                    if v > e:
                        e = v
    elif kind == 3 or kind == 4:  # RD / WR
        if sa_st[sid, SA_ROW] < 0 or sa_st[sid, SA_ROW] != row:
            return NEVER
        if mode == 3:
            if bk_st[bank_id, BK_DES] != sa:
                return NEVER
            v = bk_st[bank_id, BK_SASEL] + tp[T_SCD]
            if v > e:
                e = v
        elif bk_st[bank_id, BK_OPEN] != 1:
            return NEVER
        if mode == 0:
            v = bk_st[bank_id, BK_ACT] + tp[T_RCD]
        else:
            v = sa_st[sid, SA_ACT] + tp[T_RCD]
        if v > e:
            e = v
        v = ch_st[ch, CH_COL] + tp[T_CCD]
        if v > e:
            e = v
        if kind == 3:
            v = rk_st[rank_id, RK_WR] + tp[T_WR2RD]
            off = tp[T_CL]
        else:
            v = ch_st[ch, CH_RD] + tp[T_RTW]
            off = tp[T_CWL]
        if v > e:
            e = v
        bl = tp[T_BL]
        moved = True
        while moved:
            moved = False
            for k in range(4):
                s0 = ch_st[ch, CH_BS0 + k]
                e0 = ch_st[ch, CH_BE0 + k]
                if e + off < e0 and s0 < e + off + bl:
                    e = e0 - off
                    moved = True
    elif kind == 5:  # SA_SEL
        if mode != 3 or sa_st[sid, SA_ROW] < 0:
            return NEVER
        v = sa_st[sid, SA_ACT] + tp[T_RCD]
        if v > e:
            e = v
    else:
        return NEVER
    if e < 0:
        e = 0
    return e


@njit
def _open_count_change(bk_st, ctr, bank_id, cycle, delta):
    n = bk_st[bank_id, BK_OPEN]
    if n > 1:
        ctr[C_EXTRA] += (n - 1) * (cycle - bk_st[bank_id, BK_LASTCHG])
    bk_st[bank_id, BK_LASTCHG] = cycle
    bk_st[bank_id, BK_OPEN] = n + delta


@njit
def issue(tp, mode, geo, sa_st, bk_st, rk_st, ch_st, ctr,
          kind, ch, rank_id, bank_id, sa, row, cycle):
    """Apply a command that has already been checked for legality."""
    S = geo[G_SA]
    base = bank_id * S
    sid = base + sa
    if kind == 0:
        was_empty = bk_st[bank_id, BK_OPEN] == 0
        sa_st[sid, SA_ROW] = row
        sa_st[sid, SA_ACT] = cycle
        sa_st[sid, SA_ACC] = 0
        bk_st[bank_id, BK_ACT] = cycle
        p = bk_st[bank_id, BK_HPTR]
        bk_st[bank_id, BK_H0 + p] = cycle
        bk_st[bank_id, BK_HPTR] = (p + 1) % 4
        rk_st[rank_id, RK_ACT] = cycle
        p = rk_st[rank_id, RK_HPTR]
        rk_st[rank_id, RK_H0 + p] = cycle
        rk_st[rank_id, RK_HPTR] = (p + 1) % 4
        _open_count_change(bk_st, ctr, bank_id, cycle, 1)
        if was_empty:
            bk_st[bank_id, BK_DES] = sa
        ctr[C_ACT] += 1
    elif kind == 1:
        sa_st[sid, SA_ROW] = -1
        sa_st[sid, SA_PRE] = cycle
        bk_st[bank_id, BK_PRE] = cycle
        if bk_st[bank_id, BK_DES] == sa:
            bk_st[bank_id, BK_DES] = -1
        _open_count_change(bk_st, ctr, bank_id, cycle, -1)
        ctr[C_PRE] += 1
        ctr[C_PREOPS] += 1
    elif kind == 2:
        for o in range(S):
            if sa_st[base + o, SA_ROW] >= 0:
                sa_st[base + o, SA_ROW] = -1
                sa_st[base + o, SA_PRE] = cycle
                _open_count_change(bk_st, ctr, bank_id, cycle, -1)
                ctr[C_PREOPS] += 1
        bk_st[bank_id, BK_PRE] = cycle
        bk_st[bank_id, BK_DES] = -1
        ctr[C_PREALL] += 1
    elif kind == 3 or kind == 4:
        sa_st[sid, SA_ACC] += 1
        ch_st[ch, CH_COL] = cycle
        if kind == 3:
            sa_st[sid, SA_RD] = cycle
            bk_st[bank_id, BK_RD] = cycle
            ch_st[ch, CH_RD] = cycle
            start = cycle + tp[T_CL]
            ctr[C_RD] += 1
        else:
            sa_st[sid, SA_WR] = cycle
            bk_st[bank_id, BK_WR] = cycle
            rk_st[rank_id, RK_WR] = cycle
            ch_st[ch, CH_WR] = cycle
            start = cycle + tp[T_CWL]
            ctr[C_WR] += 1
        p = ch_st[ch, CH_BPTR]
        ch_st[ch, CH_BS0 + p] = start
        ch_st[ch, CH_BE0 + p] = start + tp[T_BL]
        ch_st[ch, CH_BPTR] = (p + 1) % 4
    elif kind == 5:
        bk_st[bank_id, BK_DES] = sa
        bk_st[bank_id, BK_SASEL] = cycle
        ctr[C_SASEL] += 1
    ch_st[ch, CH_CMD] = cycle


@njit
def close_accounting(bk_st, ctr, cycle):
    """Fold the open-subarray integral up to ``cycle`` into C_EXTRA."""
    for b in range(bk_st.shape[0]):
        n = bk_st[b, BK_OPEN]
        if n > 1:
            ctr[C_EXTRA] += (n - 1) * (cycle - bk_st[b, BK_LASTCHG])
        bk_st[b, BK_LASTCHG] = cycle


# ---------------------------------------------------------------------------
# declarative constraint table


class Scope:
    SAME_SUBARRAY = "same-subarray"
    SAME_BANK = "same-bank-any-subarray"
    OTHER_SUBARRAY = "same-bank-other-subarray"
    SAME_RANK = "same-rank"
    OTHER_BANK = "same-rank-other-bank"
    SAME_CHANNEL = "same-channel"


class Constraint(NamedTuple):
    prev: CommandKind
    next: CommandKind
    scope: str
    min_gap: int


def build_timing_table(params: TimingParams, mode: Mode | str) -> frozenset:
    """All pairwise minimum-gap constraints that hold in ``mode``.

    PRE in the table also governs PRE_ALL. The rolling four-activation
    window (tFAW) and data-bus overlap are not pairwise and are checked
    separately by the verifier.
    """
    if not isinstance(params, TimingParams):
        raise ConfigError("params must be TimingParams")
    mode = Mode.parse(mode)
    K = CommandKind
    t = params
    out = set()
    local = mode in (Mode.SALP1, Mode.SALP2, Mode.MASA)
    row_scope = Scope.SAME_SUBARRAY if local else Scope.SAME_BANK
    for col in (K.RD, K.WR):
        out.add(Constraint(K.ACT, col, row_scope, t.tRCD))
    out.add(Constraint(K.ACT, K.PRE, row_scope, t.tRAS))
    out.add(Constraint(K.PRE, K.ACT, row_scope, t.tRP))
    out.add(Constraint(K.ACT, K.ACT, row_scope, t.tRC))
    out.add(Constraint(K.RD, K.PRE, row_scope, t.tRTP))
    out.add(Constraint(K.WR, K.PRE, row_scope, t.write_recovery))
    if local:
        out.add(Constraint(K.PRE, K.ACT, Scope.OTHER_SUBARRAY, t.tPA))
        if t.act_window_same_bank:
            out.add(Constraint(K.ACT, K.ACT, Scope.OTHER_SUBARRAY, t.tRRD))
    if t.act_window_same_bank:
        out.add(Constraint(K.ACT, K.ACT, Scope.SAME_RANK, t.tRRD))
    else:
        out.add(Constraint(K.ACT, K.ACT, Scope.OTHER_BANK, t.tRRD))
    out.add(Constraint(K.WR, K.RD, Scope.SAME_RANK, t.write_to_read))
    for a in (K.RD, K.WR):
        for b in (K.RD, K.WR):
            out.add(Constraint(a, b, Scope.SAME_CHANNEL, t.tCCD))
    out.add(Constraint(K.RD, K.WR, Scope.SAME_CHANNEL, t.tRTW))
    if mode is Mode.MASA:
        for col in (K.RD, K.WR):
            out.add(Constraint(K.SA_SEL, col, Scope.SAME_BANK, t.tSCD))
        out.add(Constraint(K.ACT, K.SA_SEL, Scope.SAME_SUBARRAY, t.tRCD))
    return frozenset(out)


# ---------------------------------------------------------------------------
# Python-facing state


@dataclass(frozen=True)
class SubarrayState:
    status: SubarrayStatus
    open_local_row: Optional[int]
    last_act_cycle: int
    last_rd_cycle: int
    last_wr_cycle: int
    last_pre_cycle: int
    write_recovery_end: int


@dataclass(frozen=True)
class BankState:
    subarrays: Tuple[SubarrayState, ...]
    designated: Optional[int]

    @property
    def activated_count(self) -> int:
        return sum(s.status in (SubarrayStatus.ACTIVATING, SubarrayStatus.ACTIVATED)
                   for s in self.subarrays)


def _opt(v: int) -> int:
    return 0 if v <= NEG // 2 else int(v)


class DramState:
    """Mutable DRAM state for one memory system under one mode."""

    def __init__(self, geometry: Geometry, timing: TimingParams | None = None,
                 mode: Mode | str = Mode.BASELINE):
        self.mode = Mode.parse(mode)
        self.geometry = geometry
        self.effective_geometry = geometry.ideal() if self.mode is Mode.IDEAL else geometry
        self.timing = timing or TimingParams()
        self.tp = timing_vector(self.timing)
        self.geo = geometry_vector(self.effective_geometry)
        self.sa, self.bk, self.rk, self.ch, self.ctr = new_state_tables(self.effective_geometry)
        self.history: List[Command] = []

    # coordinates -----------------------------------------------------------
    def _ids(self, cmd: Command) -> Tuple[int, int, int]:
        g = self.effective_geometry
        c = cmd
        if c.kind == CommandKind.PRE_ALL and c.subarray < 0:
            c = Command(c.kind, c.channel, c.rank, c.bank, 0, c.row, c.column, c.cycle)
        if not (0 <= c.channel < g.channels and 0 <= c.rank < g.ranks_per_channel
                and 0 <= c.bank < g.banks_per_rank and 0 <= c.subarray < g.subarrays_per_bank):
            raise IllegalCommandError(f"coordinate out of range: {cmd}")
        if c.kind in (CommandKind.ACT, CommandKind.RD, CommandKind.WR):
            if not 0 <= c.row < g.rows_per_subarray:
                raise IllegalCommandError(f"row out of range: {cmd}")
        rank_id = c.channel * g.ranks_per_channel + c.rank
        bank_id = rank_id * g.banks_per_rank + c.bank
        return rank_id, bank_id, c.subarray

    def _check_structure(self, cmd: Command):
        if cmd.kind == CommandKind.SA_SEL and self.mode is not Mode.MASA:
            raise IllegalCommandError("SA_SEL exists only in MASA mode")

    # queries ---------------------------------------------------------------
    def earliest_issue_cycle(self, cmd: Command, now: int = 0) -> Optional[int]:
        """Smallest cycle >= ``now`` at which ``cmd`` is legal.

        Returns ``None`` when the command is illegal in the current state no
        matter how long one waits (e.g. RD to a precharged subarray).
        """
        self._check_structure(cmd)
        rank_id, bank_id, sa = self._ids(cmd)
        e = earliest_issue(self.tp, self.mode.kernel_code, self.geo, self.sa, self.bk,
                           self.rk, self.ch, int(cmd.kind), cmd.channel, rank_id,
                           bank_id, sa, cmd.row)
        if e == NEVER:
            return None
        return max(int(e), now)

    def issue(self, cmd: Command) -> None:
        e = self.earliest_issue_cycle(cmd)
        if e is None:
            raise SimulationIntegrityError(f"{cmd.kind.name} illegal in current state: {cmd}")
        if cmd.cycle < e:
            raise SimulationIntegrityError(
                f"{cmd.kind.name} at cycle {cmd.cycle} precedes earliest legal cycle {e}")
        rank_id, bank_id, sa = self._ids(cmd)
        issue(self.tp, self.mode.kernel_code, self.geo, self.sa, self.bk, self.rk,
              self.ch, self.ctr, int(cmd.kind), cmd.channel, rank_id, bank_id, sa,
              cmd.row, cmd.cycle)
        self.history.append(cmd)

    def bank(self, channel: int = 0, rank: int = 0, bank: int = 0,
             cycle: Optional[int] = None) -> BankState:
        """Snapshot of one bank; statuses are resolved at ``cycle`` (default: last issue)."""
        g = self.effective_geometry
        rank_id = channel * g.ranks_per_channel + rank
        bank_id = rank_id * g.banks_per_rank + bank
        if cycle is None:
            cycle = max(int(self.ch[channel, CH_CMD]), 0)
        t = self.timing
        subs = []
        for s in range(g.subarrays_per_bank):
            r = self.sa[bank_id * g.subarrays_per_bank + s]
            if r[SA_ROW] >= 0:
                status = (SubarrayStatus.ACTIVATED if cycle >= r[SA_ACT] + t.tRCD
                          else SubarrayStatus.ACTIVATING)
                row = int(r[SA_ROW])
            else:
                status = (SubarrayStatus.PRECHARGING if cycle < r[SA_PRE] + t.tRP
                          else SubarrayStatus.PRECHARGED)
                row = None
            wr = _opt(r[SA_WR])
            subs.append(SubarrayState(
                status=status, open_local_row=row,
                last_act_cycle=_opt(r[SA_ACT]), last_rd_cycle=_opt(r[SA_RD]),
                last_wr_cycle=wr, last_pre_cycle=_opt(r[SA_PRE]),
                write_recovery_end=wr + t.write_recovery if r[SA_WR] > NEG // 2 else 0,
            ))
        des = int(self.bk[bank_id, BK_DES])
        return BankState(tuple(subs), des if des >= 0 and self.mode is Mode.MASA else None)

    def copy(self) -> "DramState":
        other = DramState.__new__(DramState)
        other.__dict__.update(self.__dict__)
        for name in ("sa", "bk", "rk", "ch", "ctr"):
            setattr(other, name, getattr(self, name).copy())
        other.history = list(self.history)
        return other
