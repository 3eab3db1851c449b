"""FR-FCFS memory controller with subarray-aware command generation."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import List, Optional

import numpy as np

from ._jit import njit
from .config import (ControllerParams, Geometry, MappingPolicy, Mode, RowPolicy,
                     SimConfig, TimingParams, log2i)
from .dram import (BK_BYPASS, BK_DES, BK_OPEN, G_BK, G_RK, G_SA, NEVER, SA_ACC,
                   SA_ACT, SA_ROW, Command, CommandKind, DramState,
                   SimulationIntegrityError, earliest_issue, issue)
from .mapping import Coord, map_address

# request table fields
(R_CH, R_RANKID, R_BANKID, R_SA, R_ROW, R_COL, R_WRITE, R_STREAM, R_ARRIVAL,
 R_SEQ, R_ISSUE, R_COMPLETE, R_OUTCOME, R_CONFLICT, R_ACTED) = range(15)
N_REQ = 15

OUT_HIT, OUT_MISS, OUT_CONFLICT = 0, 1, 2

# controller counters
K_HIT, K_MISS, K_CONFLICT, K_SEQ = range(4)
N_KCTR = 4

# packed configuration
(CF_MODE, CF_ROWPOL, CF_DEPTH, CF_HITCAP, CF_MAXOV, CF_WINDOW, CF_MAXOUT,
 CF_RATIO, CF_WIDTH, CF_SKIP) = range(10)
N_CF = 10

_CLASS = 1 << 50
INF = 1 << 62


def config_vector(cfg: SimConfig, skip_idle: bool = True) -> np.ndarray:
    v = np.zeros(N_CF, dtype=np.int64)
    v[CF_MODE] = cfg.mode.kernel_code
    v[CF_ROWPOL] = 1 if cfg.row_policy is RowPolicy.CLOSED_ROW else 0
    v[CF_DEPTH] = cfg.controller.queue_depth
    v[CF_HITCAP] = cfg.controller.effective_hit_cap
    v[CF_MAXOV] = cfg.controller.max_overlapped_acts
    v[CF_WINDOW] = cfg.core.window_size
    v[CF_MAXOUT] = cfg.core.max_outstanding_reads
    v[CF_RATIO] = cfg.core.cpu_clock_ratio
    v[CF_WIDTH] = cfg.core.width
    v[CF_SKIP] = 1 if skip_idle else 0
    return v


def new_request_table(n: int) -> np.ndarray:
    req = np.full((n, N_REQ), -1, dtype=np.int64)
    req[:, R_CONFLICT] = 0
    req[:, R_ACTED] = 0
    return req


@njit
def _lowest_open(sa_st, base, S, skip):
    for o in range(S):
        if o != skip and sa_st[base + o, SA_ROW] >= 0:
            return o
    return -1


@njit
def schedule_channel(ch, cycle, tp, cfg, geo, sa_st, bk_st, rk_st, ch_st,
                     q, q_len, req, hitflag, first_tgt):
    """Pick at most one command for channel ``ch`` at ``cycle``.

    Returns (kind, request, bank_id, subarray, row, next_event) where kind is
    -1 when nothing is ready; next_event is the earliest future cycle at
    which some candidate becomes legal.
    """
    mode = cfg[CF_MODE]
    closed_row = cfg[CF_ROWPOL] != 0
    S = geo[G_SA]
    R = geo[G_RK]
    B = geo[G_BK]
    best_key = INF
    best_kind = -1
    best_req = -1
    best_bank = -1
    best_sa = -1
    best_row = -1
    next_ev = INF
    maxov = cfg[CF_MAXOV]
    limit = S
    if maxov > 0 and maxov < S:
        limit = maxov
    for rr in range(R):
        rank_id = ch * R + rr
        for bb in range(B):
            bank_id = rank_id * B + bb
            n = q_len[bank_id]
            n_open = bk_st[bank_id, BK_OPEN]
            if n == 0 and not (closed_row and n_open > 0):
                continue
            base = bank_id * S
            for s in range(S):
                hitflag[s] = 0
                first_tgt[s] = -1
            oldest_hit = -1
            for i in range(n):
                r = q[bank_id, i]
                s = req[r, R_SA]
                if first_tgt[s] < 0:
                    first_tgt[s] = r
                if sa_st[base + s, SA_ROW] == req[r, R_ROW]:
                    hitflag[s] = 1
                    if oldest_hit < 0:
                        oldest_hit = r
            starved = bk_st[bank_id, BK_BYPASS] >= cfg[CF_HITCAP]
            for i in range(n):
                r = q[bank_id, i]
                s = req[r, R_SA]
                row = req[r, R_ROW]
                col_kind = 4 if req[r, R_WRITE] != 0 else 3
                oldest = i == 0
                kind = -1
                tsa = s
                cls = 1
                open_row = sa_st[base + s, SA_ROW]
                if open_row == row:
                    if mode == 3:
                        if bk_st[bank_id, BK_DES] == s:
                            kind = col_kind
                            cls = 0
                        elif r == oldest_hit:
                            kind = 5
                            cls = 0
                    elif mode == 2 and n_open > 1:
                        if oldest:
                            kind = 1
                            tsa = _lowest_open(sa_st, base, S, s)
                    else:
                        kind = col_kind
                        cls = 0
                    if cls == 0 and starved and not oldest:
                        kind = -1
                elif open_row >= 0:
                    if oldest and (starved or hitflag[s] == 0 or (mode == 2 and n_open > 1)):
                        kind = 2 if mode == 0 else 1
                    elif (mode == 3 and not starved and first_tgt[s] == r
                          and hitflag[s] == 0):
                        # look-ahead: clear a stale row for a younger request
                        kind = 1
                else:
                    if mode == 3:
                        if n_open < limit:
                            if oldest or first_tgt[s] == r:
                                kind = 0
                        elif oldest:
                            for o in range(S):
                                if sa_st[base + o, SA_ROW] >= 0 and (starved or hitflag[o] == 0):
                                    kind = 1
                                    tsa = o
                                    break
                    elif oldest:
                        if n_open == 0:
                            kind = 0
                        else:
                            other = _lowest_open(sa_st, base, S, s)
                            if mode == 2 and n_open > 1:
                                kind = 1
                                tsa = other
                            elif starved or hitflag[other] == 0:
                                if mode == 2:
                                    kind = 0
                                elif mode == 0:
                                    kind = 2
                                else:
                                    kind = 1
                                    tsa = other
                if kind < 0:
                    continue
                e = earliest_issue(tp, mode, geo, sa_st, bk_st, rk_st, ch_st,
                                   kind, ch, rank_id, bank_id, tsa, row)
                if e == NEVER:
                    continue
                if e <= cycle:
                    key = cls * _CLASS + req[r, R_SEQ]
                    if key < best_key:
                        best_key = key
                        best_kind = kind
                        best_req = r
                        best_bank = bank_id
                        best_sa = tsa
                        best_row = row
                elif e < next_ev:
                    next_ev = e
            if closed_row:
                for o in range(S):
                    if (sa_st[base + o, SA_ROW] >= 0 and sa_st[base + o, SA_ACC] > 0
                            and hitflag[o] == 0):
                        kind = 2 if mode == 0 else 1
                        e = earliest_issue(tp, mode, geo, sa_st, bk_st, rk_st, ch_st,
                                           kind, ch, rank_id, bank_id, o, -1)
                        if e == NEVER:
                            continue
                        if e <= cycle:
                            key = _CLASS - 1
                            if key < best_key:
                                best_key = key
                                best_kind = kind
                                best_req = -1
                                best_bank = bank_id
                                best_sa = o
                                best_row = -1
                        elif e < next_ev:
                            next_ev = e
    return best_kind, best_req, best_bank, best_sa, best_row, next_ev


@njit
def enqueue(r, cycle, cfg, geo, sa_st, bk_st, q, q_len, req, kctr):
    """Append request ``r`` to its bank queue; False when the queue is full."""
    bank_id = req[r, R_BANKID]
    n = q_len[bank_id]
    if n >= cfg[CF_DEPTH]:
        return False
    q[bank_id, n] = r
    q_len[bank_id] = n + 1
    req[r, R_ARRIVAL] = cycle
    req[r, R_SEQ] = kctr[K_SEQ]
    kctr[K_SEQ] += 1
    S = geo[G_SA]
    base = bank_id * S
    s = req[r, R_SA]
    row = req[r, R_ROW]
    conflict = 0
    if cfg[CF_MODE] == 3:
        if sa_st[base + s, SA_ROW] >= 0 and sa_st[base + s, SA_ROW] != row:
            conflict = 1
    else:
        for o in range(S):
            open_row = sa_st[base + o, SA_ROW]
            if open_row >= 0 and not (o == s and open_row == row):
                conflict = 1
    req[r, R_CONFLICT] = conflict
    return True


@njit
def apply_command(tp, cfg, geo, sa_st, bk_st, rk_st, ch_st, ctr, q, q_len, req, kctr,
                  kind, r, ch, bank_id, tsa, row, cycle):
    """Issue a scheduled command and update queue/request bookkeeping."""
    rank_id = bank_id // geo[G_BK]
    if kind == 0:
        req[r, R_ACTED] = 1
    elif kind == 3 or kind == 4:
        # a hit is any access served without an activation of its own
        if req[r, R_ACTED] == 0:
            req[r, R_OUTCOME] = 0
            kctr[K_HIT] += 1
        elif req[r, R_CONFLICT] != 0:
            req[r, R_OUTCOME] = 2
            kctr[K_CONFLICT] += 1
        else:
            req[r, R_OUTCOME] = 1
            kctr[K_MISS] += 1
    issue(tp, cfg[CF_MODE], geo, sa_st, bk_st, rk_st, ch_st, ctr,
          kind, ch, rank_id, bank_id, tsa, row, cycle)
    if kind == 3 or kind == 4:
        n = q_len[bank_id]
        pos = 0
        while q[bank_id, pos] != r:
            pos += 1
        for j in range(pos, n - 1):
            q[bank_id, j] = q[bank_id, j + 1]
        q_len[bank_id] = n - 1
        if pos == 0:
            bk_st[bank_id, BK_BYPASS] = 0
        else:
            bk_st[bank_id, BK_BYPASS] += 1
        req[r, R_ISSUE] = cycle
        if kind == 3:
            req[r, R_COMPLETE] = cycle + tp[3] + tp[5]  # tCL + tBL
        else:
            req[r, R_COMPLETE] = cycle


def controller_state_bits(geometry: Geometry, mode: Mode | str) -> int:
    """Bits of subarray-tracking state the controller keeps for ``mode``."""
    mode = Mode.parse(mode)
    g = geometry.ideal() if mode is Mode.IDEAL else geometry
    tag = log2i(g.rows_per_subarray)
    if mode is Mode.MASA:
        return g.n_subarrays * (2 + tag)
    if mode is Mode.SALP2:
        return g.n_subarrays * (1 + tag)
    return g.n_banks * (1 + log2i(g.rows_per_bank))


def controller_state_bytes(geometry: Geometry, mode: Mode | str) -> int:
    return math.ceil(controller_state_bits(geometry, mode) / 8)


@dataclass
class MemoryRequest:
    id: int
    stream_id: int
    is_write: bool
    phys_addr: int
    coord: Coord
    arrival_cycle: int
    completion_cycle: Optional[int] = None


class Controller:
    """Stand-alone controller over a :class:`DramState`, one call per cycle.

    The simulation engine drives the same kernels directly; this wrapper
    exists for inspection and unit tests.
    """

    def __init__(self, config: SimConfig, capacity: int = 4096):
        self.config = config
        self.dram = DramState(config.geometry, config.timing, config.mode)
        g = self.dram.effective_geometry
        self.cfg = config_vector(config)
        self.req = new_request_table(capacity)
        self.q = np.zeros((g.n_banks, config.controller.queue_depth), dtype=np.int64)
        self.q_len = np.zeros(g.n_banks, dtype=np.int64)
        self.kctr = np.zeros(N_KCTR, dtype=np.int64)
        self._hit = np.zeros(g.subarrays_per_bank, dtype=np.int64)
        self._first = np.zeros(g.subarrays_per_bank, dtype=np.int64)
        self.requests: List[MemoryRequest] = []

    def enqueue(self, phys_addr: int, is_write: bool = False, cycle: int = 0,
                stream_id: int = 0) -> Optional[MemoryRequest]:
        """Queue a request; returns None when the bank queue is full."""
        cfg = self.config
        c = map_address(phys_addr, cfg.geometry, cfg.mapping)
        g = self.dram.effective_geometry
        bank, sa = c.bank, c.subarray
        if cfg.mode is Mode.IDEAL:
            bank, sa = c.bank * cfg.geometry.subarrays_per_bank + c.subarray, 0
        rid = len(self.requests)
        if rid >= len(self.req):
            raise SimulationIntegrityError("request table full")
        rank_id = c.channel * g.ranks_per_channel + c.rank
        row = self.req[rid]
        row[R_CH], row[R_RANKID] = c.channel, rank_id
        row[R_BANKID] = rank_id * g.banks_per_rank + bank
        row[R_SA], row[R_ROW], row[R_COL] = sa, c.local_row, c.column
        row[R_WRITE], row[R_STREAM] = int(is_write), stream_id
        d = self.dram
        if not enqueue(rid, cycle, self.cfg, d.geo, d.sa, d.bk, self.q, self.q_len,
                       self.req, self.kctr):
            return None
        m = MemoryRequest(rid, stream_id, is_write, phys_addr, c, cycle)
        self.requests.append(m)
        return m

    def schedule(self, cycle: int) -> List[Command]:
        """Issue at most one command per channel at ``cycle`` and return them."""
        d = self.dram
        g = d.effective_geometry
        out = []
        for ch in range(g.channels):
            kind, r, bank_id, tsa, row, _ = schedule_channel(
                ch, cycle, d.tp, self.cfg, d.geo, d.sa, d.bk, d.rk, d.ch,
                self.q, self.q_len, self.req, self._hit, self._first)
            if kind < 0:
                continue
            apply_command(d.tp, self.cfg, d.geo, d.sa, d.bk, d.rk, d.ch, d.ctr, self.q,
                          self.q_len, self.req, self.kctr, kind, r, ch, bank_id, tsa, row,
                          cycle)
            rank_id = bank_id // g.banks_per_rank
            kind = CommandKind(kind)
            col = int(self.req[r, R_COL]) if kind in (CommandKind.RD, CommandKind.WR) else -1
            cmd = Command(kind, ch, rank_id % g.ranks_per_channel, bank_id % g.banks_per_rank,
                          -1 if kind == CommandKind.PRE_ALL else tsa,
                          row if kind in (CommandKind.ACT, CommandKind.RD, CommandKind.WR) else -1,
                          col, cycle)
            d.history.append(cmd)
            if r >= 0 and self.req[r, R_COMPLETE] >= 0:
                self.requests[r].completion_cycle = int(self.req[r, R_COMPLETE])
            out.append(cmd)
        return out

    def pending(self) -> int:
        return int(self.q_len.sum())

    def drain(self, start: int = 0, limit: int = 100_000) -> int:
        """Schedule until every queue is empty; returns the last cycle used."""
        cycle = start
        while self.pending():
            self.schedule(cycle)
            cycle += 1
            if cycle - start > limit:
                raise SimulationIntegrityError("controller made no progress")
        return cycle - 1
