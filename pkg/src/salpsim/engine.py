"""Trace-driven simulation loop with a limited-window core per stream."""
from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence

import numpy as np

from ._jit import njit
from .config import Mode, SimConfig
from .controller import (CF_MAXOUT, CF_RATIO, CF_SKIP, CF_WIDTH, CF_WINDOW, INF,
                         K_CONFLICT, K_HIT, K_MISS, N_KCTR, R_ARRIVAL, R_BANKID,
                         R_CH, R_COL, R_COMPLETE, R_ISSUE, R_OUTCOME, R_RANKID,
                         R_ROW, R_SA, R_STREAM, R_WRITE, apply_command, config_vector,
                         enqueue, new_request_table, schedule_channel)
from .dram import (C_ACT, C_EXTRA, C_PRE, C_PREALL, C_PREOPS, C_RD, C_SASEL, C_WR,
                   G_BK, G_CH, G_RK, G_SA, Command, CommandKind,
                   SimulationIntegrityError, close_accounting, geometry_vector,
                   new_state_tables, timing_vector)
from .mapping import map_addresses, stream_partition
from .trace import TraceEntry, trace_arrays

# core table fields
(P_NEXT, P_END, P_GAP, P_ISSUED, P_RETIRED, P_OUT, P_FHEAD, P_FLEN, P_DONE,
 P_FINISH, P_TOTAL) = range(11)
N_CORE = 11

# run state
S_CYCLE, S_LOGLEN, S_STATUS = range(3)
ST_DONE, ST_PAUSED, ST_DEADLOCK, ST_LOGFULL = 0, 1, 2, 3

# command log columns
L_CYCLE, L_KIND, L_CH, L_RANK, L_BANK, L_SA, L_ROW, L_COL, L_REQ = range(9)
N_LOG = 9


@njit
def step_cores(cycle, cfg, geo, sa_st, bk_st, core, fifo_inst, fifo_req, gaps,
               q, q_len, req, kctr):
    """Advance every core by cpu_clock_ratio core cycles; True if anything moved."""
    ratio = cfg[CF_RATIO]
    width = cfg[CF_WIDTH]
    window = cfg[CF_WINDOW]
    maxout = cfg[CF_MAXOUT]
    progress = False
    for s in range(core.shape[0]):
        if core[s, P_DONE] != 0:
            continue
        for k in range(ratio):
            # retire in order from the window head
            budget = width
            while budget > 0 and core[s, P_RETIRED] < core[s, P_ISSUED]:
                flen = core[s, P_FLEN]
                head = core[s, P_FHEAD]
                if flen > 0 and fifo_inst[s, head] == core[s, P_RETIRED]:
                    r = fifo_req[s, head]
                    comp = req[r, R_COMPLETE]
                    if comp < 0 or comp > cycle:
                        break
                    core[s, P_RETIRED] += 1
                    budget -= 1
                    core[s, P_FHEAD] = (head + 1) % window
                    core[s, P_FLEN] = flen - 1
                    if req[r, R_WRITE] == 0:
                        core[s, P_OUT] -= 1
                else:
                    lim = core[s, P_ISSUED]
                    if flen > 0:
                        lim = fifo_inst[s, head]
                    m = lim - core[s, P_RETIRED]
                    if m > budget:
                        m = budget
                    core[s, P_RETIRED] += m
                    budget -= m
                progress = True
            if core[s, P_RETIRED] == core[s, P_TOTAL]:
                core[s, P_DONE] = 1
                core[s, P_FINISH] = cycle * ratio + k + 1
                progress = True
                break
            # fetch/issue into the window
            budget = width
            while budget > 0:
                room = window - (core[s, P_ISSUED] - core[s, P_RETIRED])
                if room <= 0:
                    break
                if core[s, P_GAP] > 0:
                    m = core[s, P_GAP]
                    if m > budget:
                        m = budget
                    if m > room:
                        m = room
                    core[s, P_ISSUED] += m
                    core[s, P_GAP] -= m
                    budget -= m
                    progress = True
                elif core[s, P_NEXT] < core[s, P_END]:
                    r = core[s, P_NEXT]
                    is_read = req[r, R_WRITE] == 0
                    if is_read and core[s, P_OUT] >= maxout:
                        break
                    if not enqueue(r, cycle, cfg, geo, sa_st, bk_st, q, q_len, req, kctr):
                        break
                    tail = (core[s, P_FHEAD] + core[s, P_FLEN]) % window
                    fifo_inst[s, tail] = core[s, P_ISSUED]
                    fifo_req[s, tail] = r
                    core[s, P_FLEN] += 1
                    core[s, P_ISSUED] += 1
                    if is_read:
                        core[s, P_OUT] += 1
                    core[s, P_NEXT] = r + 1
                    if r + 1 < core[s, P_END]:
                        core[s, P_GAP] = gaps[r + 1]
                    budget -= 1
                    progress = True
                else:
                    break
    return progress


@njit
def _next_completion(cycle, core, fifo_req, req, window):
    nxt = INF
    for s in range(core.shape[0]):
        if core[s, P_DONE] != 0:
            continue
        head = core[s, P_FHEAD]
        for j in range(core[s, P_FLEN]):
            c = req[fifo_req[s, (head + j) % window], R_COMPLETE]
            if c > cycle and c < nxt:
                nxt = c
    return nxt


@njit
def run_kernel(tp, cfg, geo, sa_st, bk_st, rk_st, ch_st, ctr, req, q, q_len, kctr,
               core, fifo_inst, fifo_req, gaps, log, state, stop_cycle, hitflag, first_tgt):
    cycle = state[S_CYCLE]
    nlog = state[S_LOGLEN]
    n_ch = geo[G_CH]
    R = geo[G_RK]
    B = geo[G_BK]
    status = ST_DONE
    while True:
        all_done = True
        for s in range(core.shape[0]):
            if core[s, P_DONE] == 0:
                all_done = False
                break
        if all_done:
            status = ST_DONE
            break
        if cycle >= stop_cycle:
            status = ST_PAUSED
            break
        if nlog + n_ch > log.shape[0]:
            status = ST_LOGFULL
            break
        issued = False
        next_ev = INF
        for ch in range(n_ch):
            kind, r, bank_id, tsa, row, ne = schedule_channel(
                ch, cycle, tp, cfg, geo, sa_st, bk_st, rk_st, ch_st, q, q_len, req,
                hitflag, first_tgt)
            if kind < 0:
                if ne < next_ev:
                    next_ev = ne
                continue
            col = -1
            if kind == 3 or kind == 4:
                col = req[r, R_COL]
            apply_command(tp, cfg, geo, sa_st, bk_st, rk_st, ch_st, ctr, q, q_len, req,
                          kctr, kind, r, ch, bank_id, tsa, row, cycle)
            rank_id = bank_id // B
            log[nlog, L_CYCLE] = cycle
            log[nlog, L_KIND] = kind
            log[nlog, L_CH] = ch
            log[nlog, L_RANK] = rank_id % R
            log[nlog, L_BANK] = bank_id % B
            log[nlog, L_SA] = -1 if kind == 2 else tsa
            log[nlog, L_ROW] = row if (kind == 0 or kind == 3 or kind == 4) else -1
            log[nlog, L_COL] = col
            log[nlog, L_REQ] = r
            nlog += 1
            issued = True
        progress = step_cores(cycle, cfg, geo, sa_st, bk_st, core, fifo_inst, fifo_req,
                              gaps, q, q_len, req, kctr)
        if issued or progress:
            cycle += 1
            continue
        nc = _next_completion(cycle, core, fifo_req, req, cfg[CF_WINDOW])
        if nc < next_ev:
            next_ev = nc
        if next_ev >= INF:
            status = ST_DEADLOCK
            break
        if cfg[CF_SKIP] != 0 and next_ev > cycle + 1:
            if next_ev > stop_cycle:
                next_ev = stop_cycle
            cycle = next_ev
        else:
            cycle += 1
    state[S_CYCLE] = cycle
    state[S_LOGLEN] = nlog
    state[S_STATUS] = status


# ---------------------------------------------------------------------------


@dataclass
class StreamResult:
    instructions: int
    core_cycles: int

    @property
    def ipc(self) -> float:
        return self.instructions / self.core_cycles if self.core_cycles else 0.0


@dataclass
class SimResult:
    mode: Mode
    config: SimConfig
    streams: List[StreamResult]
    dram_cycles: int
    command_counts: Dict[str, int]
    precharges: int
    row_hits: int
    row_misses: int
    row_conflicts: int
    extra_activated_cycles: int
    read_latencies: np.ndarray
    write_latencies: np.ndarray
    span: int
    trace_digest: str
    commands: Optional[np.ndarray] = field(default=None, repr=False)
    requests: Optional[np.ndarray] = field(default=None, repr=False)

    @property
    def ipc(self) -> float:
        """Sum of per-stream IPC (equals the IPC for one stream)."""
        return sum(s.ipc for s in self.streams)

    @property
    def column_commands(self) -> int:
        return self.command_counts["RD"] + self.command_counts["WR"]

    @property
    def hit_rate(self) -> float:
        n = self.row_hits + self.row_misses + self.row_conflicts
        return self.row_hits / n if n else 0.0

    @property
    def sa_sel_per_act(self) -> float:
        act = self.command_counts["ACT"]
        return self.command_counts["SA_SEL"] / act if act else 0.0

    def command_list(self) -> List[Command]:
        if self.commands is None:
            return []
        return [Command(CommandKind(int(r[L_KIND])), *(int(v) for v in r[L_CH:L_COL + 1]),
                        cycle=int(r[L_CYCLE])) for r in self.commands]

    def latency_histogram(self, kind: str = "read", bins: Sequence[int] = None):
        lat = self.read_latencies if kind == "read" else self.write_latencies
        if bins is None:
            bins = [0, 16, 32, 64, 128, 256, 512, 1024, 1 << 62]
        return np.histogram(lat, bins=bins)


def trace_digest(traces: Sequence[Sequence[TraceEntry]]) -> str:
    h = hashlib.sha256()
    for t in traces:
        gaps, writes, addrs = trace_arrays(t)
        h.update(gaps.tobytes())
        h.update(writes.tobytes())
        h.update(addrs.tobytes())
        h.update(b"|")
    return h.hexdigest()[:16]


class Simulation:
    """One simulation instance: state tables plus the traces feeding them."""

    def __init__(self, config: SimConfig, traces: Sequence[Sequence[TraceEntry]],
                 skip_idle: bool = True):
        if not traces:
            raise ValueError("at least one trace is required")
        self.config = config
        g0 = config.geometry
        g = config.effective_geometry
        self.geometry = g
        self.tp = timing_vector(config.timing)
        self.geo = geometry_vector(g)
        self.cfg = config_vector(config, skip_idle)
        self.sa, self.bk, self.rk, self.ch, self.ctr = new_state_tables(g)
        self.digest = trace_digest(traces)

        n = sum(len(t) for t in traces)
        self.req = new_request_table(max(n, 1))
        self.gaps = np.zeros(max(n, 1), dtype=np.int64)
        ns = len(traces)
        self.core = np.zeros((ns, N_CORE), dtype=np.int64)
        w = config.core.window_size
        self.fifo_inst = np.zeros((ns, w), dtype=np.int64)
        self.fifo_req = np.zeros((ns, w), dtype=np.int64)
        start = 0
        for s, t in enumerate(traces):
            gaps, writes, addrs = trace_arrays(t)
            addrs = stream_partition(addrs, s, ns, g0)
            m = map_addresses(addrs, g0, config.mapping)
            bank, sa = m["bank"], m["subarray"]
            if config.mode is Mode.IDEAL:
                bank = bank * g0.subarrays_per_bank + sa
                sa = np.zeros_like(sa)
            end = start + len(t)
            sl = slice(start, end)
            rank_id = m["channel"] * g.ranks_per_channel + m["rank"]
            self.req[sl, R_CH] = m["channel"]
            self.req[sl, R_RANKID] = rank_id
            self.req[sl, R_BANKID] = rank_id * g.banks_per_rank + bank
            self.req[sl, R_SA] = sa
            self.req[sl, R_ROW] = m["local_row"]
            self.req[sl, R_COL] = m["column"]
            self.req[sl, R_WRITE] = writes
            self.req[sl, R_STREAM] = s
            self.gaps[sl] = gaps
            c = self.core[s]
            c[P_NEXT], c[P_END] = start, end
            c[P_GAP] = gaps[0] if len(t) else 0
            c[P_TOTAL] = int(gaps.sum()) + len(t)
            if c[P_TOTAL] == 0:
                c[P_DONE] = 1
            start = end
        self.q = np.zeros((g.n_banks, config.controller.queue_depth), dtype=np.int64)
        self.q_len = np.zeros(g.n_banks, dtype=np.int64)
        self.kctr = np.zeros(N_KCTR, dtype=np.int64)
        self.log = np.zeros((4 * max(n, 1) + 64, N_LOG), dtype=np.int64)
        self.state = np.zeros(3, dtype=np.int64)
        self._hit = np.zeros(g.subarrays_per_bank, dtype=np.int64)
        self._first = np.zeros(g.subarrays_per_bank, dtype=np.int64)

    @property
    def cycle(self) -> int:
        return int(self.state[S_CYCLE])

    @property
    def done(self) -> bool:
        return bool(np.all(self.core[:, P_DONE] != 0))

    def _advance(self, stop_cycle: int, cfg: np.ndarray):
        while True:
            run_kernel(self.tp, cfg, self.geo, self.sa, self.bk, self.rk, self.ch,
                       self.ctr, self.req, self.q, self.q_len, self.kctr, self.core,
                       self.fifo_inst, self.fifo_req, self.gaps, self.log, self.state,
                       stop_cycle, self._hit, self._first)
            status = self.state[S_STATUS]
            if status == ST_LOGFULL:
                grown = np.zeros((2 * len(self.log), N_LOG), dtype=np.int64)
                grown[:len(self.log)] = self.log
                self.log = grown
                continue
            if status == ST_DEADLOCK:
                raise SimulationIntegrityError(
                    f"no command can ever issue and no request is in flight at cycle {self.cycle}")
            return status

    def step(self) -> List[Command]:
        """Advance exactly one DRAM cycle; returns the commands issued in it."""
        before = int(self.state[S_LOGLEN])
        if not self.done:
            cfg = self.cfg.copy()
            cfg[CF_SKIP] = 0
            self._advance(self.cycle + 1, cfg)
        rows = self.log[before:int(self.state[S_LOGLEN])]
        return [Command(CommandKind(int(r[L_KIND])), *(int(v) for v in r[L_CH:L_COL + 1]),
                        cycle=int(r[L_CYCLE])) for r in rows]

    def run(self, max_cycles: int = 1 << 60) -> SimResult:
        status = self._advance(max_cycles, self.cfg)
        if status != ST_DONE:
            raise SimulationIntegrityError(f"simulation did not finish within {max_cycles} cycles")
        return self.result()

    def result(self) -> SimResult:
        end = self.cycle
        close_accounting(self.bk, self.ctr, end)
        req = self.req[: int(self.core[:, P_END].max()) if len(self.core) else 0]
        if np.any(req[:, R_COMPLETE] < 0):
            raise SimulationIntegrityError("run finished with incomplete requests")
        if np.any(req[:, R_COMPLETE] < req[:, R_ARRIVAL]):
            raise SimulationIntegrityError("request completed before it arrived")
        k = self.kctr
        ctr = self.ctr
        counts = {"ACT": int(ctr[C_ACT]), "PRE": int(ctr[C_PRE]), "PRE_ALL": int(ctr[C_PREALL]),
                  "RD": int(ctr[C_RD]), "WR": int(ctr[C_WR]), "SA_SEL": int(ctr[C_SASEL])}
        if k[K_HIT] + k[K_MISS] + k[K_CONFLICT] != counts["RD"] + counts["WR"]:
            raise SimulationIntegrityError("row outcome counts do not cover column commands")
        is_w = req[:, R_WRITE] != 0
        lat = req[:, R_COMPLETE] - req[:, R_ARRIVAL]
        streams = [StreamResult(int(c[P_TOTAL]), int(c[P_FINISH])) for c in self.core]
        span = int(req[:, R_COMPLETE].max() - req[:, R_ARRIVAL].min()) if len(req) else 0
        return SimResult(
            mode=self.config.mode, config=self.config, streams=streams, dram_cycles=end,
            command_counts=counts, precharges=int(ctr[C_PREOPS]),
            row_hits=int(k[K_HIT]), row_misses=int(k[K_MISS]), row_conflicts=int(k[K_CONFLICT]),
            extra_activated_cycles=int(ctr[C_EXTRA]),
            read_latencies=lat[~is_w].copy(), write_latencies=lat[is_w].copy(),
            span=span, trace_digest=self.digest,
            commands=self.log[: int(self.state[S_LOGLEN])].copy(), requests=req.copy(),
        )


def run(config: SimConfig, traces: Sequence[Sequence[TraceEntry]], skip_idle: bool = True) -> SimResult:
    """Simulate ``traces`` (one per stream) to completion."""
    return Simulation(config, traces, skip_idle).run()
