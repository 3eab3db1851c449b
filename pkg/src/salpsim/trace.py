"""Request traces: text format, synthetic generation and built-in scenarios.

One request per line::

    <inst_gap> <R|W> <address>

``inst_gap`` counts non-memory instructions before the request; the address
may be decimal or ``0x`` hex. Blank lines and ``#`` comments are ignored.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Iterable, List, NamedTuple, Optional, Sequence, TextIO, Union

import numpy as np

from .config import Geometry, MappingPolicy
from .mapping import Coord, encode_address, map_addresses


class TraceError(ValueError):
    def __init__(self, message: str, line: Optional[int] = None):
        self.line = line
        super().__init__(f"line {line}: {message}" if line is not None else message)


class TraceEntry(NamedTuple):
    inst_gap: int
    is_write: bool
    phys_addr: int


def parse_trace(stream: Union[str, TextIO, Iterable[str]], capacity: Optional[int] = None) -> List[TraceEntry]:
    if isinstance(stream, str):
        stream = stream.splitlines()
    entries = []
    for lineno, raw in enumerate(stream, 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split()
        if len(parts) != 3:
            raise TraceError(f"expected '<inst_gap> <R|W> <address>', got {line!r}", lineno)
        gap_s, rw, addr_s = parts
        try:
            gap = int(gap_s, 10)
        except ValueError:
            raise TraceError(f"bad instruction gap {gap_s!r}", lineno) from None
        if gap < 0:
            raise TraceError("instruction gap must be >= 0", lineno)
        rw = rw.upper()
        if rw not in ("R", "W"):
            raise TraceError(f"expected R or W, got {parts[1]!r}", lineno)
        try:
            addr = int(addr_s, 0)
        except ValueError:
            raise TraceError(f"bad address {addr_s!r}", lineno) from None
        if addr < 0 or (capacity is not None and addr >= capacity):
            raise TraceError(f"address {addr_s} outside capacity {capacity:#x}", lineno)
        entries.append(TraceEntry(gap, rw == "W", addr))
    return entries


def render_trace(entries: Sequence[TraceEntry], header: Sequence[str] = ()) -> str:
    lines = [f"# {h}" for h in header]
    lines += [f"{e.inst_gap} {'W' if e.is_write else 'R'} {e.phys_addr:#x}" for e in entries]
    return "\n".join(lines) + "\n"


def load_trace(path: Union[str, Path], capacity: Optional[int] = None) -> List[TraceEntry]:
    try:
        with open(path) as fh:
            return parse_trace(fh, capacity)
    except TraceError as exc:
        raise TraceError(f"{path}: {exc}") from None


def save_trace(path: Union[str, Path], entries: Sequence[TraceEntry], header: Sequence[str] = ()):
    Path(path).write_text(render_trace(entries, header))


def trace_arrays(entries: Sequence[TraceEntry]):
    """(gaps, is_write, addrs) as int64 arrays."""
    n = len(entries)
    gaps = np.fromiter((e.inst_gap for e in entries), dtype=np.int64, count=n)
    writes = np.fromiter((e.is_write for e in entries), dtype=np.int64, count=n)
    addrs = np.fromiter((e.phys_addr for e in entries), dtype=np.int64, count=n)
    return gaps, writes, addrs


@dataclass(frozen=True)
class SynthParams:
    n_requests: int = 10_000
    read_fraction: float = 1.0
    mean_inst_gap: float = 20.0
    row_hit_prob: float = 0.0
    # 1.0 spreads requests uniformly over banks; larger values pile them
    # onto fewer banks, math.inf puts everything on bank 0
    bank_skew: float = 1.0
    subarray_spread: bool = True
    seed: int = 1

    def __post_init__(self):
        if self.n_requests < 1:
            raise ValueError("n_requests must be >= 1")
        for name in ("read_fraction", "row_hit_prob"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1]")
        if self.mean_inst_gap < 0:
            raise ValueError("mean_inst_gap must be >= 0")
        if not self.bank_skew >= 1.0:
            raise ValueError("bank_skew must be >= 1")


def bank_weights(n_banks: int, skew: float) -> np.ndarray:
    if math.isinf(skew):
        w = np.zeros(n_banks)
        w[0] = 1.0
        return w
    w = np.arange(1, n_banks + 1, dtype=float) ** -(skew - 1.0)
    return w / w.sum()


def synth_trace(p: SynthParams, g: Geometry,
                policy: MappingPolicy = MappingPolicy.ROW_INTERLEAVED) -> List[TraceEntry]:
    """Deterministic synthetic trace; conflict structure is built in coordinate space."""
    policy = MappingPolicy.parse(policy)
    rng = np.random.default_rng(p.seed)
    n = p.n_requests
    writes = rng.random(n) >= p.read_fraction
    if p.mean_inst_gap > 0:
        gaps = rng.geometric(1.0 / (p.mean_inst_gap + 1.0), size=n) - 1
    else:
        gaps = np.zeros(n, dtype=np.int64)
    reuse = rng.random(n) < p.row_hit_prob
    banks = rng.choice(g.n_banks, size=n, p=bank_weights(g.n_banks, p.bank_skew))
    cols = rng.integers(0, g.columns_per_row, size=n)
    u_sa = rng.random(n)
    u_row = rng.random(n)

    S = g.subarrays_per_bank
    rps = g.rows_per_subarray
    last = {}  # global bank -> (subarray, local_row)
    prev = None
    out = []
    for i in range(n):
        if reuse[i] and prev is not None:
            gb, sa, lr = prev
        else:
            gb = int(banks[i])
            if gb in last:
                psa, prow = last[gb]
                if S > 1 and p.subarray_spread:
                    sa = (psa + 1 + int(u_sa[i] * (S - 1))) % S
                    lr = int(u_row[i] * rps)
                else:
                    sa = psa
                    if rps > 1:
                        lr = (prow + 1 + int(u_row[i] * (rps - 1))) % rps
                    else:
                        lr = prow
            else:
                sa = int(u_sa[i] * S)
                lr = int(u_row[i] * rps)
        last[gb] = (sa, lr)
        prev = (gb, sa, lr)
        rank_id, bank = divmod(gb, g.banks_per_rank)
        ch, rank = divmod(rank_id, g.ranks_per_channel)
        addr = encode_address(Coord(ch, rank, bank, sa, lr, int(cols[i])), g, policy)
        out.append(TraceEntry(int(gaps[i]), bool(writes[i]), addr))
    return out


def synth_header(p: SynthParams, g: Geometry, policy: MappingPolicy) -> List[str]:
    params = " ".join(f"{k}={v}" for k, v in asdict(p).items())
    geo = " ".join(f"{k}={v}" for k, v in asdict(g).items())
    return [f"synth {params}", f"geometry {geo} mapping={MappingPolicy.parse(policy).value}"]


def row_hit_opportunity(entries: Sequence[TraceEntry], g: Geometry,
                        policy: MappingPolicy = MappingPolicy.ROW_INTERLEAVED) -> float:
    """Fraction of requests that target the same row as the request before."""
    if len(entries) < 2:
        return 0.0
    _, _, addrs = trace_arrays(entries)
    m = map_addresses(addrs, g, policy)
    key = np.stack([m["channel"], m["rank"], m["bank"], m["subarray"], m["local_row"]])
    same = np.all(key[:, 1:] == key[:, :-1], axis=0)
    return float(same.mean())


# ---------------------------------------------------------------------------
# built-in workloads

CONFLICT_SKEW = 12.0


def fig23_trace(g: Geometry, policy: MappingPolicy = MappingPolicy.ROW_INTERLEAVED) -> List[TraceEntry]:
    """Read A, write B, read A, read B: two rows of one bank in different subarrays."""
    if g.subarrays_per_bank < 2:
        raise ValueError("the four-request scenario needs at least two subarrays")
    a = encode_address(Coord(0, 0, 0, 0, 5, 0), g, policy)
    b = encode_address(Coord(0, 0, 0, 1, 9, 0), g, policy)
    return [TraceEntry(0, False, a), TraceEntry(0, True, b),
            TraceEntry(0, False, a + g.bytes_per_column), TraceEntry(0, False, b + g.bytes_per_column)]


def conflict_params(n_requests: int = 100_000, write_fraction: float = 0.0, seed: int = 1,
                    mean_inst_gap: float = 20.0) -> SynthParams:
    return SynthParams(n_requests=n_requests, read_fraction=1.0 - write_fraction,
                       mean_inst_gap=mean_inst_gap, row_hit_prob=0.0,
                       bank_skew=CONFLICT_SKEW, subarray_spread=True, seed=seed)


def conflict_trace(g: Geometry, n_requests: int = 100_000, write_fraction: float = 0.0,
                   seed: int = 1, policy: MappingPolicy = MappingPolicy.ROW_INTERLEAVED):
    return synth_trace(conflict_params(n_requests, write_fraction, seed), g, policy)


def thrash_trace(g: Geometry, n_requests: int = 2_000, inst_gap: int = 100,
                 policy: MappingPolicy = MappingPolicy.ROW_INTERLEAVED) -> List[TraceEntry]:
    """Reads alternating between two rows of one bank that sit in different subarrays.

    The gap keeps roughly one read in flight, so the scheduler cannot batch
    same-row reads and the two rows really do evict each other.
    """
    if g.subarrays_per_bank < 2:
        raise ValueError("thrash scenario needs at least two subarrays")
    out = []
    for i in range(n_requests):
        sa = i % 2
        col = (i // 2) % g.columns_per_row
        addr = encode_address(Coord(0, 0, 0, sa, 3 + sa, col), g, policy)
        out.append(TraceEntry(inst_gap, False, addr))
    return out


SCENARIOS = ("fig23", "conflict", "thrash")
# fig23 is the in-order timeline: every bank serves its requests oldest first
SCENARIO_OVERRIDES = {"fig23": {"hit_cap": 0}}


def scenario_trace(name: str, g: Geometry, seed: int = 1, n_requests: Optional[int] = None,
                   write_fraction: float = 0.0,
                   policy: MappingPolicy = MappingPolicy.ROW_INTERLEAVED) -> List[TraceEntry]:
    if name == "fig23":
        return fig23_trace(g, policy)
    if name == "conflict":
        return conflict_trace(g, n_requests or 100_000, write_fraction, seed, policy)
    if name == "thrash":
        return thrash_trace(g, n_requests or 2_000, policy=policy)
    raise ValueError(f"unknown scenario {name!r}; choose from {', '.join(SCENARIOS)}")
