"""Physical address <-> DRAM coordinate mapping.

Fields are peeled off low to high with div/mod, which is the plain bit
slicing when every count is a power of two and stays bijective otherwise.

    line-interleaved: offset | channel | bank | rank | column | row
    row-interleaved:  offset | column | channel | bank | rank | row
"""
from __future__ import annotations

from typing import NamedTuple

import numpy as np

from .config import Geometry, MappingPolicy


class Coord(NamedTuple):
    channel: int
    rank: int
    bank: int
    subarray: int
    local_row: int
    column: int


class AddressError(ValueError):
    pass


def _order(g: Geometry, policy: MappingPolicy):
    if policy is MappingPolicy.LINE_INTERLEAVED:
        return (("channel", g.channels), ("bank", g.banks_per_rank),
                ("rank", g.ranks_per_channel), ("column", g.columns_per_row))
    return (("column", g.columns_per_row), ("channel", g.channels),
            ("bank", g.banks_per_rank), ("rank", g.ranks_per_channel))


def map_address(addr: int, g: Geometry, policy: MappingPolicy = MappingPolicy.ROW_INTERLEAVED) -> Coord:
    policy = MappingPolicy.parse(policy)
    if not 0 <= addr < g.capacity:
        raise AddressError(f"address {addr:#x} outside capacity {g.capacity:#x}")
    a = addr // g.bytes_per_column
    f = {}
    for name, n in _order(g, policy):
        a, f[name] = divmod(a, n)
    row = a
    sa, local = divmod(row, g.rows_per_subarray)
    return Coord(f["channel"], f["rank"], f["bank"], sa, local, f["column"])


def encode_address(c: Coord, g: Geometry, policy: MappingPolicy = MappingPolicy.ROW_INTERLEAVED) -> int:
    """Inverse of :func:`map_address` (column offset zero)."""
    policy = MappingPolicy.parse(policy)
    limits = dict(channel=g.channels, rank=g.ranks_per_channel, bank=g.banks_per_rank,
                  subarray=g.subarrays_per_bank, local_row=g.rows_per_subarray,
                  column=g.columns_per_row)
    for name, n in limits.items():
        v = getattr(c, name)
        if not 0 <= v < n:
            raise AddressError(f"{name}={v} out of range [0, {n})")
    a = c.subarray * g.rows_per_subarray + c.local_row
    for name, n in reversed(_order(g, policy)):
        a = a * n + getattr(c, name)
    return a * g.bytes_per_column


def map_addresses(addrs: np.ndarray, g: Geometry,
                  policy: MappingPolicy = MappingPolicy.ROW_INTERLEAVED) -> dict:
    """Vectorized :func:`map_address`; returns a dict of int64 arrays."""
    policy = MappingPolicy.parse(policy)
    a = np.asarray(addrs, dtype=np.int64)
    if a.size and (a.min() < 0 or a.max() >= g.capacity):
        bad = a[(a < 0) | (a >= g.capacity)][0]
        raise AddressError(f"address {int(bad):#x} outside capacity {g.capacity:#x}")
    a = a // g.bytes_per_column
    out = {}
    for name, n in _order(g, policy):
        out[name] = a % n
        a = a // n
    out["subarray"] = a // g.rows_per_subarray
    out["local_row"] = a % g.rows_per_subarray
    return out


def stream_partition(addrs: np.ndarray, stream: int, n_streams: int, g: Geometry) -> np.ndarray:
    """Fold a stream's addresses into its own slice of the top address bits."""
    a = np.asarray(addrs, dtype=np.int64)
    if n_streams <= 1:
        return a
    k = (n_streams - 1).bit_length()
    region = g.capacity >> k
    if g.rows_per_bank % (1 << k):
        raise AddressError(f"capacity cannot be split among {n_streams} streams")
    return a % region + stream * region
