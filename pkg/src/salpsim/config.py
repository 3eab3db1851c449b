"""Static configuration: geometry, timing, energy, core and controller knobs."""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field, fields, replace
from enum import Enum
from pathlib import Path
from typing import Dict, Iterable, Mapping


class ConfigError(ValueError):
    """Invalid configuration value or file."""


class Mode(str, Enum):
    BASELINE = "baseline"
    SALP1 = "salp1"
    SALP2 = "salp2"
    MASA = "masa"
    IDEAL = "ideal"

    @property
    def kernel_code(self) -> int:
        # IDEAL runs the baseline rules on a transformed geometry
        return _KERNEL_CODE[self]

    @classmethod
    def parse(cls, value) -> "Mode":
        if isinstance(value, Mode):
            return value
        try:
            return cls(str(value).strip().lower().replace("-", ""))
        except ValueError:
            raise ConfigError(f"unknown mode {value!r}") from None


_KERNEL_CODE = {
    Mode.BASELINE: 0,
    Mode.SALP1: 1,
    Mode.SALP2: 2,
    Mode.MASA: 3,
    Mode.IDEAL: 0,
}

ALL_MODES = (Mode.BASELINE, Mode.SALP1, Mode.SALP2, Mode.MASA, Mode.IDEAL)


class MappingPolicy(str, Enum):
    ROW_INTERLEAVED = "row"
    LINE_INTERLEAVED = "line"

    @classmethod
    def parse(cls, value) -> "MappingPolicy":
        if isinstance(value, MappingPolicy):
            return value
        v = str(value).strip().lower()
        for p in cls:
            if v in (p.value, p.name.lower(), p.value + "_interleaved"):
                return p
        raise ConfigError(f"unknown mapping policy {value!r}")


class RowPolicy(str, Enum):
    OPEN_ROW = "open"
    CLOSED_ROW = "closed"

    @classmethod
    def parse(cls, value) -> "RowPolicy":
        if isinstance(value, RowPolicy):
            return value
        v = str(value).strip().lower()
        for p in cls:
            if v in (p.value, p.name.lower(), p.value + "_row"):
                return p
        raise ConfigError(f"unknown row policy {value!r}")


def _is_pow2(n: int) -> bool:
    return n >= 1 and (n & (n - 1)) == 0


def log2i(n: int) -> int:
    return n.bit_length() - 1


@dataclass(frozen=True)
class Geometry:
    channels: int = 1
    ranks_per_channel: int = 1
    banks_per_rank: int = 8
    subarrays_per_bank: int = 8
    rows_per_subarray: int = 512
    columns_per_row: int = 128
    bytes_per_column: int = 64

    def __post_init__(self):
        for f in fields(self):
            v = getattr(self, f.name)
            if not isinstance(v, int) or v < 1:
                raise ConfigError(f"{f.name} must be an integer >= 1, got {v!r}")
        for name in ("subarrays_per_bank", "rows_per_subarray", "columns_per_row"):
            if not _is_pow2(getattr(self, name)):
                raise ConfigError(f"{name} must be a power of two")

    @property
    def rows_per_bank(self) -> int:
        return self.subarrays_per_bank * self.rows_per_subarray

    @property
    def n_ranks(self) -> int:
        return self.channels * self.ranks_per_channel

    @property
    def n_banks(self) -> int:
        return self.n_ranks * self.banks_per_rank

    @property
    def n_subarrays(self) -> int:
        return self.n_banks * self.subarrays_per_bank

    @property
    def row_bytes(self) -> int:
        return self.columns_per_row * self.bytes_per_column

    @property
    def capacity(self) -> int:
        return self.n_banks * self.rows_per_bank * self.row_bytes

    def with_subarrays(self, n: int) -> "Geometry":
        """Re-split each bank into ``n`` subarrays, keeping rows per bank fixed."""
        total = self.rows_per_bank
        if not _is_pow2(n) or n > total:
            raise ConfigError(f"cannot split {total} rows into {n} subarrays")
        return replace(self, subarrays_per_bank=n, rows_per_subarray=total // n)

    def ideal(self) -> "Geometry":
        """One independent bank per subarray."""
        return replace(
            self,
            banks_per_rank=self.banks_per_rank * self.subarrays_per_bank,
            subarrays_per_bank=1,
        )


@dataclass(frozen=True)
class TimingParams:
    """DRAM timing constraints in command-clock cycles (DDR3-1600 defaults)."""

    tRCD: int = 11
    tRP: int = 11
    tRAS: int = 28
    tCL: int = 11
    tCWL: int = 8
    tBL: int = 4
    tRTP: int = 6
    tWR: int = 12
    tCCD: int = 4
    tRRD: int = 5
    tFAW: int = 24
    tWTR: int = 6
    tRTW: int = 9
    tPA: int = 0
    tSCD: int = 1
    # apply tRRD/tFAW to ACTs that target other subarrays of the same bank
    act_window_same_bank: bool = True

    def __post_init__(self):
        for f in fields(self):
            v = getattr(self, f.name)
            if f.name == "act_window_same_bank":
                continue
            if not isinstance(v, int) or isinstance(v, bool) or v < 0:
                raise ConfigError(f"{f.name} must be a non-negative integer, got {v!r}")
        if self.tRAS < self.tRCD:
            raise ConfigError("tRAS must be >= tRCD")
        if self.tBL < 1:
            raise ConfigError("tBL must be >= 1")

    @property
    def tRC(self) -> int:
        return self.tRAS + self.tRP

    @property
    def write_recovery(self) -> int:
        """WR issue to earliest PRE of the same row."""
        return self.tCWL + self.tBL + self.tWR

    @property
    def write_to_read(self) -> int:
        return self.tCWL + self.tBL + self.tWTR


@dataclass(frozen=True)
class EnergyParams:
    e_act: float = 2.0
    e_pre: float = 1.5
    e_rd: float = 1.2
    e_wr: float = 1.3
    e_sa_sel: float = 0.1
    p_background: float = 60.0  # mW per rank
    p_extra_per_activated_subarray: float = 0.56  # mW
    clock_period: float = 1.25  # ns

    def __post_init__(self):
        for f in fields(self):
            v = getattr(self, f.name)
            if not isinstance(v, (int, float)) or isinstance(v, bool) or v < 0:
                raise ConfigError(f"{f.name} must be >= 0, got {v!r}")


@dataclass(frozen=True)
class CoreParams:
    window_size: int = 128
    max_outstanding_reads: int = 32
    cpu_clock_ratio: int = 4
    width: int = 4

    def __post_init__(self):
        for f in fields(self):
            v = getattr(self, f.name)
            if not isinstance(v, int) or v < 1:
                raise ConfigError(f"{f.name} must be an integer >= 1, got {v!r}")


@dataclass(frozen=True)
class ControllerParams:
    queue_depth: int = 32
    # serviced younger row hits allowed to bypass a bank's oldest request;
    # None means 4 x queue_depth
    hit_cap: int | None = None
    # MASA: cap on simultaneously activated subarrays per bank; 0 = no cap
    max_overlapped_acts: int = 0

    def __post_init__(self):
        if self.queue_depth < 1:
            raise ConfigError("queue_depth must be >= 1")
        if self.hit_cap is not None and self.hit_cap < 0:
            raise ConfigError("hit_cap must be >= 0")
        if self.max_overlapped_acts < 0:
            raise ConfigError("max_overlapped_acts must be >= 0")

    @property
    def effective_hit_cap(self) -> int:
        return 4 * self.queue_depth if self.hit_cap is None else self.hit_cap


@dataclass(frozen=True)
class SimConfig:
    geometry: Geometry = field(default_factory=Geometry)
    timing: TimingParams = field(default_factory=TimingParams)
    energy: EnergyParams = field(default_factory=EnergyParams)
    core: CoreParams = field(default_factory=CoreParams)
    controller: ControllerParams = field(default_factory=ControllerParams)
    mode: Mode = Mode.BASELINE
    mapping: MappingPolicy = MappingPolicy.ROW_INTERLEAVED
    row_policy: RowPolicy = RowPolicy.OPEN_ROW

    def __post_init__(self):
        object.__setattr__(self, "mode", Mode.parse(self.mode))
        object.__setattr__(self, "mapping", MappingPolicy.parse(self.mapping))
        object.__setattr__(self, "row_policy", RowPolicy.parse(self.row_policy))

    @property
    def effective_geometry(self) -> Geometry:
        if self.mode is Mode.IDEAL:
            return self.geometry.ideal()
        return self.geometry

    def with_overrides(self, values: Mapping[str, object]) -> "SimConfig":
        return apply_overrides(self, values)


_SECTIONS = ("geometry", "timing", "energy", "core", "controller")
_TOP = {"mode": Mode.parse, "mapping": MappingPolicy.parse, "row_policy": RowPolicy.parse}
# short aliases accepted on the command line and in config files
_ALIASES = {
    "subarrays": "subarrays_per_bank",
    "banks": "banks_per_rank",
    "ranks": "ranks_per_channel",
    "rows": "rows_per_subarray",
    "columns": "columns_per_row",
}


def _key_index() -> Dict[str, tuple]:
    idx = {}
    for section in _SECTIONS:
        cls = SimConfig.__dataclass_fields__[section].default_factory
        for f in fields(cls):
            idx[f.name] = (section, f)
    return idx


_KEYS = _key_index()


def _coerce(f: dataclasses.Field, raw):
    if not isinstance(raw, str):
        return raw
    text = raw.strip()
    ftype = str(f.type)
    if "bool" in ftype:
        low = text.lower()
        if low in ("1", "true", "yes", "on"):
            return True
        if low in ("0", "false", "no", "off"):
            return False
        raise ConfigError(f"{f.name}: expected a boolean, got {raw!r}")
    if "None" in ftype and text.lower() in ("none", "auto", ""):
        return None
    try:
        if "float" in ftype:
            return float(text)
        return int(text, 0)
    except ValueError:
        raise ConfigError(f"{f.name}: cannot parse {raw!r}") from None


def apply_overrides(cfg: SimConfig, values: Mapping[str, object]) -> SimConfig:
    """Return ``cfg`` with flat ``key -> value`` overrides applied."""
    per_section: Dict[str, dict] = {s: {} for s in _SECTIONS}
    top = {}
    for key, raw in values.items():
        key = _ALIASES.get(key, key)
        if key in _TOP:
            top[key] = _TOP[key](raw)
        elif key in _KEYS:
            section, f = _KEYS[key]
            per_section[section][key] = _coerce(f, raw)
        else:
            raise ConfigError(f"unknown config key {key!r}")
    updates = dict(top)
    for section, vals in per_section.items():
        if vals:
            updates[section] = replace(getattr(cfg, section), **vals)
    try:
        return replace(cfg, **updates)
    except TypeError as exc:  # pragma: no cover - defensive
        raise ConfigError(str(exc)) from None


def parse_config_text(text: str, source: str = "<config>") -> Dict[str, str]:
    """Parse flat ``key = value`` lines; ``#`` starts a comment."""
    values = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected key=value")
        key, value = (part.strip() for part in line.split("=", 1))
        if not key:
            raise ConfigError(f"{source}:{lineno}: empty key")
        values[key] = value
    return values


def load_config(path: str | Path | None = None, overrides: Mapping[str, object] | None = None) -> SimConfig:
    cfg = SimConfig()
    if path is not None:
        p = Path(path)
        try:
            text = p.read_text()
        except OSError as exc:
            raise ConfigError(f"cannot read config {p}: {exc}") from None
        cfg = apply_overrides(cfg, parse_config_text(text, str(p)))
    if overrides:
        cfg = apply_overrides(cfg, overrides)
    return cfg


def config_keys() -> Iterable[str]:
    return list(_TOP) + list(_KEYS)
