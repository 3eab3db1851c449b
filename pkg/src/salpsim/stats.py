"""Energy accounting, cross-mode comparison and CSV reports.

Energies are computed with :class:`fractions.Fraction` so that sums and
scalings are exact; per-command energies are taken at their decimal value
(``Fraction(str(x))``), not their binary float expansion.

Units: per-command energies in nJ, powers in mW, the clock period in ns.
mW x ns = pJ, hence the 1e-3 factor on static terms.
"""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from fractions import Fraction
from typing import Dict, List, Mapping, Optional, Sequence, TextIO

import numpy as np

from .config import EnergyParams, Mode

ENERGY_CATEGORIES = ("ACT", "PRE", "RD", "WR", "SA_SEL", "static")
_PJ_TO_NJ = Fraction(1, 1000)


class ComparisonError(ValueError):
    """Results that cannot be compared (different traces or configurations)."""


def _q(x) -> Fraction:
    return x if isinstance(x, Fraction) else Fraction(str(x))


@dataclass(frozen=True)
class EnergyReport:
    breakdown: Dict[str, Fraction]  # nJ per category in ENERGY_CATEGORIES

    @property
    def dynamic_nJ(self) -> Fraction:
        return sum((v for k, v in self.breakdown.items() if k != "static"), Fraction(0))

    @property
    def static_nJ(self) -> Fraction:
        return self.breakdown["static"]

    @property
    def total_nJ(self) -> Fraction:
        return self.dynamic_nJ + self.static_nJ

    def __add__(self, other: "EnergyReport") -> "EnergyReport":
        return EnergyReport({k: self.breakdown[k] + other.breakdown[k] for k in ENERGY_CATEGORIES})

    def as_dict(self) -> Dict[str, Fraction]:
        return {"dynamic_nJ": self.dynamic_nJ, "static_nJ": self.static_nJ, "total_nJ": self.total_nJ}


def energy_from_counts(counts: Mapping[str, int], precharges: int, span_cycles: int,
                       extra_activated_cycles: int, n_ranks: int, p: EnergyParams) -> EnergyReport:
    """``precharges`` counts subarrays closed (a PRE_ALL closing k rows counts k)."""
    clk = _q(p.clock_period)
    static = (_q(p.p_background) * n_ranks * span_cycles * clk
              + _q(p.p_extra_per_activated_subarray) * extra_activated_cycles * clk) * _PJ_TO_NJ
    return EnergyReport({
        "ACT": _q(p.e_act) * counts.get("ACT", 0),
        "PRE": _q(p.e_pre) * precharges,
        "RD": _q(p.e_rd) * counts.get("RD", 0),
        "WR": _q(p.e_wr) * counts.get("WR", 0),
        "SA_SEL": _q(p.e_sa_sel) * counts.get("SA_SEL", 0),
        "static": static,
    })


def energy_of(result, p: Optional[EnergyParams] = None) -> EnergyReport:
    """Energy of a finished :class:`~salpsim.engine.SimResult`."""
    if p is None:
        p = result.config.energy
    return energy_from_counts(result.command_counts, result.precharges, result.dram_cycles,
                              result.extra_activated_cycles,
                              result.config.effective_geometry.n_ranks, p)


def ratio_3(num: int, den: int) -> str:
    """Exact rational num/den rounded half-up to three decimals."""
    if den == 0:
        return "0.000"
    q = Fraction(num, den) * 1000
    n = int(q + Fraction(1, 2)) if q >= 0 else -int(-q + Fraction(1, 2))
    sign = "-" if n < 0 else ""
    n = abs(n)
    return f"{sign}{n // 1000}.{n % 1000:03d}"


def fmt_fraction(x: Fraction, digits: int = 6) -> str:
    """Deterministic fixed-point rendering of an exact value."""
    scale = 10 ** digits
    q = x * scale
    n = int(q + Fraction(1, 2)) if q >= 0 else -int(-q + Fraction(1, 2))
    sign = "-" if n < 0 else ""
    n = abs(n)
    if digits == 0:
        return f"{sign}{n}"
    return f"{sign}{n // scale}.{n % scale:0{digits}d}"


def pct_delta(value: float, base: float) -> float:
    return 0.0 if base == 0 else (value / base - 1.0) * 100.0


@dataclass(frozen=True)
class ModeSummary:
    mode: Mode
    ipc: float
    ipc_delta_pct: float
    hit_rate: float
    hit_rate_delta_pp: float
    energy: EnergyReport
    energy_delta_pct: float
    sa_sel_per_act: str


def _comparable(a, b) -> bool:
    ca, cb = a.config, b.config
    return (a.trace_digest == b.trace_digest and ca.geometry == cb.geometry
            and ca.timing == cb.timing and ca.core == cb.core and ca.energy == cb.energy
            and ca.mapping == cb.mapping and ca.row_policy == cb.row_policy
            and ca.controller == cb.controller and len(a.streams) == len(b.streams))


def summarize(results: Mapping[Mode, object], baseline: Mode = Mode.BASELINE) -> List[ModeSummary]:
    """Per-mode deltas relative to ``baseline`` (which must be present)."""
    results = {Mode.parse(k): v for k, v in results.items()}
    if baseline not in results:
        raise ComparisonError(f"no {baseline.value} result to compare against")
    base = results[baseline]
    for m, r in results.items():
        if not _comparable(r, base):
            raise ComparisonError(f"{m.value} result was produced from a different trace or configuration")
    e_base = energy_of(base).total_nJ
    out = []
    for m in sorted(results, key=lambda k: list(Mode).index(k)):
        r = results[m]
        e = energy_of(r)
        e_delta = float((e.total_nJ / e_base - 1) * 100) if e_base else 0.0
        out.append(ModeSummary(
            mode=m, ipc=r.ipc, ipc_delta_pct=pct_delta(r.ipc, base.ipc),
            hit_rate=r.hit_rate, hit_rate_delta_pp=(r.hit_rate - base.hit_rate) * 100.0,
            energy=e, energy_delta_pct=e_delta,
            sa_sel_per_act=ratio_3(r.command_counts["SA_SEL"], r.command_counts["ACT"]),
        ))
    return out


# ---------------------------------------------------------------------------
# CSV


def _f(x: float) -> str:
    return f"{x:.6f}"


def stats_rows(result) -> List[tuple]:
    """(metric, value) rows for one run; nothing in here names the mode."""
    c = result.command_counts
    rows = [("instructions", sum(s.instructions for s in result.streams))]
    for i, s in enumerate(result.streams):
        rows += [(f"stream{i}_instructions", s.instructions),
                 (f"stream{i}_core_cycles", s.core_cycles),
                 (f"stream{i}_ipc", _f(s.ipc))]
    rows += [("ipc", _f(result.ipc)), ("dram_cycles", result.dram_cycles), ("span", result.span),
             ("n_ACT", c["ACT"]), ("n_PRE", result.precharges), ("n_RD", c["RD"]),
             ("n_WR", c["WR"]), ("n_SA_SEL", c["SA_SEL"]),
             ("row_hits", result.row_hits), ("row_misses", result.row_misses),
             ("row_conflicts", result.row_conflicts), ("hit_rate", _f(result.hit_rate)),
             ("sa_sel_per_act", ratio_3(c["SA_SEL"], c["ACT"])),
             ("extra_activated_cycles", result.extra_activated_cycles)]
    for name, lat in (("read", result.read_latencies), ("write", result.write_latencies)):
        rows += [(f"{name}_latency_mean", _f(float(lat.mean()) if len(lat) else 0.0)),
                 (f"{name}_latency_max", int(lat.max()) if len(lat) else 0)]
    hist, edges = result.latency_histogram("read")
    for lo, hi, n in zip(edges[:-1], edges[1:], hist):
        hi_s = "inf" if hi >= 1 << 61 else str(int(hi))
        rows.append((f"read_latency_hist_{int(lo)}_{hi_s}", int(n)))
    e = energy_of(result)
    for k in ENERGY_CATEGORIES:
        if k != "static":
            rows.append((f"energy_{k}_nJ", fmt_fraction(e.breakdown[k])))
    rows += [("energy_dynamic_nJ", fmt_fraction(e.dynamic_nJ)),
             ("energy_static_nJ", fmt_fraction(e.static_nJ)),
             ("energy_total_nJ", fmt_fraction(e.total_nJ))]
    return rows


def write_stats_csv(result, fh: TextIO):
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(("metric", "value"))
    w.writerows(stats_rows(result))


def stats_csv(result) -> str:
    buf = io.StringIO()
    write_stats_csv(result, buf)
    return buf.getvalue()


COMPARISON_HEADER = (("mode", "ipc", "ipc_delta_pct", "hit_rate", "hit_rate_delta_pp")
                     + tuple(f"energy_{k}_nJ" for k in ENERGY_CATEGORIES)
                     + ("energy_total_nJ", "energy_delta_pct", "sa_sel_per_act"))


def write_comparison_csv(summaries: Sequence[ModeSummary], fh: TextIO):
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(COMPARISON_HEADER)
    for s in summaries:
        w.writerow((s.mode.value, _f(s.ipc), f"{s.ipc_delta_pct:.3f}", _f(s.hit_rate),
                    f"{s.hit_rate_delta_pp:.3f}",
                    *(fmt_fraction(s.energy.breakdown[k]) for k in ENERGY_CATEGORIES),
                    fmt_fraction(s.energy.total_nJ), f"{s.energy_delta_pct:.3f}",
                    s.sa_sel_per_act))


def latency_summary(lat: np.ndarray) -> Dict[str, float]:
    if not len(lat):
        return {"n": 0, "mean": 0.0, "p50": 0.0, "p99": 0.0, "max": 0}
    return {"n": int(len(lat)), "mean": float(lat.mean()), "p50": float(np.percentile(lat, 50)),
            "p99": float(np.percentile(lat, 99)), "max": int(lat.max())}
