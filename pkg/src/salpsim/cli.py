"""Command-line front end.

Exit status: 0 success, 2 bad input (config, trace, arguments),
3 simulation-integrity fault, 4 command log failed verification.
"""
from __future__ import annotations

import argparse
import csv
import io
import sys
from concurrent.futures import ProcessPoolExecutor
from contextlib import contextmanager
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

from .config import ALL_MODES, ConfigError, Mode, load_config
from .dram import SimulationIntegrityError
from .engine import SimResult, run
from .mapping import AddressError
from .stats import (energy_of, fmt_fraction, summarize, write_comparison_csv,
                    write_stats_csv)
from .timeline import render_result
from .trace import (SCENARIO_OVERRIDES, SCENARIOS, SynthParams, TraceError, load_trace,
                    save_trace, scenario_trace, synth_header, synth_trace)
from .verify import format_violations, read_command_log, verify_stream, write_command_log

EXIT_OK, EXIT_INPUT, EXIT_INTEGRITY, EXIT_VERIFY = 0, 2, 3, 4

SWEEP_RANGES = {
    "subarrays_per_bank": (1, 128),
    "banks_per_rank": (8, 64),
    "channels": (1, 8),
    "ranks_per_channel": (1, 8),
}
SWEEP_ALIASES = {"subarrays": "subarrays_per_bank", "banks": "banks_per_rank",
                 "ranks": "ranks_per_channel"}


class InputError(Exception):
    pass


class VerifyFailure(Exception):
    pass


@contextmanager
def _output(path: Optional[str]):
    if path in (None, "-"):
        yield sys.stdout
    else:
        with open(path, "w", newline="") as fh:
            yield fh


def _parse_sets(items: Sequence[str]) -> Dict[str, str]:
    out = {}
    for item in items or ():
        if "=" not in item:
            raise InputError(f"--set expects key=value, got {item!r}")
        k, v = item.split("=", 1)
        out[k.strip()] = v.strip()
    return out


def _parse_modes(value: Optional[str]) -> List[Mode]:
    if value is None:
        return [Mode.BASELINE]
    if value == "all":
        return list(ALL_MODES)
    return [Mode.parse(v) for v in value.split(",")]


def _base_config(args, extra: Optional[Dict[str, object]] = None):
    overrides: Dict[str, object] = dict(extra or {})
    overrides.update(_parse_sets(args.set))
    cfg = load_config(args.config, overrides)
    if getattr(args, "subarrays", None) is not None:
        cfg = sweep_point(cfg, "subarrays_per_bank", args.subarrays)
    return cfg


def _load_traces(args, cfg):
    if args.trace and args.scenario:
        raise InputError("give either --trace or --scenario, not both")
    if args.trace:
        return [load_trace(p, cfg.geometry.capacity) for p in args.trace]
    name = args.scenario or "fig23"
    return [scenario_trace(name, cfg.geometry, seed=args.seed, n_requests=args.requests,
                           write_fraction=args.write_fraction, policy=cfg.mapping)]


def _scenario_defaults(args) -> Dict[str, object]:
    if args.trace:
        return {}
    return dict(SCENARIO_OVERRIDES.get(args.scenario or "fig23", {}))


def _log_path(base: str, mode: Mode, many: bool) -> Path:
    p = Path(base)
    return p.with_name(f"{p.stem}.{mode.value}{p.suffix}") if many else p


def _check(result: SimResult, cfg) -> None:
    v = verify_stream(result.command_list(), cfg.geometry, cfg.timing, cfg.mode)
    if v:
        raise VerifyFailure(f"{cfg.mode.value}: {len(v)} violation(s)\n" + format_violations(v[:20]))


def cmd_run(args) -> int:
    cfg0 = _base_config(args, _scenario_defaults(args))
    modes = _parse_modes(args.mode) if (args.mode or not args.timeline) else list(ALL_MODES)
    traces = _load_traces(args, cfg0)
    results: Dict[Mode, SimResult] = {}
    for m in modes:
        cfg = cfg0.with_overrides({"mode": m})
        r = run(cfg, traces)
        if args.verify:
            _check(r, cfg)
        if args.log_commands:
            with open(_log_path(args.log_commands, m, len(modes) > 1), "w", newline="") as fh:
                write_command_log(r.command_list(), fh)
        results[m] = r
    with _output(args.out) as fh:
        if args.timeline:
            title = args.scenario or ("trace" if args.trace else "fig23")
            fh.write("\n".join(render_result(f"{title} {m.value}", r) for m, r in results.items()))
        elif len(modes) == 1:
            write_stats_csv(results[modes[0]], fh)
        else:
            write_comparison_csv(summarize(results, modes[0]), fh)
    return EXIT_OK


SWEEP_HEADER = ("param", "value", "mode", "ipc", "hit_rate", "dram_cycles",
                "energy_dynamic_nJ", "energy_total_nJ", "sa_sel", "act")


def parse_sweep(spec: str) -> Tuple[str, list]:
    if "=" not in spec:
        raise InputError("--sweep expects PARAM=V1,V2,...")
    name, values = spec.split("=", 1)
    name = SWEEP_ALIASES.get(name.strip(), name.strip())
    items = [v.strip() for v in values.split(",") if v.strip()]
    if not items:
        raise InputError("--sweep needs at least one value")
    if name == "mode":
        return name, [Mode.parse(v) for v in items]
    if name not in SWEEP_RANGES:
        raise InputError(f"cannot sweep {name!r}; choose from mode, "
                         + ", ".join(sorted(SWEEP_RANGES)))
    lo, hi = SWEEP_RANGES[name]
    try:
        nums = [int(v) for v in items]
    except ValueError:
        raise InputError(f"{name}: values must be integers") from None
    for n in nums:
        if not lo <= n <= hi:
            raise InputError(f"{name}={n} outside supported range {lo}..{hi}")
    return name, nums


def sweep_point(cfg0, name: str, value):
    """Config for one sweep point. Subarray sweeps keep rows per bank fixed."""
    if name == "mode":
        return cfg0.with_overrides({"mode": value})
    if name == "subarrays_per_bank":
        g = cfg0.geometry.with_subarrays(value)
        return cfg0.with_overrides({"subarrays_per_bank": g.subarrays_per_bank,
                                    "rows_per_subarray": g.rows_per_subarray})
    return cfg0.with_overrides({name: value})


def _sweep_job(job):
    cfg, traces = job
    r = run(cfg, traces)
    e = energy_of(r)
    return (f"{r.ipc:.6f}", f"{r.hit_rate:.6f}", r.dram_cycles, fmt_fraction(e.dynamic_nJ),
            fmt_fraction(e.total_nJ), r.command_counts["SA_SEL"], r.command_counts["ACT"])


def cmd_sweep(args) -> int:
    name, values = parse_sweep(args.sweep)
    cfg0 = _base_config(args, _scenario_defaults(args))
    modes = [None] if name == "mode" else _parse_modes(args.mode or "all")
    # every point sees the same address trace
    traces = _load_traces(args, cfg0)
    points = []
    for v in values:
        for m in modes:
            cfg = sweep_point(cfg0 if m is None else cfg0.with_overrides({"mode": m}), name, v)
            points.append((v, cfg))
    jobs = [(cfg, traces) for _, cfg in points]
    if args.jobs > 1:
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            rows = list(pool.map(_sweep_job, jobs))
    else:
        rows = [_sweep_job(j) for j in jobs]
    with _output(args.out) as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(SWEEP_HEADER)
        for (v, cfg), row in zip(points, rows):
            shown = v.value if isinstance(v, Mode) else v
            w.writerow((name, shown, cfg.mode.value) + row)
    return EXIT_OK


def cmd_gen(args) -> int:
    cfg = _base_config(args)
    g = cfg.geometry
    if args.scenario == "synth":
        p = SynthParams(n_requests=args.requests or 10_000, read_fraction=1.0 - args.write_fraction,
                        mean_inst_gap=args.gap, row_hit_prob=args.row_hit_prob,
                        bank_skew=args.bank_skew, subarray_spread=not args.no_spread, seed=args.seed)
        entries = synth_trace(p, g, cfg.mapping)
        header = synth_header(p, g, cfg.mapping)
    else:
        entries = scenario_trace(args.scenario, g, seed=args.seed, n_requests=args.requests,
                                 write_fraction=args.write_fraction, policy=cfg.mapping)
        header = [f"scenario {args.scenario} seed={args.seed}"]
    if args.out in (None, "-"):
        from .trace import render_trace
        sys.stdout.write(render_trace(entries, header))
    else:
        save_trace(args.out, entries, header)
    return EXIT_OK


def cmd_verify(args) -> int:
    cfg = _base_config(args)
    mode = Mode.parse(args.mode or cfg.mode)
    try:
        cmds = read_command_log(args.log)
    except (OSError, ValueError) as exc:
        raise InputError(str(exc)) from None
    v = verify_stream(cmds, cfg.geometry, cfg.timing, mode)
    if v:
        print(format_violations(v))
        print(f"{len(v)} violation(s) in {len(cmds)} commands", file=sys.stderr)
        return EXIT_VERIFY
    print(f"ok: {len(cmds)} commands, no violations")
    return EXIT_OK


def _common(p: argparse.ArgumentParser, sim: bool = True):
    p.add_argument("--config", help="flat key=value config file")
    p.add_argument("--set", action="append", metavar="KEY=VALUE", default=[],
                   help="override a config key (repeatable)")
    p.add_argument("--subarrays", type=int, help="subarrays per bank")
    p.add_argument("--seed", type=int, default=1)
    if sim:
        p.add_argument("--mode", help="baseline, salp1, salp2, masa, ideal, a comma list, or 'all'")
        p.add_argument("--trace", nargs="+", metavar="PATH", help="one trace file per stream")
        p.add_argument("--scenario", choices=SCENARIOS, help="built-in workload (default fig23)")
        p.add_argument("--requests", type=int, help="request count for generated scenarios")
        p.add_argument("--write-fraction", type=float, default=0.0)
        p.add_argument("--out", help="output file (default stdout)")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="salpsim", description="Subarray-level-parallelism DRAM simulator")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="simulate one or more modes")
    _common(p)
    p.add_argument("--log-commands", metavar="PATH", help="write the command log CSV")
    p.add_argument("--verify", action="store_true", help="check the command log, fail on violations")
    p.add_argument("--timeline", action="store_true", help="print command timelines instead of stats")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("sweep", help="run a parameter sweep")
    _common(p)
    p.add_argument("--sweep", required=True, metavar="PARAM=V1,V2,...")
    p.add_argument("--jobs", type=int, default=1, help="parallel worker processes")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("gen", help="write a trace file")
    _common(p, sim=False)
    p.add_argument("--scenario", choices=SCENARIOS + ("synth",), default="synth")
    p.add_argument("--requests", type=int)
    p.add_argument("--write-fraction", type=float, default=0.0)
    p.add_argument("--gap", type=float, default=20.0, help="mean instructions between requests")
    p.add_argument("--row-hit-prob", type=float, default=0.0)
    p.add_argument("--bank-skew", type=float, default=1.0)
    p.add_argument("--no-spread", action="store_true", help="keep conflicts in one subarray")
    p.add_argument("--out")
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("verify", help="check a command log")
    _common(p, sim=False)
    p.add_argument("--mode")
    p.add_argument("--log", required=True, metavar="PATH")
    p.set_defaults(func=cmd_verify)
    return ap


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (InputError, ConfigError, TraceError, AddressError, OSError, ValueError) as exc:
        print(f"salpsim: error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except SimulationIntegrityError as exc:
        print(f"salpsim: simulation integrity fault: {exc}", file=sys.stderr)
        return EXIT_INTEGRITY
    except VerifyFailure as exc:
        print(f"salpsim: verification failed: {exc}", file=sys.stderr)
        return EXIT_VERIFY


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
