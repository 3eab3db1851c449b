"""Time the numba kernels against the pure-Python fallback.

Each variant runs in its own interpreter (the backend is chosen at import
time). The JIT variant is warmed up once so compilation is not timed.

    python benchmarks/bench_jit.py --requests 2000 --mode masa
"""
import argparse
import json
import os
import subprocess
import sys

CHILD = r"""
import hashlib, json, sys, time
from salpsim.config import SimConfig
from salpsim.engine import run
from salpsim.stats import stats_csv
from salpsim.trace import conflict_trace

n, mode, repeat = int(sys.argv[1]), sys.argv[2], int(sys.argv[3])
cfg = SimConfig(mode=mode)
tr = conflict_trace(cfg.geometry, n, write_fraction=0.3)
run(cfg, [tr[:50]])  # warm-up / compile
best = float("inf")
for _ in range(repeat):
    t = time.perf_counter()
    r = run(cfg, [tr])
    best = min(best, time.perf_counter() - t)
print(json.dumps({"seconds": best, "digest": hashlib.sha256(stats_csv(r).encode()).hexdigest()}))
"""


def measure(n, mode, repeat, no_jit):
    env = dict(os.environ)
    if no_jit:
        env["SALPSIM_NO_JIT"] = "1"
    else:
        env.pop("SALPSIM_NO_JIT", None)
    out = subprocess.run([sys.executable, "-c", CHILD, str(n), mode, str(repeat)],
                         env=env, check=True, capture_output=True, text=True)
    return json.loads(out.stdout.strip().splitlines()[-1])


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--requests", type=int, default=2000)
    ap.add_argument("--mode", default="masa")
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args()

    jit = measure(args.requests, args.mode, args.repeat, no_jit=False)
    py = measure(args.requests, args.mode, 1, no_jit=True)
    print(f"requests={args.requests} mode={args.mode}")
    print(f"numba    {jit['seconds']:.4f} s")
    print(f"python   {py['seconds']:.4f} s")
    print(f"speedup  {py['seconds'] / jit['seconds']:.1f}x")
    same = jit["digest"] == py["digest"]
    print(f"identical stats: {same}")
    return 0 if same else 1


if __name__ == "__main__":
    sys.exit(main())
