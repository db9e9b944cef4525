"""Compare the numba-compiled kernels with the plain-Python fallback.

Each backend runs in its own interpreter because the switch is read at
import time.  Usage:  python3 benchmarks/bench_kernels.py [--clicks N]
"""
import argparse
import json
import os
import subprocess
import sys

WORKER = r"""
import json, sys, time
import numpy as np
from photon_sorter import _accel, config
from photon_sorter.bloch import DriveParams
from photon_sorter.kernels import pair_counts
from photon_sorter.trajectory import expected_click_rate, mc_jump_clicks

n = int(sys.argv[1])
cfg = config.defaults()
d0 = DriveParams.from_emitter(cfg.emitter, 0.0)
f = cfg.g2_calibration.field_at(cfg.cavity, -8.7)
d = cfg.g2_calibration.drive_at(d0, -8.7)
duration = n / expected_click_rate(f, d)

def timed(fn):
    fn()  # warm-up (includes compilation for numba)
    t = time.perf_counter()
    out = fn()
    return time.perf_counter() - t, out

t_jump, s = timed(lambda: mc_jump_clicks(f, d, duration, seed=3))
t_pairs, c = timed(lambda: pair_counts(s.times, 0.01, 201))
print(json.dumps({"numba": _accel.HAVE_NUMBA, "clicks": len(s.times),
                  "jump_s": t_jump, "pairs_s": t_pairs, "pairs_total": int(c.sum())}))
"""


def run(no_numba: bool, n: int) -> dict:
    env = dict(os.environ)
    env["PHOTON_SORTER_NO_NUMBA"] = "1" if no_numba else "0"
    out = subprocess.run([sys.executable, "-c", WORKER, str(n)], env=env, check=True, capture_output=True, text=True)
    return json.loads(out.stdout.strip().splitlines()[-1])


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--clicks", type=int, default=20000, help="clicks per run (default 20000)")
    args = ap.parse_args()
    fast, slow = run(False, args.clicks), run(True, args.clicks)
    if not fast["numba"]:
        print("numba is not installed; both runs used the fallback")
    if fast["pairs_total"] != slow["pairs_total"]:
        print("warning: backends disagree on pair counts", file=sys.stderr)
    print(f"{'kernel':<14}{'numba [s]':>12}{'python [s]':>12}{'speed-up':>10}")
    for key, name in (("jump_s", "quantum jumps"), ("pairs_s", "pair counts")):
        print(f"{name:<14}{fast[key]:>12.4f}{slow[key]:>12.4f}{slow[key] / fast[key]:>9.0f}x")
    print(f"({fast['clicks']} clicks per run)")


if __name__ == "__main__":
    main()
