"""Wall-clock comparison of the numba and numpy slot kernels.

    python benchmarks/bench_kernels.py [--duration 20] [--repeat 3]

Both kernels produce identical traces; this only measures speed.
"""

import argparse
import time

from dsrc_perf.params import ScenarioParams
from dsrc_perf.sim.engine import run_replication

CASES = [("dot11p", 50), ("dot11p", 200), ("spcdc", 50), ("spcdc", 200)]


def best_of(fn, repeat: int) -> float:
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--duration", type=float, default=20.0, help="simulated seconds per run")
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args()

    # compile outside the timed region
    run_replication(ScenarioParams(n_vehicles=5), "dot11p", 0.1, 0.0, 0, engine="numba")
    run_replication(ScenarioParams(n_vehicles=5), "spcdc", 0.1, 0.0, 0, engine="numba")

    print(f"{'policy':8s} {'N':>4s} {'numba s':>9s} {'numpy s':>9s} {'speedup':>8s}")
    for policy, n in CASES:
        p = ScenarioParams(n_vehicles=n)
        t = {
            eng: best_of(lambda: run_replication(p, policy, args.duration, 0.0, 1, engine=eng), args.repeat)
            for eng in ("numba", "numpy")
        }
        print(f"{policy:8s} {n:4d} {t['numba']:9.3f} {t['numpy']:9.3f} {t['numpy'] / t['numba']:8.1f}x")


if __name__ == "__main__":
    main()
