"""Compiled vs pure-Python event loop on identical work.

    python benchmarks/bench_simcore.py [--replicas N] [--horizon T]

Both backends consume the same streams, so the script also asserts the
outputs agree before reporting timings.
"""

import argparse
import time

import numpy as np

from critbrw.gw_analytics import BranchingParams
from critbrw.lattice_kernel import simple_random_walk
from critbrw.mc_simulator import SimConfig, simulate_replicas


def run(backend, cfg, n):
    t0 = time.perf_counter()
    batch = simulate_replicas(cfg, n, tally_radius=2, threads=1, backend=backend)
    return time.perf_counter() - t0, batch


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--replicas", type=int, default=20000)
    ap.add_argument("--horizon", type=float, default=10.0)
    ap.add_argument("--dim", type=int, default=1)
    args = ap.parse_args()
    cfg = SimConfig(simple_random_walk(args.dim), BranchingParams(1.0), args.horizon, master_seed=1)
    t_py, py = run("python", cfg, args.replicas)
    t_cy, cy = run("cython", cfg, args.replicas)
    assert np.array_equal(py.counts, cy.counts) and np.array_equal(py.tally, cy.tally)
    events = int(cy.events.sum())
    print(f"replicas={args.replicas} horizon={args.horizon} dim={args.dim} events={events}")
    for name, t in (("python", t_py), ("cython", t_cy)):
        print(f"{name:7s} {t:9.3f} s  {events / t / 1e6:8.2f} Mevents/s")
    print(f"speedup {t_py / t_cy:.1f}x")


if __name__ == "__main__":
    main()
