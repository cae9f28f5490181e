"""Compiled vs NumPy ray casting on a random blob set.

    python benchmarks/bench_raycast.py --probes 500 --directions 720
"""

import argparse
import time

import numpy as np

from dgbench import raycast
from dgbench.geometry import BallDomain
from dgbench.harness import random_blobs
from dgbench.shadow import default_directions, hit_matrix


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        t = time.perf_counter()
        out = fn()
        times.append(time.perf_counter() - t)
    return min(times), out


def main(argv=None):
    ap = argparse.ArgumentParser()
    ap.add_argument("--h", type=float, default=1 / 64)
    ap.add_argument("--probes", type=int, default=500)
    ap.add_argument("--directions", type=int, default=720)
    ap.add_argument("--repeat", type=int, default=3)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args(argv)

    rng = np.random.default_rng(args.seed)
    dom = BallDomain(2, 1.0, args.h)
    E = random_blobs(dom, rng)
    cells = dom.cell_indices(dom.mask)
    pts = np.array(dom.center) + dom.h * cells[rng.choice(len(cells), args.probes, replace=False)]
    D = default_directions(2, args.seed, args.directions)
    print(f"{args.probes} probes x {D.M} directions, |E| = {E.count} cells, h = {dom.h:g}")

    t_py, ref = best_of(lambda: hit_matrix(E, pts, D, backend="python"), args.repeat)
    print(f"python  {t_py:8.3f} s")
    if raycast.cast_hits_compiled is None:
        print("cython  (extension not built)")
        return
    t_cy, out = best_of(lambda: hit_matrix(E, pts, D, backend="cython"), args.repeat)
    print(f"cython  {t_cy:8.3f} s   speedup x{t_py / t_cy:.1f}   identical={np.array_equal(ref, out)}")


if __name__ == "__main__":
    main()
