"""Throughput of the compiled walk core against the numpy fallback.

Usage: python benchmarks/bench_core.py [--paths N] [--radius R] [--repeat K]

Both backends run the same escape problem from the same seed; the script
checks that their outputs are identical before reporting steps per second.
"""
from __future__ import annotations

import argparse
import json
import time

import numpy as np

from rwpt import core, mc
from rwpt.lattice import disc
from rwpt.stepdist import builtin


def _time_run(impl, sampler, conds, ids, cap, repeat):
    n = len(ids)
    best = np.inf
    outs = None
    for _ in range(repeat):
        outs = [np.empty(n, dtype=np.int64) for _ in range(4)]
        t0 = time.perf_counter()
        impl.run_paths(sampler.off_x, sampler.off_y, sampler.cdf, sampler.key0, sampler.key1,
                       sampler.stream, 0, 0, ids, *conds, cap, *outs)
        best = min(best, time.perf_counter() - t0)
    return best, outs


def _time_draws(impl, sampler, n_draws, repeat):
    best = np.inf
    out = np.empty(n_draws, dtype=np.int64)
    for _ in range(repeat):
        t0 = time.perf_counter()
        impl.draw_steps(sampler.cdf, sampler.key0, sampler.key1, sampler.stream, 0, n_draws, out)
        best = min(best, time.perf_counter() - t0)
    return best, out.copy()


def main(argv=None) -> dict:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--paths", type=int, default=2000)
    ap.add_argument("--radius", type=float, default=20.0)
    ap.add_argument("--draws", type=int, default=1_000_000)
    ap.add_argument("--repeat", type=int, default=3)
    ap.add_argument("--dist", default="lazy_srw")
    args = ap.parse_args(argv)

    d = builtin(args.dist)
    sampler = mc.PathSampler(d, seed=12345)
    conds = mc._compile(mc.escape(disc((0, 0), args.radius)))
    ids = np.arange(args.paths, dtype=np.int64)
    impls = core.backends()
    results: dict = {"paths": args.paths, "radius": args.radius, "draws": args.draws,
                     "dist": args.dist, "backends": {}}
    reference = None
    for name, impl in impls.items():
        t_run, outs = _time_run(impl, sampler, conds, ids, mc.DEFAULT_CAP, args.repeat)
        t_draw, draws = _time_draws(impl, sampler, args.draws, args.repeat)
        steps = int(outs[3].sum())
        results["backends"][name] = {
            "walk_seconds": t_run,
            "walk_steps": steps,
            "walk_steps_per_second": steps / t_run,
            "draw_seconds": t_draw,
            "draws_per_second": args.draws / t_draw,
        }
        if reference is None:
            reference = (outs, draws)
        else:
            same = all(np.array_equal(a, b) for a, b in zip(reference[0], outs))
            same &= np.array_equal(reference[1], draws)
            results["identical_outputs"] = bool(same)
    if "compiled" in results["backends"]:
        py, cc = results["backends"]["python"], results["backends"]["compiled"]
        results["walk_speedup"] = cc["walk_steps_per_second"] / py["walk_steps_per_second"]
        results["draw_speedup"] = cc["draws_per_second"] / py["draws_per_second"]
    print(json.dumps(results, indent=2))
    return results


if __name__ == "__main__":
    main()
