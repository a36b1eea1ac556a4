"""Time the numba kernels against their numpy fallbacks.

Usage: python benchmarks/bench_kernels.py [--repeat 20] [--side 10] [--configs 4096]

Both backends run in-process on identical inputs; outputs are compared before
timing. Run with MARGINALMAP_DISABLE_NUMBA=1 to confirm the numpy-only path.
"""
import argparse
import json
import time

import numpy as np

from marginalmap import kernels
from marginalmap._jit import USE_NUMBA
from marginalmap.beliefs import MessageSet
from marginalmap.io import gen_grid, gen_hmm
from marginalmap.mp import mixed_tables
from marginalmap.oracle import q_structure


def best_time(fn, repeat):
    fn()  # warm-up, includes jit compilation
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def bench_sweep(model, repeat, backends):
    modes, w_src, w_edge = mixed_tables(model, np.ones(model.num_edges))
    init = MessageSet.uniform(model).log
    out, res = {}, {}
    for name, flag in backends:
        def run():
            msgs = init.copy()
            for _ in range(10):
                kernels.sweep(model.packed, msgs, modes, w_src, w_edge, 0.0, 1e-9, use_numba=flag)
            return msgs
        res[name] = run()
        out[name] = best_time(run, repeat) / 10
    if len(res) == 2:
        a, b = res.values()
        assert np.allclose(a, b, equal_nan=True), "backends disagree on sweep"
    return out


def bench_q(model, n_configs, repeat, backends, seed=0):
    qs = q_structure(model)
    rng = np.random.default_rng(seed)
    XB = rng.integers(0, model.cards[model.max_nodes], size=(n_configs, len(model.max_nodes)))
    out, res = {}, {}
    for name, flag in backends:
        res[name] = kernels.q_batch(qs, XB, use_numba=flag)
        out[name] = best_time(lambda: kernels.q_batch(qs, XB, use_numba=flag), repeat)
    if len(res) == 2:
        a, b = res.values()
        assert np.allclose(a, b), "backends disagree on q_batch"
    return out


def main(argv=None):
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--repeat", type=int, default=20)
    p.add_argument("--side", type=int, default=10)
    p.add_argument("--configs", type=int, default=4096)
    a = p.parse_args(argv)
    backends = [("numpy", False)] + ([("numba", True)] if USE_NUMBA else [])
    models = {"hmm-20": gen_hmm(20, 1.0, 0), f"grid-{a.side}": gen_grid(a.side, sigma=1.0, seed=0)}
    rows = []
    for label, m in models.items():
        for kernel, times in (("sweep", bench_sweep(m, a.repeat, backends)),
                              ("q_batch", bench_q(m, a.configs, a.repeat, backends))):
            row = {"model": label, "kernel": kernel, **{k: v * 1e3 for k, v in times.items()}}
            if "numba" in times:
                row["speedup"] = times["numpy"] / times["numba"]
            rows.append(row)
    print(f"{'model':<10} {'kernel':<8} {'numpy ms':>10} {'numba ms':>10} {'speedup':>8}")
    for r in rows:
        nb = f"{r['numba']:10.3f}" if "numba" in r else f"{'n/a':>10}"
        sp = f"{r['speedup']:8.1f}" if "speedup" in r else f"{'n/a':>8}"
        print(f"{r['model']:<10} {r['kernel']:<8} {r['numpy']:10.3f} {nb} {sp}")
    print(json.dumps(rows))


if __name__ == "__main__":
    main()
