"""Benchmark the numba kernels against the pure-numpy fallback.

Times the individual kernels and the full circuit forward/backward at a
molecular-graph scale (m=9 slots, 90 variables, default structure), then
prints a table of medians with the numba speedup.

Usage: python3 benchmarks/bench_backends.py [--batch 1024] [--repeats 7]
"""

import argparse
import statistics
import time

import numpy as np

from graphspn import backend
from graphspn.circuit import (
    StructureConfig,
    VariableSpec,
    build_circuit,
    forward_backward,
    freeze,
    log_density_batch,
)


def _spec(m=9, q=4, r=3):
    sizes = []
    for i in range(m):
        sizes.append(q + 1)
        sizes.extend([r + 1] * m)
    return VariableSpec(m * (m + 1), tuple(sizes))


def _random_codes(spec, batch, rng):
    cols = [
        rng.integers(0, k, size=batch) for k in spec.category_sizes
    ]
    return np.ascontiguousarray(np.stack(cols, axis=1).astype(np.int64))


def _bench(fn, repeats):
    fn()  # warmup (includes any JIT compilation)
    times = []
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return statistics.median(times)


def kernel_cases(kern, batch, rng):
    """Microbenchmarks over one representative shape per kernel."""
    V, K, U = 90, 5, 40
    B, S, I, J = batch, 40, 40, 40
    lt = np.log(rng.dirichlet(np.ones(K), size=(V, U))).transpose(0, 2, 1)
    lt = np.ascontiguousarray(lt)
    codes = np.ascontiguousarray(rng.integers(0, K, size=(B, V)))
    left = np.log(rng.random((B, I)))
    right = np.log(rng.random((B, J)))
    w = rng.dirichlet(np.ones(I * J), size=S)
    wl_ti = np.ascontiguousarray(w.reshape(S, I, J).transpose(1, 0, 2)
                                 .reshape(I, S * J))
    cases = {
        "leaf_forward": lambda: kern.leaf_forward(lt, codes),
        "kron_forward": lambda: kern.kron_forward(left, right),
        "fused_sum_forward": lambda: kern.fused_sum_forward(
            left, right, wl_ti, S
        ),
    }
    return cases


def circuit_cases(batch, rng):
    spec = _spec()
    circuit = build_circuit(
        spec,
        StructureConfig(n_layers=2, n_sum=40, n_input=40,
                        n_repetitions=40, seed=0),
    )
    codes = _random_codes(spec, batch, rng)
    ctx = freeze(circuit)
    seed = np.ones(batch)

    return {
        "circuit density": lambda: log_density_batch(
            circuit, codes, ctx=ctx
        ),
        "circuit fwd+grad": lambda: forward_backward(ctx, codes, seed),
    }


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--batch", type=int, default=1024)
    ap.add_argument("--repeats", type=int, default=7)
    args = ap.parse_args()

    names = ["numpy"]
    try:
        import numba  # noqa: F401

        names.append("numba")
    except ImportError:
        print("numba not importable; timing numpy only")

    results = {}
    for name in names:
        backend.set_backend(name)
        kern = backend.active()
        rng = np.random.default_rng(7)
        cases = kernel_cases(kern, args.batch, rng)
        cases.update(circuit_cases(args.batch, rng))
        for label, fn in cases.items():
            results.setdefault(label, {})[name] = _bench(fn, args.repeats)

    width = max(len(k) for k in results)
    header = f"{'case'.ljust(width)}  {'numpy':>10}"
    if "numba" in names:
        header += f"  {'numba':>10}  {'speedup':>8}"
    print(header)
    print("-" * len(header))
    for label, times in results.items():
        line = f"{label.ljust(width)}  {times['numpy'] * 1e3:>8.2f}ms"
        if "numba" in times:
            ratio = times["numpy"] / times["numba"]
            line += f"  {times['numba'] * 1e3:>8.2f}ms  {ratio:>7.2f}x"
        print(line)


if __name__ == "__main__":
    main()
