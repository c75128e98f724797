"""Times the scoring kernels on every importable backend.

Workloads mirror the two hot loops of the engine: exact max-sim re-scoring
of a candidate set, and ADC table scans over inverted lists.

    python benchmarks/bench_kernels.py [--candidates 2000] [--repeats 5]
"""

import argparse
import time

import numpy as np

from duorep.kernels import available_backends


def time_call(fn, repeats):
    best = float("inf")
    for _ in range(repeats):
        start = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - start)
    return best


def bench_maxsim_batch(backends, args):
    rng = np.random.Generator(np.random.PCG64(0))
    lengths = rng.integers(20, args.max_doc_tokens, size=args.candidates)
    offsets = np.zeros(args.candidates + 1, dtype=np.int64)
    np.cumsum(lengths, out=offsets[1:])
    tokens = rng.standard_normal((int(offsets[-1]), args.dim)).astype(np.float32)
    Q = rng.standard_normal((args.q_len, args.dim)).astype(np.float32)
    ordinals = np.arange(args.candidates, dtype=np.int64)

    print(f"\nmax-sim re-scoring: {args.candidates} candidates, "
          f"{int(offsets[-1])} token rows, dim {args.dim}, q_len {args.q_len}")
    results = {}
    for name, mod in backends.items():
        best = time_call(lambda m=mod: m.maxsim_batch(Q, tokens, offsets, ordinals), args.repeats)
        results[name] = best
        print(f"  {name:8s} {best * 1000:9.2f} ms")
    report_speedup(results)
    outs = [mod.maxsim_batch(Q, tokens, offsets, ordinals) for mod in backends.values()]
    for other in outs[1:]:
        assert np.allclose(outs[0], other, rtol=1e-9, atol=1e-9), "backends disagree"


def bench_adc(backends, args):
    rng = np.random.Generator(np.random.PCG64(1))
    lut = rng.standard_normal((args.pq_m, 256))
    codes = rng.integers(0, 256, size=(args.list_len, args.pq_m)).astype(np.uint8)

    print(f"\nADC table scan: {args.list_len} codes, m {args.pq_m}, "
          f"{args.scans} scans per call")
    results = {}
    for name, mod in backends.items():
        def scan(m=mod):
            for _ in range(args.scans):
                m.adc_scores(lut, codes, 0.5)
        best = time_call(scan, args.repeats)
        results[name] = best
        print(f"  {name:8s} {best * 1000:9.2f} ms")
    report_speedup(results)


def report_speedup(results):
    if "native" in results and "python" in results:
        print(f"  native speedup over python: {results['python'] / results['native']:.2f}x")


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--candidates", type=int, default=2000)
    parser.add_argument("--max-doc-tokens", type=int, default=180)
    parser.add_argument("--dim", type=int, default=128)
    parser.add_argument("--q-len", type=int, default=32)
    parser.add_argument("--pq-m", type=int, default=16)
    parser.add_argument("--list-len", type=int, default=20000)
    parser.add_argument("--scans", type=int, default=50)
    parser.add_argument("--repeats", type=int, default=5)
    args = parser.parse_args()

    backends = available_backends()
    print("backends:", ", ".join(backends))
    bench_maxsim_batch(backends, args)
    bench_adc(backends, args)


if __name__ == "__main__":
    main()
