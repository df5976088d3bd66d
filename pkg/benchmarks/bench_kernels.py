"""Compare the compiled and numpy kernel backends.

    python3 benchmarks/bench_kernels.py [--repeat 5] [--json out.json]

Prints the best-of-N wall time per kernel and backend, plus the speedup
of the compiled backend when it is built. Outputs are also checked for
equality so a timing is never reported for a wrong answer.
"""

import argparse
import json
import timeit

import numpy as np

from ecgnet.kernels import BACKENDS


def cases(rng):
    # one 30-minute record at 360 Hz, the size the pipeline actually sees
    n = 650_000
    signal = rng.standard_normal(n)
    ch0 = rng.integers(-2048, 2048, n)
    ch1 = rng.integers(-2048, 2048, n)
    packed = BACKENDS["python"].encode_212(ch0, ch1)
    return {
        "median_filter w=73": lambda k: k.median_filter(signal, 73),
        "median_filter w=217": lambda k: k.median_filter(signal, 217),
        "decode_212": lambda k: k.decode_212(packed, n),
        "encode_212": lambda k: k.encode_212(ch0, ch1),
    }


def _same(a, b):
    if isinstance(a, tuple) or (isinstance(a, np.ndarray) and a.ndim == 2):
        return all(np.array_equal(x, y) for x, y in zip(a, b))
    if isinstance(a, (bytes, bytearray)):
        return bytes(a) == bytes(b)
    return np.array_equal(a, b)


def run(repeat=5, seed=0):
    rng = np.random.default_rng(seed)
    results = {}
    for name, fn in cases(rng).items():
        row = {}
        outputs = {}
        for backend, module in BACKENDS.items():
            outputs[backend] = fn(module)
            row[backend] = min(timeit.repeat(lambda: fn(module), number=1, repeat=repeat))
        if len(outputs) == 2 and not _same(outputs["python"], outputs["cython"]):
            raise AssertionError(f"{name}: backends disagree")
        results[name] = row
    return results


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--json", default=None)
    args = ap.parse_args()
    results = run(args.repeat)
    print(f"{'kernel':<22}" + "".join(f"{b:>12}" for b in BACKENDS) + "     speedup")
    for name, row in results.items():
        line = f"{name:<22}" + "".join(f"{row[b] * 1e3:>10.1f}ms" for b in BACKENDS)
        if "cython" in row:
            line += f"  {row['python'] / row['cython']:>8.1f}x"
        print(line)
    if "cython" not in BACKENDS:
        print("compiled backend not built; only the numpy fallback was timed")
    if args.json:
        with open(args.json, "w") as fh:
            json.dump(results, fh, indent=2)


if __name__ == "__main__":
    main()
