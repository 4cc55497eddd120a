"""Compare the compiled and numpy kernels on a 1000x1000 layer.

    python3 benchmarks/bench_kernels.py [--repeat N]
"""
import argparse
import timeit

import numpy as np

from xaicompress import _pykernels

try:
    from xaicompress import _ckernels
except ImportError:
    _ckernels = None


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--fan-in", type=int, default=1000)
    ap.add_argument("--fan-out", type=int, default=1000)
    args = ap.parse_args()

    rng = np.random.default_rng(0)
    w = rng.standard_normal((args.fan_in, args.fan_out))
    bits = rng.choice([4, 8, 16], args.fan_out)
    impls = {"python": _pykernels}
    if _ckernels is not None:
        impls["cython"] = _ckernels
    else:
        print("compiled kernels not built; timing the numpy fallback only")

    codes, _ = _pykernels.quantize_columns(w, bits)
    blob = _pykernels.pack_codes(codes, bits)
    jobs = {
        "quantize": lambda m: m.quantize_columns(w, bits),
        "pack": lambda m: m.pack_codes(codes, bits),
        "unpack": lambda m: m.unpack_codes(blob, args.fan_in, bits),
    }
    print(f"{'kernel':<10}" + "".join(f"{name:>12}" for name in impls) + "   (ms, best of repeats)")
    for job, fn in jobs.items():
        times = []
        for mod in impls.values():
            best = min(timeit.repeat(lambda: fn(mod), number=1, repeat=args.repeat))
            times.append(best * 1e3)
        line = f"{job:<10}" + "".join(f"{t:>12.2f}" for t in times)
        if len(times) == 2:
            line += f"   speedup x{times[0] / times[1]:.1f}"
        print(line)


if __name__ == "__main__":
    main()
