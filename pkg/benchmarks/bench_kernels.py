"""Compare the compiled and pure-Python kernels on pipeline-sized inputs.

    python benchmarks/bench_kernels.py [--size 256] [--repeat 5]

Both implementations must agree on every input; the script exits non-zero if
they do not.
"""

from __future__ import annotations

import argparse
import sys
import time

import numpy as np

from gliomaseg.evaluate import phantom
from gliomaseg.kernels import implementations


def _best_ms(fn, repeat: int) -> float:
    best = float("inf")
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best * 1000.0


def workloads(size: int) -> dict:
    rng = np.random.default_rng(0)
    disk, _ = phantom(size, size, (size // 2, size // 2), size / 3)
    noisy = np.clip(disk + rng.normal(0, 0.05, disk.shape), 0, 1)
    blobs = np.ascontiguousarray((rng.random((size, size)) < 0.55).astype(np.uint8))
    c = size // 2
    return {
        "flood_fill/disk": lambda k: k.flood_fill(disk, c, c, 0.2),
        "flood_fill/noisy": lambda k: k.flood_fill(noisy, c, c, 0.2),
        "flood_fill/flat": lambda k: k.flood_fill(np.zeros((size, size)), 0, 0, 0.1),
        "label/random": lambda k: k.label_components(blobs),
    }


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--size", type=int, default=256)
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args(argv)

    impls = implementations()
    if "cython" not in impls:
        print("compiled extension not built; only the Python fallback is available", file=sys.stderr)
    names = sorted(impls)
    print(f"{'kernel':<18}" + "".join(f"{n + ' ms':>14}" for n in names) + f"{'speedup':>10}")
    status = 0
    for label, fn in workloads(args.size).items():
        outputs = [fn(impls[n]) for n in names]
        ref = outputs[0]
        for out in outputs[1:]:
            same = all(np.array_equal(np.asarray(a), np.asarray(b)) for a, b in zip(
                ref if isinstance(ref, tuple) else (ref,), out if isinstance(out, tuple) else (out,)))
            if not same:
                print(f"{label}: implementations disagree", file=sys.stderr)
                status = 1
        times = {n: _best_ms(lambda: fn(impls[n]), args.repeat) for n in names}
        speed = times["python"] / times["cython"] if "cython" in times else 1.0
        print(f"{label:<18}" + "".join(f"{times[n]:>14.3f}" for n in names) + f"{speed:>9.1f}x")
    return status


if __name__ == "__main__":
    sys.exit(main())
