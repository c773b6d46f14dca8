"""Wall-clock evidence that the reordered attention scales linearly in pixels.

Times the linear operator against the weight-materializing reference over a
resolution sweep and fits log-log slopes. Expect roughly 1.0 for the linear
path and 2.0 for the quadratic one; the headline is the gap, not the
constants. The largest quadratic point takes a minute or two on one core.

Run: python demos/complexity_benchmark.py [--quick]
"""

import sys

from linpaint.cli import run_bench


def main() -> None:
    quick = "--quick" in sys.argv
    if quick:
        resolutions = [(32, 32), (64, 64), (128, 128)]
    else:
        resolutions = [(32, 32), (64, 64), (128, 128), (256, 256)]
    print(f"timing N = {[w * h for w, h in resolutions]} at C = 32")
    print()
    print("linear modes (three repeats, median):")
    run_bench(resolutions, channels=32, modes=["sum", "residual", "none"],
              repeats=3, seed=0, csv_path="demo_bench_linear.csv")
    print()
    print("quadratic reference (single repeat):")
    run_bench(resolutions, channels=32, modes=["quadratic"], repeats=1, seed=0,
              csv_path="demo_bench_quadratic.csv")
    print()
    print("rows written to demo_bench_linear.csv / demo_bench_quadratic.csv")


if __name__ == "__main__":
    main()
