"""Where the parameters and multiply-accumulates live.

Prints the per-layer accounting for a small width, verifies the analytic
count against the instantiated model's census, then sweeps base widths
against the published full-size reference point (14.8M params, 51.3G MACs
at 256x256).

Run: python demos/cost_accounting.py
"""

from linpaint.cost import analytic_param_count, calibrate_channels, cost_report, count_params
from linpaint.tensor import make_rng
from linpaint.unet import InpaintingUNet, ModelConfig


def main() -> None:
    config = ModelConfig(base_channels=8, block_counts=(1, 1, 1, 1, 1, 1, 1),
                         heads_per_level=(1, 2, 4, 8, 4, 2, 1))
    report = cost_report(config, 64, 64)
    print("per-layer accounting, C=8 at 64x64 (first and last lines):")
    table = report.format_table().splitlines()
    for line in table[:8] + ["  ..."] + table[-6:]:
        print(" ", line)

    model = InpaintingUNet(config, make_rng(0))
    print(f"\nanalytic parameter count: {analytic_param_count(config)}")
    print(f"live model census:        {count_params(model)}")
    assert analytic_param_count(config) == count_params(model)

    print("\nwidth calibration against the published reference:")
    for line in calibrate_channels(sweep=(32, 40, 48, 64)).format_lines():
        print(" ", line)


if __name__ == "__main__":
    main()
