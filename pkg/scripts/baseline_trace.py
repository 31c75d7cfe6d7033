"""Drive-off bit-flip trace for the default single-KPO point and its exponential fit."""
import csv

import numpy as np

from kposim.analysis import bin_trace, fit_exponential
from kposim.dynamics import EvolutionSpec, bitflip_observable, run_evolution
from kposim.model import to_mhz

from _common import base_parser, device_params


def main():
    parser = base_parser(__doc__)
    parser.add_argument("--bin-us", type=float, default=1.0)
    args = parser.parse_args()
    params = device_params(args.calibrate)
    spec = EvolutionSpec(params, t_end=args.t_end_us / 1e6, dim=args.dim)
    res = run_evolution(spec, [bitflip_observable(args.dim)], ["x"])
    series = res.series[0]
    binned = bin_trace(series, args.bin_us / 1e6)
    fit = fit_exponential(binned)
    args.out.mkdir(parents=True, exist_ok=True)
    series.to_csv(args.out / "baseline_trace.csv")
    with open(args.out / "baseline_bins.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["bin_center_us", "mean", "fit_value"])
        for t, m in zip(binned.centers, binned.means):
            w.writerow([f"{t * 1e6:.6g}", f"{m:.10g}", f"{fit.amplitude * np.exp(-t / fit.tau):.10g}"])
    print(f"p/2pi = {to_mhz(params.pump_amplitude):.4f} MHz, dim {args.dim}, method {res.diagnostics['method']}")
    print(f"tau = {fit.tau_us:.3f} +/- {fit.tau_error * 1e6:.3f} us")


if __name__ == "__main__":
    main()
