"""Bit-flip time versus drive phase theta_in for a resonant (Delta_in = 0) drive."""
import csv

import numpy as np

from kposim.analysis import bitflip_time
from kposim.dynamics import EvolutionSpec, bitflip_observable, evolve
from kposim.model import DriveSpec, mhz

from _common import base_parser, device_params


def main():
    parser = base_parser(__doc__)
    parser.add_argument("--omega-mhz", type=float, default=3.0)
    parser.add_argument("--n-theta", type=int, default=8)
    args = parser.parse_args()
    params = device_params(args.calibrate)
    thetas = np.linspace(0, 2 * np.pi, args.n_theta, endpoint=False)
    args.out.mkdir(parents=True, exist_ok=True)
    with open(args.out / "theta_asymmetry.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["theta_in_rad", "tau_us", "tau_err_us"])
        for th in thetas:
            spec = EvolutionSpec(params, t_end=args.t_end_us / 1e6, dim=args.dim,
                                 drive=DriveSpec(mhz(args.omega_mhz), 0.0, float(th)))
            fit = bitflip_time(evolve(spec, [bitflip_observable(args.dim)])[0])
            w.writerow([f"{th:.6f}", f"{fit.tau_us:.6g}", f"{fit.tau_error * 1e6:.3g}"])
            print(f"theta = {th:.3f} rad: tau = {fit.tau_us:.3f} us")


if __name__ == "__main__":
    main()
