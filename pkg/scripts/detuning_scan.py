"""Bit-flip time along the input-detuning axis at one input power, with dip locations.

The default grid is -300..300 MHz in 4 MHz steps (151 evolutions, roughly an
hour on one core). Interrupted runs continue with --resume.
"""
from kposim.dynamics import EvolutionSpec
from kposim.model import mhz, to_mhz
from kposim.spectrum import excitation_energy, kpo_spectrum
from kposim.sweep import SweepSpec, acceptance_detuning_axis, dip_locator, run_sweep

from _common import base_parser, device_params


def main():
    parser = base_parser(__doc__)
    parser.add_argument("--start", type=float, default=-300.0, help="MHz")
    parser.add_argument("--stop", type=float, default=300.0, help="MHz")
    parser.add_argument("--step", type=float, default=4.0, help="MHz")
    parser.add_argument("--power-dbm", type=float, default=-132.0)
    parser.add_argument("--parallel", type=int, default=1)
    parser.add_argument("--resume", action="store_true")
    args = parser.parse_args()
    params = device_params(args.calibrate)
    spec = SweepSpec(EvolutionSpec(params, t_end=args.t_end_us / 1e6, dim=args.dim),
                     acceptance_detuning_axis(args.start, args.stop, args.step), (args.power_dbm,))
    args.out.mkdir(parents=True, exist_ok=True)
    done = []
    result = run_sweep(spec, args.parallel, args.out / "detuning_scan.checkpoint.jsonl", args.resume,
                       on_point=lambda k, r: done.append(k) or print(
                           f"[{len(done)}] {to_mhz(spec.detunings[k[0]]):8.2f} MHz  tau = {r.tau * 1e6:.3f} us  {r.status}"))
    result.to_csv(args.out / "detuning_scan.csv")
    levels = kpo_spectrum(params, args.dim)
    print(f"E_02/2pi = {to_mhz(excitation_energy(levels, 0, 2)):.2f} MHz")
    for d in dip_locator(result):
        print(f"dip at {to_mhz(d):.2f} MHz")


if __name__ == "__main__":
    main()
