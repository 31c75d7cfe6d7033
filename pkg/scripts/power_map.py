"""Bit-flip time on a detuning x input-power grid (slow: one 20 us evolution per cell)."""
from kposim.dynamics import EvolutionSpec
from kposim.model import to_mhz
from kposim.sweep import SweepSpec, acceptance_detuning_axis, dip_locator, run_sweep

from _common import base_parser, device_params


def main():
    parser = base_parser(__doc__)
    parser.add_argument("--start", type=float, default=-260.0, help="MHz")
    parser.add_argument("--stop", type=float, default=-150.0, help="MHz")
    parser.add_argument("--step", type=float, default=10.0, help="MHz")
    parser.add_argument("--powers-dbm", type=float, nargs="+", default=[-142, -138, -134, -130, -126])
    parser.add_argument("--parallel", type=int, default=1)
    parser.add_argument("--resume", action="store_true")
    args = parser.parse_args()
    params = device_params(args.calibrate)
    spec = SweepSpec(EvolutionSpec(params, t_end=args.t_end_us / 1e6, dim=args.dim),
                     acceptance_detuning_axis(args.start, args.stop, args.step), tuple(args.powers_dbm))
    args.out.mkdir(parents=True, exist_ok=True)
    result = run_sweep(spec, args.parallel, args.out / "power_map.checkpoint.jsonl", args.resume)
    result.to_csv(args.out / "power_map.csv")
    for j, p in enumerate(spec.powers):
        line = result.tau_line(j) * 1e6
        dips = ", ".join(f"{to_mhz(d):.1f}" for d in dip_locator(result, j)) or "none"
        print(f"{p:g} dBm: min tau {line.min():.2f} us, dips at {dips} MHz")


if __name__ == "__main__":
    main()
