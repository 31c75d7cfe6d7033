"""Command-line entry point: ``kposim <command> --config FILE [options]``.

Exit codes: 0 success, 2 config or parameter error, 3 numerical failure
(including a sweep where every point failed), 4 sweep with some failed points.
"""
from __future__ import annotations

import argparse
import csv
import logging
import math
import sys
from dataclasses import replace
from pathlib import Path

from . import __version__
from .analysis import bin_trace, fit_exponential
from .config import RunConfig, bundled_config, load_config
from .dynamics import bitflip_observable, run_evolution
from .errors import ConfigError, InvalidParams, KpoSimError
from .model import coherent_amplitude, mhz, to_mhz
from .readout import dft_spectrum, decay_from_iq, emulate_iq, iq_histogram, quadrant_statistics, synthesize_if_signal
from .readout import telegraph_ensemble
from .spectrum import avoided_crossing_splitting, collision_report, excitation_energy, kpo_spectrum
from .sweep import dip_locator, run_sweep

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC, EXIT_PARTIAL = 0, 2, 3, 4
THETA_AVERAGE = (0.0, math.pi / 2, math.pi, 3 * math.pi / 2)

log = logging.getLogger("kposim")


def _load(args) -> RunConfig:
    path = Path(args.config)
    if not path.exists() and not path.is_absolute() and path.parent == Path("."):
        try:
            path = bundled_config(path.name)
        except ConfigError:
            raise ConfigError(f"config file {args.config!r} not found") from None
    cfg = load_config(path)
    if args.dim is not None:
        if args.dim < 2:
            raise ConfigError(f"--dim must be >= 2, got {args.dim}")
        cfg = replace(cfg, simulation=replace(cfg.simulation, dim=args.dim))
        if cfg.collision is not None:
            cfg = replace(cfg, collision=replace(cfg.collision, dim=args.dim))
    if args.seed is not None and cfg.readout is not None:
        cfg = replace(cfg, readout=replace(cfg.readout, seed=args.seed))
    return cfg


def _out_dir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _spectrum_lines(label: str, params, dim: int, rows: list, pairs: list) -> list[str]:
    spec = kpo_spectrum(params, dim)
    cutoff = 2 * params.pump_amplitude
    confined = [i for i, w in enumerate(spec.energies) if w >= -cutoff]
    lines = [f"{label}: {len(confined)} levels with omega_i >= -2p (dim {dim})"]
    lines.append(f"{'i':>4} {'omega_i/2pi [MHz]':>18} {'omega_i [rad/s]':>16}")
    for i in confined:
        lines.append(f"{i:>4d} {to_mhz(spec.energies[i]):>18.4f} {spec.energies[i]:>16.6e}")
        rows.append([label, i, f"{to_mhz(spec.energies[i]):.10g}"])
    for a, i in enumerate(confined):
        for j in confined[a + 1:]:
            pairs.append([label, i, j, f"{to_mhz(excitation_energy(spec, i, j)):.10g}"])
    try:
        alpha = coherent_amplitude(params)
        lines.append(f"alpha = sqrt((p + Delta)/|K|) = {alpha:.4f}")
    except InvalidParams as exc:
        lines.append(f"alpha undefined: {exc}")
    if len(spec) > 2 and params.pump_amplitude > 0:
        e02 = excitation_energy(spec, 0, 2)
        lines.append(f"E_02/2pi = {to_mhz(e02):.4f} MHz (E_02 = {e02:.6e} rad/s)")
        lines.append(f"|E_02|/(2p) = {abs(e02) / (2 * params.pump_amplitude):.4f}")
    return lines


def cmd_spectrum(args) -> int:
    cfg = _load(args)
    out = _out_dir(args)
    dim = cfg.simulation.dim
    rows, pairs, lines = [], [], []
    if cfg.is_two_kpo:
        for label in ("kpo1", "kpo2"):
            lines += _spectrum_lines(label, getattr(cfg, label).params(), dim, rows, pairs)
            lines.append("")
        if cfg.coupling is not None:
            g = cfg.coupling.two_body_coupling_mhz
            lines.append(f"avoided-crossing minimum splitting 2g = {avoided_crossing_splitting(0.0, 0.0, g):.1f} MHz")
    else:
        lines += _spectrum_lines("kpo", cfg.kpo_params(), dim, rows, pairs)
    with open(out / "spectrum.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["kpo", "index", "energy_mhz"])
        w.writerows(rows)
    with open(out / "excitations.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["kpo", "i", "j", "e_ij_mhz"])
        w.writerows(pairs)
    print("\n".join(lines))
    return EXIT_OK


def cmd_bitflip(args) -> int:
    cfg = _load(args)
    out = _out_dir(args)
    spec = cfg.evolution_spec()
    sim = cfg.simulation
    res = run_evolution(spec, [bitflip_observable(spec.dim)], ["x"])
    series = res.series[0]
    series.to_csv(out / "bitflip_trace.csv")
    binned = bin_trace(series, sim.bin_width_us / 1e6)
    fit = fit_exponential(binned, skip_bins=sim.skip_bins)
    with open(out / "bitflip_bins.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["bin_center_us", "mean", "fit_value"])
        for t, m in zip(binned.centers, binned.means):
            w.writerow([f"{t * 1e6:.10g}", f"{m:.12g}", f"{fit.amplitude * math.exp(-t / fit.tau):.12g}"])
    drive = spec.drive
    lines = [f"method: {res.diagnostics['method']}, dim {spec.dim}, {len(series)} samples"]
    if drive is None:
        lines.append("drive: off")
    else:
        lines.append(f"drive: Omega/2pi = {to_mhz(drive.amplitude):.4f} MHz, "
                     f"Delta_in/2pi = {to_mhz(drive.detuning):.4f} MHz, theta_in = {drive.phase:.4f} rad")
    lines.append(f"A = {fit.amplitude:.6g}")
    lines.append(f"tau = {fit.tau * 1e6:.4f} +/- {fit.tau_error * 1e6:.4f} us" + (" (capped)" if fit.capped else ""))
    lines.append(f"fit rms = {fit.residual_rms:.3e}")
    text = "\n".join(lines)
    (out / "bitflip_fit.txt").write_text(text + "\n")
    print(text)
    return EXIT_OK


def cmd_sweep(args) -> int:
    cfg = _load(args)
    out = _out_dir(args)
    spec = cfg.sweep_spec()
    if args.theta_average:
        spec = replace(spec, thetas=THETA_AVERAGE, theta_average=True)
    result = run_sweep(spec, parallelism=args.parallel, checkpoint=out / "sweep.checkpoint.jsonl",
                       resume=args.resume)
    result.to_csv(out / "sweep.csv")
    lines = [f"{len(result.points)} points, {result.n_failed} failed"]
    with open(out / "dips.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["power_index", "power", "dip_detuning_mhz"])
        for j, pw in enumerate(spec.powers):
            if len(spec.detunings) < 3:
                continue
            dips = dip_locator(result, j, None if spec.theta_average else 0)
            for d in dips:
                w.writerow([j, f"{pw:.10g}", f"{to_mhz(d):.6f}"])
            listed = ", ".join(f"{to_mhz(d):.2f}" for d in dips) or "none"
            lines.append(f"power {pw:g} ({spec.power_unit}): dips at {listed} MHz")
    print("\n".join(lines))
    return EXIT_PARTIAL if result.n_failed else EXIT_OK


def cmd_readout_demo(args) -> int:
    cfg = _load(args)
    out = _out_dir(args)
    rc = cfg.readout_config()
    r = cfg.readout
    n_spec = min(r.spectrum_trials if r else 100, rc.n_trials)
    tel = rc.telegraph()
    states = [telegraph_ensemble(tel, n_spec, channel=c) for c in range(len(rc.channels))]
    wave = synthesize_if_signal(states, rc.channels, rc.sample_rate, rc.amplitude, rc.noise_sigma, rc.seed,
                                0, rc.bin_duration)
    freqs, mag = dft_spectrum(wave, rc.sample_rate)
    with open(out / "dft_spectrum.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["freq_mhz", "magnitude"])
        for f, m in zip(freqs, mag):
            w.writerow([f"{f / 1e6:.10g}", f"{m:.10g}"])
    data = emulate_iq(rc)
    data.to_csv(out / "iq_records.csv")
    bins = r.histogram_bins if r else 60
    lines = []
    for c, ch in enumerate(rc.channels):
        label = ch.label or f"ch{c}"
        iq_histogram(data.iq[:, 0, c], bins=bins, label=label).to_csv(out / f"iq_hist_{label}.csv")
        _, fit = decay_from_iq(data, c)
        lines.append(f"{label} @ {ch.if_freq / 1e6:g} MHz: tau = {fit.tau * 1e6:.3f} +/- "
                     f"{fit.tau_error * 1e6:.3f} us (telegraph input {rc.tau_flip * 1e6:g} us)")
    if len(rc.channels) >= 2:
        q = quadrant_statistics(data.i_values(0)[:, 0], data.i_values(1)[:, 0])
        lines.append(q.to_text())
        (out / "quadrants.txt").write_text(q.to_text() + "\n")
    text = "\n".join(lines)
    (out / "readout_report.txt").write_text(text + "\n")
    print(text)
    return EXIT_OK


def cmd_collision_report(args) -> int:
    cfg = _load(args)
    out = _out_dir(args)
    two = cfg.two_kpo_params()
    col = cfg.collision
    kwargs = {}
    if col is not None:
        kwargs = {"dim": col.dim, "threshold": mhz(col.threshold_mhz), "include_doublets": col.include_doublets}
        if col.energy_cutoff_mhz is not None:
            kwargs["energy_cutoff"] = mhz(col.energy_cutoff_mhz)
    report = collision_report(two, **kwargs)
    rows = report.rows()
    with open(out / "collision.csv", "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=["kpo", "i", "j", "e_ij_mhz", "margin_mhz", "flagged"])
        w.writeheader()
        for row in rows:
            w.writerow({k: (f"{v:.10g}" if isinstance(v, float) else v) for k, v in row.items()})
    text = report.to_text()
    (out / "collision.txt").write_text(text + "\n")
    print(text)
    return EXIT_OK


COMMANDS = {
    "spectrum": cmd_spectrum,
    "bitflip": cmd_bitflip,
    "sweep": cmd_sweep,
    "readout-demo": cmd_readout_demo,
    "collision-report": cmd_collision_report,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="kposim", description="Kerr parametric oscillator simulator")
    parser.add_argument("--version", action="version", version=f"kposim {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, help="config file (or the name of a bundled one)")
        p.add_argument("--out", default=".", help="output directory")
        p.add_argument("--dim", type=int, default=None, help="override the Fock truncation")
        p.add_argument("--seed", type=int, default=None, help="override the readout seed")
        p.add_argument("--parallel", type=int, default=1, help="worker processes for sweeps")
        p.add_argument("--resume", action="store_true", help="continue a sweep from its checkpoint")
        p.add_argument("--theta-average", action="store_true", help="average tau over theta_in in {0, pi/2, pi, 3pi/2}")
        p.add_argument("-v", "--verbose", action="store_true")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except (ConfigError, InvalidParams) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except KpoSimError as exc:
        print(f"numerical failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
