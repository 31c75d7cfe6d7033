"""Grids of bit-flip times over input detuning and power.

Each grid point (detuning, power, theta) is an independent job: build the
drive, evolve, bin, fit. Results are keyed by grid index, so aggregation and
the CSV do not depend on scheduling order or on the number of workers.
Completed points can be streamed to an append-only JSONL checkpoint and a
later run with ``resume=True`` skips them.
"""
from __future__ import annotations

import hashlib
import json
import logging
import math
import time
from concurrent.futures import ProcessPoolExecutor, as_completed
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from . import __version__
from .analysis import DEFAULT_BIN_WIDTH, bin_trace, fit_exponential
from .dynamics import EvolutionSpec, bitflip_observable, evolve
from .errors import InvalidParams, KpoSimError, NoConvergence, SweepFailed
from .model import (
    DriveSpec,
    KpoParams,
    amplitude_to_input_power,
    build_single_kpo,
    input_power_to_amplitude,
    mhz,
    to_mhz,
)
from .spectrum import diagonalize, excitation_energy

log = logging.getLogger(__name__)

CHECKPOINT_KIND = "kposim-sweep-checkpoint"
CHECKPOINT_VERSION = 1
CSV_COLUMNS = ("detuning_mhz", "power_dbm", "omega_in_mhz", "theta_in_rad", "tau_us", "tau_err_us", "fit_rms", "status")


def _strictly_monotone(x: Sequence[float]) -> bool:
    d = np.diff(np.asarray(x, dtype=float))
    return bool(np.all(d > 0) or np.all(d < 0))


@dataclass(frozen=True)
class SweepSpec:
    """Grid definition.

    ``powers`` are dBm when ``power_unit == "dbm"`` (converted with
    ``kappa_ext`` and the fixed input frequency ``omega_in``) or drive
    amplitudes in rad/s when ``power_unit == "omega"``. With ``theta_average``
    every (detuning, power) cell also gets a row averaged over ``thetas``.
    """

    base: EvolutionSpec
    detunings: tuple[float, ...]
    powers: tuple[float, ...]
    power_unit: str = "dbm"
    thetas: tuple[float, ...] = (0.0,)
    theta_average: bool = False
    kappa_ext: float | None = None
    omega_in: float | None = None
    exclusion_window: tuple[float, float] = (mhz(-1.0), mhz(1.0))
    bin_width: float = DEFAULT_BIN_WIDTH
    skip_bins: int = 0

    def __post_init__(self):
        object.__setattr__(self, "detunings", tuple(float(x) for x in self.detunings))
        object.__setattr__(self, "powers", tuple(float(x) for x in self.powers))
        object.__setattr__(self, "thetas", tuple(float(x) for x in self.thetas))
        if not self.detunings or not self.powers or not self.thetas:
            raise InvalidParams("sweep axes must be nonempty")
        if len(self.detunings) > 1 and not _strictly_monotone(self.detunings):
            raise InvalidParams("detuning axis must be strictly monotone")
        if len(self.powers) > 1 and not _strictly_monotone(self.powers):
            raise InvalidParams("power axis must be strictly monotone")
        if self.power_unit not in ("dbm", "omega"):
            raise InvalidParams(f"power_unit must be 'dbm' or 'omega', got {self.power_unit!r}")
        if self.power_unit == "dbm" and not (self.resolved_kappa_ext() > 0 and self.resolved_omega_in() > 0):
            raise InvalidParams("dBm power axis needs kappa_ext > 0 and an input frequency")
        if self.power_unit == "omega" and any(p < 0 for p in self.powers):
            raise InvalidParams("drive amplitudes must be >= 0")

    def resolved_kappa_ext(self) -> float:
        return self.base.params.kappa_ext if self.kappa_ext is None else self.kappa_ext

    def resolved_omega_in(self) -> float:
        return self.base.params.resonance_freq if self.omega_in is None else self.omega_in

    def amplitude(self, power: float) -> float:
        if self.power_unit == "omega":
            return power
        return input_power_to_amplitude(power, self.resolved_kappa_ext(), self.resolved_omega_in())

    def power_dbm(self, power: float) -> float:
        if self.power_unit == "dbm":
            return power
        if power == 0 or not (self.resolved_kappa_ext() > 0 and self.resolved_omega_in() > 0):
            return math.nan
        return amplitude_to_input_power(power, self.resolved_kappa_ext(), self.resolved_omega_in())

    def keys(self) -> list[tuple[int, int, int]]:
        return [(i, j, k) for i in range(len(self.detunings)) for j in range(len(self.powers))
                for k in range(len(self.thetas))]

    def point_spec(self, key: tuple[int, int, int]) -> EvolutionSpec:
        i, j, k = key
        drive = DriveSpec(self.amplitude(self.powers[j]), self.detunings[i], self.thetas[k])
        return self.base.with_(drive=drive)

    def in_exclusion(self, detuning: float) -> bool:
        lo, hi = self.exclusion_window
        return lo < detuning < hi

    def config_hash(self) -> str:
        return hashlib.sha256(_canonical(self).encode()).hexdigest()[:16]


def _canonical(spec: SweepSpec) -> str:
    base = spec.base
    init = base.initial
    if init is not None and not np.isscalar(init):
        init = hashlib.sha256(np.ascontiguousarray(init, dtype=complex).tobytes()).hexdigest()
    elif init is not None:
        init = [complex(init).real, complex(init).imag]
    doc = {
        "params": asdict(base.params),
        "evolution": {k: getattr(base, k) for k in ("t_end", "dim", "output_stride", "rtol", "atol", "method",
                                                    "floquet_substeps", "ramp_time", "truncation_tol")},
        "initial": init,
        "detunings": spec.detunings,
        "powers": spec.powers,
        "power_unit": spec.power_unit,
        "thetas": spec.thetas,
        "theta_average": spec.theta_average,
        "kappa_ext": spec.resolved_kappa_ext(),
        "omega_in": spec.resolved_omega_in(),
        "bin_width": spec.bin_width,
        "skip_bins": spec.skip_bins,
    }
    return json.dumps(doc, sort_keys=True, default=repr)


@dataclass(frozen=True)
class PointResult:
    tau: float = math.nan
    tau_error: float = math.nan
    fit_rms: float = math.nan
    status: str = "ok"  # "ok", "capped" or "failed: <Error>: message"
    diagnostics: dict = field(default_factory=dict)

    @property
    def ok(self) -> bool:
        return not self.status.startswith("failed")

    def to_json(self) -> dict:
        return {"tau": self.tau, "tau_error": self.tau_error, "fit_rms": self.fit_rms,
                "status": self.status, "diagnostics": self.diagnostics}

    @classmethod
    def from_json(cls, d: dict) -> "PointResult":
        return cls(d["tau"], d["tau_error"], d["fit_rms"], d["status"], d.get("diagnostics", {}))


def run_point(spec: EvolutionSpec, bin_width: float = DEFAULT_BIN_WIDTH, skip_bins: int = 0) -> PointResult:
    """Evolve one point, fit tau, and turn any kposim failure into a failed record."""
    try:
        res_series = evolve(spec, [bitflip_observable(spec.dim)], ["x"])[0]
        fit = fit_exponential(bin_trace(res_series, bin_width), skip_bins=skip_bins)
    except KpoSimError as exc:
        return PointResult(status=f"failed: {type(exc).__name__}: {exc}")
    diag = {"method": spec.resolved_method(), "effective_stride": res_series.stride}
    return PointResult(fit.tau, fit.tau_error, fit.residual_rms, "capped" if fit.capped else "ok", diag)


def _job(args):
    key, spec, bin_width, skip_bins = args
    return key, run_point(spec, bin_width, skip_bins)


@dataclass
class SweepResult:
    spec: SweepSpec
    points: dict[tuple[int, int, int], PointResult]
    config_hash: str
    version: str = __version__

    @property
    def n_failed(self) -> int:
        return sum(not p.ok for p in self.points.values())

    def tau_line(self, power_index: int = 0, theta_index: int | None = 0) -> np.ndarray:
        """tau along the detuning axis (nan for failed points); theta_index=None averages thetas."""
        out = []
        for i in range(len(self.spec.detunings)):
            if theta_index is None:
                out.append(self._theta_mean(i, power_index)[0])
            else:
                p = self.points[(i, power_index, theta_index)]
                out.append(p.tau if p.ok else math.nan)
        return np.array(out)

    def _theta_mean(self, i: int, j: int) -> tuple[float, float, float, str]:
        pts = [self.points[(i, j, k)] for k in range(len(self.spec.thetas))]
        good = [p for p in pts if p.ok]
        if not good:
            return math.nan, math.nan, math.nan, "failed: all theta points failed"
        tau = float(np.mean([p.tau for p in good]))
        err = float(np.sqrt(np.sum([p.tau_error ** 2 for p in good])) / len(good))
        rms = float(np.mean([p.fit_rms for p in good]))
        status = "ok" if len(good) == len(pts) else f"partial: {len(good)}/{len(pts)} theta points"
        return tau, err, rms, status

    def rows(self) -> list[list[str]]:
        s = self.spec
        rows = []

        def fmt(x):
            return "nan" if x is None or (isinstance(x, float) and math.isnan(x)) else f"{x:.10g}"

        for i, det in enumerate(s.detunings):
            for j, pw in enumerate(s.powers):
                amp = s.amplitude(pw)
                common = [fmt(to_mhz(det)), fmt(s.power_dbm(pw)), fmt(to_mhz(amp))]
                for k, th in enumerate(s.thetas):
                    p = self.points[(i, j, k)]
                    status = p.status.replace("\n", " ").replace(",", ";")
                    rows.append(common + [fmt(th), fmt(p.tau * 1e6), fmt(p.tau_error * 1e6), fmt(p.fit_rms), status])
                if s.theta_average:
                    tau, err, rms, status = self._theta_mean(i, j)
                    rows.append(common + ["avg", fmt(tau * 1e6), fmt(err * 1e6), fmt(rms), status])
        return rows

    def to_csv(self, path, stamp: bool = True) -> None:
        with open(path, "w", newline="") as fh:
            fh.write(f"# kposim sweep version {self.version}\n")
            fh.write(f"# config_hash {self.config_hash}\n")
            if stamp:
                fh.write(f"# generated {time.strftime('%Y-%m-%dT%H:%M:%S')}\n")
            fh.write(",".join(CSV_COLUMNS) + "\n")
            for r in self.rows():
                fh.write(",".join(r) + "\n")


def _read_checkpoint(path: Path, config_hash: str) -> dict:
    done = {}
    with open(path) as fh:
        header = fh.readline()
        if not header.strip():
            return done
        head = json.loads(header)
        if head.get("kind") != CHECKPOINT_KIND or head.get("version") != CHECKPOINT_VERSION:
            raise InvalidParams(f"{path} is not a version-{CHECKPOINT_VERSION} sweep checkpoint")
        if head.get("config_hash") != config_hash:
            raise InvalidParams(f"checkpoint {path} belongs to a different sweep configuration")
        for line in fh:
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError:
                break  # torn final write from an interrupted run
            done[tuple(rec["key"])] = PointResult.from_json(rec["result"])
    return done


def run_sweep(spec: SweepSpec, parallelism: int = 1, checkpoint: str | Path | None = None,
              resume: bool = False, on_point: Callable[[tuple, PointResult], None] | None = None) -> SweepResult:
    """Evaluate every grid point; raise SweepFailed only if all points fail."""
    if parallelism < 1:
        raise InvalidParams("parallelism must be a positive integer")
    chash = spec.config_hash()
    done: dict = {}
    ck_fh = None
    if checkpoint is not None:
        checkpoint = Path(checkpoint)
        if resume and checkpoint.exists():
            done = _read_checkpoint(checkpoint, chash)
            ck_fh = open(checkpoint, "a")
        else:
            ck_fh = open(checkpoint, "w")
            ck_fh.write(json.dumps({"kind": CHECKPOINT_KIND, "version": CHECKPOINT_VERSION,
                                    "config_hash": chash, "code_version": __version__}) + "\n")
            ck_fh.flush()
    todo = [k for k in spec.keys() if k not in done]
    log.info("sweep %s: %d points, %d already done", chash, len(spec.keys()), len(done))
    results = dict(done)

    def record(key, res):
        results[key] = res
        if ck_fh is not None:
            ck_fh.write(json.dumps({"key": list(key), "result": res.to_json()}) + "\n")
            ck_fh.flush()
        if on_point is not None:
            on_point(key, res)

    jobs = [(k, spec.point_spec(k), spec.bin_width, spec.skip_bins) for k in todo]
    try:
        if parallelism == 1 or len(jobs) <= 1:
            for job in jobs:
                record(*_job(job))
        else:
            with ProcessPoolExecutor(max_workers=parallelism) as pool:
                futures = [pool.submit(_job, job) for job in jobs]
                for fut in as_completed(futures):
                    record(*fut.result())
    finally:
        if ck_fh is not None:
            ck_fh.close()
    result = SweepResult(spec, {k: results[k] for k in spec.keys()}, chash)
    if result.n_failed == len(result.points):
        raise SweepFailed(f"all {len(result.points)} sweep points failed; first: "
                          f"{next(iter(result.points.values())).status}")
    return result


def locate_minima(x: Sequence[float], y: Sequence[float]) -> list[float]:
    """Strict interior local minima of y(x), refined by a parabola through the three points.

    NaN entries break neighbourhoods: a point next to a NaN is never a minimum.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    out = []
    for k in range(1, len(x) - 1):
        y0, y1, y2 = y[k - 1], y[k], y[k + 1]
        if not np.all(np.isfinite([y0, y1, y2])):
            continue
        if y1 < y0 and y1 < y2:
            x0, x1, x2 = x[k - 1], x[k], x[k + 1]
            # vertex of the interpolating parabola (non-uniform spacing)
            num = (x1 - x0) ** 2 * (y1 - y2) - (x1 - x2) ** 2 * (y1 - y0)
            den = (x1 - x0) * (y1 - y2) - (x1 - x2) * (y1 - y0)
            xv = x1 - 0.5 * num / den if den != 0 else x1
            lo, hi = min(x0, x2), max(x0, x2)
            out.append(float(min(max(xv, lo), hi)))
    return out


def dip_locator(result: SweepResult, power_index: int = 0, theta_index: int | None = 0) -> list[float]:
    """Detunings (rad/s) of tau minima at one power, deepest first."""
    taus = result.tau_line(power_index, theta_index)
    dets = np.asarray(result.spec.detunings)
    mins = locate_minima(dets, taus)
    depth = {m: float(np.interp(m, dets if dets[0] < dets[-1] else dets[::-1],
                                taus if dets[0] < dets[-1] else taus[::-1])) for m in mins}
    return sorted(mins, key=lambda m: depth[m])


def e02(params: KpoParams, dim: int = 40) -> float:
    return excitation_energy(diagonalize(build_single_kpo(params, dim)), 0, 2)


def calibrate_pump_from_dip(observed_dip: float, params: KpoParams, dim: int = 40,
                            rtol: float = 1e-6, max_iter: int = 50) -> float:
    """Pump amplitude p for which E_02 of the KPO Hamiltonian equals ``observed_dip``.

    Secant iteration on p starting from |dip|/2. Only ``pump_amplitude`` of
    ``params`` is varied.
    """
    if not observed_dip < 0:
        raise InvalidParams(f"observed dip must be negative (E_02 < 0), got {observed_dip}")

    def f(p):
        return e02(params.with_(pump_amplitude=p), dim) - observed_dip

    p0 = abs(observed_dip) / 2
    p1 = p0 * 1.01
    f0, f1 = f(p0), f(p1)
    for _ in range(max_iter):
        if abs(f1) <= rtol * abs(observed_dip):
            return p1
        if f1 == f0:
            break
        p0, p1 = p1, max(p1 - f1 * (p1 - p0) / (f1 - f0), 1e-3 * p1)
        f0, f1 = f1, f(p1)
    if abs(f1) <= rtol * abs(observed_dip):
        return p1
    raise NoConvergence(f"pump calibration did not reach E_02 = {observed_dip:g} within {max_iter} iterations")


def acceptance_detuning_axis(start_mhz: float = -300.0, stop_mhz: float = 300.0, step_mhz: float = 4.0) -> tuple:
    n = int(round((stop_mhz - start_mhz) / step_mhz)) + 1
    return tuple(mhz(start_mhz + step_mhz * k) for k in range(n))
