"""Lindblad evolution of a single driven KPO.

    d rho/dt = -i[H(t), rho] + (kappa_tot/2)(2 a rho a^+ - rho n - n rho)
               + gamma (2 n rho n - rho n^2 - n^2 rho)

Three integrators share one contract (:func:`evolve`):

``expm``
    Time-independent generator (no drive, or a drive with zero detuning):
    the exact stride propagator exp(L dt) is applied repeatedly.
``floquet``
    Drive periodic in the rotating frame: a one-period map is assembled from
    exact exp(L0 h/2) half steps around exact drive unitaries (Strang
    splitting, ``floquet_substeps`` per period) and iterated. Outputs land on
    whole periods, so the effective stride is the nearest multiple of the
    drive period.
``rk``
    Adaptive explicit Runge-Kutta (DOP853) on the density matrix with the
    Hamiltonian re-evaluated at every stage time. Stability-limited by the
    largest Fock-level frequency, so it is the slow, general path (pump/drive
    ramps) and the reference the fast paths are tested against.

Density matrices are vectorized row-major: vec(A X B) = (A kron B^T) vec(X).
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace
from functools import lru_cache
from typing import Callable, Sequence

import numpy as np
import scipy.linalg as sla
from scipy.integrate import solve_ivp

from . import fock
from .errors import DimensionMismatch, InvalidParams, ToleranceFailure, TruncationError
from .model import DriveSpec, KpoParams, build_single_kpo, coherent_amplitude

log = logging.getLogger(__name__)

METHODS = ("auto", "expm", "floquet", "rk")


@dataclass(frozen=True)
class EvolutionSpec:
    """One master-equation run.

    ``initial`` is a coherent amplitude (complex), a ket, a density matrix, or
    None for |alpha> with alpha = sqrt((p + Delta)/|K|).
    """

    params: KpoParams
    t_end: float
    dim: int = 40
    drive: DriveSpec | None = None
    initial: complex | np.ndarray | None = None
    output_stride: float = 10e-9
    rtol: float = 1e-8
    atol: float = 1e-10
    method: str = "auto"
    floquet_substeps: int = 16
    floquet_max_step: float = 1e-9
    ramp_time: float = 0.0
    truncation_tol: float = 1e-4

    def __post_init__(self):
        fock.check_dim(self.dim)
        if not self.t_end > 0:
            raise InvalidParams(f"t_end must be > 0, got {self.t_end}")
        if not self.output_stride > 0:
            raise InvalidParams(f"output_stride must be > 0, got {self.output_stride}")
        ratio = self.t_end / self.output_stride
        if abs(ratio - round(ratio)) > 1e-6 * max(1.0, ratio):
            raise InvalidParams(f"output_stride {self.output_stride} does not divide t_end {self.t_end}")
        if self.method not in METHODS:
            raise InvalidParams(f"unknown method {self.method!r}; choose from {METHODS}")
        if self.floquet_substeps < 1 or not self.floquet_max_step > 0:
            raise InvalidParams("floquet_substeps must be >= 1 and floquet_max_step > 0")
        if self.ramp_time < 0:
            raise InvalidParams("ramp_time must be >= 0")

    def initial_density(self) -> np.ndarray:
        init = self.initial
        if init is None:
            init = coherent_amplitude(self.params)
        if np.isscalar(init):
            return fock.ket_to_dm(fock.coherent_state(self.dim, complex(init)))
        rho = fock.as_density(np.asarray(init))
        if rho.shape != (self.dim, self.dim):
            raise DimensionMismatch(f"initial state has shape {rho.shape}, spec dim is {self.dim}")
        return rho

    def with_(self, **changes) -> "EvolutionSpec":
        return replace(self, **changes)

    def with_dim(self, dim: int) -> "EvolutionSpec":
        """Same run on a different truncation; array initial states are zero-padded or cut."""
        init = self.initial
        if init is not None and not np.isscalar(init):
            rho = fock.as_density(np.asarray(init))
            old = rho.shape[0]
            if dim >= old:
                new = np.zeros((dim, dim), dtype=complex)
                new[:old, :old] = rho
            else:
                lost = float(np.real(np.trace(rho)[()] - np.trace(rho[:dim, :dim])))
                if lost > self.truncation_tol:
                    raise TruncationError(f"initial state loses {lost:.2e} population at dim {dim}")
                new = rho[:dim, :dim] / np.trace(rho[:dim, :dim])
            init = new
        return replace(self, dim=dim, initial=init)

    def resolved_method(self) -> str:
        if self.method != "auto":
            return self.method
        if self.ramp_time > 0:
            return "rk"
        if self.drive is None or self.drive.is_static:
            return "expm"
        return "floquet"


@dataclass
class TimeSeries:
    times: np.ndarray  # seconds
    values: np.ndarray  # complex samples
    name: str = ""

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        self.values = np.asarray(self.values)
        if self.times.shape != self.values.shape:
            raise DimensionMismatch("times and values differ in length")
        if len(self.times) > 1 and not np.all(np.diff(self.times) > 0):
            raise InvalidParams("times must be strictly increasing")

    def __len__(self) -> int:
        return len(self.times)

    @property
    def stride(self) -> float:
        return float(self.times[1] - self.times[0]) if len(self.times) > 1 else 0.0

    @property
    def real(self) -> np.ndarray:
        return np.real(self.values)

    def to_csv(self, path) -> None:
        vals = np.asarray(self.values, dtype=complex)
        with open(path, "w", newline="") as fh:
            if self.name:
                fh.write(f"# observable: {self.name}\n")
            fh.write("time_us,value_re,value_im\n")
            for t, v in zip(self.times, vals):
                fh.write(f"{t * 1e6:.10g},{v.real:.12g},{v.imag:.12g}\n")

    @classmethod
    def from_csv(cls, path) -> "TimeSeries":
        name = ""
        with open(path) as fh:
            first = fh.readline()
            if first.startswith("# observable:"):
                name = first.split(":", 1)[1].strip()
        data = np.loadtxt(path, delimiter=",", comments="#", skiprows=1 if not name else 2, ndmin=2)
        return cls(data[:, 0] * 1e-6, data[:, 1] + 1j * data[:, 2], name)


@dataclass
class EvolutionResult:
    series: list[TimeSeries]
    final_state: np.ndarray
    diagnostics: dict = field(default_factory=dict)


def lindblad_rhs(rho: np.ndarray, h: np.ndarray, kappa_tot: float, gamma: float) -> np.ndarray:
    """Right-hand side of the master equation for one mode (matrix form)."""
    if rho.shape != h.shape or rho.ndim != 2:
        raise DimensionMismatch(f"rho {rho.shape} and H {h.shape} differ")
    dim = rho.shape[0]
    a = fock.annihilation(dim)
    ad = a.conj().T
    nd = np.arange(dim, dtype=float)  # n is diagonal
    out = -1j * (h @ rho - rho @ h)
    if kappa_tot:
        out += kappa_tot / 2 * (2 * a @ rho @ ad - rho * nd[None, :] - nd[:, None] * rho)
    if gamma:
        nn = nd * nd
        out += gamma * (2 * nd[:, None] * rho * nd[None, :] - rho * nn[None, :] - nn[:, None] * rho)
    return out


def liouvillian(h: np.ndarray, kappa_tot: float, gamma: float) -> np.ndarray:
    """Dense superoperator of :func:`lindblad_rhs` acting on row-major vec(rho)."""
    dim = h.shape[0]
    eye = np.eye(dim)
    a = fock.annihilation(dim)
    n = fock.number(dim)
    lv = -1j * (np.kron(h, eye) - np.kron(eye, h.T))
    if kappa_tot:
        lv += kappa_tot / 2 * (2 * np.kron(a, a.conj()) - np.kron(eye, n.T) - np.kron(n, eye))
    if gamma:
        n2 = n @ n
        lv += gamma * (2 * np.kron(n, n.T) - np.kron(eye, n2.T) - np.kron(n2, eye))
    return lv


def commutator_superop(h: np.ndarray) -> np.ndarray:
    """-i[H, .] as a row-major superoperator."""
    eye = np.eye(h.shape[0])
    return -1j * (np.kron(h, eye) - np.kron(eye, h.T))


def _params_key(params: KpoParams) -> tuple:
    return (params.pump_detuning, params.kerr, params.pump_amplitude, params.kappa_tot(), params.dephasing)


@lru_cache(maxsize=4)
def _static_propagator(key: tuple, dim: int, dt: float) -> np.ndarray:
    (delta, kerr, pump, kappa, gamma), drive_key = key[:5], key[5]
    params = KpoParams(kerr=kerr, pump_amplitude=pump, pump_detuning=delta)
    h = build_single_kpo(params, dim)
    if drive_key is not None:
        amp, phase = drive_key
        h = h + amp * _static_drive(dim, phase)
    return sla.expm(liouvillian(h, kappa, gamma) * dt)


def _static_drive(dim: int, phase: float) -> np.ndarray:
    a = fock.annihilation(dim)
    e = np.exp(-1j * phase)
    return e * a.conj().T + np.conj(e) * a


def clear_cache() -> None:
    _static_propagator.cache_clear()


class _Monitor:
    """Collects observables and invariant diagnostics at each output."""

    def __init__(self, spec: EvolutionSpec, observables: Sequence[np.ndarray]):
        dim = spec.dim
        self.dim = dim
        self.obs_rows = np.array([np.asarray(o).T.reshape(-1) for o in observables], dtype=complex)
        self.top = [(dim - 1) * dim + dim - 1, (dim - 2) * dim + dim - 2]
        self.diag_idx = np.arange(dim) * (dim + 1)
        self.tol = spec.truncation_tol
        self.values: list[np.ndarray] = []
        self.max_trace_error = 0.0
        self.max_hermiticity = 0.0
        self.max_top_population = 0.0

    def record(self, v: np.ndarray, t: float) -> None:
        top = float(np.real(v[self.top[0]] + v[self.top[1]]))
        self.max_top_population = max(self.max_top_population, top)
        if top > self.tol:
            raise TruncationError(
                f"population {top:.2e} on the top two Fock levels at t={t:.3e} s exceeds {self.tol:g}; raise dim"
            )
        rho = v.reshape(self.dim, self.dim)
        self.max_trace_error = max(self.max_trace_error, abs(complex(v[self.diag_idx].sum()) - 1))
        self.max_hermiticity = max(self.max_hermiticity, float(np.linalg.norm(rho - rho.conj().T)))
        self.values.append(self.obs_rows @ v)


def _output_count(t_end: float, stride: float) -> int:
    n = t_end / stride
    # a stride that divides t_end up to rounding still reaches t_end
    k = round(n) if abs(n - round(n)) <= 1e-6 * max(1.0, n) else math.floor(n)
    return int(k) + 1


def _run_expm(spec: EvolutionSpec, v0: np.ndarray, mon: _Monitor) -> tuple[np.ndarray, np.ndarray, dict]:
    d = spec.drive
    drive_key = None if d is None or d.amplitude == 0 else (d.amplitude, d.phase)
    stride = spec.output_stride
    prop = _static_propagator(_params_key(spec.params) + (drive_key,), spec.dim, stride)
    n_out = _output_count(spec.t_end, stride)
    v = v0
    for k in range(n_out):
        if k:
            v = prop @ v
        mon.record(v, k * stride)
    times = stride * np.arange(n_out)
    return times, v, {"effective_stride": stride}


def _unitary_superop_columns(u: np.ndarray, f: np.ndarray) -> np.ndarray:
    """Apply rho -> U rho U^+ to every column of a superoperator matrix."""
    dim = u.shape[0]
    r = f.reshape(dim, dim, -1)
    tmp = np.tensordot(u, r, axes=(1, 0))  # (i, l, c)
    out = np.tensordot(tmp, u.conj(), axes=(1, 1))  # (i, c, j)
    return np.ascontiguousarray(out.transpose(0, 2, 1)).reshape(dim * dim, -1)


MAX_FLOQUET_SEGMENTS = 4  # output points per drive period when the period exceeds the stride


def floquet_plan(spec: EvolutionSpec) -> tuple[int, int, int]:
    """(substeps per period, segments per period, periods per output).

    Outputs land on whole periods when the period is shorter than the stride,
    otherwise on up to ``MAX_FLOQUET_SEGMENTS`` equal fractions of a period.
    """
    period = spec.drive.period
    if period <= spec.output_stride:
        n_seg, per_output = 1, max(1, int(round(spec.output_stride / period)))
    else:
        n_seg, per_output = min(MAX_FLOQUET_SEGMENTS, int(round(period / spec.output_stride))), 1
    m = max(spec.floquet_substeps, math.ceil(period / spec.floquet_max_step - 1e-9))
    m = n_seg * math.ceil(m / n_seg)
    return m, n_seg, per_output


def floquet_segment_maps(spec: EvolutionSpec, n_seg: int = 1, substeps: int | None = None) -> list[np.ndarray]:
    """Propagators over consecutive 1/n_seg fractions of one drive period.

    Strang splitting: exact exp(L0 h/2) half steps around the exact unitary of
    the drive term frozen at the substep midpoint. Near resonance the drive is
    slowly varying in the frame of L0, which is where the midpoint rule is
    accurate; the error is second order in the substep. Composing the segment maps
    in order gives the one-period map.
    """
    d = spec.drive
    dim = spec.dim
    period = d.period
    m = substeps or floquet_plan(spec)[0]
    if m % n_seg:
        raise InvalidParams(f"{m} substeps do not split into {n_seg} segments")
    h = period / m
    half = _static_propagator(_params_key(spec.params) + (None,), dim, h / 2)
    full = half @ half
    a = fock.annihilation(dim)
    ad = a.conj().T
    per_seg = m // n_seg
    maps = []
    for s in range(n_seg):
        f = half.copy()
        for k in range(s * per_seg, (s + 1) * per_seg):
            phase = np.exp(-1j * (d.detuning * (k + 0.5) * h + d.phase))
            hd = d.amplitude * (phase * ad + np.conj(phase) * a)
            w, vecs = np.linalg.eigh(hd)
            u = (vecs * np.exp(-1j * w * h)) @ vecs.conj().T
            f = _unitary_superop_columns(u, f)
            f = (full if k < (s + 1) * per_seg - 1 else half) @ f
        maps.append(f)
    return maps


def floquet_map(spec: EvolutionSpec, substeps: int | None = None) -> np.ndarray:
    """One-period propagator of the periodically driven Liouvillian."""
    return floquet_segment_maps(spec, 1, substeps)[0]


def _run_floquet(spec: EvolutionSpec, v0: np.ndarray, mon: _Monitor) -> tuple[np.ndarray, np.ndarray, dict]:
    period = spec.drive.period
    m, n_seg, per_output = floquet_plan(spec)
    maps = floquet_segment_maps(spec, n_seg, m)
    if n_seg == 1:
        step = maps[0]
        for _ in range(per_output - 1):
            step = maps[0] @ step
        maps = [step]
    stride = per_output * period / n_seg
    n_out = _output_count(spec.t_end, stride)
    v = v0
    for k in range(n_out):
        if k:
            v = maps[(k - 1) % len(maps)] @ v
        mon.record(v, k * stride)
    times = stride * np.arange(n_out)
    return times, v, {"effective_stride": stride, "periods_per_output": per_output / n_seg, "substeps": m}


def hamiltonian_callback(spec: EvolutionSpec) -> Callable[[float], np.ndarray]:
    """H(t) for the run, including the optional linear ramp of pump and drive."""
    dim = spec.dim
    p = spec.params
    a = fock.annihilation(dim)
    ad = a.conj().T
    static = p.pump_detuning * (ad @ a) + p.kerr / 2 * (ad @ ad @ a @ a)
    pump = p.pump_amplitude / 2 * (ad @ ad + a @ a)
    d = spec.drive
    ramp = spec.ramp_time

    def h_of_t(t: float) -> np.ndarray:
        s = min(1.0, t / ramp) if ramp > 0 else 1.0
        h = static + s * pump
        if d is not None and d.amplitude:
            ph = np.exp(-1j * (d.detuning * t + d.phase))
            h = h + s * d.amplitude * (ph * ad + np.conj(ph) * a)
        return h

    return h_of_t


def _run_rk(spec: EvolutionSpec, v0: np.ndarray, mon: _Monitor) -> tuple[np.ndarray, np.ndarray, dict]:
    dim = spec.dim
    h_of_t = hamiltonian_callback(spec)
    kappa = spec.params.kappa_tot()
    gamma = spec.params.dephasing

    def rhs(t, y):
        return lindblad_rhs(y.reshape(dim, dim), h_of_t(t), kappa, gamma).reshape(-1)

    stride = spec.output_stride
    n_out = _output_count(spec.t_end, stride)
    times = stride * np.arange(n_out)
    sol = solve_ivp(rhs, (0.0, times[-1]), v0, method="DOP853", t_eval=times,
                    rtol=spec.rtol, atol=spec.atol)
    if sol.status != 0:
        raise ToleranceFailure(f"integrator failed: {sol.message}")
    for k in range(n_out):
        mon.record(sol.y[:, k], times[k])
    return times, sol.y[:, -1], {"effective_stride": stride, "nfev": int(sol.nfev)}


_RUNNERS = {"expm": _run_expm, "floquet": _run_floquet, "rk": _run_rk}


def run_evolution(spec: EvolutionSpec, observables: Sequence[np.ndarray],
                  names: Sequence[str] | None = None) -> EvolutionResult:
    """Integrate rho(t) and record Tr[rho O] for each observable."""
    for o in observables:
        if np.shape(o) != (spec.dim, spec.dim):
            raise DimensionMismatch(f"observable shape {np.shape(o)} does not match dim {spec.dim}")
    method = spec.resolved_method()
    if method == "floquet" and (spec.drive is None or spec.drive.is_static):
        raise InvalidParams("floquet method needs a drive with nonzero detuning and amplitude")
    if method == "expm" and spec.drive is not None and not spec.drive.is_static:
        raise InvalidParams("expm method needs a time-independent generator")
    if method != "rk" and spec.ramp_time > 0:
        raise InvalidParams("ramped runs require the rk method")
    rho0 = spec.initial_density()
    mon = _Monitor(spec, observables)
    times, v_end, extra = _RUNNERS[method](spec, rho0.reshape(-1).astype(complex), mon)
    rho_end = v_end.reshape(spec.dim, spec.dim)
    diag = fock.check_density(rho_end)
    values = np.array(mon.values).T if mon.values else np.zeros((len(observables), 0))
    names = list(names) if names is not None else [f"obs{k}" for k in range(len(observables))]
    series = [TimeSeries(times, values[k], names[k]) for k in range(len(observables))]
    diagnostics = {
        "method": method,
        "n_outputs": len(times),
        "max_trace_error": mon.max_trace_error,
        "max_hermiticity": mon.max_hermiticity,
        "max_top_population": mon.max_top_population,
        "final_min_eigenvalue": diag["min_eigenvalue"],
        **extra,
    }
    if mon.max_trace_error > 1e-8:
        raise ToleranceFailure(f"trace drifted by {mon.max_trace_error:.2e}")
    log.debug("evolution done: %s", diagnostics)
    return EvolutionResult(series, rho_end, diagnostics)


def evolve(spec: EvolutionSpec, observables: Sequence[np.ndarray],
           names: Sequence[str] | None = None) -> list[TimeSeries]:
    return run_evolution(spec, observables, names).series


def bitflip_observable(dim: int) -> np.ndarray:
    return fock.x_quadrature(dim)


@dataclass
class ConvergenceReport:
    dims: list[int]
    series: dict[int, list[TimeSeries]]
    final_values: dict[int, np.ndarray]
    max_relative_change: list[np.ndarray]  # per successive dim pair, one entry per observable


def convergence_check(spec: EvolutionSpec, dims: Sequence[int],
                      observables: Sequence[Callable[[int], np.ndarray]] = (bitflip_observable,)) -> ConvergenceReport:
    """Re-run ``spec`` at each truncation and compare observable traces.

    The relative change between successive dims is max|x_b - x_a| / max|x_a|
    over the common time grid.
    """
    dims = list(dims)
    if len(dims) < 2:
        raise InvalidParams("convergence_check needs at least two dims")
    series: dict[int, list[TimeSeries]] = {}
    finals: dict[int, np.ndarray] = {}
    cache: dict[int, list[TimeSeries]] = {}
    for d in dims:
        if d not in cache:
            run = spec.with_dim(d)
            cache[d] = evolve(run, [o(d) for o in observables])
        series[d] = cache[d]
        finals[d] = np.array([s.values[-1] for s in cache[d]])
    changes = []
    for da, db in zip(dims, dims[1:]):
        row = []
        for sa, sb in zip(series[da], series[db]):
            n = min(len(sa), len(sb))
            scale = np.max(np.abs(sa.values[:n]))
            diff = np.max(np.abs(sb.values[:n] - sa.values[:n]))
            row.append(diff / scale if scale else diff)
        changes.append(np.array(row))
    return ConvergenceReport(dims, series, finals, changes)
