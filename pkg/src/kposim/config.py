"""Run configuration: a flat, sectioned ``key = value`` text format.

    # comment
    [kpo]
    kerr_nonlinearity_mhz = -14
    pump_amplitude_mhz = 110

Frequencies and rates are ordinary frequencies (omega / 2 pi) with the unit in
the key name. Each section maps onto a dataclass below; its fields are the
accepted keys, so unknown keys and sections are rejected with the offending
line number. Lists are comma separated.
"""
from __future__ import annotations

import math
import types
import typing
from dataclasses import MISSING, dataclass, field, fields
from importlib import resources
from pathlib import Path

from .dynamics import EvolutionSpec
from .errors import ConfigError, KpoSimError
from .model import DriveSpec, KpoParams, TwoKpoParams, input_power_to_amplitude, kappa_int_from_budget, mhz
from .readout import IfChannel, ReadoutConfig
from .sweep import SweepSpec


def _check(kind: str):
    return {"check": kind}


@dataclass(frozen=True)
class KpoSection:
    kerr_nonlinearity_mhz: float
    flux_bias: float | None = None
    resonance_frequency_ghz: float = 0.0
    total_loss_rate_mhz: float = field(default=0.0, metadata=_check("nonneg"))
    external_loss_rate_mhz: float = field(default=0.0, metadata=_check("nonneg"))
    dephasing_rate_mhz: float = field(default=0.0, metadata=_check("nonneg"))
    pump_detuning_mhz: float = 0.0
    pump_amplitude_mhz: float = field(default=0.0, metadata=_check("nonneg"))
    coherent_state_amplitude: float | None = None  # as tabulated; the simulation recomputes it

    def params(self) -> KpoParams:
        gamma = mhz(self.dephasing_rate_mhz)
        kappa_ext = mhz(self.external_loss_rate_mhz)
        kappa_int = kappa_int_from_budget(mhz(self.total_loss_rate_mhz), kappa_ext, gamma)
        return KpoParams(
            kerr=mhz(self.kerr_nonlinearity_mhz),
            pump_amplitude=mhz(self.pump_amplitude_mhz),
            pump_detuning=mhz(self.pump_detuning_mhz),
            resonance_freq=mhz(1e3 * self.resonance_frequency_ghz),
            kappa_ext=kappa_ext,
            kappa_int=kappa_int,
            dephasing=gamma,
            flux_bias=self.flux_bias,
        )


@dataclass(frozen=True)
class CouplingSection:
    two_body_coupling_mhz: float = field(metadata=_check("nonneg"))
    pump_freq_halfdiff_mhz: float | None = None  # default: from the members' pump frequencies
    pump_phase_halfdiff_rad: float = 0.0


@dataclass(frozen=True)
class SimulationSection:
    dim: int = field(default=40, metadata=_check("positive"))
    t_end_us: float = field(default=20.0, metadata=_check("positive"))
    output_stride_ns: float = field(default=10.0, metadata=_check("positive"))
    bin_width_us: float = field(default=1.0, metadata=_check("positive"))
    skip_bins: int = field(default=0, metadata=_check("nonneg"))
    rtol: float = field(default=1e-8, metadata=_check("positive"))
    atol: float = field(default=1e-10, metadata=_check("positive"))
    method: str = "auto"
    floquet_substeps: int = field(default=16, metadata=_check("positive"))
    floquet_max_step_ns: float = field(default=1.0, metadata=_check("positive"))
    truncation_tol: float = field(default=1e-4, metadata=_check("positive"))
    initial_alpha: float | None = None  # default sqrt((p + Delta)/|K|)


@dataclass(frozen=True)
class DriveSection:
    detuning_mhz: float = 0.0
    power_dbm: float | None = None
    amplitude_mhz: float | None = field(default=None, metadata=_check("nonneg"))
    theta_rad: float = 0.0
    input_frequency_ghz: float | None = field(default=None, metadata=_check("positive"))


@dataclass(frozen=True)
class SweepSection:
    detunings_mhz: tuple[float, ...] = ()
    detuning_start_mhz: float | None = None
    detuning_stop_mhz: float | None = None
    detuning_step_mhz: float | None = field(default=None, metadata=_check("positive"))
    powers_dbm: tuple[float, ...] = ()
    amplitudes_mhz: tuple[float, ...] = ()
    thetas_rad: tuple[float, ...] = (0.0,)
    theta_average: bool = False
    exclusion_mhz: float = field(default=1.0, metadata=_check("nonneg"))
    input_frequency_ghz: float | None = field(default=None, metadata=_check("positive"))

    def detuning_axis_mhz(self) -> tuple[float, ...]:
        if self.detunings_mhz:
            return self.detunings_mhz
        if None in (self.detuning_start_mhz, self.detuning_stop_mhz, self.detuning_step_mhz):
            return ()
        n = int(math.floor((self.detuning_stop_mhz - self.detuning_start_mhz) / self.detuning_step_mhz + 1e-9)) + 1
        return tuple(round(self.detuning_start_mhz + k * self.detuning_step_mhz, 9) for k in range(max(n, 0)))


@dataclass(frozen=True)
class ReadoutSection:
    if_frequencies_mhz: tuple[float, ...] = (1.0, 31.0)
    labels: tuple[str, ...] = ("kpo1", "kpo2")
    tau_flip_us: float = field(default=5.0, metadata=_check("positive"))
    trials: int = field(default=10_000, metadata=_check("positive"))
    t_end_us: float = field(default=20.0, metadata=_check("positive"))
    bin_us: float = field(default=2.0, metadata=_check("positive"))
    sample_rate_mhz: float = field(default=250.0, metadata=_check("positive"))
    amplitude: float = field(default=1.0, metadata=_check("positive"))
    noise_sigma: float = field(default=2.0, metadata=_check("nonneg"))
    seed: int = 0
    histogram_bins: int = field(default=60, metadata=_check("positive"))
    spectrum_trials: int = field(default=100, metadata=_check("positive"))


@dataclass(frozen=True)
class CollisionSection:
    threshold_mhz: float = field(default=1.0, metadata=_check("positive"))
    energy_cutoff_mhz: float | None = field(default=None, metadata=_check("positive"))
    include_doublets: bool = False
    dim: int = field(default=40, metadata=_check("positive"))


SECTIONS: dict[str, type] = {
    "kpo": KpoSection,
    "kpo1": KpoSection,
    "kpo2": KpoSection,
    "coupling": CouplingSection,
    "simulation": SimulationSection,
    "drive": DriveSection,
    "sweep": SweepSection,
    "readout": ReadoutSection,
    "collision": CollisionSection,
}


@dataclass(frozen=True)
class RunConfig:
    kpo: KpoSection | None = None
    kpo1: KpoSection | None = None
    kpo2: KpoSection | None = None
    coupling: CouplingSection | None = None
    simulation: SimulationSection = SimulationSection()
    drive: DriveSection | None = None
    sweep: SweepSection | None = None
    readout: ReadoutSection | None = None
    collision: CollisionSection | None = None
    source: str | None = field(default=None, compare=False)

    @property
    def is_two_kpo(self) -> bool:
        return self.kpo1 is not None and self.kpo2 is not None

    def primary(self) -> KpoSection:
        sec = self.kpo or self.kpo1
        if sec is None:
            raise ConfigError("config has no [kpo] or [kpo1] section", path=self.source)
        return sec

    def kpo_params(self) -> KpoParams:
        return self.primary().params()

    def two_kpo_params(self) -> TwoKpoParams:
        if not self.is_two_kpo or self.coupling is None:
            raise ConfigError("two-KPO commands need [kpo1], [kpo2] and [coupling]", path=self.source)
        k1, k2 = self.kpo1.params(), self.kpo2.params()
        c = self.coupling
        g = mhz(c.two_body_coupling_mhz)
        if c.pump_freq_halfdiff_mhz is None:
            return TwoKpoParams.from_members(k1, k2, g, c.pump_phase_halfdiff_rad)
        return TwoKpoParams(k1, k2, g, mhz(c.pump_freq_halfdiff_mhz), c.pump_phase_halfdiff_rad)

    def input_frequency(self, override_ghz: float | None) -> float:
        if override_ghz is not None:
            return mhz(1e3 * override_ghz)
        return self.kpo_params().resonance_freq

    def drive_spec(self) -> DriveSpec | None:
        d = self.drive
        if d is None or (d.power_dbm is None and d.amplitude_mhz is None):
            return None
        if d.amplitude_mhz is not None:
            amp = mhz(d.amplitude_mhz)
        else:
            p = self.kpo_params()
            amp = input_power_to_amplitude(d.power_dbm, p.kappa_ext, self.input_frequency(d.input_frequency_ghz))
        return DriveSpec(amp, mhz(d.detuning_mhz), d.theta_rad)

    def evolution_spec(self, with_drive: bool = True) -> EvolutionSpec:
        s = self.simulation
        return EvolutionSpec(
            params=self.kpo_params(),
            t_end=s.t_end_us / 1e6,
            dim=s.dim,
            drive=self.drive_spec() if with_drive else None,
            initial=s.initial_alpha,
            output_stride=s.output_stride_ns / 1e9,
            rtol=s.rtol,
            atol=s.atol,
            method=s.method,
            floquet_substeps=s.floquet_substeps,
            floquet_max_step=s.floquet_max_step_ns / 1e9,
            truncation_tol=s.truncation_tol,
        )

    def sweep_spec(self) -> SweepSpec:
        sw = self.sweep
        if sw is None:
            raise ConfigError("sweep needs a [sweep] section", path=self.source)
        dets = sw.detuning_axis_mhz()
        if sw.powers_dbm:
            unit, powers = "dbm", sw.powers_dbm
        else:
            unit, powers = "omega", tuple(mhz(a) for a in sw.amplitudes_mhz)
        return SweepSpec(
            base=self.evolution_spec(with_drive=False),
            detunings=tuple(mhz(d) for d in dets),
            powers=powers,
            power_unit=unit,
            thetas=sw.thetas_rad,
            theta_average=sw.theta_average,
            omega_in=self.input_frequency(sw.input_frequency_ghz),
            exclusion_window=(mhz(-sw.exclusion_mhz), mhz(sw.exclusion_mhz)),
            bin_width=self.simulation.bin_width_us / 1e6,
            skip_bins=self.simulation.skip_bins,
        )

    def readout_config(self) -> ReadoutConfig:
        r = self.readout or ReadoutSection()
        labels = list(r.labels) + [f"ch{k}" for k in range(len(r.labels), len(r.if_frequencies_mhz))]
        channels = tuple(IfChannel(f * 1e6, labels[k]) for k, f in enumerate(r.if_frequencies_mhz))
        return ReadoutConfig(
            tau_flip=r.tau_flip_us / 1e6,
            n_trials=r.trials,
            t_end=r.t_end_us / 1e6,
            bin_duration=r.bin_us / 1e6,
            sample_rate=r.sample_rate_mhz * 1e6,
            channels=channels,
            amplitude=r.amplitude,
            noise_sigma=r.noise_sigma,
            seed=r.seed,
        )


def _base_type(tp):
    """(scalar type, is_tuple, optional) for a field annotation."""
    optional = False
    origin = typing.get_origin(tp)
    if origin in (typing.Union, types.UnionType):
        args = [a for a in typing.get_args(tp) if a is not type(None)]
        optional = True
        tp = args[0]
        origin = typing.get_origin(tp)
    if origin is tuple:
        return typing.get_args(tp)[0], True, optional
    return tp, False, optional


def _convert_scalar(text: str, tp):
    text = text.strip()
    if tp is bool:
        low = text.lower()
        if low in ("true", "yes", "1", "on"):
            return True
        if low in ("false", "no", "0", "off"):
            return False
        raise ValueError(f"expected a boolean, got {text!r}")
    if tp is int:
        return int(text)
    if tp is float:
        v = float(text)
        if not math.isfinite(v):
            raise ValueError(f"non-finite number {text!r}")
        return v
    if tp is str:
        if not text:
            raise ValueError("empty string")
        return text
    raise TypeError(tp)


def _convert(text: str, annotation):
    tp, is_tuple, optional = _base_type(annotation)
    if optional and text.strip().lower() == "none":
        return None
    if is_tuple:
        items = [t for t in text.split(",") if t.strip()]
        return tuple(_convert_scalar(t, tp) for t in items)
    return _convert_scalar(text, tp)


def _validate_value(name: str, value, kind: str | None) -> None:
    if kind is None or value is None:
        return
    vals = value if isinstance(value, tuple) else (value,)
    for v in vals:
        if kind == "positive" and not v > 0:
            raise ValueError(f"{name} must be > 0, got {v}")
        if kind == "nonneg" and not v >= 0:
            raise ValueError(f"{name} must be >= 0, got {v}")


def parse_config(text: str, path: str | None = None) -> RunConfig:
    """Parse config text; every problem raises ConfigError with a line number."""
    raw: dict[str, dict[str, tuple[str, int]]] = {}
    header_line: dict[str, int] = {}
    current = None
    for lineno, line in enumerate(text.splitlines(), start=1):
        body = line.split("#", 1)[0].strip()
        if not body:
            continue
        if body.startswith("["):
            if not body.endswith("]"):
                raise ConfigError(f"malformed section header {body!r}", lineno, path)
            name = body[1:-1].strip().lower()
            if name not in SECTIONS:
                raise ConfigError(f"unknown section [{name}]; expected one of {sorted(SECTIONS)}", lineno, path)
            if name in raw:
                raise ConfigError(f"section [{name}] appears twice", lineno, path)
            raw[name] = {}
            header_line[name] = lineno
            current = name
            continue
        if "=" not in body:
            raise ConfigError(f"expected 'key = value', got {body!r}", lineno, path)
        if current is None:
            raise ConfigError("key outside of any section", lineno, path)
        key, value = (s.strip() for s in body.split("=", 1))
        key = key.lower()
        if key in raw[current]:
            raise ConfigError(f"duplicate key {key!r} in [{current}]", lineno, path)
        raw[current][key] = (value, lineno)

    built = {}
    for name, entries in raw.items():
        cls = SECTIONS[name]
        hints = typing.get_type_hints(cls)
        known = {f.name: f for f in fields(cls)}
        kwargs = {}
        for key, (value, lineno) in entries.items():
            if key not in known:
                raise ConfigError(f"unknown key {key!r} in [{name}]; allowed: {', '.join(known)}", lineno, path)
            try:
                v = _convert(value, hints[key])
                _validate_value(key, v, known[key].metadata.get("check"))
            except (ValueError, TypeError) as exc:
                raise ConfigError(f"[{name}] {key}: {exc}", lineno, path) from None
            kwargs[key] = v
        for f in known.values():
            if f.default is MISSING and f.default_factory is MISSING and f.name not in kwargs:
                raise ConfigError(f"[{name}] is missing required key {f.name!r}", header_line[name], path)
        built[name] = cls(**kwargs)

    cfg = RunConfig(**built, source=path)
    _cross_checks(cfg, raw, header_line, path)
    return cfg


def _cross_checks(cfg: RunConfig, raw, header_line, path) -> None:
    def line_of(section, key=None):
        if key is not None and key in raw.get(section, {}):
            return raw[section][key][1]
        return header_line.get(section)

    if cfg.kpo is not None and (cfg.kpo1 is not None or cfg.kpo2 is not None):
        raise ConfigError("use either [kpo] or [kpo1]/[kpo2], not both", header_line["kpo"], path)
    if (cfg.kpo1 is None) != (cfg.kpo2 is None):
        which = "kpo1" if cfg.kpo1 is not None else "kpo2"
        raise ConfigError("[kpo1] and [kpo2] must be given together", header_line[which], path)
    for name in ("kpo", "kpo1", "kpo2"):
        sec = getattr(cfg, name)
        if sec is None:
            continue
        try:
            sec.params()
        except KpoSimError as exc:
            raise ConfigError(f"[{name}] {exc}", line_of(name), path) from None
    d = cfg.drive
    if d is not None and d.power_dbm is not None and d.amplitude_mhz is not None:
        raise ConfigError("[drive] give power_dbm or amplitude_mhz, not both", line_of("drive", "amplitude_mhz"), path)
    if d is not None and d.power_dbm is not None and cfg.primary().external_loss_rate_mhz <= 0:
        raise ConfigError("[drive] power_dbm needs external_loss_rate_mhz > 0", line_of("drive", "power_dbm"), path)
    sw = cfg.sweep
    if sw is not None:
        if not sw.detuning_axis_mhz():
            raise ConfigError("[sweep] detuning axis is empty", line_of("sweep", "detunings_mhz"), path)
        if bool(sw.powers_dbm) == bool(sw.amplitudes_mhz):
            raise ConfigError("[sweep] give exactly one nonempty power axis (powers_dbm or amplitudes_mhz)",
                              line_of("sweep", "powers_dbm"), path)
        if not sw.thetas_rad:
            raise ConfigError("[sweep] thetas_rad is empty", line_of("sweep", "thetas_rad"), path)
    r = cfg.readout
    if r is not None and not r.if_frequencies_mhz:
        raise ConfigError("[readout] needs at least one IF frequency", line_of("readout", "if_frequencies_mhz"), path)


def load_config(path: str | Path) -> RunConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}", path=str(path)) from None
    return parse_config(text, str(path))


def _format(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, tuple):
        return ", ".join(_format(v) for v in value)
    if isinstance(value, float):
        return repr(value)
    return str(value)


def dump_config(cfg: RunConfig) -> str:
    """Text that parses back to an equal RunConfig."""
    out = []
    for name in SECTIONS:
        sec = getattr(cfg, name)
        if sec is None:
            continue
        out.append(f"[{name}]")
        for f in fields(sec):
            v = getattr(sec, f.name)
            if v is None:
                continue
            out.append(f"{f.name} = {_format(v)}")
        out.append("")
    return "\n".join(out)


def bundled_config(name: str) -> Path:
    """Path of a config shipped with the package (``single_kpo.cfg``, ``coupled_pair.cfg``, ...)."""
    ref = resources.files("kposim") / "configs" / name
    if not ref.is_file():
        raise ConfigError(f"no bundled config named {name!r}")
    return Path(str(ref))
