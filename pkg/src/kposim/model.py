"""KPO parameter records, Hamiltonian builders and unit conversions.

Every frequency and rate is stored as an angular quantity in rad/s. Use
:func:`mhz` / :func:`to_mhz` at I/O boundaries where values are quoted as
ordinary frequencies (omega / 2 pi) in MHz.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from . import fock
from .errors import DimensionError, InvalidParams

HBAR = 1.054571817e-34  # J s
TWO_PI = 2.0 * math.pi
DEFAULT_TWO_KPO_CAP = 4096


def mhz(f: float) -> float:
    """Ordinary frequency in MHz -> angular frequency in rad/s."""
    return TWO_PI * 1e6 * f


def to_mhz(w: float) -> float:
    """Angular frequency in rad/s -> ordinary frequency in MHz."""
    return w / (TWO_PI * 1e6)


@dataclass(frozen=True)
class KpoParams:
    """Physical parameters of one KPO (angular units).

    ``pump_freq`` may be left as None, in which case it is implied by
    ``resonance_freq`` and ``pump_detuning``. ``kerr`` must be <= 0; K = 0 is
    accepted as the linear-resonator limit used by analytic checks.
    """

    kerr: float
    pump_amplitude: float = 0.0
    pump_detuning: float = 0.0
    resonance_freq: float = 0.0
    pump_freq: float | None = None
    kappa_ext: float = 0.0
    kappa_int: float = 0.0
    dephasing: float = 0.0
    flux_bias: float | None = None
    dfreq_dcurrent: float | None = None

    def __post_init__(self):
        if not self.kerr <= 0:
            raise InvalidParams(f"Kerr nonlinearity must be negative, got {self.kerr}")
        for name in ("pump_amplitude", "kappa_ext", "kappa_int", "dephasing"):
            if getattr(self, name) < 0:
                raise InvalidParams(f"{name} must be >= 0, got {getattr(self, name)}")
        if self.pump_freq is not None:
            implied = self.resonance_freq - self.pump_freq / 2
            if abs(implied - self.pump_detuning) > 1.0:
                raise InvalidParams(
                    f"pump detuning {self.pump_detuning} inconsistent with "
                    f"resonance/pump frequencies (implies {implied})"
                )

    @property
    def omega_p(self) -> float:
        if self.pump_freq is not None:
            return self.pump_freq
        return 2.0 * (self.resonance_freq - self.pump_detuning)

    def kappa_tot(self) -> float:
        return self.kappa_ext + self.kappa_int + 2.0 * self.dephasing

    def with_(self, **changes) -> "KpoParams":
        return replace(self, **changes)


@dataclass(frozen=True)
class DriveSpec:
    """Injected microwave: amplitude (rad/s), detuning from omega_p/2 (rad/s), phase (rad)."""

    amplitude: float
    detuning: float = 0.0
    phase: float = 0.0

    def __post_init__(self):
        if self.amplitude < 0:
            raise InvalidParams(f"drive amplitude must be >= 0, got {self.amplitude}")
        object.__setattr__(self, "phase", float(self.phase) % TWO_PI)

    @property
    def is_static(self) -> bool:
        """True when the drive term does not depend on time in the rotating frame."""
        return self.amplitude == 0 or self.detuning == 0

    @property
    def period(self) -> float:
        return TWO_PI / abs(self.detuning)


@dataclass(frozen=True)
class TwoKpoParams:
    """Two coupled KPOs.

    ``pump_freq_halfdiff`` is taken as given; :meth:`from_members` derives it
    from the members' pump frequencies and is the checked constructor.
    """

    kpo1: KpoParams
    kpo2: KpoParams
    coupling: float
    pump_freq_halfdiff: float = 0.0
    pump_phase_halfdiff: float = 0.0

    @classmethod
    def from_members(cls, kpo1: KpoParams, kpo2: KpoParams, coupling: float,
                     pump_phase_halfdiff: float = 0.0) -> "TwoKpoParams":
        return cls(kpo1, kpo2, coupling, (kpo2.omega_p - kpo1.omega_p) / 2, pump_phase_halfdiff)

    def check_pumps(self) -> None:
        implied = (self.kpo2.omega_p - self.kpo1.omega_p) / 2
        if abs(implied - self.pump_freq_halfdiff) > 1.0:
            raise InvalidParams(
                f"pump half-difference {self.pump_freq_halfdiff} inconsistent with members ({implied})"
            )

    def with_(self, **changes) -> "TwoKpoParams":
        return replace(self, **changes)


def _require_kerr(params: KpoParams) -> None:
    if not params.kerr <= 0:
        raise InvalidParams(f"Kerr nonlinearity must be negative, got {params.kerr}")


def _kpo_terms(params: KpoParams, dim: int) -> np.ndarray:
    a = fock.annihilation(dim)
    ad = a.conj().T
    a2 = a @ a
    ad2 = ad @ ad
    return (
        params.pump_detuning * (ad @ a)
        + params.kerr / 2 * (ad2 @ a2)
        + params.pump_amplitude / 2 * (ad2 + a2)
    )


def build_single_kpo(params: KpoParams, dim: int) -> np.ndarray:
    """H/hbar = Delta n + (K/2) a^dag^2 a^2 + (p/2)(a^dag^2 + a^2)."""
    _require_kerr(params)
    return _kpo_terms(params, dim)


def drive_term(drive: DriveSpec, t: float, dim: int) -> np.ndarray:
    """Omega [e^{-i(Delta t + theta)} a^dag + e^{+i(Delta t + theta)} a]."""
    a = fock.annihilation(dim)
    phase = np.exp(-1j * (drive.detuning * t + drive.phase))
    return drive.amplitude * (phase * a.conj().T + np.conj(phase) * a)


def build_input_driven(params: KpoParams, drive: DriveSpec | None, t: float, dim: int) -> np.ndarray:
    h = build_single_kpo(params, dim)
    if drive is None or drive.amplitude == 0:
        return h
    return h + drive_term(drive, t, dim)


def build_two_kpo(two: TwoKpoParams, t: float, dim1: int, dim2: int,
                  max_dim: int = DEFAULT_TWO_KPO_CAP) -> np.ndarray:
    """Tensor-product Hamiltonian of two KPOs with photon-exchange coupling.

    Ordering is KPO1 (x) KPO2.
    """
    _require_kerr(two.kpo1)
    _require_kerr(two.kpo2)
    if dim1 * dim2 > max_dim:
        raise DimensionError(f"joint dimension {dim1 * dim2} exceeds cap {max_dim}")
    h1 = _kpo_terms(two.kpo1, dim1)
    h2 = _kpo_terms(two.kpo2, dim2)
    i1, i2 = fock.identity(dim1), fock.identity(dim2)
    h = np.kron(h1, i2) + np.kron(i1, h2)
    if two.coupling != 0:
        a1 = np.kron(fock.annihilation(dim1), i2)
        a2 = np.kron(i1, fock.annihilation(dim2))
        phase = np.exp(-1j * (two.pump_freq_halfdiff * t + two.pump_phase_halfdiff))
        exchange = phase * (a1.conj().T @ a2)
        h = h + two.coupling * (exchange + exchange.conj().T)
    return h


def effective_drive(two: TwoKpoParams, alpha2: complex) -> DriveSpec:
    """Drive on KPO1 equivalent to coupling to KPO2 frozen in |alpha2>."""
    amp = two.coupling * complex(alpha2)
    return DriveSpec(
        amplitude=abs(amp),
        detuning=two.pump_freq_halfdiff,
        phase=two.pump_phase_halfdiff - (np.angle(amp) if amp != 0 else 0.0),
    )


def build_effective_from_coupling(two: TwoKpoParams, alpha2: complex, t: float, dim: int) -> np.ndarray:
    """KPO1 Hamiltonian with a2 replaced by the c-number alpha2."""
    _require_kerr(two.kpo1)
    h = _kpo_terms(two.kpo1, dim)
    alpha2 = complex(alpha2)
    if alpha2 == 0 or two.coupling == 0:
        return h
    a = fock.annihilation(dim)
    phase = np.exp(-1j * (two.pump_freq_halfdiff * t + two.pump_phase_halfdiff))
    amp = two.coupling * alpha2 * phase
    return h + amp * a.conj().T + np.conj(amp) * a


def dbm_to_watts(power_dbm: float) -> float:
    return 1e-3 * 10.0 ** (power_dbm / 10.0)


def watts_to_dbm(power_w: float) -> float:
    if power_w <= 0:
        return -math.inf
    return 10.0 * math.log10(power_w / 1e-3)


def input_power_to_amplitude(power_dbm: float, kappa_ext: float, omega_in: float) -> float:
    """Omega_in = sqrt(P_in kappa_ext / (hbar omega_in)), P_in converted from dBm."""
    if kappa_ext <= 0 or omega_in <= 0:
        raise InvalidParams("kappa_ext and omega_in must be positive")
    return math.sqrt(dbm_to_watts(power_dbm) * kappa_ext / (HBAR * omega_in))


def amplitude_to_input_power(amplitude: float, kappa_ext: float, omega_in: float) -> float:
    """Inverse of :func:`input_power_to_amplitude`, in dBm."""
    if kappa_ext <= 0 or omega_in <= 0:
        raise InvalidParams("kappa_ext and omega_in must be positive")
    return watts_to_dbm(amplitude ** 2 * HBAR * omega_in / kappa_ext)


def pump_power_to_amplitude(pump_power: float, impedance: float, dfreq_dcurrent: float) -> float:
    """p = sqrt(P_p / (2 Z)) |d omega_r / dI|."""
    if impedance <= 0:
        raise InvalidParams("line impedance must be positive")
    if pump_power < 0:
        raise InvalidParams("pump power must be >= 0")
    return math.sqrt(pump_power / (2.0 * impedance)) * abs(dfreq_dcurrent)


def coherent_amplitude(params: KpoParams) -> float:
    """alpha ~= sqrt((p + Delta)/|K|)."""
    if not params.kerr < 0:
        raise InvalidParams("coherent amplitude needs K < 0")
    s = params.pump_amplitude + params.pump_detuning
    if s < 0:
        raise InvalidParams(f"p + Delta must be >= 0, got {s}")
    return math.sqrt(s / abs(params.kerr))


def kappa_int_from_budget(kappa_tot: float, kappa_ext: float, gamma: float) -> float:
    """kappa_int = kappa_tot - kappa_ext - 2 gamma."""
    k = kappa_tot - kappa_ext - 2.0 * gamma
    if k < 0:
        raise InvalidParams(
            f"loss budget negative: kappa_tot={kappa_tot} < kappa_ext + 2 gamma = {kappa_ext + 2 * gamma}"
        )
    return k
