"""Shared single-KPO runs, cached per session because each takes tens of seconds."""
import pytest

from kposim.analysis import bitflip_time
from kposim.dynamics import EvolutionSpec, bitflip_observable, evolve
from kposim.model import DriveSpec, KpoParams, kappa_int_from_budget, mhz
from kposim.sweep import calibrate_pump_from_dip

ACCEPTANCE_LINES: list[str] = []


def device_params(pump_mhz: float = 110.0) -> KpoParams:
    gamma = mhz(0.0091)
    kappa_ext = mhz(0.72)
    return KpoParams(
        kerr=mhz(-14),
        pump_amplitude=mhz(pump_mhz),
        resonance_freq=mhz(9900),
        kappa_ext=kappa_ext,
        kappa_int=kappa_int_from_budget(mhz(1.9), kappa_ext, gamma),
        dephasing=gamma,
    )


def bitflip_tau(params: KpoParams, drive: DriveSpec | None = None, dim: int = 40, initial=None) -> float:
    """Fitted tau (s) of a 20 us run from |alpha> on 1 us bins."""
    spec = EvolutionSpec(params, t_end=20e-6, dim=dim, drive=drive, initial=initial)
    series = evolve(spec, [bitflip_observable(dim)])[0]
    return bitflip_time(series, 1e-6).tau


@pytest.fixture(scope="session")
def device():
    return device_params()


@pytest.fixture(scope="session")
def baseline_tau(device):
    return bitflip_tau(device, initial=2.8)


@pytest.fixture(scope="session")
def calibrated_device(device):
    """The default point with p re-fit so that E_02/2pi sits exactly at the -204 MHz dip."""
    p = calibrate_pump_from_dip(mhz(-204), device, dim=40)
    return device.with_(pump_amplitude=p)


@pytest.fixture(scope="session")
def calibrated_baseline_tau(calibrated_device):
    return bitflip_tau(calibrated_device)


@pytest.fixture
def acceptance_report():
    def report(number: int, passed: bool, detail: str) -> None:
        line = f"criterion {number}: {'PASS' if passed else 'FAIL'}  {detail}"
        ACCEPTANCE_LINES.append(line)
        print(line)

    return report


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
