"""Kerr parametric oscillator simulation: spectra, Lindblad dynamics, bit-flip times, readout emulation."""

__version__ = "0.1.0"

from .errors import KpoSimError  # noqa: E402
from .model import DriveSpec, KpoParams, TwoKpoParams, mhz, to_mhz  # noqa: E402
from .spectrum import collision_report, diagonalize, excitation_energy, kpo_spectrum  # noqa: E402
from .dynamics import EvolutionSpec, TimeSeries, evolve, run_evolution  # noqa: E402
from .analysis import bin_trace, fit_exponential  # noqa: E402

__all__ = [
    "KpoSimError",
    "DriveSpec",
    "KpoParams",
    "TwoKpoParams",
    "mhz",
    "to_mhz",
    "collision_report",
    "diagonalize",
    "excitation_energy",
    "kpo_spectrum",
    "EvolutionSpec",
    "TimeSeries",
    "evolve",
    "run_evolution",
    "bin_trace",
    "fit_exponential",
]
