"""Classical emulation of the heterodyne readout chain.

Qubit records are two-state telegraph processes (+1 / -1 for the two
coherent states). Each KPO is assigned an intermediate frequency; its state
enters the IF carrier as a pi phase flip. The waveform is demodulated bin by
bin with a rectangular-window DFT into IQ values, and from there into
histograms, sign-folded decay traces and quadrant statistics.

Randomness is keyed by (seed, trial, stream) so any trial can be regenerated
on its own and chunking never changes the output.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .analysis import BinnedTrace, FitResult, conditional_select, fit_exponential
from .dynamics import TimeSeries
from .errors import ChannelCollision, InvalidBin, InvalidParams

DEFAULT_SAMPLE_RATE = 250e6
DEFAULT_BIN = 2e-6
TAU_FLIP_MAX = 1.0  # seconds; larger values are treated as "never flips"

# random streams per trial
_STREAM_INIT, _STREAM_FLIPS, _STREAM_NOISE = 0, 1, 2


@dataclass(frozen=True)
class TelegraphSpec:
    tau_flip: float
    t_end: float = 20e-6
    sample_rate: float = DEFAULT_SAMPLE_RATE
    amplitude: float = 1.0
    initial_state: int | str = "random"  # +1, -1 or "random"
    seed: int = 0

    def __post_init__(self):
        if not self.tau_flip > 0:
            raise InvalidParams("tau_flip must be > 0")
        if self.sample_rate * self.t_end < 100:
            raise InvalidParams("need at least 100 samples (sample_rate * t_end >= 100)")
        if self.initial_state not in (1, -1, "random"):
            raise InvalidParams(f"initial_state must be +1, -1 or 'random', got {self.initial_state!r}")

    @property
    def n_samples(self) -> int:
        return int(round(self.t_end * self.sample_rate))

    @property
    def times(self) -> np.ndarray:
        return np.arange(self.n_samples) / self.sample_rate


def _rng(seed: int, trial: int, stream: int, channel: int = 0) -> np.random.Generator:
    return np.random.default_rng([seed, trial, stream, channel])


def _telegraph_states(spec: TelegraphSpec, trial: int, channel: int) -> np.ndarray:
    n = spec.n_samples
    t = spec.times
    if spec.initial_state == "random":
        s0 = 1 if _rng(spec.seed, trial, _STREAM_INIT, channel).random() < 0.5 else -1
    else:
        s0 = int(spec.initial_state)
    if spec.tau_flip >= TAU_FLIP_MAX:
        return np.full(n, float(s0))
    rate = 1.0 / (2.0 * spec.tau_flip)
    rng = _rng(spec.seed, trial, _STREAM_FLIPS, channel)
    flips = []
    clock = 0.0
    while True:
        clock += rng.exponential(1.0 / rate)
        if clock >= spec.t_end:
            break
        flips.append(clock)
    count = np.searchsorted(np.asarray(flips), t, side="right")
    return s0 * (1.0 - 2.0 * (count % 2))


def telegraph_trajectory(spec: TelegraphSpec, trial: int = 0, channel: int = 0) -> TimeSeries:
    """One +/-1 switching record with flip rate 1/(2 tau_flip) in each direction."""
    return TimeSeries(spec.times, _telegraph_states(spec, trial, channel), f"telegraph[{trial},{channel}]")


def telegraph_ensemble(spec: TelegraphSpec, trials: Sequence[int] | int, channel: int = 0) -> np.ndarray:
    """States of several trials as an (n_trials, n_samples) array."""
    idx = range(trials) if isinstance(trials, int) else trials
    return np.array([_telegraph_states(spec, k, channel) for k in idx])


@dataclass(frozen=True)
class IfChannel:
    if_freq: float  # Hz
    label: str = ""

    def __post_init__(self):
        if not self.if_freq > 0:
            raise InvalidParams(f"IF frequency must be > 0, got {self.if_freq}")


def check_channels(channels: Sequence[IfChannel], bin_duration: float) -> None:
    freqs = sorted(c.if_freq for c in channels)
    min_spacing = 2.0 / bin_duration
    for lo, hi in zip(freqs, freqs[1:]):
        if hi - lo < min_spacing:
            raise ChannelCollision(
                f"channels at {lo:g} Hz and {hi:g} Hz closer than 2/bin_duration = {min_spacing:g} Hz"
            )


def synthesize_if_signal(states: Sequence[np.ndarray | TimeSeries], channels: Sequence[IfChannel],
                         sample_rate: float = DEFAULT_SAMPLE_RATE, amplitude: float | Sequence[float] = 1.0,
                         noise_sigma: float = 0.0, seed: int = 0, trial_offset: int = 0,
                         bin_duration: float = DEFAULT_BIN) -> np.ndarray:
    """Sum of amplitude * s(t) * cos(2 pi f t) over channels plus white Gaussian noise.

    ``states[c]`` holds the +/-1 record for channel c, either 1-D (one trial)
    or (n_trials, n_samples). Noise for trial k uses stream (seed, trial_offset + k).
    """
    if len(states) != len(channels):
        raise InvalidParams("need one state record per channel")
    check_channels(channels, bin_duration)
    arrs = [np.asarray(s.values.real if isinstance(s, TimeSeries) else s, dtype=float) for s in states]
    shape = arrs[0].shape
    if any(a.shape != shape for a in arrs):
        raise InvalidParams("all channel records must share the sample grid")
    amps = np.broadcast_to(np.asarray(amplitude, dtype=float), (len(channels),))
    t = np.arange(shape[-1]) / sample_rate
    wave = np.zeros(shape)
    for a, ch, amp in zip(arrs, channels, amps):
        wave += amp * a * np.cos(2 * np.pi * ch.if_freq * t)
    if noise_sigma > 0:
        if wave.ndim == 1:
            wave += noise_sigma * _rng(seed, trial_offset, _STREAM_NOISE).standard_normal(shape[-1])
        else:
            for k in range(shape[0]):
                wave[k] += noise_sigma * _rng(seed, trial_offset + k, _STREAM_NOISE).standard_normal(shape[-1])
    return wave


@dataclass(frozen=True)
class IqRecord:
    trial: int
    bin: int
    channel: str
    i: float
    q: float


@dataclass
class IqData:
    """Demodulated values, iq[trial, bin, channel] = I + iQ."""

    iq: np.ndarray
    channels: list[IfChannel]
    bin_duration: float
    rotations: np.ndarray = field(default_factory=lambda: np.zeros(0))
    trial_offset: int = 0

    def channel_index(self, label_or_idx) -> int:
        if isinstance(label_or_idx, int):
            return label_or_idx
        return [c.label for c in self.channels].index(label_or_idx)

    def i_values(self, channel=0) -> np.ndarray:
        return self.iq[:, :, self.channel_index(channel)].real

    def records(self) -> list[IqRecord]:
        out = []
        n_trials, n_bins, n_ch = self.iq.shape
        for k in range(n_trials):
            for b in range(n_bins):
                for c in range(n_ch):
                    z = self.iq[k, b, c]
                    label = self.channels[c].label or str(c)
                    out.append(IqRecord(self.trial_offset + k, b, label, float(z.real), float(z.imag)))
        return out

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["trial", "bin", "channel", "I", "Q"])
            for r in self.records():
                w.writerow([r.trial, r.bin, r.channel, f"{r.i:.12g}", f"{r.q:.12g}"])


def alignment_angle(z: np.ndarray) -> float:
    """Angle that rotates a two-lobed cloud at +/-z0 onto the I axis."""
    return 0.5 * float(np.angle(np.sum(np.asarray(z) ** 2)))


def demodulate(waveform: np.ndarray, channels: Sequence[IfChannel], bin_duration: float = DEFAULT_BIN,
               sample_rate: float = DEFAULT_SAMPLE_RATE, rotate: bool | Sequence[float] = True,
               trial_offset: int = 0) -> IqData:
    """Per-bin DFT at each IF: I + iQ = (2/N) sum_k w_k exp(-i 2 pi f t_k).

    ``rotate=True`` aligns each channel's cloud onto the I axis with a single
    global angle; a sequence of angles applies fixed rotations instead (for
    processing an ensemble in chunks with a common alignment).
    """
    n_float = bin_duration * sample_rate
    n = int(round(n_float))
    if abs(n_float - n) > 1e-6 * max(1.0, n_float) or n < 16:
        raise InvalidBin(f"bin_duration * sample_rate = {n_float:g} must be an integer >= 16")
    check_channels(channels, bin_duration)
    wave = np.atleast_2d(np.asarray(waveform, dtype=float))
    n_bins = wave.shape[1] // n
    if n_bins < 1:
        raise InvalidBin("waveform shorter than one bin")
    t = np.arange(n_bins * n) / sample_rate
    blocks = wave[:, : n_bins * n].reshape(wave.shape[0], n_bins, n)
    iq = np.empty((wave.shape[0], n_bins, len(channels)), dtype=complex)
    for c, ch in enumerate(channels):
        ref = np.exp(-2j * np.pi * ch.if_freq * t).reshape(n_bins, n)
        iq[:, :, c] = (2.0 / n) * np.einsum("tbk,bk->tb", blocks, ref)
    if rotate is True:
        angles = np.array([alignment_angle(iq[:, :, c]) for c in range(len(channels))])
    elif rotate is False:
        angles = np.zeros(len(channels))
    else:
        angles = np.asarray(rotate, dtype=float)
    iq *= np.exp(-1j * angles)[None, None, :]
    return IqData(iq, list(channels), bin_duration, angles, trial_offset)


def dft_spectrum(waveform: np.ndarray, sample_rate: float = DEFAULT_SAMPLE_RATE) -> tuple[np.ndarray, np.ndarray]:
    """One-sided amplitude spectrum (2/N |FFT|) of a real waveform; averaged over rows if 2-D."""
    wave = np.atleast_2d(np.asarray(waveform, dtype=float))
    n = wave.shape[1]
    mag = np.abs(np.fft.rfft(wave, axis=1)) * 2.0 / n
    freqs = np.fft.rfftfreq(n, 1.0 / sample_rate)
    return freqs, mag.mean(axis=0)


def find_peaks(freqs: np.ndarray, mag: np.ndarray, threshold: float) -> list[float]:
    """Frequencies of local maxima above ``threshold``."""
    out = []
    for k in range(1, len(mag) - 1):
        if mag[k] > threshold and mag[k] >= mag[k - 1] and mag[k] > mag[k + 1]:
            out.append(float(freqs[k]))
    return out


@dataclass
class Histogram2D:
    counts: np.ndarray  # (n_i, n_q)
    i_edges: np.ndarray
    q_edges: np.ndarray
    label: str = ""

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            fh.write(f"# channel: {self.label}\n")
            fh.write("# i_edges: " + ",".join(f"{e:.10g}" for e in self.i_edges) + "\n")
            fh.write("# q_edges: " + ",".join(f"{e:.10g}" for e in self.q_edges) + "\n")
            w = csv.writer(fh)
            for row in self.counts:
                w.writerow([int(x) for x in row])


def iq_histogram(z: np.ndarray, bins: int = 60, span: float | None = None, label: str = "") -> Histogram2D:
    z = np.asarray(z).ravel()
    if span is None:
        span = 1.2 * float(np.max(np.abs(np.concatenate([z.real, z.imag])))) or 1.0
    counts, ie, qe = np.histogram2d(z.real, z.imag, bins=bins, range=[[-span, span], [-span, span]])
    return Histogram2D(counts.astype(np.int64), ie, qe, label)


def assign_states(i_values: np.ndarray) -> np.ndarray:
    """Threshold at I = 0: +1 / -1 per value."""
    return np.where(np.asarray(i_values) >= 0, 1, -1)


def gaussian_assignment_error(separation: float, sigma: float) -> float:
    """Misassignment probability for two Gaussian peaks at +/- separation/2 with a midpoint threshold."""
    return 0.5 * math.erfc(separation / (2 * sigma) / math.sqrt(2))


QUADRANTS = ("++", "+-", "-+", "--")


@dataclass
class QuadrantStats:
    fractions: dict[str, float]
    errors: dict[str, float]
    n_trials: int

    def to_text(self) -> str:
        lines = [f"quadrant fractions over {self.n_trials} trials (sign I1, sign I2):"]
        for q in QUADRANTS:
            lines.append(f"  {q}: {100 * self.fractions[q]:.2f}% +/- {100 * self.errors[q]:.2f}%")
        return "\n".join(lines)


def quadrant_statistics(i1: np.ndarray, i2: np.ndarray, min_trials: int = 100) -> QuadrantStats:
    """Fractions of the four (sign I1, sign I2) combinations with binomial errors."""
    s1 = assign_states(np.ravel(i1))
    s2 = assign_states(np.ravel(i2))
    if s1.shape != s2.shape:
        raise InvalidParams("channel arrays differ in length")
    n = len(s1)
    if n < min_trials:
        raise InvalidParams(f"quadrant statistics need >= {min_trials} trials, got {n}")
    fr, er = {}, {}
    for q in QUADRANTS:
        want1 = 1 if q[0] == "+" else -1
        want2 = 1 if q[1] == "+" else -1
        p = float(np.mean((s1 == want1) & (s2 == want2)))
        fr[q] = p
        er[q] = math.sqrt(p * (1 - p) / n)
    return QuadrantStats(fr, er, n)


@dataclass(frozen=True)
class ReadoutConfig:
    tau_flip: float = 5e-6
    n_trials: int = 10_000
    t_end: float = 20e-6
    bin_duration: float = DEFAULT_BIN
    sample_rate: float = DEFAULT_SAMPLE_RATE
    channels: tuple[IfChannel, ...] = (IfChannel(1e6, "kpo1"), IfChannel(31e6, "kpo2"))
    amplitude: float = 1.0
    noise_sigma: float = 2.0
    seed: int = 0
    chunk: int = 500

    def telegraph(self) -> TelegraphSpec:
        return TelegraphSpec(self.tau_flip, self.t_end, self.sample_rate, 1.0, "random", self.seed)


def emulate_iq(cfg: ReadoutConfig) -> IqData:
    """Telegraph -> IF waveform -> DFT for every trial, with one alignment angle per channel.

    The angle is taken from the first chunk and then held fixed, as a global
    rotation would be in a real measurement.
    """
    tel = cfg.telegraph()
    parts = []
    angles: bool | np.ndarray = True
    for start in range(0, cfg.n_trials, cfg.chunk):
        idx = range(start, min(cfg.n_trials, start + cfg.chunk))
        states = [telegraph_ensemble(tel, idx, channel=c) for c in range(len(cfg.channels))]
        wave = synthesize_if_signal(states, cfg.channels, cfg.sample_rate, cfg.amplitude,
                                    cfg.noise_sigma, cfg.seed, start, cfg.bin_duration)
        iq = demodulate(wave, cfg.channels, cfg.bin_duration, cfg.sample_rate, rotate=angles, trial_offset=start)
        if angles is True:
            angles = iq.rotations
        parts.append(iq.iq)
    return IqData(np.concatenate(parts, axis=0), list(cfg.channels), cfg.bin_duration, np.asarray(angles))


def decay_from_iq(data: IqData, channel=0, skip_bins: int = 1) -> tuple[BinnedTrace, FitResult]:
    """Sign-fold on the first bin, then fit the ensemble-mean I trace.

    The first bin is the selection bin: folding on its own sign biases its mean
    upward, so it is skipped in the fit by default.
    """
    i_vals = data.i_values(channel)
    mean, err, _ = conditional_select(i_vals, "fold")
    n_bins = i_vals.shape[1]
    centers = data.bin_duration * (np.arange(n_bins) + 0.5)
    trace = BinnedTrace(centers, mean, err, data.bin_duration)
    return trace, fit_exponential(trace, skip_bins=skip_bins)
