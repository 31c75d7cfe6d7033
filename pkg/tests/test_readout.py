import math

import numpy as np
import pytest

from kposim.analysis import BinnedTrace, conditional_select, fit_exponential
from kposim.errors import ChannelCollision, InvalidBin, InvalidParams
from kposim.readout import (
    IfChannel,
    ReadoutConfig,
    TelegraphSpec,
    decay_from_iq,
    demodulate,
    dft_spectrum,
    emulate_iq,
    find_peaks,
    gaussian_assignment_error,
    iq_histogram,
    quadrant_statistics,
    synthesize_if_signal,
    telegraph_ensemble,
    telegraph_trajectory,
)

FS = 250e6
CH = [IfChannel(1e6, "kpo1"), IfChannel(31e6, "kpo2")]


def _tone(freq, amp=1.0, phase=0.0, n=5000):
    t = np.arange(n) / FS
    return amp * np.cos(2 * np.pi * freq * t + phase)


def test_telegraph_is_reproducible_and_two_valued():
    spec = TelegraphSpec(5e-6, seed=42)
    a = telegraph_trajectory(spec, trial=3)
    b = telegraph_trajectory(spec, trial=3)
    assert a.values.tobytes() == b.values.tobytes()
    assert set(np.unique(a.values.real)) <= {-1.0, 1.0}
    assert len(a) == 5000


def test_telegraph_without_flips_is_constant():
    spec = TelegraphSpec(1e9, initial_state=-1)
    assert np.all(telegraph_trajectory(spec).values == -1)


def test_telegraph_ensemble_decay_rate():
    # start +1, flip rate 1/(2 tau) each way: <s(t)> = exp(-t/tau)
    spec = TelegraphSpec(5e-6, t_end=20e-6, sample_rate=5e6, initial_state=1, seed=1)
    states = telegraph_ensemble(spec, 10_000)
    bins = states.reshape(10_000, 10, -1).mean(axis=2)
    mean, err, _ = conditional_select(bins, lambda d: np.ones(len(d), bool))
    centers = 2e-6 * (np.arange(10) + 0.5)
    fit = fit_exponential(BinnedTrace(centers, mean, err, 2e-6))
    assert abs(fit.tau - 5e-6) < 3 * fit.tau_error


def test_telegraph_spec_validation():
    with pytest.raises(InvalidParams):
        TelegraphSpec(0.0)
    with pytest.raises(InvalidParams):
        TelegraphSpec(1e-6, t_end=1e-7, sample_rate=1e8)
    with pytest.raises(InvalidParams):
        TelegraphSpec(1e-6, initial_state=0)


def test_pure_tone_demodulates_to_amplitude_on_i():
    data = demodulate(_tone(1e6, 0.7), CH[:1], 2e-6, FS, rotate=False)
    assert np.allclose(data.iq[0, :, 0], 0.7, atol=1e-12)


def test_flipped_tone_demodulates_to_minus_amplitude():
    data = demodulate(_tone(31e6, 0.7, math.pi), CH[1:], 2e-6, FS, rotate=False)
    assert np.allclose(data.iq[0, :, 0], -0.7, atol=1e-12)


def test_rotation_aligns_two_states_onto_i_axis():
    wave = np.stack([_tone(1e6, 1.0, 0.9), _tone(1e6, 1.0, 0.9 + math.pi)])
    data = demodulate(wave, CH[:1], 2e-6, FS)
    z = data.iq[:, 0, 0]
    assert np.allclose(np.abs(z.imag), 0, atol=1e-12)
    assert np.allclose(np.sort(z.real), [-1, 1])


def test_demodulation_is_linear():
    rng = np.random.default_rng(0)
    w1, w2 = rng.normal(size=5000), rng.normal(size=5000)
    d = lambda w: demodulate(w, CH, 2e-6, FS, rotate=False).iq
    assert np.max(np.abs(d(w1 + w2) - d(w1) - d(w2))) < 1e-12


def test_channel_isolation():
    data = demodulate(_tone(1e6, 1.0, 0.3), CH, 2e-6, FS, rotate=False)
    own = np.abs(data.iq[0, :, 0])
    other = data.iq[0, :, 1]
    assert np.all(np.abs(other.real) < 0.02 * own)
    assert np.all(np.abs(other.imag) < 0.02 * own)


def test_bad_bins_and_channels():
    with pytest.raises(InvalidBin):
        demodulate(_tone(1e6), CH, 2.001e-6, FS)
    with pytest.raises(InvalidBin):
        demodulate(_tone(1e6), CH[:1], 8e-8, 1e8)
    with pytest.raises(ChannelCollision):
        demodulate(_tone(1e6), [IfChannel(1e6), IfChannel(1.5e6)], 2e-6, FS)
    with pytest.raises(ChannelCollision):
        synthesize_if_signal([np.ones(10), np.ones(10)], [IfChannel(1e6), IfChannel(1e6)])
    with pytest.raises(InvalidParams):
        IfChannel(0.0)


def test_single_channel_spectrum_peak():
    wave = synthesize_if_signal([np.ones(5000)], CH[:1], FS)
    f, mag = dft_spectrum(wave, FS)
    assert find_peaks(f, mag, 0.1) == [pytest.approx(1e6)]
    assert mag.max() == pytest.approx(1.0, rel=1e-9)


def test_two_channel_spectrum_peaks():
    wave = synthesize_if_signal([np.ones(5000), -np.ones(5000)], CH, FS)
    f, mag = dft_spectrum(wave, FS)
    assert find_peaks(f, mag, 0.1) == [pytest.approx(1e6), pytest.approx(31e6)]


def test_noise_spectrum_is_flat():
    waves = synthesize_if_signal([np.zeros((200, 5000))], CH[:1], FS, amplitude=0.0, noise_sigma=1.0, seed=5)
    _, mag = dft_spectrum(waves, FS)
    inner = mag[1:-1]
    # averaged Rayleigh magnitudes: relative spread ~ 0.52 / sqrt(200)
    assert inner.std() / inner.mean() < 0.06


def test_synthesis_is_seeded():
    s = [np.ones((3, 500)), np.ones((3, 500))]
    a = synthesize_if_signal(s, CH, FS, noise_sigma=0.5, seed=9)
    b = synthesize_if_signal(s, CH, FS, noise_sigma=0.5, seed=9)
    c = synthesize_if_signal(s, CH, FS, noise_sigma=0.5, seed=10)
    assert a.tobytes() == b.tobytes()
    assert not np.array_equal(a, c)


def test_state_assignment_error_at_six_sigma_separation():
    # separation/sigma = 6 leaves 1 - Phi(3) = 0.13% misassigned
    assert gaussian_assignment_error(6.0, 1.0) == pytest.approx(0.0013499, rel=1e-4)
    n_trials, n = 20_000, 500
    rng = np.random.default_rng(2)
    states = np.where(rng.random(n_trials) < 0.5, 1.0, -1.0)
    # the DFT of white noise has sigma_I = sigma_sample * sqrt(2/N); pick sigma_I = 1/3 for peaks at +/-1
    sigma_sample = (1 / 3) * math.sqrt(n / 2)
    wave = synthesize_if_signal([np.outer(states, np.ones(n))], CH[:1], FS, noise_sigma=sigma_sample, seed=4)
    i = demodulate(wave, CH[:1], 2e-6, FS, rotate=False).iq[:, 0, 0].real
    assert np.std(i - states) == pytest.approx(1 / 3, rel=0.03)
    assert np.mean(np.sign(i) != states) < 0.01


def test_quadrants_correlated_channels():
    s = np.where(np.arange(400) % 2 == 0, 1.0, -1.0)
    q = quadrant_statistics(s, s)
    assert q.fractions == {"++": 0.5, "+-": 0.0, "-+": 0.0, "--": 0.5}


def test_quadrants_need_enough_trials():
    with pytest.raises(InvalidParams):
        quadrant_statistics(np.ones(1), np.ones(1))


def test_quadrants_independent_channels_large_ensemble():
    cfg = ReadoutConfig(n_trials=100_000, t_end=2e-6, noise_sigma=2.0, seed=3, chunk=5000)
    data = emulate_iq(cfg)
    q = quadrant_statistics(data.i_values(0)[:, 0], data.i_values(1)[:, 0])
    for key in q.fractions:
        assert abs(q.fractions[key] - 0.25) < 3 * q.errors[key]


def test_round_trip_recovers_tau():
    data = emulate_iq(ReadoutConfig(tau_flip=5e-6, n_trials=10_000, seed=1))
    for c in (0, 1):
        _, fit = decay_from_iq(data, c)
        assert abs(fit.tau - 5e-6) < 3 * fit.tau_error


def test_records_and_histogram_csv(tmp_path):
    data = emulate_iq(ReadoutConfig(n_trials=20, t_end=4e-6, seed=0, chunk=7))
    recs = data.records()
    assert len(recs) == 20 * 2 * 2
    assert [r.trial for r in recs[:4]] == [0, 0, 0, 0]
    data.to_csv(tmp_path / "iq.csv")
    assert (tmp_path / "iq.csv").read_text().splitlines()[0] == "trial,bin,channel,I,Q"
    h = iq_histogram(data.iq[:, 0, 0], bins=10, label="kpo1")
    assert h.counts.sum() == 20
    h.to_csv(tmp_path / "h.csv")
    lines = (tmp_path / "h.csv").read_text().splitlines()
    assert lines[1].startswith("# i_edges: ") and len(lines) == 13


def test_chunking_does_not_change_results():
    a = emulate_iq(ReadoutConfig(n_trials=30, t_end=4e-6, seed=5, chunk=7))
    b = emulate_iq(ReadoutConfig(n_trials=30, t_end=4e-6, seed=5, chunk=30))
    assert np.allclose(a.iq * np.exp(1j * a.rotations), b.iq * np.exp(1j * b.rotations), atol=1e-12)
