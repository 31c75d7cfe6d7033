import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from kposim import fock
from kposim.dynamics import (
    EvolutionSpec,
    TimeSeries,
    convergence_check,
    evolve,
    floquet_plan,
    lindblad_rhs,
    liouvillian,
    run_evolution,
)
from kposim.errors import DimensionMismatch, InvalidParams, TruncationError
from kposim.model import DriveSpec, KpoParams, build_single_kpo, mhz

SMALL_KPO = KpoParams(kerr=mhz(-14), pump_amplitude=mhz(30), kappa_int=mhz(1.9), dephasing=mhz(0.0091))


def _random_density(rng, dim):
    m = rng.normal(size=(dim, dim)) + 1j * rng.normal(size=(dim, dim))
    rho = m @ m.conj().T
    return rho / np.trace(rho)


@settings(max_examples=20, deadline=None)
@given(seed=st.integers(0, 2 ** 31), k=st.floats(-20, 0), p=st.floats(0, 50), kap=st.floats(0, 5), gam=st.floats(0, 1))
def test_superoperator_matches_matrix_rhs(seed, k, p, kap, gam):
    rng = np.random.default_rng(seed)
    dim = 7
    h = build_single_kpo(KpoParams(kerr=mhz(k), pump_amplitude=mhz(p)), dim)
    rho = _random_density(rng, dim)
    a = lindblad_rhs(rho, h, mhz(kap), mhz(gam))
    b = (liouvillian(h, mhz(kap), mhz(gam)) @ rho.reshape(-1)).reshape(dim, dim)
    scale = max(1.0, np.abs(a).max())
    assert np.abs(a - b).max() <= 1e-12 * scale
    # trace preserving and Hermiticity preserving
    assert abs(np.trace(a)) <= 1e-9 * scale
    assert np.abs(a - a.conj().T).max() <= 1e-9 * scale


def test_rhs_shape_mismatch():
    with pytest.raises(DimensionMismatch):
        lindblad_rhs(np.eye(3), np.eye(4), 1.0, 0.0)


def _cavity(kappa=mhz(2.0), gamma=mhz(0.1)):
    return KpoParams(kerr=0.0, kappa_int=kappa, dephasing=gamma)


@pytest.mark.parametrize("method", ["expm", "rk"])
def test_damped_cavity_amplitude(method):
    # <a>(t) = alpha0 exp(-(kappa_tot/2 + gamma) t)
    params = _cavity()
    alpha0 = 1.5
    spec = EvolutionSpec(params, t_end=1e-6, dim=20, initial=alpha0, output_stride=1e-8, method=method,
                         rtol=1e-10, atol=1e-12)
    ts = evolve(spec, [fock.annihilation(20)])[0]
    exact = alpha0 * np.exp(-(params.kappa_tot() / 2 + params.dephasing) * ts.times)
    assert np.max(np.abs(ts.values - exact) / np.abs(exact)) < 1e-6


def _driven_cavity_exact(params, drive, alpha0, t):
    # d<a>/dt = -i Omega e^{-i(Delta t + theta)} - Gamma <a>, linear and closed
    gam = params.kappa_tot() / 2 + params.dephasing
    c = -1j * drive.amplitude / (gam - 1j * drive.detuning)
    return c * np.exp(-1j * (drive.detuning * t + drive.phase)) + (alpha0 - c * np.exp(-1j * drive.phase)) * np.exp(-gam * t)


def test_static_drive_on_cavity():
    params = _cavity()
    drive = DriveSpec(mhz(1.0), 0.0, 0.7)
    spec = EvolutionSpec(params, t_end=2e-6, dim=20, drive=drive, initial=0.5, output_stride=2e-8)
    ts = evolve(spec, [fock.annihilation(20)])[0]
    assert np.max(np.abs(ts.values - _driven_cavity_exact(params, drive, 0.5, ts.times))) < 1e-6


@pytest.mark.parametrize("detuning_mhz", [-50.0, 5.0])
def test_detuned_drive_on_cavity_floquet(detuning_mhz):
    params = _cavity()
    drive = DriveSpec(mhz(1.0), mhz(detuning_mhz), 0.7)
    errs = []
    for substeps in (64, 256):
        spec = EvolutionSpec(params, t_end=1e-6, dim=20, drive=drive, initial=0.5, output_stride=1e-8,
                             floquet_substeps=substeps, floquet_max_step=1.0)
        res = run_evolution(spec, [fock.annihilation(20)])
        assert res.diagnostics["method"] == "floquet"
        ts = res.series[0]
        errs.append(np.max(np.abs(ts.values - _driven_cavity_exact(params, drive, 0.5, ts.times))))
    # second-order splitting: 4x the substeps cuts the error about 16x
    assert errs[1] < 1e-5
    assert errs[1] < errs[0] / 10


def test_floquet_matches_runge_kutta_on_kpo():
    drive = DriveSpec(mhz(3), mhz(-50), 0.3)
    period = drive.period
    spec = EvolutionSpec(SMALL_KPO, t_end=20 * period, dim=20, drive=drive, output_stride=2 * period,
                         floquet_substeps=64)
    x = fock.x_quadrature(20)
    fl = evolve(spec, [x])[0]
    rk = evolve(spec.with_(method="rk", rtol=1e-10, atol=1e-12), [x])[0]
    assert np.allclose(fl.times, rk.times)
    assert np.max(np.abs(fl.values - rk.values)) < 5e-5


def test_floquet_plan_segments_long_periods():
    spec = EvolutionSpec(SMALL_KPO, t_end=1e-7, dim=10, drive=DriveSpec(mhz(1), mhz(-20)), output_stride=1e-8)
    m, n_seg, per_output = floquet_plan(spec)
    assert (n_seg, per_output) == (4, 1)
    assert m % n_seg == 0 and spec.drive.period / m <= spec.floquet_max_step
    spec = spec.with_(drive=DriveSpec(mhz(1), mhz(-204)))
    assert floquet_plan(spec) == (16, 1, 2)


def test_static_drive_expm_matches_runge_kutta():
    drive = DriveSpec(mhz(3), 0.0, 1.0)
    spec = EvolutionSpec(SMALL_KPO, t_end=2e-7, dim=20, drive=drive, output_stride=1e-8)
    x = fock.x_quadrature(20)
    a = evolve(spec, [x])[0]
    b = evolve(spec.with_(method="rk", rtol=1e-10, atol=1e-12), [x])[0]
    assert np.max(np.abs(a.values - b.values)) < 1e-7


def test_invariants_reported_small():
    spec = EvolutionSpec(SMALL_KPO, t_end=5e-7, dim=20, drive=DriveSpec(mhz(2), mhz(-80), 0.0))
    d = run_evolution(spec, [fock.x_quadrature(20)]).diagnostics
    assert d["max_trace_error"] < 1e-10
    assert d["max_hermiticity"] < 1e-10
    assert d["final_min_eigenvalue"] > -1e-8
    assert d["max_top_population"] < 1e-4


def test_phase_flip_symmetry():
    # P H(theta) P = H(theta + pi), so the run from P rho0 P mirrors the original
    dim = 20
    alpha = 1.4
    drive = DriveSpec(mhz(2), mhz(-80), 0.4)
    base = EvolutionSpec(SMALL_KPO, t_end=3e-7, dim=dim, drive=drive, initial=alpha)
    mirrored = base.with_(drive=DriveSpec(mhz(2), mhz(-80), 0.4 + math.pi), initial=-alpha)
    r1 = run_evolution(base, [fock.x_quadrature(dim)])
    r2 = run_evolution(mirrored, [fock.x_quadrature(dim)])
    assert np.allclose(r1.series[0].values, -r2.series[0].values, atol=1e-10)
    e1 = np.linalg.eigvalsh(r1.final_state)
    e2 = np.linalg.eigvalsh(r2.final_state)
    assert np.allclose(e1, e2, atol=1e-10)


def test_truncation_detected():
    # a strong resonant push on a linear mode walks off the top of a small space
    params = KpoParams(kerr=0.0, kappa_int=mhz(0.1))
    spec = EvolutionSpec(params, t_end=1e-6, dim=10, drive=DriveSpec(mhz(20)), initial=0.0)
    with pytest.raises(TruncationError):
        evolve(spec, [fock.number(10)])


@settings(max_examples=10, deadline=None)
@given(n=st.integers(1, 40), k=st.integers(1, 5))
def test_output_length(n, k):
    stride = 1e-8 * k
    spec = EvolutionSpec(_cavity(), t_end=n * stride, dim=4, initial=0.0, output_stride=stride)
    ts = evolve(spec, [fock.number(4)])[0]
    assert len(ts) == n + 1
    assert ts.times[-1] == pytest.approx(n * stride)


def test_spec_validation():
    with pytest.raises(InvalidParams):
        EvolutionSpec(SMALL_KPO, t_end=1e-6, output_stride=3e-7)
    with pytest.raises(InvalidParams):
        EvolutionSpec(SMALL_KPO, t_end=0.0)
    with pytest.raises(InvalidParams):
        EvolutionSpec(SMALL_KPO, t_end=1e-6, method="euler")
    spec = EvolutionSpec(SMALL_KPO, t_end=1e-7, dim=10, drive=DriveSpec(mhz(1), mhz(-20)), method="expm")
    with pytest.raises(InvalidParams):
        evolve(spec, [fock.number(10)])
    spec = EvolutionSpec(SMALL_KPO, t_end=1e-7, dim=10, method="floquet")
    with pytest.raises(InvalidParams):
        evolve(spec, [fock.number(10)])
    with pytest.raises(DimensionMismatch):
        evolve(EvolutionSpec(SMALL_KPO, t_end=1e-7, dim=10), [fock.number(9)])


def test_default_initial_state_is_coherent_alpha():
    spec = EvolutionSpec(SMALL_KPO, t_end=1e-8, dim=20)
    rho = spec.initial_density()
    assert fock.expect(fock.annihilation(20), rho) == pytest.approx(math.sqrt(30 / 14), rel=1e-8)


def test_ramped_run_uses_runge_kutta():
    spec = EvolutionSpec(SMALL_KPO, t_end=5e-8, dim=24, initial=0.0, ramp_time=2e-8, output_stride=1e-8)
    res = run_evolution(spec, [fock.number(24)])
    assert res.diagnostics["method"] == "rk"
    n = res.series[0].values.real
    assert n[0] == pytest.approx(0.0, abs=1e-12)
    assert n[-1] > 0.01  # the ramped pump creates photon pairs from vacuum


def test_with_dim_pads_array_state():
    rho = fock.ket_to_dm(fock.coherent_state(12, 0.8))
    spec = EvolutionSpec(SMALL_KPO, t_end=1e-8, dim=12, initial=rho)
    big = spec.with_dim(16)
    assert big.initial_density().shape == (16, 16)
    assert np.allclose(big.initial_density()[:12, :12], rho)


def test_time_series_csv_round_trip(tmp_path):
    ts = TimeSeries(np.array([0.0, 1e-8, 2e-8]), np.array([1 + 2j, 0.5, -0.25j]), "x")
    path = tmp_path / "ts.csv"
    ts.to_csv(path)
    assert path.read_text().splitlines()[1] == "time_us,value_re,value_im"
    back = TimeSeries.from_csv(path)
    assert back.name == "x"
    assert np.allclose(back.times, ts.times)
    assert np.allclose(back.values, ts.values)


def test_time_series_rejects_unsorted_times():
    with pytest.raises(InvalidParams):
        TimeSeries(np.array([0.0, 2.0, 1.0]), np.zeros(3))


def test_convergence_check_small_problem():
    spec = EvolutionSpec(SMALL_KPO, t_end=2e-7, dim=16, drive=DriveSpec(mhz(1), 0.0))
    rep = convergence_check(spec, [16, 20])
    assert rep.dims == [16, 20]
    assert rep.max_relative_change[0][0] < 1e-3
