"""Bit-flip time extraction: binning, exponential fit, conditional selection."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
from scipy.optimize import least_squares

from .dynamics import TimeSeries
from .errors import EmptySelection, FitDiverged, InvalidBinWidth, NonPositiveTau

DEFAULT_BIN_WIDTH = 1e-6
TAU_CAP = 1e-3  # fits above this are reported as capped
DIVERGE_FACTOR = 1e6  # tau beyond this multiple of the horizon counts as divergence


@dataclass
class BinnedTrace:
    centers: np.ndarray  # seconds
    means: np.ndarray
    errors: np.ndarray | None = None  # standard error per bin, if known
    width: float = DEFAULT_BIN_WIDTH

    def __len__(self) -> int:
        return len(self.centers)


@dataclass(frozen=True)
class FitResult:
    amplitude: float
    tau: float  # seconds
    tau_error: float
    residual_rms: float
    capped: bool = False

    @property
    def tau_us(self) -> float:
        return self.tau * 1e6


def bin_trace(series: TimeSeries | tuple[np.ndarray, np.ndarray], width: float = DEFAULT_BIN_WIDTH,
              errors: np.ndarray | None = None) -> BinnedTrace:
    """Average the real part of a sampled trace in non-overlapping bins.

    Bins start at t=0; a trailing partial bin is dropped. The width must cover
    at least two samples.
    """
    if isinstance(series, TimeSeries):
        times, values = series.times, series.values
    else:
        times, values = (np.asarray(x) for x in series)
    values = np.real(values)
    if len(times) < 2:
        raise InvalidBinWidth("need at least two samples to bin")
    stride = float(times[1] - times[0])
    if not width >= 2 * stride * (1 - 1e-9):
        raise InvalidBinWidth(f"bin width {width:g} s is below two output strides ({2 * stride:g} s)")
    t0 = float(times[0])
    idx = np.floor((times - t0) / width + 1e-9).astype(int)
    n_full = int(np.floor((times[-1] - t0) / width + 1e-9))
    # a bin is complete only if samples reach its right edge
    if n_full < 1:
        raise InvalidBinWidth(f"bin width {width:g} s exceeds the trace length")
    keep = idx < n_full
    counts = np.bincount(idx[keep], minlength=n_full)
    sums = np.bincount(idx[keep], weights=values[keep], minlength=n_full)
    means = sums / counts
    errs = None
    if errors is not None:
        e2 = np.bincount(idx[keep], weights=np.asarray(errors)[keep] ** 2, minlength=n_full)
        errs = np.sqrt(e2) / counts
    centers = t0 + width * (np.arange(n_full) + 0.5)
    return BinnedTrace(centers, means, errs, width)


def _exp_model(params, t):
    amp, rate = params
    return amp * np.exp(-rate * t)


def fit_exponential(binned: BinnedTrace, skip_bins: int = 0) -> FitResult:
    """Levenberg-Marquardt fit of A exp(-t/tau) to binned data.

    Starts from A = first bin value, tau = half the horizon. The optimizer
    works with the rate 1/tau, which stays well conditioned when tau is much
    longer than the trace. With per-bin errors the fit is weighted and
    tau_error uses them as absolute sigmas; otherwise the covariance is scaled
    by the residual variance.
    """
    t = np.asarray(binned.centers[skip_bins:], dtype=float)
    y = np.asarray(binned.means[skip_bins:], dtype=float)
    sig = None if binned.errors is None else np.asarray(binned.errors[skip_bins:], dtype=float)
    if len(t) < 3:
        raise FitDiverged(f"need at least 3 bins to fit, have {len(t)}")
    if np.ptp(y) == 0:
        raise FitDiverged("trace is constant; decay time undefined")
    horizon = float(t[-1])
    w = np.ones_like(y) if sig is None or np.any(sig <= 0) else 1.0 / sig

    def resid(p):
        return (_exp_model(p, t) - y) * w

    def jac(p):
        amp, rate = p
        e = np.exp(-rate * t)
        return np.column_stack([e * w, -amp * t * e * w])

    x0 = np.array([y[0], 2.0 / horizon])
    try:
        sol = least_squares(resid, x0, jac=jac, method="lm",
                            x_scale=np.array([max(abs(y[0]), 1e-300), 1.0 / horizon]))
    except (ValueError, np.linalg.LinAlgError) as exc:
        raise FitDiverged(f"optimizer failed: {exc}") from None
    amp, rate = sol.x
    if not np.all(np.isfinite(sol.x)) or not sol.success:
        raise FitDiverged(f"optimizer failed: {sol.message}")
    if rate * horizon < 0 and abs(rate) * horizon > 1.0 / DIVERGE_FACTOR:
        raise NonPositiveTau(f"fitted tau = {1 / rate:g} s; trace grows instead of decaying")
    if rate * horizon <= 1.0 / DIVERGE_FACTOR:
        raise FitDiverged(f"decay time beyond {DIVERGE_FACTOR:g} x the horizon")
    tau = 1.0 / rate
    j = sol.jac
    try:
        cov = np.linalg.inv(j.T @ j)
    except np.linalg.LinAlgError:
        cov = np.full((2, 2), np.inf)
    if sig is None:
        cov = cov * float(np.sum(sol.fun ** 2)) / max(1, len(y) - 2)
    tau_err = float(np.sqrt(max(cov[1, 1], 0.0)) / rate ** 2)
    rms = float(np.sqrt(np.mean((_exp_model(sol.x, t) - y) ** 2)))
    capped = tau > TAU_CAP
    return FitResult(float(amp), float(TAU_CAP if capped else tau), tau_err, rms, capped)


def bitflip_time(series: TimeSeries, width: float = DEFAULT_BIN_WIDTH, skip_bins: int = 0) -> FitResult:
    return fit_exponential(bin_trace(series, width), skip_bins=skip_bins)


def conditional_select(trials: Sequence[np.ndarray] | np.ndarray,
                       condition: str | Callable[[np.ndarray], np.ndarray] = "positive",
                       reference_bin: int = 0) -> tuple[np.ndarray, np.ndarray, int]:
    """Average trials after post-selecting on the sign of a reference bin.

    ``condition``: "positive" keeps trials with value > 0 in ``reference_bin``,
    "negative" keeps < 0, "fold" keeps all and flips negative ones, or a callable
    mapping the (n_trials, n_bins) array to a boolean mask. Returns
    (mean, standard error, n_selected).
    """
    data = np.real(np.asarray(trials, dtype=complex if np.iscomplexobj(trials) else float))
    if data.ndim != 2:
        raise ValueError("trials must be a 2-D array (n_trials, n_bins)")
    ref = data[:, reference_bin]
    if callable(condition):
        sel = data[np.asarray(condition(data), dtype=bool)]
    elif condition == "positive":
        sel = data[ref > 0]
    elif condition == "negative":
        sel = data[ref < 0]
    elif condition == "fold":
        signs = np.sign(ref)
        sel = (data * signs[:, None])[signs != 0]
    else:
        raise ValueError(f"unknown condition {condition!r}")
    n = len(sel)
    if n == 0:
        raise EmptySelection("no trial satisfies the selection condition")
    mean = sel.mean(axis=0)
    err = sel.std(axis=0, ddof=1) / np.sqrt(n) if n > 1 else np.full(mean.shape, np.inf)
    return mean, err, n
