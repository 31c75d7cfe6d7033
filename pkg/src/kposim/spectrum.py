"""Eigenstructure of the KPO Hamiltonian and the resonance bookkeeping built on it.

Eigenstates are indexed in descending order of energy (K < 0 makes the
computational doublet the top of the spectrum), so E_ij = w_j - w_i is negative
for i < j.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import fock
from .errors import InvalidParams, NotHermitian
from .model import KpoParams, TwoKpoParams, build_single_kpo, mhz, to_mhz


@dataclass(frozen=True)
class SpectrumResult:
    energies: np.ndarray  # rad/s, descending
    eigenvectors: np.ndarray  # columns, same order as energies
    dim: int

    def __len__(self) -> int:
        return len(self.energies)

    def state(self, i: int) -> np.ndarray:
        return self.eigenvectors[:, i]


def _eigh_desc(h: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    w, v = np.linalg.eigh(h)
    return w[::-1], v[:, ::-1]


def diagonalize(h: np.ndarray, use_parity: bool | None = None, herm_tol: float = 1e-12) -> SpectrumResult:
    """Full eigendecomposition of a Hermitian H, sorted by descending energy.

    When H commutes with photon-number parity the even and odd blocks are
    diagonalized separately, so eigenvectors have exact parity even inside the
    (numerically) degenerate ground doublet. ``use_parity=None`` auto-detects.
    """
    h = np.asarray(h, dtype=complex)
    if h.ndim != 2 or h.shape[0] != h.shape[1]:
        raise NotHermitian(f"not a square matrix: {h.shape}")
    fock.require_hermitian(h, herm_tol)
    h = (h + h.conj().T) / 2
    dim = h.shape[0]
    scale = np.linalg.norm(h)
    if use_parity is None:
        odd_block = h[0::2, 1::2]
        use_parity = dim >= 2 and (scale == 0 or np.linalg.norm(odd_block) <= 1e-13 * scale)
    if not use_parity:
        w, v = _eigh_desc(h)
        return SpectrumResult(w, v, dim)

    energies = np.empty(dim)
    vectors = np.zeros((dim, dim), dtype=complex)
    parts = []
    for start in (0, 1):
        idx = np.arange(start, dim, 2)
        w, v = np.linalg.eigh(h[np.ix_(idx, idx)])
        full = np.zeros((dim, len(idx)), dtype=complex)
        full[idx, :] = v
        parts.append((w, full))
    w_all = np.concatenate([parts[0][0], parts[1][0]])
    v_all = np.concatenate([parts[0][1], parts[1][1]], axis=1)
    # stable sort keeps even-sector states first within exact ties
    order = np.argsort(-w_all, kind="stable")
    energies[:] = w_all[order]
    vectors[:] = v_all[:, order]
    return SpectrumResult(energies, vectors, dim)


def excitation_energy(spec: SpectrumResult, i: int, j: int) -> float:
    """E_ij = w_j - w_i for i < j."""
    if not (0 <= i < j < len(spec)):
        raise IndexError(f"need 0 <= i < j < {len(spec)}, got i={i}, j={j}")
    return float(spec.energies[j] - spec.energies[i])


def kpo_spectrum(params: KpoParams, dim: int = 40) -> SpectrumResult:
    return diagonalize(build_single_kpo(params, dim))


def e02_ratio(params: KpoParams, dim: int = 40) -> float:
    """|E_02| / (2p); close to 1 for alpha >> 1."""
    e02 = excitation_energy(kpo_spectrum(params, dim), 0, 2)
    return abs(e02) / (2 * params.pump_amplitude)


@dataclass(frozen=True)
class CollisionEntry:
    kpo: int
    i: int
    j: int
    energy: float  # E_ij, rad/s
    margin: float  # |drive detuning - E_ij|, rad/s
    flagged: bool


@dataclass
class CollisionReport:
    entries: list[CollisionEntry]
    threshold: float
    pump_freq_halfdiff: float
    energy_cutoff: dict[int, float] = field(default_factory=dict)

    @property
    def flagged(self) -> list[CollisionEntry]:
        return [e for e in self.entries if e.flagged]

    def rows(self) -> list[dict]:
        """Machine-readable rows, frequencies as omega/2pi in MHz."""
        return [
            {
                "kpo": e.kpo,
                "i": e.i,
                "j": e.j,
                "e_ij_mhz": to_mhz(e.energy),
                "margin_mhz": to_mhz(e.margin),
                "flagged": int(e.flagged),
            }
            for e in self.entries
        ]

    def to_text(self) -> str:
        lines = [
            f"pump half-difference Delta_p/2pi = {to_mhz(self.pump_freq_halfdiff):.4f} MHz, "
            f"threshold/2pi = {to_mhz(self.threshold):.4f} MHz",
            f"{'kpo':>3} {'i':>3} {'j':>3} {'E_ij/2pi [MHz]':>16} {'margin/2pi [MHz]':>18} flag",
        ]
        for e in self.entries:
            lines.append(
                f"{e.kpo:>3d} {e.i:>3d} {e.j:>3d} {to_mhz(e.energy):>16.4f} "
                f"{to_mhz(e.margin):>18.4f} {'YES' if e.flagged else ''}"
            )
        lines.append(f"{len(self.flagged)} flagged")
        return "\n".join(lines)


def doublet_groups(energies: np.ndarray, ratio: float = 0.1) -> list[list[int]]:
    """Group levels into tunnel-split doublets.

    Levels k, k+1 form a doublet when their splitting is below ``ratio`` times
    the gap to each neighbouring level; all other levels stay singletons.
    """
    w = np.asarray(energies, dtype=float)
    n = len(w)
    groups: list[list[int]] = []
    k = 0
    while k < n:
        if k + 1 < n:
            split = abs(w[k] - w[k + 1])
            gaps = []
            if k > 0:
                gaps.append(abs(w[k - 1] - w[k]))
            if k + 2 < n:
                gaps.append(abs(w[k + 1] - w[k + 2]))
            if gaps and split < ratio * min(gaps):
                groups.append([k, k + 1])
                k += 2
                continue
        groups.append([k])
        k += 1
    return groups


def collision_report(
    two: TwoKpoParams,
    dim: int = 40,
    threshold: float = mhz(1.0),
    energy_cutoff: float | None = None,
    include_doublets: bool = False,
    doublet_ratio: float = 0.1,
) -> CollisionReport:
    """Check the resonance condition Delta_p = E_ij for both KPOs.

    KPO1 sees the partner's photons at detuning +Delta_p, KPO2 at -Delta_p.
    Levels are kept when w_i >= -energy_cutoff (default 2p of that KPO).
    Tunnel-split doublets (see :func:`doublet_groups`) are represented by their
    lower index, so a transition between two doublets is reported once, and
    intra-doublet pairs such as (0, 1) are skipped unless ``include_doublets``.
    """
    if not threshold > 0:
        raise InvalidParams("collision threshold must be positive")
    entries: list[CollisionEntry] = []
    cutoffs: dict[int, float] = {}
    for label, params, seen in ((1, two.kpo1, two.pump_freq_halfdiff), (2, two.kpo2, -two.pump_freq_halfdiff)):
        spec = kpo_spectrum(params, dim)
        cutoff = 2 * params.pump_amplitude if energy_cutoff is None else energy_cutoff
        cutoffs[label] = cutoff
        # grouping uses the whole spectrum so the last confined level sees its neighbour
        groups = [g for g in doublet_groups(spec.energies, doublet_ratio) if spec.energies[g[0]] >= -cutoff]
        pairs: list[tuple[int, int]] = []
        for gi, ga in enumerate(groups):
            if include_doublets and len(ga) == 2:
                pairs.append((ga[0], ga[1]))
            for gb in groups[gi + 1:]:
                pairs.append((ga[0], gb[0]))
        for i, j in sorted(pairs):
            e = excitation_energy(spec, i, j)
            margin = abs(seen - e)
            entries.append(CollisionEntry(label, i, j, e, margin, margin < threshold))
    return CollisionReport(entries, threshold, two.pump_freq_halfdiff, cutoffs)


def avoided_crossing_splitting(omega1: float, omega2: float, g: float) -> float:
    """Eigenvalue gap of [[w1, g], [g, w2]]; minimum over w2 is 2g."""
    if g < 0:
        raise InvalidParams("coupling must be >= 0")
    return math.sqrt((omega1 - omega2) ** 2 + 4 * g * g)
