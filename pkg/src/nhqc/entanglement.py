"""Entanglement entropy of Gaussian states from correlation-matrix blocks."""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
import scipy.linalg

from .gaussian_dynamics import (
    CorrelationMatrix,
    OrbitalState,
    RenormPolicy,
    cdw_orbitals,
    default_sample_times,
    iter_trajectory,
)
from .lattice_model import ModelSpec, build_hamiltonian

__all__ = [
    "NumericalIntegrityError",
    "EESeries",
    "SteadyStateEE",
    "EntropyProfile",
    "binary_entropy",
    "entropy_from_correlations",
    "block_spectrum",
    "state_entropy",
    "entropy_series",
    "steady_state_entropy",
    "steady_state_bipartite",
    "entropy_profile",
    "write_series_csv",
    "write_profile_csv",
    "write_steady_json",
]

CLAMP = 1e-12
INTEGRITY_TOL = 1e-6


class NumericalIntegrityError(ArithmeticError):
    """Correlation-matrix eigenvalues left the physical interval [0, 1]."""


def binary_entropy(zeta: np.ndarray) -> float:
    """``-sum[z ln z + (1 - z) ln(1 - z)]`` with ``z`` clamped to ``[1e-12, 1 - 1e-12]``."""
    zeta = np.asarray(zeta, dtype=float)
    if zeta.size and (zeta.min() < -INTEGRITY_TOL or zeta.max() > 1 + INTEGRITY_TOL):
        raise NumericalIntegrityError(
            f"correlation eigenvalues outside [0, 1]: min {zeta.min():.3g}, max {zeta.max():.3g}"
        )
    z = np.clip(zeta, CLAMP, 1.0 - CLAMP)
    return float(-np.sum(z * np.log(z) + (1.0 - z) * np.log1p(-z)))


def entropy_from_correlations(C, sites: Sequence[int] | range | None = None) -> float:
    """Entropy of the sites in ``sites`` (0-based) from a correlation matrix."""
    if isinstance(C, CorrelationMatrix):
        block = C.entries if sites is None else C.block(sites)
    else:
        C = np.asarray(C)
        if sites is None:
            block = C
        else:
            idx = np.asarray(list(sites), dtype=int)
            block = C[np.ix_(idx, idx)]
    block = 0.5 * (block + block.conj().T)
    return binary_entropy(np.linalg.eigvalsh(block))


def block_spectrum(state: OrbitalState, l: int, start: int = 0) -> np.ndarray:
    """Eigenvalues of the correlation block on sites ``start .. start + l - 1``.

    Assumes orthonormal orbitals ``Q``.  The nonzero block eigenvalues are
    those of ``Q_A^dag Q_A`` (N x N) or ``Q_A Q_A^dag`` (l x l), whichever is
    smaller; the remaining ones are exactly zero.
    """
    Q = state.orbitals
    L, N = Q.shape
    if not 1 <= l <= L:
        raise ValueError(f"subsystem size must lie in [1, {L}], got {l}")
    rows = np.arange(start, start + l) % L
    QA = Q[rows]
    G = QA @ QA.conj().T if l <= N else QA.conj().T @ QA
    return scipy.linalg.eigvalsh(G, check_finite=False, overwrite_a=True)


def state_entropy(state: OrbitalState, l: int, start: int = 0) -> float:
    return binary_entropy(block_spectrum(state, l, start))


@dataclass
class EESeries:
    times: np.ndarray
    values: np.ndarray
    spec: ModelSpec | None
    subsystem_size: int


@dataclass
class SteadyStateEE:
    value: float
    window: tuple[float, float]
    sample_count: int

    def to_dict(self) -> dict:
        return {"value": self.value, "window": list(self.window), "sample_count": self.sample_count}


@dataclass
class EntropyProfile:
    """Steady-state ``S(L, l)`` for a set of cut sizes ``l``."""

    cuts: np.ndarray
    values: np.ndarray
    window: tuple[float, float]
    sample_count: int
    spec: ModelSpec | None = None
    half_cut: SteadyStateEE | None = field(default=None)


def _window_start(T: float, fraction: float) -> float:
    if not 0.0 < fraction < 1.0:
        raise ValueError("window_start_fraction must lie in (0, 1)")
    return fraction * T


def entropy_series(spec: ModelSpec, T: float = 1000.0, l: int | None = None,
                   sample_times: Sequence[float] | None = None,
                   policy: RenormPolicy | None = None) -> EESeries:
    """``S(t)`` of the first ``l`` sites (default ``L // 2``) starting from the CDW state.

    The series includes ``t = 0``.
    """
    l = spec.L // 2 if l is None else l
    times = default_sample_times(T) if sample_times is None else np.asarray(sample_times, dtype=float)
    H = build_hamiltonian(spec)
    state0 = cdw_orbitals(spec.L)
    out_t = [0.0]
    out_s = [state_entropy(state0, l)]
    for st in iter_trajectory(state0, H, times, policy):
        if st.time == 0.0:
            continue
        out_t.append(st.time)
        out_s.append(state_entropy(st, l))
    return EESeries(np.asarray(out_t), np.asarray(out_s), spec, l)


def steady_state_entropy(series: EESeries, window_start_fraction: float = 0.5) -> SteadyStateEE:
    """Mean of ``S(t)`` over ``t >= window_start_fraction * T``, with ``T`` the last time."""
    times = np.asarray(series.times, dtype=float)
    if times.size == 0:
        raise ValueError("empty series")
    T = float(times[-1])
    t0 = _window_start(T, window_start_fraction)
    mask = times >= t0
    if not np.any(mask):
        raise ValueError(f"no samples in the window [{t0:g}, {T:g}]")
    vals = np.asarray(series.values)[mask]
    return SteadyStateEE(float(np.mean(vals)), (t0, T), int(mask.sum()))


def steady_state_bipartite(spec: ModelSpec, T: float = 1000.0, window_start_fraction: float = 0.5,
                           l: int | None = None, sample_every: float = 1.0,
                           policy: RenormPolicy | None = None) -> SteadyStateEE:
    """Steady-state entropy without evaluating ``S(t)`` before the window opens."""
    l = spec.L // 2 if l is None else l
    times = default_sample_times(T, sample_every)
    t0 = _window_start(T, window_start_fraction)
    # only samples inside the window are needed, but the grid keeps orthonormalizations regular
    H = build_hamiltonian(spec)
    acc = []
    for st in iter_trajectory(cdw_orbitals(spec.L), H, times, policy):
        if st.time >= t0 - 1e-9:
            acc.append(state_entropy(st, l))
    if not acc:
        raise ValueError(f"no samples in the window [{t0:g}, {T:g}]")
    return SteadyStateEE(float(np.mean(acc)), (t0, float(T)), len(acc))


def entropy_profile(spec: ModelSpec, T: float = 1000.0, window_start_fraction: float = 0.5,
                    cuts: Iterable[int] | None = None, time_stride: int = 1,
                    policy: RenormPolicy | None = None) -> EntropyProfile:
    """Steady-state ``S(L, l)`` for every requested cut from a single trajectory.

    ``cuts`` defaults to ``1 .. L-1``.  Within the window only every
    ``time_stride``-th unit-time sample enters the average; the half-cut
    entropy is always averaged over all window samples.
    """
    L = spec.L
    cuts = np.arange(1, L) if cuts is None else np.asarray(sorted(set(int(c) for c in cuts)))
    if cuts.size == 0 or cuts.min() < 1 or cuts.max() > L:
        raise ValueError(f"cuts must lie in [1, {L}]")
    if time_stride < 1:
        raise ValueError("time_stride must be >= 1")
    times = default_sample_times(T)
    t0 = _window_start(T, window_start_fraction)
    H = build_hamiltonian(spec)
    total = np.zeros(len(cuts))
    count = 0
    half = []
    k = 0
    for st in iter_trajectory(cdw_orbitals(L), H, times, policy):
        if st.time < t0 - 1e-9:
            continue
        half.append(state_entropy(st, L // 2))
        if k % time_stride == 0:
            total += [state_entropy(st, int(l)) for l in cuts]
            count += 1
        k += 1
    if count == 0:
        raise ValueError(f"no samples in the window [{t0:g}, {T:g}]")
    window = (t0, float(T))
    return EntropyProfile(cuts, total / count, window, count, spec,
                          SteadyStateEE(float(np.mean(half)), window, len(half)))


def write_series_csv(series: EESeries, path) -> None:
    with Path(path).open("w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["t", "S"])
        for t, s in zip(series.times, series.values):
            writer.writerow([repr(float(t)), repr(float(s))])


def write_profile_csv(profile: EntropyProfile, path) -> None:
    with Path(path).open("w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["l", "S"])
        for l, s in zip(profile.cuts, profile.values):
            writer.writerow([int(l), repr(float(s))])


def write_steady_json(steady: SteadyStateEE, path, extra: dict | None = None) -> None:
    data = {"steady_state": steady.to_dict()}
    if extra:
        data.update(extra)
    Path(path).write_text(json.dumps(data, indent=2, sort_keys=True) + "\n")
