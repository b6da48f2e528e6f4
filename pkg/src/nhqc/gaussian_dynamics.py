"""Nonunitary evolution of Slater-determinant (Gaussian) states.

A half-filled Gaussian state is stored as an ``L x N`` matrix whose columns
span the occupied single-particle subspace.  Under ``H = sum c_m^dag H_mn c_n``
the many-body state ``exp(-iHt)|Psi0>`` is again a Slater determinant whose
orbitals are ``exp(-iHt) @ orbitals``; the normalization of the many-body
state only rescales the determinant, so every observable depends on the
column space alone.  We therefore re-orthonormalize freely.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Iterator, Sequence

import numpy as np
import scipy.linalg

__all__ = [
    "OrbitalState",
    "Propagator",
    "CorrelationMatrix",
    "RenormPolicy",
    "RankCollapseError",
    "PropagatorOverflowError",
    "cdw_orbitals",
    "make_propagator",
    "orthonormalize",
    "qr_factor",
    "flush_tiny",
    "iter_trajectory",
    "evolve_trajectory",
    "correlation_matrix",
    "occupations",
    "default_sample_times",
    "write_density_csv",
]

OVERFLOW_LIMIT = 300.0
# entries below this are zeroed: subnormal floats slow BLAS down several-fold
FLUSH_FLOOR = 1e-200


class RankCollapseError(ArithmeticError):
    """Occupied orbitals became numerically linearly dependent."""


class PropagatorOverflowError(OverflowError):
    pass


@dataclass
class OrbitalState:
    orbitals: np.ndarray
    time: float = 0.0

    @property
    def L(self) -> int:
        return self.orbitals.shape[0]

    @property
    def particle_count(self) -> int:
        return self.orbitals.shape[1]


@dataclass
class Propagator:
    matrix: np.ndarray
    dt: float


@dataclass
class CorrelationMatrix:
    """``C[m, n] = <c_m^dag c_n>`` over ``sites`` (0-based lattice indices)."""

    entries: np.ndarray
    sites: np.ndarray

    @property
    def trace(self) -> float:
        return float(np.trace(self.entries).real)

    def block(self, sites) -> np.ndarray:
        sel = _as_index(sites)
        pos = np.searchsorted(self.sites, sel)
        if np.any(pos >= len(self.sites)) or np.any(self.sites[np.minimum(pos, len(self.sites) - 1)] != sel):
            raise IndexError("requested sites are not covered by this correlation matrix")
        return self.entries[np.ix_(pos, pos)]


@dataclass(frozen=True)
class RenormPolicy:
    """How a trajectory is integrated.

    ``method``: ``"eigen"`` propagates in the right-eigenvector basis of H,
    ``"step"`` applies ``exp(-iH dt)`` repeatedly, ``"auto"`` uses the
    eigenbasis when its condition number is below ``cond_threshold``.
    Orbitals are re-orthonormalized after every application either way.
    """

    method: str = "auto"
    dt: float = 1.0
    # eigenbasis results carry errors of order eps * cond(R); 1e4 keeps them near 1e-13
    cond_threshold: float = 1e4
    collapse_tol: float = 1e-12
    # largest growth exponent spread allowed between two orthonormalizations
    max_log_spread: float = 20.0

    def __post_init__(self):
        if self.method not in ("auto", "eigen", "step"):
            raise ValueError(f"unknown propagation method {self.method!r}")
        if not self.dt > 0:
            raise ValueError("dt must be positive")


def cdw_orbitals(L: int) -> OrbitalState:
    """Half-filled charge-density wave: one particle on each even site 2, 4, ..."""
    if L < 2:
        raise ValueError("L must be >= 2")
    N = L // 2
    psi = np.zeros((L, N), dtype=complex)
    # site 2r has 0-based row 2r - 1
    psi[2 * np.arange(1, N + 1) - 1, np.arange(N)] = 1.0
    return OrbitalState(psi, 0.0)


def default_sample_times(T: float = 1000.0, every: float = 1.0) -> np.ndarray:
    """Sample times ``every, 2*every, ..., T``."""
    n = int(round(T / every))
    return every * np.arange(1, n + 1)


def _growth_bound(H: np.ndarray) -> float:
    """Upper bound on ``max |Im E|`` from the anti-Hermitian part of H."""
    A = (H - H.conj().T) / 2j
    w = np.linalg.eigvalsh(A)
    return float(max(abs(w[0]), abs(w[-1])))


def flush_tiny(a: np.ndarray, floor: float = FLUSH_FLOOR) -> np.ndarray:
    """Zero real and imaginary parts smaller than ``floor`` in place."""
    parts = (a.real, a.imag) if np.iscomplexobj(a) else (a,)
    for part in parts:
        part[np.abs(part) < floor] = 0.0
    return a


def make_propagator(H: np.ndarray, dt: float) -> Propagator:
    """``exp(-i H dt)`` by Pade scaling and squaring."""
    if not dt > 0:
        raise ValueError("dt must be positive")
    H = np.asarray(H, dtype=complex)
    if dt * _growth_bound(H) > OVERFLOW_LIMIT:
        im = float(np.max(np.abs(np.linalg.eigvals(H).imag)))
        if dt * im > OVERFLOW_LIMIT:
            raise PropagatorOverflowError(
                f"dt * max|Im E| = {dt * im:.3g} exceeds {OVERFLOW_LIMIT:g}; use a smaller dt"
            )
    return Propagator(flush_tiny(scipy.linalg.expm(-1j * dt * H)), float(dt))


def _collapse(d: np.ndarray, scale: float, collapse_tol: float, time: float | None) -> None:
    if not np.all(np.isfinite(d)) or d.min() < collapse_tol * scale:
        when = "" if time is None else f" at t = {time:g}"
        raise RankCollapseError(f"occupied orbitals lost linear independence{when} (min |R_ii| = {d.min():.3g})")


def _householder(psi, collapse_tol, time):
    q, r = scipy.linalg.qr(psi, mode="economic", check_finite=False)
    scale = float(np.max(np.linalg.norm(psi, axis=0))) if psi.size else 1.0
    _collapse(np.abs(np.diag(r)), scale, collapse_tol, time)
    return q, r


def _chol_pass(psi):
    """One Cholesky-QR pass; returns ``(q, r, rcond)`` or None if the Gram matrix is not positive definite."""
    if np.iscomplexobj(psi):
        # only the upper triangle is formed, which is all the factorization reads
        gram = scipy.linalg.blas.zherk(1.0, psi, trans=2)
    else:
        gram = psi.T @ psi
    try:
        r = scipy.linalg.cholesky(gram, lower=False, check_finite=False)
    except np.linalg.LinAlgError:
        return None
    rcond, info = scipy.linalg.lapack.ztrcon(r) if np.iscomplexobj(r) else scipy.linalg.lapack.dtrcon(r)
    if info != 0 or not rcond > 0:
        return None
    q = scipy.linalg.solve_triangular(r, psi.T, trans="T", lower=False, check_finite=False).T
    return q, r, rcond


def qr_factor(psi: np.ndarray, collapse_tol: float = 1e-12, time: float | None = None):
    """``psi = q @ r`` with orthonormal ``q`` and upper-triangular ``r``.

    Uses Cholesky QR (one Gram product and a triangular solve, far cheaper
    than Householder QR for tall matrices).  Orthogonality of one pass
    degrades like ``eps * cond(psi)**2``, so a second pass is applied when
    the condition estimate exceeds 1e2 and Householder QR takes over beyond 1e5.
    """
    first = _chol_pass(psi) if psi.shape[1] else None
    if first is None or first[2] < 1e-5:
        return _householder(psi, collapse_tol, time)
    q, r, rcond = first
    if rcond < 1e-2:
        second = _chol_pass(q)
        if second is None:
            return _householder(psi, collapse_tol, time)
        q, r2, _ = second
        r = r2 @ r
    scale = float(np.max(np.linalg.norm(psi, axis=0)))
    _collapse(np.abs(np.diag(r)), scale, collapse_tol, time)
    return q, r


def orthonormalize(psi: np.ndarray, collapse_tol: float = 1e-12, time: float | None = None) -> np.ndarray:
    """Orthonormal basis of the column space of ``psi``.

    Raises :class:`RankCollapseError` when a diagonal entry of R, an upper
    bound on the smallest singular value, falls below ``collapse_tol`` times
    the largest column norm.
    """
    return qr_factor(psi, collapse_tol, time)[0]


def _eigen_setup(H: np.ndarray, policy: RenormPolicy):
    w, R = scipy.linalg.eig(H, check_finite=False)
    cond = np.linalg.cond(R)
    if not np.isfinite(cond):
        return None
    if policy.method == "auto" and cond >= policy.cond_threshold:
        return None
    flush_tiny(R)
    lu = scipy.linalg.lu_factor(R, check_finite=False)
    return w, R, lu


def iter_trajectory(state: OrbitalState, H: np.ndarray, sample_times: Iterable[float],
                    policy: RenormPolicy | None = None) -> Iterator[OrbitalState]:
    """Yield the evolved state (orthonormal orbitals) at each sample time.

    ``sample_times`` are absolute times, non-decreasing and not earlier than
    ``state.time``.
    """
    policy = policy or RenormPolicy()
    H = np.asarray(H, dtype=complex)
    times = [float(t) for t in sample_times]
    if any(b < a for a, b in zip(times, times[1:])):
        raise ValueError("sample_times must be non-decreasing")
    if times and times[0] < state.time:
        raise ValueError("sample_times must not precede the state's time")

    setup = None
    if policy.method in ("auto", "eigen"):
        setup = _eigen_setup(H, policy)
        if setup is None and policy.method == "eigen":
            raise RankCollapseError("eigenvector matrix is singular; use the stepping method")
    if setup is not None:
        yield from _eigen_path(state, setup, times, policy)
    else:
        yield from _step_path(state, H, times, policy)


def _eigen_path(state, setup, times, policy):
    w, R, lu = setup
    t = state.time
    coeff = scipy.linalg.lu_solve(lu, orthonormalize(state.orbitals, policy.collapse_tol, t), check_finite=False)
    spread = float(w.imag.max() - w.imag.min())
    for target in times:
        delta = target - t
        if delta > 0:
            pieces = max(1, math.ceil(delta * spread / policy.max_log_spread))
            h = delta / pieces
            phase = np.exp(-1j * w * h)[:, None]
            for k in range(pieces):
                coeff = phase * coeff
                if k < pieces - 1:
                    # column operation only; keeps the growing rows bounded
                    coeff = orthonormalize(coeff, policy.collapse_tol, t + (k + 1) * h)
        t = target
        psi = R @ coeff
        q, r = qr_factor(psi, policy.collapse_tol, t)
        # coeff <- coeff @ inv(r) so that R @ coeff == q
        coeff = flush_tiny(scipy.linalg.solve_triangular(r, coeff.T, trans="T", lower=False, check_finite=False).T)
        yield OrbitalState(flush_tiny(q), t)


def _step_path(state, H, times, policy):
    cache: dict[float, np.ndarray] = {}

    def prop(h: float) -> np.ndarray:
        key = round(h, 12)
        if key not in cache:
            cache[key] = make_propagator(H, h).matrix
        return cache[key]

    t = state.time
    psi = orthonormalize(state.orbitals, policy.collapse_tol, t)
    dt = policy.dt
    for target in times:
        delta = target - t
        if delta > 0:
            n_full = int(math.floor(delta / dt + 1e-9))
            rest = delta - n_full * dt
            steps = [dt] * n_full
            if rest > 1e-9 * dt:
                steps.append(rest)
            elif steps:
                steps[-1] += rest
            for h in steps:
                t += h
                psi = flush_tiny(orthonormalize(prop(h) @ psi, policy.collapse_tol, t))
        t = target
        yield OrbitalState(psi, t)


def evolve_trajectory(state: OrbitalState, H: np.ndarray, sample_times: Sequence[float],
                      policy: RenormPolicy | None = None) -> list[OrbitalState]:
    """List version of :func:`iter_trajectory`; memory is ``len(sample_times) * L * N``."""
    return list(iter_trajectory(state, H, sample_times, policy))


def correlation_matrix(state: OrbitalState, sites=None) -> CorrelationMatrix:
    """``C[m, n] = <Psi|c_m^dag c_n|Psi> / <Psi|Psi>`` for the Slater determinant.

    With orbitals ``Psi`` the projector onto the occupied space is
    ``P = Psi (Psi^dag Psi)^-1 Psi^dag`` and ``C = conj(P)``.
    """
    psi = np.asarray(state.orbitals, dtype=complex)
    gram = psi.conj().T @ psi
    try:
        chol = scipy.linalg.cho_factor(gram, check_finite=False)
    except np.linalg.LinAlgError as exc:
        raise RankCollapseError(f"singular Gram matrix at t = {state.time:g}") from exc
    if np.min(np.abs(np.diag(chol[0]))) ** 2 < 1e-24 * np.max(np.abs(np.diag(gram))):
        raise RankCollapseError(f"singular Gram matrix at t = {state.time:g}")
    sel = np.arange(state.L) if sites is None else _as_index(sites)
    rows = psi[sel]
    P = rows @ scipy.linalg.cho_solve(chol, rows.conj().T, check_finite=False)
    C = P.conj()
    C = 0.5 * (C + C.conj().T)
    return CorrelationMatrix(C, sel)


def occupations(state: OrbitalState) -> np.ndarray:
    """Site densities ``C_nn``; assumes orthonormal orbitals."""
    return np.sum(np.abs(state.orbitals) ** 2, axis=1)


def _as_index(sites) -> np.ndarray:
    if isinstance(sites, slice):
        raise TypeError("pass a range or index array, not a slice")
    return np.asarray(list(sites) if isinstance(sites, range) else sites, dtype=int)


def write_density_csv(states: Iterable[OrbitalState], path) -> None:
    """Dump ``(t, site, occupation)`` rows; sites are 1-based."""
    with Path(path).open("w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["t", "site", "occupation"])
        for st in states:
            dens = occupations(st)
            for n, occ in enumerate(dens, start=1):
                writer.writerow([repr(float(st.time)), n, repr(float(occ))])
