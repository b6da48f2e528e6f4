"""Brute-force many-body reference for tiny chains (L <= 10).

Works in the fixed particle-number sector with occupation bitstrings; site
``n`` (1-based) is bit ``L - n`` so site 1 is the most significant bit and
basis states are ordered by ascending bitstring value.  Fermionic signs
follow the Jordan-Wigner ordering 1, 2, ..., L.
"""

from __future__ import annotations

from dataclasses import dataclass
from itertools import combinations

import numpy as np
import scipy.linalg

from .lattice_model import ModelSpec, build_hamiltonian

__all__ = [
    "MAX_SITES",
    "FockState",
    "FockBasis",
    "many_body_hamiltonian",
    "cdw_fock_state",
    "exact_state",
    "exact_entropy",
    "exact_entropies",
    "exact_correlation",
]

MAX_SITES = 10


class FockBasis:
    def __init__(self, L: int, N: int):
        if L > MAX_SITES:
            raise ValueError(f"exact oracle is limited to L <= {MAX_SITES}, got {L}")
        self.L, self.N = L, N
        states = sorted(sum(1 << (L - n) for n in occ) for occ in combinations(range(1, L + 1), N))
        self.states = np.array(states, dtype=np.int64)
        self.index = {s: i for i, s in enumerate(states)}

    def __len__(self) -> int:
        return len(self.states)

    def bit(self, n: int) -> int:
        return 1 << (self.L - n)

    def occupied(self, state: int, n: int) -> bool:
        return bool(state & self.bit(n))

    def sign_before(self, state: int, n: int) -> int:
        """``(-1)^(number of occupied sites m < n)``."""
        mask = state >> (self.L - n + 1)
        return -1 if bin(mask).count("1") % 2 else 1


@dataclass
class FockState:
    amplitudes: np.ndarray
    basis: FockBasis
    norm: float = 1.0


def many_body_hamiltonian(h: np.ndarray, basis: FockBasis) -> np.ndarray:
    """Matrix of ``sum_mn h[m, n] c_m^dag c_n`` in ``basis``."""
    L = basis.L
    dim = len(basis)
    Hmb = np.zeros((dim, dim), dtype=complex)
    for col, s in enumerate(basis.states):
        s = int(s)
        for n in range(1, L + 1):
            if not basis.occupied(s, n):
                continue
            sign_n = basis.sign_before(s, n)
            s1 = s ^ basis.bit(n)
            for m in range(1, L + 1):
                amp = h[m - 1, n - 1]
                if amp == 0:
                    continue
                if basis.occupied(s1, m):
                    continue
                sign_m = basis.sign_before(s1, m)
                s2 = s1 | basis.bit(m)
                Hmb[basis.index[s2], col] += sign_m * sign_n * amp
    return Hmb


def cdw_fock_state(L: int) -> FockState:
    N = L // 2
    basis = FockBasis(L, N)
    s = sum(basis.bit(2 * r) for r in range(1, N + 1))
    amp = np.zeros(len(basis), dtype=complex)
    amp[basis.index[s]] = 1.0
    return FockState(amp, basis, 1.0)


def exact_state(spec: ModelSpec, t: float, step: float = 1.0) -> FockState:
    """``exp(-iHt)|CDW>`` normalized, with renormalization after every ``step``."""
    if spec.L > MAX_SITES:
        raise ValueError(f"exact oracle is limited to L <= {MAX_SITES}, got {spec.L}")
    if t < 0:
        raise ValueError("t must be non-negative")
    psi = cdw_fock_state(spec.L)
    if t == 0:
        return psi
    Hmb = many_body_hamiltonian(build_hamiltonian(spec), psi.basis)
    n_full = int(np.floor(t / step))
    rest = t - n_full * step
    amp = psi.amplitudes
    log_norm = 0.0
    if n_full:
        U = scipy.linalg.expm(-1j * step * Hmb)
        for _ in range(n_full):
            amp = U @ amp
            nrm = np.linalg.norm(amp)
            log_norm += np.log(nrm)
            amp = amp / nrm
    if rest > 1e-14:
        amp = scipy.linalg.expm(-1j * rest * Hmb) @ amp
        nrm = np.linalg.norm(amp)
        log_norm += np.log(nrm)
        amp = amp / nrm
    # norm of the unnormalized exp(-iHt)|Psi0>, kept in log form for large t
    return FockState(amp, psi.basis, float(np.exp(log_norm)) if log_norm < 700 else float("inf"))


def _full_vector(state: FockState) -> np.ndarray:
    full = np.zeros(1 << state.basis.L, dtype=complex)
    full[state.basis.states] = state.amplitudes
    return full


def _rdm_spectrum(state: FockState, l: int) -> np.ndarray:
    L = state.basis.L
    if not 0 <= l <= L:
        raise ValueError(f"l must lie in [0, {L}]")
    # site 1 is the most significant bit, so rows index sites 1..l
    M = _full_vector(state).reshape(1 << l, 1 << (L - l))
    return np.linalg.svd(M, compute_uv=False) ** 2


def _von_neumann(p: np.ndarray) -> float:
    p = p[p > 1e-300]
    return float(-np.sum(p * np.log(p)))


def exact_entropy(spec: ModelSpec, t: float, l: int) -> float:
    """``-Tr(rho_A ln rho_A)`` for A = sites 1..l."""
    return _von_neumann(_rdm_spectrum(exact_state(spec, t), l))


def exact_entropies(spec: ModelSpec, t: float) -> np.ndarray:
    """Entropies for every cut ``l = 0..L`` from one evolved state."""
    psi = exact_state(spec, t)
    return np.array([_von_neumann(_rdm_spectrum(psi, l)) for l in range(spec.L + 1)])


def exact_correlation(spec: ModelSpec, t: float) -> np.ndarray:
    """``C[m, n] = <Psi(t)|c_m^dag c_n|Psi(t)>`` (0-based indices)."""
    psi = exact_state(spec, t)
    basis = psi.basis
    L = basis.L
    amp = psi.amplitudes
    C = np.zeros((L, L), dtype=complex)
    for col, s in enumerate(basis.states):
        a = amp[col]
        if a == 0:
            continue
        s = int(s)
        for n in range(1, L + 1):
            if not basis.occupied(s, n):
                continue
            sign_n = basis.sign_before(s, n)
            s1 = s ^ basis.bit(n)
            for m in range(1, L + 1):
                if basis.occupied(s1, m):
                    continue
                s2 = s1 | basis.bit(m)
                sign_m = basis.sign_before(s1, m)
                # <Psi| c_m^dag c_n |Psi> picks the component of c_m^dag c_n |s> along |s2>
                C[m - 1, n - 1] += np.conj(amp[basis.index[s2]]) * sign_m * sign_n * a
    return C
