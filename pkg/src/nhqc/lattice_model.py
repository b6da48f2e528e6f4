"""Single-particle Hamiltonians of the two non-Hermitian Aubry-Andre-Harper chains.

NHAAH1 has symmetric hopping ``J`` and a complex onsite potential
``V exp(-i 2 pi alpha n)``; NHAAH2 has unidirectional hopping ``J`` (left to
right) and a real potential ``2 V cos(2 pi alpha n)``.  Sites are labelled
``n = 1..L`` and the chain is closed periodically.

The quasiperiodic wavenumber ``alpha`` is normally the Fibonacci convergent
``F_{m-1}/F_m`` of the inverse golden ratio with ``F_m = L``, so the
potential is exactly periodic on the ring.
"""

from __future__ import annotations

import enum
import json
import math
from dataclasses import dataclass, replace
from fractions import Fraction
from typing import Union

import numpy as np

__all__ = [
    "Variant",
    "Boundary",
    "ModelSpec",
    "build_hamiltonian",
    "momentum_dual_hamiltonian",
    "fibonacci_approximant",
    "fibonacci_sizes",
    "is_fibonacci",
]


class Variant(str, enum.Enum):
    NHAAH1 = "NHAAH1"
    NHAAH2 = "NHAAH2"

    @classmethod
    def parse(cls, value) -> "Variant":
        if isinstance(value, cls):
            return value
        text = str(value).strip().upper()
        if text in ("1", "H1"):
            return cls.NHAAH1
        if text in ("2", "H2"):
            return cls.NHAAH2
        try:
            return cls(text)
        except ValueError:
            raise ValueError(f"unknown model variant {value!r}; use NHAAH1/NHAAH2 or 1/2") from None


class Boundary(str, enum.Enum):
    PBC = "PBC"


Alpha = Union[Fraction, float]


def fibonacci_sizes(upper: int) -> list[int]:
    """Fibonacci numbers 2, 3, 5, ... not exceeding ``upper``."""
    out = []
    a, b = 1, 2
    while b <= upper:
        out.append(b)
        a, b = b, a + b
    return out


def is_fibonacci(L: int) -> bool:
    return L in fibonacci_sizes(max(L, 2))


def fibonacci_approximant(L: int) -> Fraction:
    """Return ``F_{m-1}/F_m`` for ``L = F_m``.

    >>> fibonacci_approximant(610)
    Fraction(377, 610)
    """
    if not isinstance(L, (int, np.integer)) or L < 2:
        raise ValueError(f"L must be an integer >= 2, got {L!r}")
    prev, cur = 1, 2
    while cur < L:
        prev, cur = cur, prev + cur
    if cur == L:
        return Fraction(prev, cur)
    lower = prev
    raise ValueError(f"L={L} is not Fibonacci; nearest are {lower}, {cur}")


@dataclass(frozen=True)
class ModelSpec:
    """Parameters of one lattice model instance.

    ``alpha`` is either a reduced :class:`fractions.Fraction` ``p/q`` with
    ``0 < p < q`` or, for cross-checks against the incommensurate limit, a
    plain float.
    """

    variant: Variant
    J: float
    V: float
    L: int
    alpha: Alpha
    boundary: Boundary = Boundary.PBC

    def __post_init__(self):
        object.__setattr__(self, "variant", Variant.parse(self.variant))
        object.__setattr__(self, "boundary", Boundary(self.boundary))
        object.__setattr__(self, "J", float(self.J))
        object.__setattr__(self, "V", float(self.V))
        if not isinstance(self.L, (int, np.integer)) or isinstance(self.L, bool):
            raise ValueError(f"L must be an integer, got {self.L!r}")
        object.__setattr__(self, "L", int(self.L))
        if self.L < 2:
            raise ValueError(f"L must be >= 2, got {self.L}")
        if not (math.isfinite(self.J) and math.isfinite(self.V)):
            raise ValueError("J and V must be finite")
        alpha = self.alpha
        if isinstance(alpha, tuple):
            alpha = _make_fraction(*alpha)
        if isinstance(alpha, Fraction):
            # Fraction normalizes p/q, so check coprimality on the raw pair when available
            if not 0 < alpha.numerator < alpha.denominator:
                raise ValueError(f"alpha = {alpha} must satisfy 0 < p < q")
        elif isinstance(alpha, (float, np.floating)):
            alpha = float(alpha)
            if not 0.0 < alpha < 1.0:
                raise ValueError(f"irrational-mode alpha must lie in (0, 1), got {alpha}")
        else:
            raise TypeError(f"alpha must be a Fraction, (p, q) tuple or float, got {type(alpha).__name__}")
        object.__setattr__(self, "alpha", alpha)

    @classmethod
    def create(cls, variant, J: float, V: float, L: int, alpha=None) -> "ModelSpec":
        """Build a spec, defaulting ``alpha`` to the Fibonacci approximant with ``q = L``."""
        if alpha is None:
            alpha = fibonacci_approximant(L)
        return cls(variant=variant, J=J, V=V, L=L, alpha=alpha)

    @property
    def is_rational(self) -> bool:
        return isinstance(self.alpha, Fraction)

    @property
    def commensurate(self) -> bool:
        return self.is_rational and self.alpha.denominator == self.L

    @property
    def N(self) -> int:
        """Particle number at half filling."""
        return self.L // 2

    def with_params(self, **changes) -> "ModelSpec":
        return replace(self, **changes)

    def to_dict(self) -> dict:
        if self.is_rational:
            alpha = {"p": self.alpha.numerator, "q": self.alpha.denominator}
        else:
            alpha = self.alpha
        return {"variant": self.variant.value, "J": self.J, "V": self.V, "alpha": alpha, "L": self.L}

    @classmethod
    def from_dict(cls, data: dict) -> "ModelSpec":
        alpha = data.get("alpha")
        if isinstance(alpha, dict):
            alpha = _make_fraction(alpha["p"], alpha["q"])
        elif alpha is None:
            alpha = fibonacci_approximant(int(data["L"]))
        return cls(variant=data["variant"], J=data["J"], V=data["V"], L=int(data["L"]), alpha=alpha)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "ModelSpec":
        return cls.from_dict(json.loads(text))


def _make_fraction(p: int, q: int) -> Fraction:
    p, q = int(p), int(q)
    if q <= 0 or not 0 < p < q:
        raise ValueError(f"alpha = {p}/{q} must satisfy 0 < p < q")
    if math.gcd(p, q) != 1:
        raise ValueError(f"alpha = {p}/{q} is not in lowest terms (gcd = {math.gcd(p, q)})")
    return Fraction(p, q)


def _phases(alpha: Alpha, sites: np.ndarray) -> np.ndarray:
    """``2 pi alpha n`` reduced modulo 2 pi; exact integer reduction for rational alpha."""
    if isinstance(alpha, Fraction):
        p, q = alpha.numerator, alpha.denominator
        return 2.0 * np.pi * ((p * sites) % q) / q
    return 2.0 * np.pi * np.mod(alpha * sites, 1.0)


def _symmetric_ring(L: int, hop: float) -> np.ndarray:
    H = np.zeros((L, L), dtype=complex)
    idx = np.arange(L)
    H[idx, (idx + 1) % L] += hop
    H[(idx + 1) % L, idx] += hop
    return H


def build_hamiltonian(spec: ModelSpec) -> np.ndarray:
    """Dense ``L x L`` single-particle Hamiltonian of ``spec`` under PBC.

    Row/column ``k`` corresponds to site ``n = k + 1``.
    """
    L = spec.L
    sites = np.arange(1, L + 1)
    phase = _phases(spec.alpha, sites)
    if spec.variant is Variant.NHAAH1:
        H = _symmetric_ring(L, spec.J)
        H[np.diag_indices(L)] += spec.V * np.exp(-1j * phase)
    else:
        H = np.zeros((L, L), dtype=complex)
        idx = np.arange(L)
        # c_{n+1}^dagger c_n: amplitude moves from n to n+1 only
        H[(idx + 1) % L, idx] += spec.J
        H[np.diag_indices(L)] += 2.0 * spec.V * np.cos(phase)
    return H


def momentum_dual_hamiltonian(spec: ModelSpec) -> np.ndarray:
    """NHAAH2 rewritten in the plane-wave basis ``exp(i 2 pi alpha l n)``.

    The result has symmetric hopping ``V`` and diagonal ``J exp(-i 2 pi alpha l)``,
    i.e. an NHAAH1 matrix with the roles of ``J`` and ``V`` exchanged.  The
    transform is exact only when ``alpha = p/L``.
    """
    if spec.variant is not Variant.NHAAH2:
        raise ValueError("the momentum-space dual is defined for NHAAH2 only")
    if not spec.commensurate:
        raise ValueError(f"momentum dual requires a rational alpha with q = L = {spec.L}, got alpha = {spec.alpha}")
    dual = ModelSpec(Variant.NHAAH1, J=spec.V, V=spec.J, L=spec.L, alpha=spec.alpha)
    return build_hamiltonian(dual)
