"""Free-fermion entanglement dynamics in non-Hermitian Aubry-Andre-Harper quasicrystals."""

__version__ = "0.1.0"

from .lattice_model import (  # noqa: E402
    ModelSpec,
    Variant,
    build_hamiltonian,
    fibonacci_approximant,
    momentum_dual_hamiltonian,
)

__all__ = [
    "__version__",
    "ModelSpec",
    "Variant",
    "build_hamiltonian",
    "fibonacci_approximant",
    "momentum_dual_hamiltonian",
]
