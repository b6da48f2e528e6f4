from fractions import Fraction

import numpy as np
import pytest
from hypothesis import assume, given, settings
from hypothesis import strategies as st

from nhqc.lattice_model import (
    ModelSpec,
    Variant,
    build_hamiltonian,
    fibonacci_approximant,
    fibonacci_sizes,
    momentum_dual_hamiltonian,
)
from nhqc.sweep import duality_check

H1, H2 = Variant.NHAAH1, Variant.NHAAH2


def test_hopping_only_nhaah1_is_symmetric_circulant():
    H = build_hamiltonian(ModelSpec(H1, J=1, V=0, L=4, alpha=Fraction(1, 4)))
    expected = np.array([[0, 1, 0, 1], [1, 0, 1, 0], [0, 1, 0, 1], [1, 0, 1, 0]], dtype=complex)
    np.testing.assert_array_equal(H, expected)


def test_nhaah1_potential_only():
    H = build_hamiltonian(ModelSpec(H1, J=0, V=1, L=3, alpha=Fraction(1, 3)))
    expected = np.diag([np.exp(-2j * np.pi / 3), np.exp(-4j * np.pi / 3), 1.0])
    np.testing.assert_allclose(H, expected, atol=1e-15)


def test_nhaah2_hopping_is_unidirectional():
    H = build_hamiltonian(ModelSpec(H2, J=1, V=0, L=4, alpha=Fraction(1, 4)))
    expected = np.zeros((4, 4))
    expected[1, 0] = expected[2, 1] = expected[3, 2] = 1.0
    expected[0, 3] = 1.0  # wrap: site 4 -> site 1
    np.testing.assert_array_equal(H, expected)
    assert np.all(np.triu(H, 1)[:, :-1] == 0)


def test_nhaah2_potential_is_cosine():
    spec = ModelSpec.create(H2, J=0.3, V=0.7, L=13)
    n = np.arange(1, 14)
    np.testing.assert_allclose(np.diag(build_hamiltonian(spec)).real, 1.4 * np.cos(2 * np.pi * 8 / 13 * n), atol=1e-14)


@pytest.mark.parametrize("L, expected", [(610, Fraction(377, 610)), (89, Fraction(55, 89)),
                                         (2, Fraction(1, 2)), (3, Fraction(2, 3))])
def test_fibonacci_approximant(L, expected):
    assert fibonacci_approximant(L) == expected


def test_fibonacci_rejects_other_sizes():
    with pytest.raises(ValueError, match="not Fibonacci; nearest are 89, 144"):
        fibonacci_approximant(100)


def test_fibonacci_sizes():
    assert fibonacci_sizes(700)[-6:] == [55, 89, 144, 233, 377, 610]


@pytest.mark.parametrize("kwargs", [
    dict(L=1, alpha=Fraction(1, 2)),
    dict(L=4, alpha=(2, 4)),
    dict(L=4, alpha=(5, 4)),
    dict(L=4, alpha=1.5),
])
def test_invalid_specs_rejected(kwargs):
    with pytest.raises(ValueError):
        ModelSpec(H1, J=1, V=1, **kwargs)


def test_default_alpha_is_commensurate():
    spec = ModelSpec.create(H2, 1, 0.5, 233)
    assert spec.alpha == Fraction(144, 233) and spec.commensurate


def test_json_roundtrip():
    spec = ModelSpec.create(H2, 1.0, 0.5, 89)
    assert ModelSpec.from_json(spec.to_json()) == spec
    assert spec.to_dict() == {"variant": "NHAAH2", "J": 1.0, "V": 0.5, "alpha": {"p": 55, "q": 89}, "L": 89}
    irr = ModelSpec(H1, 1.0, 2.0, 10, alpha=(np.sqrt(5) - 1) / 2)
    assert ModelSpec.from_json(irr.to_json()) == irr


def test_momentum_dual_swaps_roles():
    spec = ModelSpec.create(H2, J=1.0, V=0.5, L=610)
    D = momentum_dual_hamiltonian(spec)
    assert D[0, 1] == 0.5 and D[1, 0] == 0.5 and D[0, -1] == 0.5
    np.testing.assert_allclose(np.abs(np.diag(D)), 1.0)
    np.testing.assert_array_equal(D, build_hamiltonian(ModelSpec.create(H1, J=0.5, V=1.0, L=610)))


def test_momentum_dual_of_pure_potential_is_hermitian_hopping():
    D = momentum_dual_hamiltonian(ModelSpec(H2, J=0, V=1, L=4, alpha=Fraction(1, 4)))
    np.testing.assert_array_equal(D, build_hamiltonian(ModelSpec(H1, J=1, V=0, L=4, alpha=Fraction(1, 4))))


def test_momentum_dual_needs_commensurate_alpha():
    with pytest.raises(ValueError):
        momentum_dual_hamiltonian(ModelSpec(H2, 1, 1, 6, alpha=Fraction(1, 3)))
    with pytest.raises(ValueError):
        momentum_dual_hamiltonian(ModelSpec.create(H1, 1, 1, 8))


def _multiset_gap(a, b):
    from scipy.optimize import linear_sum_assignment

    cost = np.abs(a[:, None] - b[None, :])
    r, c = linear_sum_assignment(cost)
    return cost[r, c].max()


@settings(max_examples=25, deadline=None)
@given(J=st.floats(-2, 2), V=st.floats(-2, 2), L=st.sampled_from([5, 8, 13, 21, 34]))
def test_duality_preserves_spectrum(J, V, L):
    # double precision resolves the spectra only where both matrices are well conditioned
    assume(abs(V) < abs(J) - 0.05)
    spec = ModelSpec.create(H2, J, V, L)
    e_direct = np.linalg.eigvals(build_hamiltonian(spec))
    e_dual = np.linalg.eigvals(momentum_dual_hamiltonian(spec))
    assert _multiset_gap(e_direct, e_dual) < 1e-8


@settings(max_examples=15, deadline=None)
@given(J=st.floats(-2, 2), V=st.floats(-2, 2), L=st.sampled_from([5, 8, 13]))
def test_duality_preserves_spectrum_extended_precision(J, V, L):
    assert duality_check(J, V, L, dps=30)["eigenvalue_distance"] < 1e-8


@settings(max_examples=25, deadline=None)
@given(J=st.floats(-3, 3), L=st.integers(2, 40))
def test_pure_hopping_nhaah1_is_hermitian(J, L):
    H = build_hamiltonian(ModelSpec(H1, J, 0.0, L, alpha=0.37))
    assert np.array_equal(H, H.conj().T)


@settings(max_examples=25, deadline=None)
@given(J=st.floats(-3, 3).filter(lambda x: x != 0), V=st.floats(-3, 3), L=st.sampled_from([3, 5, 8, 13, 21]))
def test_nhaah2_offdiagonal_structure(J, V, L):
    H = build_hamiltonian(ModelSpec.create(H2, J, V, L))
    off = H - np.diag(np.diag(H))
    rows, cols = np.nonzero(off)
    assert len(rows) == L
    assert np.all(off[rows, cols] == J)
    assert np.all((rows - cols) % L == 1)


def test_construction_is_deterministic():
    spec = ModelSpec.create(H1, 1.0, 0.7, 233)
    a, b = build_hamiltonian(spec), build_hamiltonian(spec)
    assert a.tobytes() == b.tobytes()
