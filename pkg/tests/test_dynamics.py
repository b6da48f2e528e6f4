from fractions import Fraction

import mpmath
import numpy as np
import pytest
import scipy.linalg
from hypothesis import given, settings
from hypothesis import strategies as st

from nhqc.gaussian_dynamics import (
    OrbitalState,
    PropagatorOverflowError,
    RankCollapseError,
    RenormPolicy,
    cdw_orbitals,
    correlation_matrix,
    default_sample_times,
    evolve_trajectory,
    make_propagator,
    occupations,
    orthonormalize,
    write_density_csv,
)
from nhqc.lattice_model import ModelSpec, Variant, build_hamiltonian
from nhqc.oracle import exact_correlation

H1, H2 = Variant.NHAAH1, Variant.NHAAH2


def _corr_at(spec, t, policy=None):
    state = evolve_trajectory(cdw_orbitals(spec.L), build_hamiltonian(spec), [t], policy)[-1]
    return correlation_matrix(state).entries


def test_cdw_layout():
    st4 = cdw_orbitals(4)
    np.testing.assert_array_equal(st4.orbitals, np.eye(4)[:, [1, 3]])
    np.testing.assert_allclose(correlation_matrix(st4).entries, np.diag([0, 1, 0, 1]))
    st5 = cdw_orbitals(5)
    assert st5.particle_count == 2 and st5.time == 0.0
    np.testing.assert_array_equal(np.nonzero(occupations(st5))[0] + 1, [2, 4])
    with pytest.raises(ValueError):
        cdw_orbitals(1)


def test_propagator_trivial_cases():
    np.testing.assert_array_equal(make_propagator(np.zeros((3, 3)), 0.7).matrix, np.eye(3))
    U = make_propagator(np.diag([0, 1j]), 1.0).matrix
    np.testing.assert_allclose(U, np.diag([1, np.e]), rtol=1e-14)


def test_propagator_unitary_for_hermitian_h():
    H = build_hamiltonian(ModelSpec(H1, 1.0, 0.0, 8, Fraction(1, 8)))
    U = make_propagator(H, 0.1).matrix
    assert np.linalg.norm(U.conj().T @ U - np.eye(8), 2) < 1e-10


def test_propagator_matches_eigendecomposition():
    H = build_hamiltonian(ModelSpec.create(H1, 1.0, 2.0, 21))
    w, R = np.linalg.eig(H)
    ref = R @ np.diag(np.exp(-1j * w * 0.5)) @ np.linalg.inv(R)
    U = make_propagator(H, 0.5).matrix
    assert np.linalg.norm(U - ref, 2) <= 1e-10 * np.linalg.norm(ref, 2)


def test_propagator_overflow_is_reported():
    H = build_hamiltonian(ModelSpec.create(H1, 1.0, 2.0, 21))
    with pytest.raises(PropagatorOverflowError, match="smaller dt"):
        make_propagator(H, 400.0)
    with pytest.raises(ValueError):
        make_propagator(H, 0.0)


def test_unitary_limit_keeps_column_norms():
    H = build_hamiltonian(ModelSpec(H1, 1.0, 0.0, 34, Fraction(21, 34)))
    U = make_propagator(H, 1.0).matrix
    psi = cdw_orbitals(34).orbitals
    for _ in range(100):
        psi = U @ psi
    np.testing.assert_allclose(np.linalg.norm(psi, axis=0), 1.0, atol=1e-8)


@pytest.mark.parametrize("method", ["eigen", "step"])
def test_unitary_limit_matches_exact_evolution(method):
    spec = ModelSpec(H1, 1.0, 0.0, 34, Fraction(21, 34))
    H = build_hamiltonian(spec)
    psi0 = cdw_orbitals(34).orbitals
    t = 37.0
    exact = scipy.linalg.expm(-1j * t * H) @ psi0
    C_ref = (exact @ exact.conj().T).conj()
    C = _corr_at(spec, t, RenormPolicy(method=method))
    assert np.max(np.abs(C - C_ref)) < 1e-10


def _mp_evolved_orbitals(spec, t, dps=40):
    """``exp(-iHt)`` applied to the CDW orbitals by Taylor series in extended precision.

    Uses the three-diagonal-plus-corners structure of H, so each term costs O(L N).
    """
    mpmath.mp.dps = dps
    H = build_hamiltonian(spec)
    L = spec.L
    diag = [mpmath.mpc(complex(H[n, n])) for n in range(L)]
    up = [mpmath.mpc(complex(H[n, (n + 1) % L])) for n in range(L)]
    down = [mpmath.mpc(complex(H[n, (n - 1) % L])) for n in range(L)]
    psi0 = cdw_orbitals(L).orbitals
    cols = []
    for r in range(psi0.shape[1]):
        v = [mpmath.mpc(complex(x)) for x in psi0[:, r]]
        total = list(v)
        term = v
        k = 0
        while True:
            k += 1
            coef = mpmath.mpc(0, -t) / k
            term = [coef * (diag[n] * term[n] + up[n] * term[(n + 1) % L] + down[n] * term[(n - 1) % L])
                    for n in range(L)]
            total = [a + b for a, b in zip(total, term)]
            if k > 20 and max(abs(x) for x in term) < mpmath.mpf(10) ** (-dps + 5):
                break
        cols.append(total)
    # modified Gram-Schmidt in extended precision
    q = []
    for v in cols:
        for u in q:
            proj = mpmath.fsum(mpmath.conj(a) * b for a, b in zip(u, v))
            v = [b - proj * a for a, b in zip(u, v)]
        nrm = mpmath.sqrt(mpmath.fsum(abs(x) ** 2 for x in v))
        q.append([x / nrm for x in v])
    return np.array([[complex(x) for x in col] for col in q]).T


@pytest.mark.slow
def test_nonunitary_trajectory_matches_extended_precision():
    spec = ModelSpec.create(H1, 1.0, 2.0, 89)
    Q = _mp_evolved_orbitals(spec, 5.0)
    C_ref = (Q @ Q.conj().T).conj()
    for method in ("eigen", "step"):
        C = _corr_at(spec, 5.0, RenormPolicy(method=method))
        assert np.max(np.abs(C - C_ref)) < 1e-8, method


@pytest.mark.parametrize("variant", [H1, H2])
@pytest.mark.parametrize("t", [1.0, 5.0])
def test_correlation_matches_fock_oracle(variant, t):
    spec = ModelSpec(variant, 1.0, 2.0, 6, Fraction(1, 3))
    np.testing.assert_allclose(_corr_at(spec, t), exact_correlation(spec, t), atol=1e-8, rtol=0)


@pytest.mark.parametrize("variant, V", [(H1, 0.5), (H1, 2.0), (H2, 0.5), (H2, 2.0), (H2, 1.0)])
def test_eigen_and_step_paths_agree(variant, V):
    spec = ModelSpec.create(variant, 1.0, V, 55)
    H = build_hamiltonian(spec)
    times = default_sample_times(40.0, 4.0)
    a = evolve_trajectory(cdw_orbitals(55), H, times, RenormPolicy(method="step"))
    b = evolve_trajectory(cdw_orbitals(55), H, times, RenormPolicy(method="auto"))
    for sa, sb in zip(a, b):
        assert sa.time == sb.time
        np.testing.assert_allclose(correlation_matrix(sa).entries, correlation_matrix(sb).entries, atol=1e-8)


@pytest.mark.parametrize("variant, V", [(H1, 0.5), (H1, 2.0), (H2, 0.5), (H2, 1.0)])
def test_gauge_invariance(variant, V):
    spec = ModelSpec.create(variant, 1.0, V, 34)
    H = build_hamiltonian(spec)
    st0 = cdw_orbitals(34)
    rng = np.random.default_rng(11)
    G = np.eye(17) + 0.3 * (rng.normal(size=(17, 17)) + 1j * rng.normal(size=(17, 17)))
    twisted = OrbitalState(st0.orbitals @ G, 0.0)
    times = [1.0, 2.0, 5.0, 10.0, 30.0]
    for pol in (RenormPolicy(method="step"), RenormPolicy()):
        for sa, sb in zip(evolve_trajectory(st0, H, times, pol), evolve_trajectory(twisted, H, times, pol)):
            assert np.max(np.abs(correlation_matrix(sa).entries - correlation_matrix(sb).entries)) < 1e-10


def test_correlation_uses_column_space_only():
    rng = np.random.default_rng(5)
    psi = rng.normal(size=(12, 5)) + 1j * rng.normal(size=(12, 5))
    G = rng.normal(size=(5, 5)) + 1j * rng.normal(size=(5, 5))
    a = correlation_matrix(OrbitalState(psi)).entries
    b = correlation_matrix(OrbitalState(psi @ G)).entries
    assert np.max(np.abs(a - b)) < 1e-10


@settings(max_examples=20, deadline=None)
@given(variant=st.sampled_from([H1, H2]), J=st.floats(0.2, 2.0), V=st.floats(0.0, 2.0),
       L=st.sampled_from([8, 13, 21, 34]), t=st.floats(0.5, 60.0))
def test_number_conservation_and_purity(variant, J, V, L, t):
    spec = ModelSpec.create(variant, J, V, L)
    C = _corr_at(spec, t)
    assert abs(np.trace(C).real - L // 2) < 1e-8
    assert np.allclose(C, C.conj().T, atol=0)
    w = np.linalg.eigvalsh(C)
    assert np.all(np.minimum(np.abs(w), np.abs(w - 1)) < 1e-8)


def test_correlation_sites_subset_and_trace():
    spec = ModelSpec.create(H1, 1.0, 0.5, 13)
    state = evolve_trajectory(cdw_orbitals(13), build_hamiltonian(spec), [3.0])[0]
    full = correlation_matrix(state)
    part = correlation_matrix(state, range(2, 7))
    np.testing.assert_allclose(part.entries, full.block(range(2, 7)), atol=1e-13)
    assert full.trace == pytest.approx(6, abs=1e-8)


def test_rank_collapse_detected():
    psi = np.ones((6, 2), dtype=complex)
    with pytest.raises(RankCollapseError, match="t = 4"):
        orthonormalize(psi, time=4.0)
    with pytest.raises(RankCollapseError):
        correlation_matrix(OrbitalState(psi, 4.0))


def test_sample_time_validation():
    H = build_hamiltonian(ModelSpec.create(H1, 1.0, 0.5, 8))
    with pytest.raises(ValueError):
        evolve_trajectory(cdw_orbitals(8), H, [2.0, 1.0])
    with pytest.raises(ValueError):
        RenormPolicy(method="rk4")


def test_non_integer_sample_times_and_small_dt():
    spec = ModelSpec.create(H2, 1.0, 0.5, 21)
    H = build_hamiltonian(spec)
    times = [0.25, 1.0, 2.6]
    a = evolve_trajectory(cdw_orbitals(21), H, times, RenormPolicy(method="step", dt=0.1))
    b = evolve_trajectory(cdw_orbitals(21), H, times, RenormPolicy(method="eigen"))
    assert [s.time for s in a] == times
    for sa, sb in zip(a, b):
        np.testing.assert_allclose(correlation_matrix(sa).entries, correlation_matrix(sb).entries, atol=1e-9)


def test_trajectory_is_deterministic():
    spec = ModelSpec.create(H1, 1.0, 1.3, 34)
    H = build_hamiltonian(spec)
    a = evolve_trajectory(cdw_orbitals(34), H, default_sample_times(20))
    b = evolve_trajectory(cdw_orbitals(34), H, default_sample_times(20))
    assert all(x.orbitals.tobytes() == y.orbitals.tobytes() for x, y in zip(a, b))


def test_density_dump(tmp_path):
    spec = ModelSpec.create(H1, 1.0, 0.5, 8)
    states = evolve_trajectory(cdw_orbitals(8), build_hamiltonian(spec), [1.0, 2.0])
    write_density_csv(states, tmp_path / "d.csv")
    lines = (tmp_path / "d.csv").read_text().splitlines()
    assert lines[0] == "t,site,occupation" and len(lines) == 17
    assert sum(float(r.split(",")[2]) for r in lines[1:9]) == pytest.approx(4.0)
