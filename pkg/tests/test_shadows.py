import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from qoneway import qcore, shadows

PAULIS = [
    np.eye(2),
    np.array([[0, 1], [1, 0]]),
    np.array([[0, -1j], [1j, 0]]),
    np.diag([1, -1]),
]

# sha256 of the sorted canonical state bytes, frozen from the first build
FROZEN_CHECKSUMS = {
    1: "de8f52810f262c28ae86a246f23eb8fc3b51077aa1b995b83b15c1144fc217ad",
    2: "cd6c5363f1bf48b8ef4f94dfd410de61c3d2643599953e6a2046c7ac3aaab298",
    3: "8f359fd6d45f04db84f101a028e18c813bcdf1afed9708e2094a31bc125075eb",
}


def _brute_force_stabilizers(n):
    """Candidates with amplitudes in {0, +-1, +-i}, kept when exactly 2^n Paulis have |<P>| = 1."""
    paulis = [
        _kron_all(ps) for ps in itertools.product(PAULIS, repeat=n)
    ]
    found = []
    for amps in itertools.product([0, 1, -1, 1j, -1j], repeat=2**n):
        v = np.array(amps, dtype=complex)
        if not v.any():
            continue
        v /= np.linalg.norm(v)
        ex = np.array([abs(np.vdot(v, p @ v)) for p in paulis])
        if np.sum(np.isclose(ex, 1.0)) != 2**n:
            continue
        if all(abs(np.vdot(w, v)) < 1 - 1e-9 for w in found):
            found.append(v)
    return found


def _kron_all(ps):
    out = np.array([[1.0]])
    for p in ps:
        out = np.kron(out, p)
    return out


def _random_hermitian(dim, rng):
    g = rng.standard_normal((dim, dim)) + 1j * rng.standard_normal((dim, dim))
    return 0.5 * (g + g.conj().T)


# -- enumeration ------------------------------------------------------------------------

@pytest.mark.parametrize("n,count", [(1, 6), (2, 60), (3, 1080), (4, 36720)])
def test_count_formula(n, count):
    assert shadows.stabilizer_count(n) == count
    assert shadows.enumerate_stabilizer_states(n).count == count


@pytest.mark.parametrize("n", [1, 2])
def test_enumeration_matches_brute_force(n):
    table = shadows.enumerate_stabilizer_states(n)
    brute = _brute_force_stabilizers(n)
    assert len(brute) == table.count
    for v in brute:
        table.index_of(v)


def test_single_qubit_states_are_pauli_eigenstates():
    table = shadows.enumerate_stabilizer_states(1)
    s = 1 / math.sqrt(2)
    for v in ([1, 0], [0, 1], [s, s], [s, -s], [s, 1j * s], [s, -1j * s]):
        table.index_of(np.array(v))


@pytest.mark.parametrize("n", [1, 2, 3])
def test_one_design_identity(n):
    table = shadows.enumerate_stabilizer_states(n)
    frame = sum(np.outer(v, v.conj()) for v in table.states)
    np.testing.assert_allclose(frame, table.count / table.dim * np.eye(table.dim), atol=1e-8)


def test_single_qubit_frame_is_three_identity():
    table = shadows.enumerate_stabilizer_states(1)
    np.testing.assert_allclose(table.states.T @ table.states.conj(), 3 * np.eye(2), atol=1e-12)


@pytest.mark.parametrize("n", [1, 2, 3])
def test_no_duplicates_up_to_phase(n):
    st_ = shadows.enumerate_stabilizer_states(n).states
    gram = np.abs(st_.conj() @ st_.T)
    np.fill_diagonal(gram, 0)
    assert gram.max() <= 1 - 1e-9


@pytest.mark.parametrize("n", [1, 2, 3])
def test_table_checksum_is_stable(n):
    assert shadows.enumerate_stabilizer_states(n).checksum == FROZEN_CHECKSUMS[n]


def test_unsupported_size():
    with pytest.raises(shadows.UnsupportedSizeError):
        shadows.enumerate_stabilizer_states(5)
    with pytest.raises(shadows.UnsupportedSizeError):
        shadows.snapshot_distribution(np.eye(32) / 32)


@pytest.mark.parametrize("n", [1, 2, 3, 4])
def test_index_fits_in_quadratic_bits(n):
    assert shadows.enumerate_stabilizer_states(n).index_bits() <= 2 * n * n + 3 * n


# -- sampling ---------------------------------------------------------------------------

def test_snapshot_distribution_of_zero_state():
    table = shadows.enumerate_stabilizer_states(1)
    probs = shadows.snapshot_distribution(qcore.proj(qcore.ket(0, 2)), table)
    s = 1 / math.sqrt(2)
    assert probs[table.index_of(np.array([0, 1]))] == pytest.approx(0.0, abs=1e-15)
    assert probs[table.index_of(np.array([1, 0]))] == pytest.approx(1 / 3)
    for v in ([s, s], [s, -s], [s, 1j * s], [s, -1j * s]):
        assert probs[table.index_of(np.array(v))] == pytest.approx(1 / 6)
    assert probs.sum() == pytest.approx(1.0)


def test_empirical_frequencies_within_3_sigma():
    table = shadows.enumerate_stabilizer_states(2)
    psi = qcore.random_pure_state(4, np.random.default_rng(3))
    probs = shadows.snapshot_distribution(psi.density().matrix, table)
    n = 100_000
    sample = shadows.sample_shadow(psi.density(), n, np.random.default_rng(4), table)
    freq = np.bincount(sample.indices, minlength=table.count) / n
    sigma = np.sqrt(probs * (1 - probs) / n)
    assert np.all(np.abs(freq - probs) <= 3 * sigma + 1e-12)
    assert sample.T == n and sample.checksum == table.checksum


def test_sampling_deterministic():
    rho = qcore.random_density(4, np.random.default_rng(0))
    a = shadows.sample_shadow(rho, 50, np.random.default_rng(7))
    b = shadows.sample_shadow(rho, 50, np.random.default_rng(7))
    assert a == b


# -- snapshot estimator --------------------------------------------------------------------

def test_snapshot_of_identity_is_one():
    for n in (1, 2):
        table = shadows.enumerate_stabilizer_states(n)
        np.testing.assert_allclose(shadows.snapshot_values(np.eye(2**n), table), 1.0, atol=1e-12)


def test_snapshot_projector_on_itself():
    table = shadows.enumerate_stabilizer_states(1)
    s = table.index_of(np.array([1, 0]))
    assert shadows.snapshot_estimate(qcore.proj(qcore.ket(0, 2)), s, table) == pytest.approx(2.0)


def test_snapshot_rejects_non_hermitian():
    table = shadows.enumerate_stabilizer_states(1)
    with pytest.raises(qcore.InvalidOperatorError):
        shadows.snapshot_estimate(np.array([[0, 1], [0, 0]]), 0, table)


def test_snapshot_values_match_single_estimates():
    table = shadows.enumerate_stabilizer_states(2)
    a = _random_hermitian(4, np.random.default_rng(1))
    vals = shadows.snapshot_values(a, table)
    for s in range(0, table.count, 7):
        assert vals[s] == pytest.approx(shadows.snapshot_estimate(a, s, table), abs=1e-12)


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(1, 2))
def test_exact_unbiasedness_and_variance(seed, n):
    rng = np.random.default_rng(seed)
    dim = 2**n
    a = _random_hermitian(dim, rng)
    psi = qcore.random_pure_state(dim, rng)
    table = shadows.enumerate_stabilizer_states(n)
    # independent summation over the table, not via exact_moments
    probs = np.array([abs(np.vdot(s, psi.amplitudes)) ** 2 for s in table.states]) * dim / table.count
    vals = np.array([((dim + 1) * np.vdot(s, a @ s) - np.trace(a)).real for s in table.states])
    target = np.vdot(psi.amplitudes, a @ psi.amplitudes).real
    assert abs(probs @ vals - target) <= 1e-8
    mean, var = shadows.exact_moments(a, psi.density().matrix, table)
    assert mean == pytest.approx(probs @ vals, abs=1e-10)
    assert var <= 4 * np.linalg.norm(a) ** 2


# -- median of means ------------------------------------------------------------------------

def test_median_of_means_constant():
    assert shadows.median_of_means([2.5] * 12, 4) == 2.5


def test_median_of_means_lower_median():
    assert shadows.median_of_means([0, 0, 0, 100], 4) == 0.0
    assert shadows.median_of_means([1, 2, 3, 4], 4) == 2.0


def test_median_of_means_drops_remainder():
    assert shadows.median_of_means([1, 1, 5, 5, 1000], 2) == 1.0


def test_median_of_means_errors():
    with pytest.raises(ValueError):
        shadows.median_of_means([], 1)
    with pytest.raises(ValueError):
        shadows.median_of_means([1.0], 2)


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(-1e6, 1e6), min_size=1, max_size=60), st.integers(1, 8))
def test_batch_median_of_means_agrees(vals, K):
    if len(vals) < K:
        return
    arr = np.array(vals)[None, :]
    assert shadows.batch_median_of_means(arr, K)[0] == shadows.median_of_means(vals, K)


def test_budget_constants():
    K, size = shadows.shadow_budget(1.0, 0.5, 0.1)
    assert K == math.ceil(8 * math.log(10))
    assert size == 128


def test_shadow_guarantee_small_run():
    # 200-repetition version of the acceptance criterion
    rng = np.random.default_rng(12)
    table = shadows.enumerate_stabilizer_states(1)
    a = qcore.proj(qcore.ket(0, 2))
    rho = qcore.random_density(2, rng)
    eps, delta = 0.25, 0.1
    K, size = shadows.shadow_budget(np.linalg.norm(a) ** 2, eps, delta)
    target = np.trace(a @ rho.matrix).real
    hits = sum(abs(shadows.shadow_estimate(a, shadows.sample_shadow(rho, K * size, rng, table), K, table) - target) <= eps
               for _ in range(200))
    assert hits / 200 >= (1 - delta) - 3 * math.sqrt(delta * (1 - delta) / 200)


# -- files -------------------------------------------------------------------------------

def test_shadow_file_round_trip():
    sample = shadows.sample_shadow(np.eye(4) / 4, 25, np.random.default_rng(0))
    assert shadows.loads_shadow(shadows.dumps_shadow(sample)) == sample


def test_shadow_file_validation():
    data = shadows.shadow_to_dict(shadows.sample_shadow(np.eye(2) / 2, 5, np.random.default_rng(0)))
    with pytest.raises(ValueError):
        shadows.shadow_from_dict(dict(data, checksum="0" * 64))
    with pytest.raises(ValueError):
        shadows.shadow_from_dict(dict(data, T=6))
    with pytest.raises(ValueError):
        shadows.shadow_from_dict(dict(data, indices=[0, 1, 2, 3, 6]))


def test_estimate_rejects_foreign_table():
    sample = shadows.ShadowSample(1, [0, 1], checksum="abc")
    with pytest.raises(ValueError):
        shadows.shadow_estimate(np.eye(2), sample, 1)
