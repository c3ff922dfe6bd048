import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from qoneway import qcore
from qoneway.qcore import DensityOperator, Povm, PureState


def _rng(seed=0):
    return np.random.default_rng(seed)


def _eig_support_oracle(a, cutoff=1e-10):
    # independent route: project onto eigenvectors with eigenvalue above cutoff
    w, v = np.linalg.eigh(a)
    keep = v[:, w > cutoff]
    return keep @ keep.conj().T


def _partial_trace_oracle(m, da, db, out):
    t = m.reshape(da, db, da, db)
    if out == 1:
        return np.einsum("ajbj->ab", t)
    return np.einsum("iaib->ab", t)


# -- mat_inv_sqrt -------------------------------------------------------------------

def test_mat_inv_sqrt_identity():
    np.testing.assert_allclose(qcore.mat_inv_sqrt(np.eye(2)), np.eye(2), atol=1e-12)


def test_mat_inv_sqrt_pseudo_inverse():
    np.testing.assert_allclose(qcore.mat_inv_sqrt(np.diag([4.0, 0.0])), np.diag([0.5, 0.0]), atol=1e-12)


def test_mat_inv_sqrt_random_psd_against_eig_oracle():
    rng = _rng(3)
    for rank in (1, 2, 3, 4):
        g = rng.standard_normal((4, rank)) + 1j * rng.standard_normal((4, rank))
        a = g @ g.conj().T
        b = qcore.mat_inv_sqrt(a)
        assert np.linalg.norm(b @ a @ b - _eig_support_oracle(a)) <= 1e-8


def test_mat_inv_sqrt_rejects_non_hermitian():
    with pytest.raises(qcore.InvalidOperatorError):
        qcore.mat_inv_sqrt(np.array([[1.0, 1.0], [0.0, 1.0]]))


def test_mat_inv_sqrt_cutoff_treats_tiny_eigenvalues_as_zero():
    b = qcore.mat_inv_sqrt(np.diag([1.0, 1e-12]))
    np.testing.assert_allclose(b, np.diag([1.0, 0.0]), atol=1e-12)


# -- trace distance --------------------------------------------------------------------

def test_trace_distance_examples():
    z0 = DensityOperator(qcore.proj(qcore.ket(0, 2)))
    z1 = DensityOperator(qcore.proj(qcore.ket(1, 2)))
    plus = DensityOperator(qcore.proj(np.array([1, 1]) / np.sqrt(2)))
    assert qcore.trace_distance(z0, z0) == pytest.approx(0.0, abs=1e-15)
    assert qcore.trace_distance(z0, z1) == pytest.approx(1.0)
    # oracle: general (non-Hermitian) eigensolver on the 2x2 difference
    oracle = 0.5 * np.sum(np.abs(np.linalg.eigvals(z0.matrix - plus.matrix)))
    assert qcore.trace_distance(z0, plus) == pytest.approx(oracle, abs=1e-12)
    assert qcore.trace_distance(z0, plus) == pytest.approx(0.70711, abs=1e-5)


def test_trace_distance_dim_mismatch():
    with pytest.raises(qcore.DimensionError):
        qcore.trace_distance(DensityOperator.maximally_mixed(2), DensityOperator.maximally_mixed(3))


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(2, 5))
def test_trace_distance_metric(seed, dim):
    rng = _rng(seed)
    a, b, c = (qcore.random_density(dim, rng) for _ in range(3))
    # symmetric up to eigensolver rounding
    assert abs(qcore.trace_distance(a, b) - qcore.trace_distance(b, a)) <= 1e-15
    assert qcore.trace_distance(a, c) <= qcore.trace_distance(a, b) + qcore.trace_distance(b, c) + 1e-9
    assert 0.0 <= qcore.trace_distance(a, b) <= 1.0 + 1e-12


# -- canonical purification ------------------------------------------------------------

def test_purification_of_pure_state():
    psi = qcore.canonical_purification(DensityOperator(qcore.proj(qcore.ket(0, 2))))
    np.testing.assert_allclose(np.abs(psi.amplitudes), [1, 0, 0, 0], atol=1e-12)


def test_purification_of_maximally_mixed_is_bell():
    psi = qcore.canonical_purification(DensityOperator.maximally_mixed(2))
    np.testing.assert_allclose(psi.amplitudes, np.array([1, 0, 0, 1]) / np.sqrt(2), atol=1e-12)


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(2, 4))
def test_purification_reduces_to_input(seed, dim):
    rho = qcore.random_density(dim, _rng(seed))
    psi = qcore.canonical_purification(rho)
    assert psi.dim == dim * dim
    red = _partial_trace_oracle(np.outer(psi.amplitudes, psi.amplitudes.conj()), dim, dim, 1)
    assert np.linalg.norm(red - rho.matrix) <= 1e-8


# -- Naimark ------------------------------------------------------------------------

def test_naimark_trivial_povm():
    p = Povm((np.eye(2) / 2, np.eye(2) / 2))
    dil = qcore.naimark_dilate(p)
    rho = qcore.random_density(2, _rng(1))
    np.testing.assert_allclose(dil.projective.probabilities(dil.embed(rho)), [0.5, 0.5], atol=1e-12)
    assert dil.projective.is_projective()
    assert dil.projective.dim == 4


def test_naimark_projective_input_unchanged_probabilities():
    p = Povm.computational(3)
    rho = qcore.random_density(3, _rng(2))
    dil = qcore.naimark_dilate(p)
    np.testing.assert_allclose(dil.projective.probabilities(dil.embed(rho)), p.probabilities(rho), atol=1e-9)


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(2, 4))
def test_naimark_preserves_probabilities(seed, outcomes):
    rng = _rng(seed)
    p = qcore.random_povm(2, outcomes, rng)
    rho = qcore.random_density(2, rng)
    dil = qcore.naimark_dilate(p)
    direct = np.array([np.real(np.trace(e @ rho.matrix)) for e in p.elements])
    np.testing.assert_allclose(dil.projective.probabilities(dil.embed(rho)), direct, atol=1e-9)
    # ancilla appended in |0>: embedding equals rho (x) |0><0|
    anc = np.zeros((dil.ancilla_dim, dil.ancilla_dim))
    anc[0, 0] = 1
    np.testing.assert_allclose(dil.embed(rho), np.kron(rho.matrix, anc), atol=1e-12)


def test_naimark_rejects_invalid_povm():
    with pytest.raises(qcore.InvalidOperatorError):
        Povm((np.eye(2), np.eye(2)))


# -- measure --------------------------------------------------------------------------

def test_measure_pure_z_basis():
    rho = DensityOperator(qcore.proj(qcore.ket(0, 2)))
    rng = _rng(0)
    assert {qcore.measure(rho, Povm.computational(2), rng) for _ in range(200)} == {0}


def test_measure_maximally_mixed_frequency():
    rng = _rng(11)
    p = Povm.computational(2)
    rho = DensityOperator.maximally_mixed(2)
    n = 100_000
    freq = np.mean([qcore.measure(rho, p, rng) == 0 for _ in range(n)])
    assert abs(freq - 0.5) <= 0.01


def test_measure_three_outcome_povm_within_3_sigma():
    rng = _rng(5)
    p = qcore.random_povm(2, 3, rng)
    rho = qcore.random_density(2, rng)
    exact = np.array([np.real(np.trace(e @ rho.matrix)) for e in p.elements])
    n = 20_000
    counts = np.bincount([qcore.measure(rho, p, rng) for _ in range(n)], minlength=3)
    sigma = np.sqrt(exact * (1 - exact) / n)
    assert np.all(np.abs(counts / n - exact) <= 3 * sigma)


def test_measure_deterministic_given_seed():
    p = qcore.random_povm(3, 4, _rng(0))
    rho = qcore.random_density(3, _rng(1))
    a = [qcore.measure(rho, p, _rng(9)) for _ in range(3)]
    b = [qcore.measure(rho, p, _rng(9)) for _ in range(3)]
    assert a == b


def test_measure_dim_mismatch():
    with pytest.raises(qcore.DimensionError):
        qcore.measure(DensityOperator.maximally_mixed(3), Povm.computational(2), _rng())


# -- partial trace ------------------------------------------------------------------

def test_partial_trace_product():
    rng = _rng(4)
    rho, sigma = qcore.random_density(2, rng), qcore.random_density(3, rng)
    joint = DensityOperator(np.kron(rho.matrix, sigma.matrix))
    np.testing.assert_allclose(qcore.partial_trace(joint, (2, 3), 1).matrix, rho.matrix, atol=1e-12)
    np.testing.assert_allclose(qcore.partial_trace(joint, (2, 3), 0).matrix, sigma.matrix, atol=1e-12)


def test_partial_trace_bell():
    bell = PureState(np.array([1, 0, 0, 1]) / np.sqrt(2))
    for side in (0, 1):
        np.testing.assert_allclose(qcore.partial_trace(bell, (2, 2), side).matrix, np.eye(2) / 2, atol=1e-12)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(2, 3), st.integers(2, 3))
def test_partial_trace_matches_index_contraction(seed, da, db):
    m = qcore.random_density(da * db, _rng(seed)).matrix
    for out in (0, 1):
        red = qcore.partial_trace(m, (da, db), out)
        assert np.max(np.abs(red - _partial_trace_oracle(m, da, db, out))) <= 1e-9
        assert abs(np.trace(red) - 1) <= 1e-9


def test_partial_trace_non_factorizable():
    with pytest.raises(qcore.DimensionError):
        qcore.partial_trace(DensityOperator.maximally_mixed(6), (4, 2), 0)


# -- types and serialisation ---------------------------------------------------------

def test_density_operator_validation():
    with pytest.raises(qcore.InvalidOperatorError):
        DensityOperator(np.diag([1.5, -0.5]))
    with pytest.raises(qcore.InvalidOperatorError):
        DensityOperator(np.diag([0.5, 0.4]))


def test_povm_sum_must_be_identity():
    with pytest.raises(qcore.InvalidOperatorError):
        Povm((np.diag([1.0, 0.0]), np.diag([0.0, 0.9])))


def test_cq_state_weights_validated():
    rho = DensityOperator.maximally_mixed(2)
    with pytest.raises(ValueError):
        qcore.CqState((0.7, 0.7), (rho, rho))


def test_values_are_immutable():
    rho = DensityOperator.maximally_mixed(2)
    with pytest.raises(ValueError):
        rho.matrix[0, 0] = 1


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(1, 5), st.integers(1, 5))
def test_matrix_serialisation_round_trip_exact(seed, r, c):
    rng = _rng(seed)
    m = rng.standard_normal((r, c)) + 1j * rng.standard_normal((r, c))
    back = qcore.loads_matrix(qcore.dumps_matrix(m))
    assert back.shape == m.shape
    assert np.array_equal(back, m)
