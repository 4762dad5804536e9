import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from pervasive_pca.model import (
    BlockDCTBasis,
    BlockSpec,
    FactorVector,
    HouseholderBasis,
    SpikeSpec,
    block_eigenvalues,
    block_size,
    eigen_model,
    materialize_covariance,
    pervasiveness_ratio,
    spike_eigenvalue,
    spike_eigenvalue_bounds,
)


def dense_eigenvalues(M):
    return np.sort(np.linalg.eigvalsh(M))[::-1]


# --- pervasiveness -----------------------------------------------------------


def test_pervasiveness_counts_nonzero_entries():
    assert pervasiveness_ratio([1, 0, 1, 0]) == 0.5
    assert pervasiveness_ratio([0, 0, 0]) == 0.0
    assert pervasiveness_ratio(FactorVector(np.ones(100))) == 1.0


def test_pervasiveness_threshold_ignores_small_loadings():
    v = [1.0, 1e-4, -2.0, 0.0]
    assert pervasiveness_ratio(v) == 0.75
    assert pervasiveness_ratio(v, threshold=1e-6) == 0.5


@given(st.lists(st.floats(-5, 5, allow_nan=False), min_size=1, max_size=60))
def test_pervasiveness_in_unit_interval(coef):
    assert 0.0 <= pervasiveness_ratio(coef) <= 1.0


# --- single-factor spike ------------------------------------------------------


@pytest.mark.parametrize("coef, s2, expected", [((1, 1, 1, 1), 1.0, 5.0), ((3, 4), 0.5, 25.5)])
def test_spike_eigenvalue_matches_dense_oracle(coef, s2, expected):
    v = FactorVector(coef, s2)
    assert spike_eigenvalue(v) == pytest.approx(expected, abs=1e-12)
    assert dense_eigenvalues(v.covariance())[0] == pytest.approx(expected, abs=1e-10)


def test_zero_factor_vector_rejected():
    with pytest.raises(ValueError):
        FactorVector((0.0, 0.0, 0.0))


@settings(max_examples=60, deadline=None)
@given(
    st.lists(st.floats(-3, 3, allow_nan=False).filter(lambda x: abs(x) > 1e-3), min_size=1, max_size=200),
    st.floats(0.05, 4),
)
def test_spike_eigenvalue_is_top_dense_eigenvalue(coef, s2):
    v = FactorVector(coef, s2)
    top = dense_eigenvalues(v.covariance())[0]
    assert spike_eigenvalue(v) == pytest.approx(top, rel=1e-10)


@settings(max_examples=60, deadline=None)
@given(
    st.integers(20, 400),
    st.floats(0.1, 1.0),
    st.floats(0.2, 2.0),
    st.floats(1.0, 3.0),
    st.integers(0, 2**31),
)
def test_linear_growth_bounds_on_pervasive_supports(p, ratio, lo, spread, seed):
    rng = np.random.default_rng(seed)
    k = max(1, int(ratio * p))
    coef = np.zeros(p)
    support = rng.choice(p, size=k, replace=False)
    coef[support] = rng.choice([-1, 1], size=k) * rng.uniform(lo, lo * spread, size=k)
    v = FactorVector(coef, 1.0)
    c1p, c2p = spike_eigenvalue_bounds(v)
    lam = spike_eigenvalue(v)
    assert c1p - 1e-9 <= lam <= c2p + 1e-9


# --- block models ------------------------------------------------------------


THREE_BLOCKS = BlockSpec(1.0, ((0.3, 0.9), (0.3, 0.6), (0.3, 0.3)), 100)


def test_three_block_spikes_match_dense_oracle():
    spec = block_eigenvalues(THREE_BLOCKS)
    np.testing.assert_allclose(spec.spikes, [27.1, 18.4, 9.7], rtol=0, atol=1e-10)
    dense = dense_eigenvalues(materialize_covariance(THREE_BLOCKS))
    np.testing.assert_allclose(dense[:3], [27.1, 18.4, 9.7], atol=1e-10)
    np.testing.assert_allclose(dense, spec.full(), atol=1e-10)


def test_uncorrelated_single_block_is_identity():
    spec = BlockSpec(1.0, ((1.0, 0.0),), 20)
    np.testing.assert_array_equal(materialize_covariance(spec), np.eye(20))
    np.testing.assert_allclose(block_eigenvalues(spec).full(), np.ones(20))


def test_single_block_top_eigenvalue():
    spec = BlockSpec(2.0, ((1.0, 0.5),), 10)
    assert block_eigenvalues(spec).spikes[0] == pytest.approx(11.0)
    assert dense_eigenvalues(materialize_covariance(spec))[0] == pytest.approx(11.0, abs=1e-12)


def test_two_variable_block_matrix():
    np.testing.assert_array_equal(materialize_covariance(BlockSpec(1.0, ((1.0, 0.5),), 2)), [[1, 0.5], [0.5, 1]])


def test_block_sizes_round_half_up():
    assert block_size(0.3, 100) == 30
    assert block_size(0.25, 10) == 3
    assert block_size(0.05, 10) == 1


@pytest.mark.parametrize(
    "blocks, p",
    [(((0.0, 0.5),), 10), (((0.5, 1.0),), 10), (((0.6, 0.1), (0.6, 0.1)), 10), (((0.01, 0.5),), 10)],
)
def test_invalid_block_specs_rejected(blocks, p):
    with pytest.raises(ValueError):
        BlockSpec(1.0, blocks, p)


@st.composite
def block_specs(draw, max_p=200):
    p = draw(st.integers(4, max_p))
    nb = draw(st.integers(1, 4))
    fracs = draw(st.lists(st.floats(0.05, 0.5), min_size=nb, max_size=nb))
    total = sum(fracs)
    if total > 1:
        fracs = [f / total * 0.99 for f in fracs]
    rhos = draw(st.lists(st.floats(0.0, 0.95), min_size=nb, max_size=nb))
    blocks = tuple(zip(fracs, rhos))
    sizes = [block_size(r, p) for r in fracs]
    if min(sizes) < 1 or sum(sizes) > p:
        blocks = ((0.5, rhos[0]),)
    return BlockSpec(draw(st.floats(0.1, 5.0)), blocks, p)


@settings(max_examples=100, deadline=None)
@given(block_specs(max_p=500))
def test_block_spectrum_matches_dense_eigensolver(spec):
    dense = dense_eigenvalues(materialize_covariance(spec))
    np.testing.assert_allclose(block_eigenvalues(spec).full(), dense, rtol=1e-9, atol=1e-12 * spec.sigma2)


def test_block_spike_over_p_approaches_rho_r():
    base = BlockSpec(1.5, ((0.3, 0.8), (0.2, 0.4)), 100)
    target = np.array([1.5 * 0.8 * 0.3, 1.5 * 0.4 * 0.2])
    devs = []
    for p in (100, 1000, 10000):
        spikes = block_eigenvalues(base.with_p(p)).spikes
        devs.append(np.max(np.abs(spikes / p - target) / target))
    assert devs[-1] < 0.02
    assert devs[0] > devs[1] > devs[2]


# --- spike models and bases ---------------------------------------------------


def test_no_spike_spec_materializes_to_tau2_identity():
    np.testing.assert_allclose(materialize_covariance(SpikeSpec((), 1.0, 3, 5)), np.eye(3), atol=1e-15)


@pytest.mark.parametrize("basis", ["blocks", "random"])
def test_spike_covariance_spectrum(basis):
    spec = SpikeSpec((12.0, 8.0), 1.0, 60, 10, basis=basis, basis_seed=3)
    dense = dense_eigenvalues(materialize_covariance(spec))
    np.testing.assert_allclose(dense[:2], [12 * 60, 8 * 60], rtol=1e-12)
    np.testing.assert_allclose(dense[2:], 1.0, atol=1e-10)


def test_default_spike_eigenvectors_are_block_indicators():
    em = eigen_model(SpikeSpec((3.0, 2.0), 1.0, 10, 5))
    np.testing.assert_allclose(em.eigenvector(0), np.r_[np.ones(5), np.zeros(5)] / np.sqrt(5), atol=1e-15)
    np.testing.assert_allclose(em.eigenvector(1), np.r_[np.zeros(5), np.ones(5)] / np.sqrt(5), atol=1e-15)
    assert pervasiveness_ratio(em.eigenvector(0)) == 0.5


@pytest.mark.parametrize(
    "basis",
    [BlockDCTBasis((4, 3, 5), 15), BlockDCTBasis((), 6), HouseholderBasis(17, 4, seed=9)],
    ids=["dct", "dct-empty", "householder"],
)
def test_bases_are_orthogonal(basis):
    V = basis.matrix()
    np.testing.assert_allclose(V.T @ V, np.eye(basis.p), atol=1e-12)
    X = np.random.default_rng(0).standard_normal((basis.p, 3))
    np.testing.assert_allclose(basis.apply(basis.project(X)), X, atol=1e-12)


def test_householder_basis_is_seeded():
    a = HouseholderBasis(30, 3, seed=5).matrix()
    np.testing.assert_array_equal(a, HouseholderBasis(30, 3, seed=5).matrix())
    assert not np.allclose(a, HouseholderBasis(30, 3, seed=6).matrix())


def test_decaying_tail_keeps_average():
    spec = SpikeSpec((5.0,), 2.0, 101, 10, tail="decaying")
    tail = spec.tail_eigenvalues()
    assert tail.sum() / spec.p == pytest.approx(2.0)
    assert np.all(np.diff(tail) < 0)


@pytest.mark.parametrize(
    "kwargs",
    [
        dict(sigma2=(8.0, 12.0), tau2=1.0, p=10, n=5),
        dict(sigma2=(8.0, 8.0), tau2=1.0, p=10, n=5),
        dict(sigma2=(1.0, 0.5, 0.2), tau2=1.0, p=10, n=2),
        dict(sigma2=(1.0,), tau2=-1.0, p=10, n=5),
        dict(sigma2=(1.0,), tau2=1.0, p=10, n=5, basis="nope"),
    ],
)
def test_invalid_spike_specs_rejected(kwargs):
    with pytest.raises(ValueError):
        SpikeSpec(**kwargs)


def test_materialize_refuses_large_p():
    with pytest.raises(ValueError):
        materialize_covariance(SpikeSpec((1.0,), 1.0, 10_000, 5))
