import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import stats

from pervasive_pca.diagnose import align_signs
from pervasive_pca.experiments import convergence_replicate
from pervasive_pca.limit import (
    build_w,
    delta_method_variance,
    noise_variance_asymptotic,
    pair_decomposition,
    predict,
    predict_dual_eigenvector,
    predict_sample_eigenvalues,
    predict_scores,
    wishart_asymptotics,
)
from pervasive_pca.model import SpikeSpec
from pervasive_pca.pca import pca_decompose
from pervasive_pca.simulate import generate_dataset

FIVE_SPIKES = (12.0, 8.0, 0.7, 0.1, 0.02)
METABRIC_SIGMA2 = (0.133, 0.068, 0.044, 0.033, 0.031)


def brute_noise_var(s2, n, target, skip):
    return sum((s2[target] / s2[l] - 1) ** -2 for l in range(len(s2)) if l not in skip) / n


# --- W and its eigensystem ------------------------------------------------------


def test_scalar_w():
    we = build_w(np.ones((3, 1)), [4.0])
    np.testing.assert_array_equal(we.W, [[12.0]])
    assert we.dW[0] == 12.0
    np.testing.assert_array_equal(we.VW, [[1.0]])


def test_orthogonal_scores_give_diagonal_w():
    we = build_w(np.eye(2), [4.0, 1.0])
    np.testing.assert_array_equal(we.W, np.diag([4.0, 1.0]))
    np.testing.assert_array_equal(we.VW, np.eye(2))


def test_trace_of_w():
    Z = np.random.default_rng(0).standard_normal((40, 3))
    s2 = np.array([5.0, 2.0, 0.5])
    we = build_w(Z, s2)
    assert np.trace(we.W) == pytest.approx(float(np.sum(s2 * np.sum(Z**2, axis=0))), rel=1e-12)
    assert we.dW.sum() == pytest.approx(np.trace(we.W), rel=1e-12)


def test_w_rejects_shape_mismatch():
    with pytest.raises(ValueError):
        build_w(np.ones((4, 2)), [1.0])
    with pytest.raises(ValueError):
        build_w(np.ones((4, 1)), [0.0])


def test_near_degenerate_flag():
    assert build_w(np.eye(2), [4.0, 1.0]).near_degenerate() == []
    assert build_w(np.eye(3), [4.0, 3.9, 1.0]).near_degenerate() == [1]


# --- predicted scores and eigenvalues -------------------------------------------------


@pytest.mark.parametrize("s2", [0.5, 4.0, 30.0])
def test_constant_scores_predict_ones(s2):
    np.testing.assert_allclose(predict_scores(build_w(np.ones((3, 1)), [s2])), np.ones((1, 3)), atol=1e-15)


def test_orthogonal_prediction_hand_value():
    pred = predict_scores(build_w(np.eye(2), [4.0, 1.0]))
    assert pred[0, 0] == pytest.approx(math.sqrt(2 / 4) * 2 * 1)
    assert pred[0, 1] == 0.0


@settings(max_examples=50, deadline=None)
@given(st.integers(1, 5), st.integers(0, 10**6))
def test_predicted_rows_have_squared_norm_n(m, seed):
    rng = np.random.default_rng(seed)
    n = m + rng.integers(1, 30)
    s2 = np.sort(rng.uniform(0.1, 20, m))[::-1]
    we = build_w(rng.standard_normal((n, m)), s2)
    np.testing.assert_allclose(np.sum(predict_scores(we) ** 2, axis=1), n, rtol=1e-10)


def test_predicted_eigenvalues_arithmetic():
    we = build_w(np.ones((3, 1)), [4.0])
    np.testing.assert_allclose(predict_sample_eigenvalues(we, 1.0, 4, 4), [13 / 4, 0.25, 0.25, 0.25])
    np.testing.assert_array_equal(predict_sample_eigenvalues(we, 0.0, 4, 3)[1:], 0.0)


def test_simulated_eigenvalue_matches_limit():
    spec = SpikeSpec((12.0,), 1.0, 20_000, 20)
    ds = generate_dataset(spec, seed=21)
    we = build_w(ds.top_scores(), spec.sigma2)
    observed = pca_decompose(ds.X, 1).d[0] / spec.p
    limit = predict_sample_eigenvalues(we, 1.0, 20, 1)[0]
    assert abs(observed - limit) / observed < 0.05


# --- dual eigenvectors -------------------------------------------------------------


def test_constant_scores_dual_eigenvector():
    np.testing.assert_allclose(predict_dual_eigenvector(build_w(np.ones((4, 1)), [2.0]), 1), [0.5] * 4)


def test_orthogonal_dual_eigenvectors_are_unit_vectors():
    we = build_w(np.eye(3)[:, :2] * [1.0, 1.0], [4.0, 1.0])
    np.testing.assert_allclose(predict_dual_eigenvector(we, 1), [1, 0, 0], atol=1e-15)
    np.testing.assert_allclose(predict_dual_eigenvector(we, 2), [0, 1, 0], atol=1e-15)


def test_simulated_dual_eigenvector_aligns_with_limit():
    spec = SpikeSpec((12.0, 8.0), 1.0, 10_000, 30)
    ds = generate_dataset(spec, seed=22)
    res = pca_decompose(ds.X, 2)
    we = build_w(ds.top_scores(), spec.sigma2)
    for j in (1, 2):
        assert abs(res.U_hat[:, j - 1] @ predict_dual_eigenvector(we, j)) > 0.99


@settings(max_examples=50, deadline=None)
@given(st.integers(1, 6), st.integers(0, 10**6))
def test_predicted_dual_eigenvectors_orthonormal(m, seed):
    rng = np.random.default_rng(seed)
    n = m + int(rng.integers(1, 40))
    we = build_w(rng.standard_normal((n, m)), np.sort(rng.uniform(0.1, 20, m))[::-1])
    U = np.column_stack([predict_dual_eigenvector(we, j) for j in range(1, m + 1)])
    np.testing.assert_allclose(U.T @ U, np.eye(m), atol=1e-8)


# --- pair decomposition ------------------------------------------------------------


def test_two_spikes_have_no_noise():
    we = build_w(np.random.default_rng(1).standard_normal((10, 2)), [5.0, 2.0])
    np.testing.assert_array_equal(pair_decomposition(we, 1, 2).noise, 0.0)


def test_orthogonal_third_component_noise_sits_on_its_support():
    Z = np.zeros((5, 3))
    Z[0, 0], Z[1, 1], Z[2, 2] = 3.0, 2.0, 1.5
    we = build_w(Z, [4.0, 2.0, 1.0])
    noise = pair_decomposition(we, 1, 2).noise
    # W is diagonal, so v_1(W) and v_2(W) have no weight on component 3
    np.testing.assert_array_equal(noise, 0.0)
    Z[2, 0] = 1.0
    we = build_w(Z, [4.0, 2.0, 1.0])
    noise = pair_decomposition(we, 1, 2).noise
    assert np.any(noise[:, 2] != 0)
    np.testing.assert_array_equal(noise[:, [1, 3, 4]], 0.0)


@settings(max_examples=80, deadline=None)
@given(st.integers(2, 6), st.integers(0, 10**6), st.data())
def test_recomposition_identity(m, seed, data):
    rng = np.random.default_rng(seed)
    n = m + int(rng.integers(1, 30))
    we = build_w(rng.standard_normal((n, m)), np.sort(rng.uniform(0.1, 20, m))[::-1])
    j = data.draw(st.integers(1, m))
    k = data.draw(st.integers(1, m).filter(lambda x: x != j))
    dec = pair_decomposition(we, j, k)
    pred = predict_scores(we)[[j - 1, k - 1]]
    np.testing.assert_allclose(dec.recompose(we.Z_tilde), pred, atol=1e-10 * max(1.0, np.abs(pred).max()))


def test_predict_bundles_every_pair():
    pred = predict(np.random.default_rng(2).standard_normal((12, 3)), [6.0, 3.0, 1.0], 1.0)
    assert set(pred.pairs) == {(1, 2), (1, 3), (2, 3)}
    assert pred.predicted_scores.shape == (3, 12)
    assert pred.predicted_sample_eigenvalues.shape == (12,)
    assert set(pred.rotation) == set(pred.noise) == set(pred.scaling)


# --- noise variance and Wishart asymptotics --------------------------------------------


def test_five_spike_noise_sd_at_n60():
    nv = noise_variance_asymptotic(FIVE_SPIKES, 60, 1, 2)
    expected = math.sqrt(brute_noise_var(FIVE_SPIKES, 60, 0, (0, 1)))
    assert nv.sd_j == pytest.approx(expected, rel=1e-12)
    assert nv.sd_j == pytest.approx(0.008073, abs=5e-6)
    assert 1e-3 < nv.sd_j < 1e-1
    assert nv.sd_k > nv.sd_j


def test_two_spikes_zero_variance():
    nv = noise_variance_asymptotic((3.0, 1.0), 50, 1, 2)
    assert nv.var_j == nv.var_k == 0.0


def test_metabric_noise_sd_at_n100():
    nv = noise_variance_asymptotic(METABRIC_SIGMA2, 100, 1, 2)
    assert nv.var_j * 100 == pytest.approx(0.44569, abs=1e-5)
    assert nv.sd_j == pytest.approx(math.sqrt(brute_noise_var(METABRIC_SIGMA2, 100, 0, (0, 1))), rel=1e-12)
    assert nv.sd_j == pytest.approx(0.0668, abs=1e-4)


def test_tied_strengths_are_singular():
    with pytest.raises(ValueError):
        noise_variance_asymptotic((3.0, 2.0, 3.0), 10, 1, 2)


def test_wishart_example():
    cov, var = wishart_asymptotics((4.0, 1.0), 1)
    np.testing.assert_allclose(cov, np.diag([0.0, 4 / 9]))
    assert var == 32.0
    assert wishart_asymptotics((3.0, 1.0), 1)[1] == 18.0


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(0.05, 50), min_size=2, max_size=7, unique=True), st.data())
def test_wishart_own_diagonal_is_zero(s2, data):
    s2 = sorted(s2, reverse=True)
    if min(np.diff(s2[::-1])) < 1e-3:
        return
    j = data.draw(st.integers(1, len(s2)))
    cov, _ = wishart_asymptotics(s2, j)
    assert cov[j - 1, j - 1] == 0.0
    assert np.all(np.diag(cov) >= 0)


def test_wishart_law_monte_carlo():
    n, R = 10_000, 4000
    s2 = np.array([4.0, 1.0])
    draws = stats.wishart(df=n, scale=np.diag(s2)).rvs(size=R, random_state=np.random.default_rng(3))
    vals, vecs = np.linalg.eigh(draws)
    v1 = vecs[:, :, -1] * np.sign(vecs[:, 0, -1])[:, None]
    d1 = vals[:, -1] / n
    cov, var = wishart_asymptotics(s2, 1)
    emp_v = np.var(math.sqrt(n) * v1[:, 1], ddof=1)
    emp_d = np.var(math.sqrt(n) * (d1 - s2[0]), ddof=1)
    # 4000 replicates: relative se of a variance is sqrt(2/R) ~ 2.2%
    assert emp_v == pytest.approx(cov[1, 1], rel=0.08)
    assert emp_d == pytest.approx(var, rel=0.08)


@settings(max_examples=80, deadline=None)
@given(st.lists(st.floats(0.01, 100), min_size=3, max_size=8, unique=True), st.data())
def test_delta_method_equals_closed_form(s2, data):
    s2 = sorted(s2, reverse=True)
    if min(-np.diff(s2)) / s2[0] < 1e-6:
        return
    m = len(s2)
    j = data.draw(st.integers(1, m))
    k = data.draw(st.integers(1, m).filter(lambda x: x != j))
    nv = noise_variance_asymptotic(s2, 1.0, j, k)
    tau = sum(s2[l] ** 2 / (s2[j - 1] - s2[l]) ** 2 for l in range(m) if l + 1 not in (j, k))
    assert nv.var_j == pytest.approx(tau, rel=1e-9)
    assert delta_method_variance(s2, j, k) == pytest.approx(tau, rel=1e-9)


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(0.01, 100), min_size=3, max_size=8, unique=True), st.floats(1, 1e4))
def test_noise_variance_scales_as_one_over_n(s2, n):
    s2 = sorted(s2, reverse=True)
    if min(-np.diff(s2)) / s2[0] < 1e-6:
        return
    one = noise_variance_asymptotic(s2, 1.0, 1, 2)
    at_n = noise_variance_asymptotic(s2, n, 1, 2)
    assert at_n.var_j == pytest.approx(one.var_j / n, rel=1e-12)


# --- sample versus limit -------------------------------------------------------------


def test_sample_scores_approach_limit():
    spec = SpikeSpec((12.0, 8.0), 1.0, 500, 50)
    errs = [convergence_replicate(spec.with_p(p), seed=5)["score_maxabs"] for p in (500, 5000, 50_000)]
    assert errs[0] > errs[1] > errs[2]
    assert errs[2] < 0.05


def test_noise_free_rank_one_agrees_exactly():
    for p in (3, 40, 700):
        spec = SpikeSpec((2.0,), 0.0, p, 6)
        ds = generate_dataset(spec, seed=9)
        pred = predict_scores(build_w(ds.top_scores(), spec.sigma2))
        sample, _ = align_signs(pca_decompose(ds.X, 1).Zhat, pred)
        np.testing.assert_allclose(sample, pred, atol=1e-10)
