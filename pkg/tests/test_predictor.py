import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from pathmon.errors import DimensionMismatch, InvalidInput, SingularVss
from pathmon.predictor import (
    LinearFunctional,
    bias_of_eblp,
    build_predictor,
    calibrate_bias,
    estimate_mu,
    generalized_inverse,
    mspe_blp,
    mspe_eblp,
    mspe_projection,
    partition_moments,
    predict,
    predict_via_mu,
    projection_onto_sample,
    sample,
)
from pathmon.selection import PathSelection, select_paths
from pathmon.spectral import CovarianceModel
from pathmon.topology import build_routing_matrix, path_values

from conftest import SMALL_TOPOLOGIES, line3, two_node


def small_case(name):
    G = build_routing_matrix(SMALL_TOPOLOGIES[name]())
    cov = CovarianceModel(np.linspace(0.5, 2.5, G.n_links))
    return G, cov


def functionals(n_paths, rng, n_random=3):
    out = [LinearFunctional.network_average(n_paths)]
    out += [LinearFunctional.indicator(n_paths, i) for i in (0, n_paths - 1)]
    for _ in range(n_random):
        ids = rng.permutation(n_paths)
        half = max(1, n_paths // 3)
        out.append(LinearFunctional.group_difference(n_paths, ids[:half], ids[half:2 * half]))
    out.append(LinearFunctional(rng.normal(size=n_paths), label="dense"))
    return out


def explicit_eblp(G, cov, sel, functional, y_s):
    """Textbook form with explicit inverses, kept independent of the package."""
    s = list(sel.selected)
    r = [i for i in range(G.n_paths) if i not in sel.selected]
    Gs, Gr = G.entries[s], G.entries[r]
    Sigma = np.diag(cov.variances)
    C = np.diag(np.sqrt(cov.variances))
    Vss_inv = np.linalg.inv(Gs @ Sigma @ Gs.T)
    M = Gs.T @ Vss_inv @ Gs
    M_ginv = C @ np.linalg.pinv(C @ M @ C) @ C
    mu_hat = M_ginv @ Gs.T @ Vss_inv @ y_s
    l = functional.weights
    return l[s] @ y_s + l[r] @ Gr @ mu_hat


def test_generalized_inverse_properties():
    rng = np.random.default_rng(5)
    A = rng.normal(size=(5, 3)) @ rng.normal(size=(3, 6))
    P = generalized_inverse(A)
    np.testing.assert_allclose(A @ P @ A, A, atol=1e-10)
    np.testing.assert_allclose(P @ A @ P, P, atol=1e-10)
    np.testing.assert_allclose(P, np.linalg.pinv(A), atol=1e-10)
    assert not generalized_inverse(np.zeros((2, 3))).any()


def test_two_node_partition():
    G = build_routing_matrix(two_node())
    part = partition_moments(G, CovarianceModel.identity(2), PathSelection.of([0]))
    # the two links are independent, so sampling one says nothing about the other
    np.testing.assert_array_equal(part.prediction_operator, [[0.0]])
    assert part.Vss[0, 0] == 1 and part.Vrr[0, 0] == 1


def test_line3_partition_blocks():
    G = build_routing_matrix(line3())
    s = [G.path_id("A", "B"), G.path_id("B", "C")]
    part = partition_moments(G, CovarianceModel.identity(4), PathSelection.of(s))
    ac = part.remainder.index(G.path_id("A", "C"))
    np.testing.assert_array_equal(part.Vrs[ac], [1, 1])
    np.testing.assert_array_equal(part.Vss, np.eye(2))
    # A->C is exactly A->B plus B->C
    np.testing.assert_allclose(part.prediction_operator[ac], [1, 1], atol=1e-12)


def test_abilene_partition_matches_full_covariance(abilene_G, abilene_cov):
    sel = select_paths(abilene_G, abilene_cov, 10)
    part = partition_moments(abilene_G, abilene_cov, sel)
    V = abilene_G.entries @ np.diag(abilene_cov.variances) @ abilene_G.entries.T
    s, r = list(part.selected), list(part.remainder)
    np.testing.assert_allclose(part.Vss, V[np.ix_(s, s)], rtol=1e-12)
    np.testing.assert_allclose(part.Vsr, V[np.ix_(s, r)], rtol=1e-12)
    np.testing.assert_allclose(part.Vrr, V[np.ix_(r, r)], rtol=1e-12)
    np.testing.assert_allclose(part.prediction_operator @ part.Vss, part.Vrs, atol=1e-9)


def test_singular_vss_rejected():
    G = build_routing_matrix(line3())
    ab, bc, ac = G.path_id("A", "B"), G.path_id("B", "C"), G.path_id("A", "C")
    with pytest.raises(SingularVss):
        partition_moments(G, CovarianceModel.identity(4), PathSelection.of([ab, bc, ac]))


def test_partition_dimension_checks(abilene_G):
    with pytest.raises(DimensionMismatch):
        partition_moments(abilene_G, CovarianceModel.identity(29), PathSelection.of([0]))
    with pytest.raises(InvalidInput):
        partition_moments(abilene_G, CovarianceModel.identity(30), PathSelection.of([110]))


def test_functional_constructors():
    mean = LinearFunctional.network_average(4)
    assert mean.evaluate([1, 2, 3, 6]) == pytest.approx(3.0)
    diff = LinearFunctional.group_difference(4, [0, 1], [3])
    assert diff.evaluate([1, 3, 100, 5]) == pytest.approx(-3.0)
    with pytest.raises(InvalidInput):
        LinearFunctional.group_difference(4, [0, 1], [1])
    with pytest.raises(InvalidInput):
        LinearFunctional.group_difference(4, [], [1])


def test_estimate_mu_identity_sample_of_everything():
    G = build_routing_matrix(two_node())
    part = partition_moments(G, CovarianceModel.identity(2), PathSelection.of([0, 1]))
    np.testing.assert_allclose(estimate_mu([3.0, 5.0], part), [3.0, 5.0], rtol=1e-12)


def test_estimate_mu_line3_single_path():
    G = build_routing_matrix(line3())
    part = partition_moments(G, CovarianceModel.identity(4), PathSelection.of([G.path_id("A", "C")]))
    mu = estimate_mu([4.0], part)
    # the 4 ms is split evenly over A->B and B->C; unseen links stay at zero
    np.testing.assert_allclose(mu, [2, 0, 2, 0], atol=1e-12)
    assert mu[1] == 0.0 and mu[3] == 0.0


def test_estimate_mu_exact_at_full_rank(abilene_G, abilene_cov):
    sel = select_paths(abilene_G, abilene_cov, 30)
    part = partition_moments(abilene_G, abilene_cov, sel)
    x = np.linspace(2, 36, 30)
    np.testing.assert_allclose(estimate_mu(sample(path_values(abilene_G, x), sel), part), x, rtol=1e-9)


def test_estimate_mu_zero_on_uncovered_links(abilene_G, abilene_cov):
    sel = select_paths(abilene_G, abilene_cov, 4)
    part = partition_moments(abilene_G, abilene_cov, sel)
    rng = np.random.default_rng(1)
    mu = estimate_mu(rng.uniform(5, 50, size=4), part)
    uncovered = np.flatnonzero(part.Gs.sum(axis=0) == 0)
    assert uncovered.size > 0
    assert np.all(mu[uncovered] == 0.0)


def test_estimate_mu_batch_matches_rows(abilene_G, abilene_cov):
    sel = select_paths(abilene_G, abilene_cov, 6)
    part = partition_moments(abilene_G, abilene_cov, sel)
    Y = np.random.default_rng(2).uniform(5, 50, size=(4, 6))
    batch = estimate_mu(Y, part)
    for row, y in zip(batch, Y):
        np.testing.assert_allclose(row, estimate_mu(y, part), rtol=1e-12)
    with pytest.raises(DimensionMismatch):
        estimate_mu(np.ones(5), part)


@pytest.mark.parametrize("name", list(SMALL_TOPOLOGIES))
def test_both_prediction_forms_agree_with_explicit_oracle(name):
    G, cov = small_case(name)
    rng = np.random.default_rng(len(name))
    for k in range(1, G.rank() + 1):
        sel = select_paths(G, cov, k)
        part = partition_moments(G, cov, sel)
        y_s = sample(path_values(G, rng.uniform(1, 10, size=G.n_links)), sel)
        for f in functionals(G.n_paths, rng):
            a = predict(build_predictor(G, cov, sel, f), y_s)
            b = predict_via_mu(part, f, y_s)
            c = explicit_eblp(G, cov, sel, f, y_s)
            scale = max(abs(c), 1.0)
            assert abs(a - b) <= 1e-9 * scale
            assert abs(a - c) <= 1e-9 * scale


def test_prediction_exact_at_full_rank(abilene_G, abilene_cov):
    sel = select_paths(abilene_G, abilene_cov, 30)
    model = build_predictor(abilene_G, abilene_cov, sel, LinearFunctional.network_average(110))
    x = np.random.default_rng(0).uniform(2, 36, size=(20, 30))
    y = path_values(abilene_G, x)
    np.testing.assert_allclose(predict(model, sample(y, sel)), model.functional.evaluate(y), rtol=1e-9)


def test_predict_scalar_and_batch(abilene_G, abilene_cov):
    sel = select_paths(abilene_G, abilene_cov, 5)
    model = build_predictor(abilene_G, abilene_cov, sel, LinearFunctional.network_average(110))
    assert isinstance(predict(model, np.ones(5)), float)
    assert predict(model, np.ones((3, 5))).shape == (3,)
    with pytest.raises(DimensionMismatch):
        predict(model, np.ones(4))
    with pytest.raises(DimensionMismatch):
        build_predictor(abilene_G, abilene_cov, sel, LinearFunctional.network_average(100))


@pytest.mark.parametrize("name", list(SMALL_TOPOLOGIES))
def test_mspe_forms_agree(name):
    G, cov = small_case(name)
    rng = np.random.default_rng(7)
    for k in range(1, G.rank() + 1):
        part = partition_moments(G, cov, select_paths(G, cov, k))
        B = projection_onto_sample(part)
        np.testing.assert_allclose(B @ B, B, atol=1e-9)
        np.testing.assert_allclose(B, B.T, atol=1e-9)
        for f in functionals(G.n_paths, rng):
            a, b = mspe_blp(part, f), mspe_projection(part, f)
            assert a >= -1e-12
            assert abs(a - b) <= 1e-9 * max(abs(a), 1e-12) + 1e-12


def test_mspe_and_bias_vanish_at_full_rank(abilene_G, abilene_cov):
    part = partition_moments(abilene_G, abilene_cov, select_paths(abilene_G, abilene_cov, 30))
    f = LinearFunctional.network_average(110)
    assert abs(mspe_blp(part, f)) < 1e-9
    assert abs(bias_of_eblp(part, f, np.linspace(2, 36, 30))) < 1e-9


def test_mspe_decreases_when_adding_paths(abilene_G, abilene_cov):
    f = LinearFunctional.network_average(110)
    full = select_paths(abilene_G, abilene_cov, 30).selected
    values = [mspe_blp(partition_moments(abilene_G, abilene_cov, PathSelection.of(full[:k])), f)
              for k in range(1, 31)]
    assert all(b <= a + 1e-9 for a, b in zip(values, values[1:]))


def test_line3_bias_example():
    G = build_routing_matrix(line3())
    part = partition_moments(G, CovarianceModel.identity(4), PathSelection.of([G.path_id("A", "B")]))
    f = LinearFunctional.indicator(6, G.path_id("B", "C"))
    # B->C shares no link with A->B, so the prediction is zero and the bias is -mu(B->C)
    assert bias_of_eblp(part, f, [1.0, 2.0, 3.0, 4.0]) == pytest.approx(-3.0)
    assert mspe_eblp(part, f, [1.0, 2.0, 3.0, 4.0]) == pytest.approx(1.0 + 9.0)


@pytest.mark.parametrize("name", list(SMALL_TOPOLOGIES))
def test_error_decomposition_monte_carlo(name):
    G, cov = small_case(name)
    rng = np.random.default_rng(100 + len(name))
    mu = rng.uniform(1, 10, size=G.n_links)
    x = mu + rng.normal(size=(100_000, G.n_links)) * cov.factor
    y = path_values(G, x)
    k = max(1, G.rank() // 2)
    sel = select_paths(G, cov, k)
    for f in functionals(G.n_paths, rng, n_random=1):
        model = build_predictor(G, cov, sel, f)
        err = predict(model, sample(y, sel)) - f.evaluate(y)
        bias = bias_of_eblp(model.partition, f, mu)
        total = mspe_eblp(model.partition, f, mu)
        n = err.size
        assert abs(err.mean() - bias) <= 3 * err.std(ddof=1) / np.sqrt(n) + 1e-12
        sq = err ** 2
        assert abs(sq.mean() - total) <= 3 * sq.std(ddof=1) / np.sqrt(n) + 1e-12
        # with the true mean plugged in, the predictor is unbiased and attains the BLP MSPE
        ideal = err - bias
        sq = ideal ** 2
        assert abs(sq.mean() - mspe_blp(model.partition, f)) <= 3 * sq.std(ddof=1) / np.sqrt(n) + 1e-12


def test_calibration_makes_reference_epoch_exact(abilene_G, abilene_cov, synthetic_series):
    f = LinearFunctional.network_average(110)
    model = build_predictor(abilene_G, abilene_cov, select_paths(abilene_G, abilene_cov, 3), f)
    x0 = synthetic_series.values[0]
    calibrated = calibrate_bias(model, x0)
    y0 = path_values(abilene_G, x0)
    assert predict(calibrated, sample(y0, model.selection)) == pytest.approx(f.evaluate(y0), rel=1e-12)
    again = calibrate_bias(calibrated, x0)
    assert again.bias_offset == calibrated.bias_offset
    with pytest.raises(DimensionMismatch):
        calibrate_bias(model, x0[:29])


def test_calibration_offset_zero_at_full_rank(abilene_G, abilene_cov, synthetic_series):
    f = LinearFunctional.network_average(110)
    model = build_predictor(abilene_G, abilene_cov, select_paths(abilene_G, abilene_cov, 30), f)
    assert abs(calibrate_bias(model, synthetic_series.values[5]).bias_offset) < 1e-9


@settings(max_examples=25, deadline=None)
@given(st.floats(-50, 50), st.integers(0, 431))
def test_calibration_ignores_previous_offset(shift, epoch):
    # the offset is recomputed from scratch, so any earlier offset is discarded
    G = build_routing_matrix(line3())
    cov = CovarianceModel.identity(4)
    f = LinearFunctional.network_average(6)
    model = build_predictor(G, cov, PathSelection.of([0]), f)
    x = np.array([1.0, 2.0, 3.0, 4.0]) + epoch % 7
    shifted = calibrate_bias(type(model)(model.selection, model.partition, model.functional, shift), x)
    assert shifted.bias_offset == pytest.approx(calibrate_bias(model, x).bias_offset, abs=1e-9)
