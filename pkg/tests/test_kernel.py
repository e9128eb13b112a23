import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dosk.exceptions import DimensionError
from dosk.kernel import (
    FAMILIES, KernelSpec, PairwiseTerms, eval_weighted_kernel, gram_matrix, kernel_gradient, linearize,
    median_heuristic_gamma,
)

from oracles import central_difference, oracle_kernel

SPECS = {
    "linear": KernelSpec("linear"),
    "polynomial": KernelSpec("polynomial", offset_c=1.0, degree_d=3),
    "gaussian": KernelSpec("gaussian", gamma=0.7),
    "laplacian": KernelSpec("laplacian", gamma=0.7),
}


def test_gaussian_zero_weights_give_one():
    assert eval_weighted_kernel(SPECS["gaussian"], [0, 0], [1, 2], [-3, 7]) == 1.0


def test_linear_zero_weights_give_zero():
    assert eval_weighted_kernel(SPECS["linear"], [0, 0], [1, 2], [-3, 7]) == 0.0


def test_gaussian_known_value():
    k = eval_weighted_kernel(KernelSpec("gaussian", gamma=0.5), [1, 0], [1, 2], [3, 5])
    assert k == pytest.approx(0.1353352832366127, abs=1e-15)


def test_gaussian_self_similarity_is_exactly_one():
    x = [0.3, -1.2, 4.0]
    assert eval_weighted_kernel(SPECS["gaussian"], [0.5, 1, 0.2], x, x) == 1.0


def test_gaussian_gradient_known_value():
    g = kernel_gradient(KernelSpec("gaussian", gamma=0.5), [1, 0], [1, 2], [3, 5])
    np.testing.assert_allclose(g, [-0.5413411329464508, 0.0], atol=1e-15)


def test_gaussian_gradient_vanishes_for_equal_points():
    g = kernel_gradient(SPECS["gaussian"], [0.2, 0.9], [1.5, -2.0], [1.5, -2.0])
    np.testing.assert_array_equal(g, [0.0, 0.0])


def test_linear_gradient_known_value():
    np.testing.assert_allclose(kernel_gradient(SPECS["linear"], [1, 1], [1, 2], [3, 4]), [6.0, 16.0])


def test_laplacian_gradient_is_zero_where_coordinate_difference_vanishes():
    g = kernel_gradient(SPECS["laplacian"], [0.5, 0.0], [1.0, 2.0], [1.0, 5.0])
    np.testing.assert_array_equal(g, [0.0, 0.0])


@pytest.mark.parametrize("fn", [eval_weighted_kernel, kernel_gradient])
def test_dimension_mismatch_names_lengths(fn):
    with pytest.raises(DimensionError) as info:
        fn(SPECS["gaussian"], [1, 1, 1], [1, 2], [3, 4])
    assert info.value.lengths == (3, 2, 2)
    assert "len(w)=3" in str(info.value)


@pytest.mark.parametrize("family", FAMILIES)
def test_values_match_loop_oracle(family):
    spec = SPECS[family]
    rng = np.random.default_rng(3)
    for _ in range(20):
        w, x1, x2 = rng.uniform(0, 1, 4), rng.normal(size=4), rng.normal(size=4)
        assert eval_weighted_kernel(spec, w, x1, x2) == pytest.approx(oracle_kernel(spec, w, x1, x2), rel=1e-13)


@pytest.mark.parametrize("family", FAMILIES)
def test_gradient_matches_central_differences(family):
    spec = SPECS[family]
    rng = np.random.default_rng(11)
    for _ in range(20):
        w = rng.uniform(0.1, 0.9, 3)
        x1, x2 = rng.normal(size=3), rng.normal(size=3)
        analytic = kernel_gradient(spec, w, x1, x2)
        numeric = central_difference(lambda v: oracle_kernel(spec, v, x1, x2), w)
        for a, n in zip(analytic, numeric):
            if abs(n) < 1e-8:
                assert abs(a - n) < 1e-8
            else:
                assert abs(a - n) / abs(n) < 1e-5


def test_single_point_gaussian_gram():
    np.testing.assert_array_equal(gram_matrix(SPECS["gaussian"], [1.0, 1.0], [[0.3, 0.4]]), [[1.0]])


def test_linear_gram_of_unit_rows():
    np.testing.assert_array_equal(gram_matrix(SPECS["linear"], [1, 1], np.eye(2)), np.eye(2))


@pytest.mark.parametrize("family", FAMILIES)
def test_gram_is_symmetric_psd_and_entrywise(family):
    spec = SPECS[family]
    rng = np.random.default_rng(5)
    X = rng.uniform(size=(15, 3))
    w = rng.uniform(size=3)
    K = gram_matrix(spec, w, X)
    np.testing.assert_array_equal(K, K.T)
    assert np.linalg.eigvalsh(K).min() >= -1e-8 * len(X)
    for i in range(len(X)):
        for j in range(len(X)):
            assert K[i, j] == pytest.approx(eval_weighted_kernel(spec, w, X[i], X[j]), rel=1e-12, abs=1e-14)


@pytest.mark.parametrize("family", FAMILIES)
def test_cross_gram_matches_pointwise(family):
    spec = SPECS[family]
    rng = np.random.default_rng(8)
    X1, X2, w = rng.normal(size=(4, 2)), rng.normal(size=(6, 2)), rng.uniform(size=2)
    K = gram_matrix(spec, w, X1, X2)
    assert K.shape == (4, 6)
    assert K[2, 5] == pytest.approx(eval_weighted_kernel(spec, w, X1[2], X2[5]), rel=1e-12)


@pytest.mark.parametrize("family", FAMILIES)
def test_gradient_tensor_matches_pointwise(family):
    spec = SPECS[family]
    rng = np.random.default_rng(9)
    X, w = rng.normal(size=(5, 3)), rng.uniform(0.1, 1, 3)
    G = PairwiseTerms(spec, X).gradient_tensor(w)
    for i in range(5):
        for j in range(5):
            np.testing.assert_allclose(G[i, j], kernel_gradient(spec, w, X[i], X[j]), rtol=1e-12, atol=1e-14)


@pytest.mark.parametrize("family", FAMILIES)
def test_jacobian_product_matches_tensor_contraction(family):
    spec = SPECS[family]
    rng = np.random.default_rng(10)
    X, w, alpha = rng.normal(size=(7, 3)), rng.uniform(size=3), rng.normal(size=7)
    pw = PairwiseTerms(spec, X)
    expected = np.einsum("ijk,j->ik", pw.gradient_tensor(w), alpha)
    np.testing.assert_allclose(pw.jacobian_product(w, alpha), expected, rtol=1e-12, atol=1e-13)


@settings(max_examples=60, deadline=None)
@given(
    family=st.sampled_from(FAMILIES),
    j=st.integers(0, 2),
    shift=st.floats(-50, 50, allow_nan=False),
    seed=st.integers(0, 2**16),
)
def test_zero_weight_coordinate_is_ignored(family, j, shift, seed):
    rng = np.random.default_rng(seed)
    w = rng.uniform(size=3)
    w[j] = 0.0
    x1, x2 = rng.normal(size=3), rng.normal(size=3)
    moved = x1.copy()
    moved[j] += shift
    spec = SPECS[family]
    assert eval_weighted_kernel(spec, w, moved, x2) == eval_weighted_kernel(spec, w, x1, x2)


@pytest.mark.parametrize("family", FAMILIES)
def test_linearization_is_exact_at_anchor(family):
    rng = np.random.default_rng(12)
    X, w0, alpha = rng.uniform(size=(10, 3)), rng.uniform(size=3), rng.normal(size=10)
    lin = linearize(SPECS[family], w0, alpha, X)
    K = gram_matrix(SPECS[family], w0, X)
    assert np.max(np.abs(lin.predict(w0, alpha) - K @ alpha)) <= 1e-12


def test_linearization_with_zero_alpha_is_zero():
    rng = np.random.default_rng(1)
    X, w0 = rng.uniform(size=(6, 2)), rng.uniform(size=2)
    lin = linearize(SPECS["gaussian"], w0, np.zeros(6), X)
    np.testing.assert_array_equal(lin.A, np.zeros((6, 2)))
    np.testing.assert_array_equal(lin.predict(rng.uniform(size=2), np.zeros(6)), np.zeros(6))


@pytest.mark.parametrize("family", ["linear", "polynomial", "gaussian"])
def test_linearization_residual_is_superlinear(family):
    spec = SPECS[family]
    rng = np.random.default_rng(13)
    X, alpha = rng.uniform(size=(10, 3)), rng.normal(size=10)
    w0 = rng.uniform(0.2, 0.8, 3)
    direction = rng.normal(size=3)
    lin = linearize(spec, w0, alpha, X)
    ratios = []
    for h in (1e-1, 1e-2, 1e-3):
        w1 = w0 + h * direction
        r = np.linalg.norm(gram_matrix(spec, w1, X) @ alpha - lin.predict(w1, alpha))
        ratios.append(r / h)
    assert ratios[0] > ratios[1] > ratios[2]


def test_with_spec_shares_terms_and_checks_family():
    X = np.random.default_rng(0).normal(size=(4, 2))
    pw = PairwiseTerms(KernelSpec("gaussian", gamma=0.1), X)
    other = pw.with_spec(KernelSpec("gaussian", gamma=0.9))
    assert other.T is pw.T
    np.testing.assert_allclose(other.gram(np.ones(2)), gram_matrix(KernelSpec("gaussian", gamma=0.9), np.ones(2), X))
    with pytest.raises(ValueError):
        pw.with_spec(KernelSpec("laplacian"))


def test_median_heuristic_against_loop():
    X = np.random.default_rng(2).normal(size=(9, 3))
    d = sorted(math.dist(X[i], X[j]) for i in range(9) for j in range(i + 1, 9))
    med = (d[len(d) // 2 - 1] + d[len(d) // 2]) / 2 if len(d) % 2 == 0 else d[len(d) // 2]
    assert median_heuristic_gamma(X) == pytest.approx(1 / (2 * med**2), rel=1e-12)


def test_spec_validation_and_aliases():
    assert KernelSpec("rbf").family == "gaussian"
    assert KernelSpec("poly").family == "polynomial"
    with pytest.raises(ValueError):
        KernelSpec("gaussian", gamma=0.0)
    with pytest.raises(ValueError):
        KernelSpec("polynomial", degree_d=0)
    with pytest.raises(ValueError):
        KernelSpec("sigmoid")
    spec = KernelSpec("laplacian", gamma=0.3)
    assert KernelSpec.from_dict(spec.to_dict()) == spec
