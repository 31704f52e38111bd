import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from steinfclt import (
    DomainError,
    ShapeMismatchError,
    StepMatrixFunction,
    ValidationError,
    WeightArray,
    bound_weighted_pre,
    complete_weights,
    cubic_weight_sum,
    gammas_con,
    homsum_diagnostics,
    homsum_spec,
    product_kernel,
    prop_m_criterion,
    rademacher,
    sigma_n_m,
    triple_intersect_sum,
    variance_sigma,
)
from steinfclt.bounds import delta_T, phi_n, sigma_n_all
from steinfclt.uprocess import incomplete_random_weights


def test_cubic_examples():
    assert cubic_weight_sum(complete_weights(3, 2)) == 24
    assert cubic_weight_sum(WeightArray.empty(3, 2)) == 0
    assert cubic_weight_sum(WeightArray.from_dict(3, 2, {(1, 2): 2.0})) == 16


def test_triple_examples():
    w = complete_weights(3, 2)
    assert triple_intersect_sum(w, w, w) == 27
    assert triple_intersect_sum(w, WeightArray.empty(3, 2), w) == 0
    one = WeightArray.from_dict(4, 2, {(1, 2): 1.0})
    assert triple_intersect_sum(one, one, complete_weights(4, 2)) == 5
    with pytest.raises(ShapeMismatchError):
        triple_intersect_sum(w, complete_weights(4, 2), w)


def _brute(wi, wj, wk):
    return sum(abs(a * b * c) for (J, a), (K, b), (L, c) in itertools.product(wi.items(), wj.items(), wk.items())
               if set(J) & set(K) and set(L) & (set(J) | set(K)))


@settings(max_examples=40, deadline=None)
@given(st.integers(2, 7), st.lists(st.integers(1, 3), min_size=3, max_size=3), st.integers(0, 10**6))
def test_triple_matches_bruteforce(n, ps, seed):
    rng = np.random.default_rng(seed)
    ws = []
    for p in ps:
        p = min(p, n)
        w = incomplete_random_weights(n, p, 0.6, rng)
        ws.append(WeightArray(n, p, w.subsets, rng.uniform(-1, 1, len(w))))
    assert triple_intersect_sum(*ws) == pytest.approx(_brute(*ws), rel=1e-10, abs=1e-12)


def test_bound_examples():
    rad = rademacher()
    rep = bound_weighted_pre(homsum_spec([complete_weights(4, 1)], rad, [2.0]))
    assert rep.terms["term1_pre"] == pytest.approx(1 / 3)
    assert rep.multiplier == "M"
    zero = homsum_spec([WeightArray.empty(4, 2)], rad, [1.0])
    assert bound_weighted_pre(zero).total == 0


@settings(max_examples=15, deadline=None)
@given(st.integers(4, 9), st.integers(0, 10**6))
def test_sharp_not_above_simple(n, seed):
    rng = np.random.default_rng(seed)
    rad = rademacher()
    w = [incomplete_random_weights(n, 1, 0.8, rng), incomplete_random_weights(n, 2, 0.6, rng)]
    w = [x if len(x) else complete_weights(n, x.p) for x in w]
    spec = homsum_spec(w, rad, variance_sigma([product_kernel(x.p, rad) for x in w], w))
    assert bound_weighted_pre(spec, "sharp").total <= bound_weighted_pre(spec, "simple").total + 1e-12


def test_sigma_examples():
    n = 6
    rad = rademacher()
    spec = homsum_spec([complete_weights(n, 1)], rad, [math.sqrt(n)])
    for m in range(1, n + 1):
        assert np.allclose(sigma_n_m(spec, m), [[1.0]])
    assert delta_T(spec, 0) == pytest.approx((1 / n, 1.0))
    spec2 = homsum_spec([complete_weights(n, 1), complete_weights(n, 3)], rad, [1.0, 1.0])
    S = sigma_n_all(spec2)
    assert np.all(S[:2, 1, 1] == 0) and np.all(S[:, 0, 1] == 0)
    with pytest.raises(DomainError):
        sigma_n_m(spec, 0)


def test_sigma_sum_is_unit_under_variance_normalization():
    rad = rademacher()
    w = [complete_weights(7, 2)]
    spec = homsum_spec(w, rad, variance_sigma([product_kernel(2, rad)], w))
    assert sigma_n_all(spec).sum() / spec.n == pytest.approx(1.0)
    assert delta_T(homsum_spec([WeightArray.empty(5, 1)], rad, [1.0]), 0) == (0.0, 0.0)


def test_gamma_examples():
    n = 50
    spec = homsum_spec([complete_weights(n, 1)], rademacher(), [math.sqrt(n)])
    rep = gammas_con(spec, StepMatrixFunction.constant([[1.0]]))
    assert rep.terms["gamma3"] == pytest.approx(12 * math.sqrt(math.log(2 * n) / n))
    assert rep.terms["int_phi_diff_sq"] == pytest.approx(0.0, abs=1e-24)
    rep0 = gammas_con(spec, StepMatrixFunction.constant([[0.0]]))
    assert rep0.terms["int_phi_diff_sq"] == pytest.approx(1.0)
    with pytest.raises(ValidationError):
        gammas_con(spec, StepMatrixFunction(np.array([0, 1 / 3, 1.0]), np.ones((2, 1, 1))))


def test_phi_n_matches_sigma():
    rad = rademacher()
    w = [complete_weights(8, 2)]
    spec = homsum_spec(w, rad, variance_sigma([product_kernel(2, rad)], w))
    pn = phi_n(spec)
    assert np.allclose(pn.mats[:, 0, 0] ** 2, sigma_n_all(spec)[:, 0, 0])


def test_homsum_diagnostics():
    A = np.zeros((3, 3))
    A[0, 1] = A[1, 0] = 1.0
    d = homsum_diagnostics(A)
    assert (d["rho"], d["Gamma"], d["lambda_star"], d["sigma2"]) == pytest.approx((1, 1, 1, 2))
    assert homsum_diagnostics(np.zeros((3, 3)))["degenerate"]
    with pytest.raises(ValidationError):
        homsum_diagnostics(np.eye(2))


@settings(max_examples=20, deadline=None)
@given(st.integers(3, 7), st.integers(0, 10**6))
def test_diagnostic_index_sums_bruteforce(n, seed):
    B = np.random.default_rng(seed).uniform(-1, 1, (n, n))
    A = np.triu(B, 1) + np.triu(B, 1).T
    S = homsum_diagnostics(A)["S"]
    a = np.abs(A)
    tri = [(i, j, k) for i, j, k in itertools.product(range(n), repeat=3) if len({i, j, k}) == 3]
    assert S[3] == pytest.approx(sum(a[i, j] * a[j, k] * a[k, i] for i, j, k in tri))
    assert S[2] == pytest.approx(sum(a[i, j] * a[i, k] * a[i, l] for i, j, k, l in itertools.product(range(n), repeat=4)
                                     if len({i, j, k, l}) == 4))


def test_prop_m_criterion():
    assert prop_m_criterion(0.1, 0.01) == pytest.approx(2.121, abs=1e-3)
    assert prop_m_criterion(0.0, 0.5) == 0
    assert prop_m_criterion(3.0, 1.0) == 0
    with pytest.raises(DomainError):
        prop_m_criterion(1.0, 0.0)
