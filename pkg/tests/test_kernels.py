import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from steinfclt import (
    EnumerationTooLargeError,
    FiniteSupport,
    UnsupportedModeError,
    ValidationError,
    centered_bernoulli,
    check_degenerate,
    cross_moment,
    hoeffding_decompose,
    lr_norm,
    product_kernel,
    rademacher,
    standardized_bernoulli,
    table_kernel,
)
from steinfclt.kernels import Kernel, check_symmetry, shifted_difference_moment, standard_normal_measure, zero_kernel

ZERO_ONE = FiniteSupport.from_atoms([[0.0, 0.5], [1.0, 0.5]])


def test_measure_validation():
    with pytest.raises(ValidationError):
        FiniteSupport.from_atoms([[0.0, 0.5], [1.0, 0.6]])
    m = standardized_bernoulli(0.3)
    assert m.mean == pytest.approx(0) and m.variance == pytest.approx(1)
    s0 = np.sqrt(0.21)
    assert m.abs_moment(3) == pytest.approx(0.21 * (0.49 + 0.09) / s0**3)


@pytest.mark.parametrize("p", [1, 2, 3, 4])
def test_product_rademacher_degenerate(p):
    rep = check_degenerate(product_kernel(p, rademacher()))
    assert rep.is_degenerate and rep.max_residual == 0


def test_xy_on_bernoulli_not_degenerate():
    m = FiniteSupport.from_atoms([[0.0, 0.5], [1.0, 0.5]])
    rep = check_degenerate(product_kernel(2, m))
    assert rep.is_degenerate is False and rep.max_residual == pytest.approx(0.5)


def test_zero_kernel_degenerate():
    assert check_degenerate(zero_kernel(3, rademacher())).max_residual == 0


def test_mc_degeneracy_never_certifies():
    rep = check_degenerate(product_kernel(2, standard_normal_measure()), rng=np.random.default_rng(0))
    assert rep.is_degenerate is None and rep.mode == "mc"
    with pytest.raises(UnsupportedModeError):
        check_degenerate(product_kernel(2, standard_normal_measure()))


def test_mc_degeneracy_refutes():
    k = Kernel(2, lambda x: x[..., 0] * x[..., 1] + 1.0, standard_normal_measure())
    assert check_degenerate(k, rng=np.random.default_rng(0)).is_degenerate is False


@pytest.mark.parametrize("p", [1, 2, 5])
def test_lr_norm_rademacher(p):
    assert lr_norm(product_kernel(p, rademacher()), 3) == pytest.approx(1.0)


def test_lr_norm_examples():
    assert lr_norm(product_kernel(1, centered_bernoulli(0.5)), 3) == pytest.approx(0.5)
    assert lr_norm(zero_kernel(2, rademacher()), 4) == 0
    v, se = lr_norm(product_kernel(1, standard_normal_measure()), 2, rng=np.random.default_rng(0), return_se=True)
    assert abs(v - 1) < 4 * se + 1e-3
    with pytest.raises(ValidationError):
        lr_norm(product_kernel(1, rademacher()), 0)


def test_enumeration_cap():
    big = FiniteSupport.from_atoms([[v, 0.1] for v in np.linspace(-1, 1, 10)])
    with pytest.raises(EnumerationTooLargeError):
        lr_norm(product_kernel(8, big), 2, cap=10**7)


def test_hoeffding_order_one():
    m = FiniteSupport.from_atoms([[1.0, 0.25], [3.0, 0.75]])
    h = hoeffding_decompose(product_kernel(1, m))
    assert h.mean == pytest.approx(2.5)
    assert np.allclose(h.components[0](np.array([[1.0], [3.0]])), [-1.5, 0.5])


def test_hoeffding_xy():
    h = hoeffding_decompose(product_kernel(2, ZERO_ONE))
    assert h.mean == pytest.approx(0.25)
    xs = np.array([[0.0], [1.0]])
    assert np.allclose(h.components[0](xs), (xs[:, 0] - 0.5) / 2)
    pairs = np.array(list(itertools.product([0.0, 1.0], repeat=2)))
    assert np.allclose(h.components[1](pairs), (pairs[:, 0] - 0.5) * (pairs[:, 1] - 0.5))


def test_hoeffding_degenerate_fixed_point():
    k = product_kernel(3, rademacher())
    h = hoeffding_decompose(k)
    x = np.array(list(itertools.product([-1.0, 1.0], repeat=3)))
    assert h.mean == 0
    assert np.allclose(h.components[2](x), k(x))
    for c in h.components[:2]:
        assert np.allclose(c.tensor(), 0)


def test_hoeffding_needs_finite_support():
    with pytest.raises(UnsupportedModeError):
        hoeffding_decompose(product_kernel(2, standard_normal_measure()))


def test_symmetry_check():
    m = ZERO_ONE
    with pytest.raises(ValidationError):
        check_symmetry(table_kernel([[0, 1], [2, 0]], m))
    assert check_symmetry(table_kernel([[0, 1], [1, 0]], m)) == 0


def test_cross_moment_and_shift():
    m = rademacher()
    assert cross_moment(product_kernel(2, m), product_kernel(2, m)) == pytest.approx(1)
    with pytest.raises(ValidationError):
        cross_moment(product_kernel(1, m), product_kernel(2, m))
    # x1 x2 - x2 x3 is 0 or +-2 with prob 1/2 each
    assert shifted_difference_moment(product_kernel(2, m), 3) == pytest.approx(4.0)


sym_tables = st.integers(2, 3).flatmap(
    lambda s: st.lists(st.floats(-3, 3), min_size=s * s, max_size=s * s).map(
        lambda v, s=s: np.array(v).reshape(s, s)))


@settings(max_examples=40, deadline=None)
@given(sym_tables, st.data())
def test_hoeffding_reconstructs_and_is_degenerate(T, data):
    s = T.shape[0]
    T = T + T.T
    w = np.array(data.draw(st.lists(st.floats(0.05, 1), min_size=s, max_size=s)))
    meas = FiniteSupport(np.arange(float(s)), w / w.sum())
    h = hoeffding_decompose(table_kernel(T, meas))
    pts = np.array(list(itertools.product(range(s), repeat=2)), dtype=float)
    assert np.allclose(h.reconstruct(pts), T[pts[:, 0].astype(int), pts[:, 1].astype(int)], atol=1e-10)
    for c in h.components:
        assert check_degenerate(c, tol=1e-9).is_degenerate


@settings(max_examples=30, deadline=None)
@given(st.integers(1, 3), st.floats(0.5, 4), st.floats(0.5, 4))
def test_lr_norm_monotone_in_r(p, r1, r2):
    k = product_kernel(p, standardized_bernoulli(0.3))
    lo, hi = sorted((r1, r2))
    assert lr_norm(k, lo) <= lr_norm(k, hi) + 1e-12
