import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from steinfclt import DomainError, ShapeMismatchError, StepPath, batch_sup_norm, combine, eval_path, grid_index, sup_norm

RAMP = StepPath(np.arange(5.0))


def test_eval_examples():
    assert np.array_equal(eval_path(StepPath.zeros(6, 3), 0.7), np.zeros(3))
    assert eval_path(RAMP, 0.5)[0] == 2
    assert eval_path(RAMP, 0.49)[0] == 1
    assert RAMP(1.0)[0] == 4 and RAMP(0.0)[0] == 0


def test_grid_index_float_slack():
    assert grid_index(0.3, 10) == 3
    assert grid_index(0.7, 10) == 7


@pytest.mark.parametrize("t", [-0.1, 1.0001, float("nan")])
def test_eval_domain_error(t):
    with pytest.raises(DomainError):
        eval_path(RAMP, t)


def test_sup_norm_examples():
    assert sup_norm(StepPath.zeros(3, 2)) == 0
    assert sup_norm(StepPath(np.tile([3.0, 4.0], (4, 1)))) == pytest.approx(5.0)
    assert sup_norm(StepPath([1.0, -3.0, 2.0])) == 3.0


def test_combine_examples():
    q = StepPath(np.random.default_rng(0).normal(size=(5, 2)))
    assert sup_norm(combine(1, q, -1, q)) == 0
    assert np.array_equal(combine(2, StepPath.zeros(4, 2), 1, q).values, q.values)
    with pytest.raises(ShapeMismatchError):
        combine(1, q, 1, StepPath.zeros(5, 2))


def test_bad_shapes():
    with pytest.raises(ShapeMismatchError):
        StepPath(np.zeros((1, 2)))


def test_values_immutable():
    with pytest.raises(ValueError):
        RAMP.values[0] = 1.0


def test_csv_roundtrip(tmp_path):
    p = StepPath(np.random.default_rng(1).normal(size=(8, 3)))
    assert np.array_equal(StepPath.from_csv(p.to_csv()).values, p.values)
    f = tmp_path / "p.csv"
    p.to_csv(f)
    assert np.array_equal(StepPath.from_csv(f).values, p.values)


def test_csv_rejects_bad_grid():
    with pytest.raises(ShapeMismatchError):
        StepPath.from_csv("t,v1\n0,1\n0.7,2\n1,3\n")


def test_batch_sup_norm_matches_single():
    B = np.random.default_rng(2).normal(size=(6, 5, 2))
    assert np.allclose(batch_sup_norm(B), [sup_norm(StepPath(b)) for b in B])


vals = st.integers(1, 6).flatmap(
    lambda n: st.integers(1, 3).flatmap(
        lambda d: st.tuples(*[arrays(float, (n + 1, d), elements=st.floats(-1e6, 1e6)) for _ in range(2)])))


@settings(max_examples=60, deadline=None)
@given(vals, st.floats(-10, 10), st.floats(-10, 10))
def test_sup_norm_subadditive_and_homogeneous(pq, a, b):
    p, q = StepPath(pq[0]), StepPath(pq[1])
    lhs = sup_norm(combine(a, p, b, q))
    assert lhs <= abs(a) * sup_norm(p) + abs(b) * sup_norm(q) + 1e-9 * (1 + lhs)
    assert sup_norm(combine(a, p, 0, q)) == pytest.approx(abs(a) * sup_norm(p), rel=1e-12, abs=1e-12)


@settings(max_examples=60, deadline=None)
@given(st.integers(1, 50), st.floats(0, 1))
def test_grid_index_is_floor(n, t):
    m = grid_index(t, n)
    assert 0 <= m <= n
    assert m / n <= t + 1e-12 and (m == n or t < (m + 1) / n)
