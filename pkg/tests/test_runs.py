import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from steinfclt import ValidationError
from steinfclt import runs as R
from steinfclt.gaussian import sqrt_roundtrip_error
from steinfclt.mc import covariance_zscores, empirical_covariance
from steinfclt.seeding import replicate


def test_spec_validation():
    for bad in [(10, 0.0, (1,)), (10, 0.5, (1, 2)), (10, 0.5, (5,)), (10, 0.5, ())]:
        with pytest.raises(ValidationError):
            R.RunsSpec(*bad)
    s = R.RunsSpec(10, 0.5, (3, 1))
    assert [s.N(q) for q in (1, 2, 3)] == [2, 1, 1]


def test_path_examples():
    n, p = 12, 0.3
    s = R.RunsSpec(n, p, (1,))
    ones = R.runs_paths_from_xi(s, np.ones(n))[0, :, 0]
    assert ones[-1] == pytest.approx(math.sqrt(n * (1 - p) / p))
    s3 = R.RunsSpec(n, p, (3, 2))
    zeros = R.runs_paths_from_xi(s3, np.zeros(n))[0]
    m = np.arange(n + 1)
    for i, r in enumerate(s3.rs):
        assert np.allclose(zeros[:, i], -m * p**r / s3.sigma(r))


def test_torus_windows():
    s = R.RunsSpec(6, 0.5, (2,))
    xi = np.array([1, 0, 0, 0, 0, 1.0])
    # the only 2-run is the wrap-around window starting at position 6
    assert R.runs_paths_from_xi(s, xi)[0, -1, 0] == pytest.approx((1 - 6 * 0.25) / s.sigma(2))


def test_runs_weight_examples():
    p = 0.37
    assert R.runs_weight((2, 4), 3, 10, p) == pytest.approx(p)
    assert R.runs_weight((1, 9), 3, 10, p) == pytest.approx(p)
    assert R.runs_weight((1, 5), 3, 10, p) == 0


@settings(max_examples=40, deadline=None)
@given(st.integers(1, 4), st.integers(9, 14), st.integers(0, 10**6))
def test_runs_weight_is_window_count(r, n, seed):
    rng = np.random.default_rng(seed)
    j = int(rng.integers(1, r + 1))
    J = tuple(sorted(rng.choice(np.arange(1, n + 1), j, replace=False)))
    p = 0.4
    assert R.runs_weight(J, r, n, p) == pytest.approx(p ** (r - j) * R.cyclic_window_count(J, r, n))


def test_decomposition_examples():
    assert R.decomposition_residual(1, 0.3) == 0
    assert R.window_expansion(np.array([0.5, 0.5]), 0.5) == pytest.approx(0.75)
    assert R.decomposition_residual(3, 0.3) <= 1e-15
    for r in range(1, 5):
        for p in (0.1, 0.5, 0.77):
            assert R.decomposition_residual(r, p) <= 1e-12


@settings(max_examples=25, deadline=None)
@given(st.integers(9, 30), st.integers(0, 10**6))
def test_window_expansion_reconstructs_paths(n, seed):
    rng = np.random.default_rng(seed)
    spec = R.RunsSpec(n, float(rng.uniform(0.1, 0.9)), (4, 2, 2, 1)[: int(rng.integers(1, 5))])
    if spec.r1 >= n / 2:
        return
    xi = (rng.random((3, n)) < spec.p).astype(float)
    assert np.allclose(R.runs_paths_via_windows(spec, xi), R.runs_paths_from_xi(spec, xi), atol=1e-10)


def test_composition_agrees_at_final_time():
    spec = R.RunsSpec(40, 0.5, (3, 2, 1))
    xi = (np.random.default_rng(1).random((10, 40)) < 0.5).astype(float)
    a = R.runs_paths_via_composition(R.runs_decompose(spec), xi)
    b = R.runs_paths_from_xi(spec, xi)
    assert np.allclose(a[:, -1], b[:, -1], atol=1e-10)


def test_sigma_examples():
    assert np.allclose(R.runs_sigma_blocks(R.RunsSpec(10, 0.5, (1,))).blocks[0], [[2.0]])
    for p in (0.2, 0.6):
        spec = R.RunsSpec(20, p, (4, 3, 1))
        sig = R.runs_sigma_blocks(spec)
        for i, r in enumerate(spec.rs):
            assert sig.blocks[r - 1][i, i] == pytest.approx(1 / (1 - p))
    assert R.runs_sigma_blocks(R.RunsSpec(10, 0.5, (3, 1))).N == (2, 1, 1)
    with pytest.raises(ValueError):
        R.runs_sigma_blocks(R.RunsSpec(10, 0.5, (1,)), "other")


def test_moment_consistent_blocks_match_decomposition():
    spec = R.RunsSpec(24, 0.4, (3, 2))
    from steinfclt.bounds import sigma_n_all
    import scipy.linalg as sla

    S = sigma_n_all(R.runs_decompose(spec).uspec)
    M = sla.block_diag(*R.runs_sigma_blocks(spec, "moment_consistent").blocks)
    for m in range(spec.r1, spec.n + 2 - spec.r1):
        assert np.allclose(S[m - 1], M, atol=1e-12)


def test_gamma_examples():
    s = R.RunsSpec(10, 0.5, (1,))
    assert R.runs_gamma1(s) == pytest.approx(16 / 3)
    p = 0.3
    s = R.RunsSpec(10, p, (1,))
    assert R.runs_gamma1(s) == pytest.approx((2 / 3) * (1 + p**3 - 2 * p**4) * p**-1.5 / (1 - p) ** 1.5)
    for p in (0.2, 0.5, 0.8):
        assert R.runs_gamma3(R.RunsSpec(10, p, (1,))) == pytest.approx(22 * math.sqrt(1 / (1 - p)))
    g3 = [R.runs_gamma3(R.RunsSpec(20, 0.5, (r, 1))) for r in range(1, 6)]
    assert all(a < b for a, b in zip(g3, g3[1:]))


def test_gamma2_symmetry_equal_runs():
    s = R.RunsSpec(20, 0.4, (2, 2, 1))
    assert R.runs_gamma1(s) > 0 and R.runs_gamma2(s) > 0


def test_bound_reports_decay():
    tot = [R.runs_bound_con(R.RunsSpec(n, 0.5, (2, 1))).total for n in (100, 10**4, 10**6)]
    assert tot[0] > tot[1] > tot[2]
    assert R.runs_bound_pre(R.RunsSpec(100, 0.5, (2, 1))).multiplier == "M0"


def test_prelimit_matches_runs_covariance():
    spec = R.RunsSpec(64, 0.5, (2, 1))
    times = [0.25, 0.5, 1.0]
    a = empirical_covariance(R.RunsSampler(spec), times, 20000, 3)
    b = empirical_covariance(R.runs_prelimit_sampler(spec), times, 20000, 3)
    assert covariance_zscores(a, b).max() <= 5


def test_limit_variance():
    for p in (0.3, 0.5):
        spec = R.RunsSpec(10, p, (1,))
        X = replicate(R.runs_limit_sampler(spec).sample, 100_000, 5)
        v = X[:, -1, 0].var()
        assert abs(v - 1 / (1 - p)) <= 3 * v * math.sqrt(2 / 100_000)


def test_limit_cross_covariance():
    spec = R.RunsSpec(20, 0.5, (2, 1))
    X = replicate(R.runs_limit_sampler(spec).sample, 100_000, 6)[:, -1, :]
    sig = R.runs_sigma_blocks(spec)
    # both components have order-1 parts; only the longer one has an order-2 part
    expect_01 = sig.blocks[0][0, 1]
    c = np.cov(X.T)
    se = math.sqrt((X[:, 0].var() * X[:, 1].var() + c[0, 1] ** 2) / len(X))
    assert abs(c[0, 1] - expect_01) <= 3 * se


def test_sigma_psd():
    for rs in [(4, 3, 2, 1), (3, 3), (2,)]:
        for norm in ("printed", "moment_consistent"):
            assert sqrt_roundtrip_error(R.runs_sigma_blocks(R.RunsSpec(20, 0.45, rs), norm).cov) <= 1e-8
