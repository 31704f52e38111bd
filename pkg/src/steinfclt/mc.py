"""Monte Carlo verification harness.

Test functionals are cosines of finite-dimensional marginals,

    g(w) = a cos(sum_j <w(t_j), theta_j>),

whose M0-type norm is bounded in closed form by a (1 + S + S^2 + S^3) with
S = sum_j |theta_j| (|g| <= a, ||Dg|| <= a S, ||D^2 g|| <= a S^2 and D^2 g is
a S^3-Lipschitz).  Samplers follow the protocol of :mod:`steinfclt.gaussian`.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import DomainError, ShapeMismatchError, ValidationError
from .paths import grid_index
from .seeding import DEFAULT_CHUNK, derive_rng, replicate, stable_key


# ---------------------------------------------------------------------------
# test functionals
# ---------------------------------------------------------------------------
@dataclass(frozen=True)
class TestFunctional:
    __test__ = False  # not a pytest class

    times: tuple
    thetas: np.ndarray  # (k, d)
    amplitude: float
    name: str = "g"

    @property
    def S(self) -> float:
        return float(np.sum(np.linalg.norm(self.thetas, axis=1)))

    @property
    def certified_norm(self) -> float:
        S = self.S
        return self.amplitude * (1.0 + S + S**2 + S**3)

    @property
    def d(self) -> int:
        return self.thetas.shape[1]

    def scaled(self, factor: float) -> "TestFunctional":
        return TestFunctional(self.times, self.thetas, self.amplitude * factor, self.name)

    def __call__(self, paths: np.ndarray) -> np.ndarray:
        """Evaluate on a path (n+1, d) or a batch (R, n+1, d)."""
        P = np.asarray(paths, dtype=float)
        single = P.ndim == 2
        if single:
            P = P[None]
        if P.shape[2] != self.d:
            raise ShapeMismatchError(f"functional has d={self.d}, paths have d={P.shape[2]}")
        n = P.shape[1] - 1
        arg = np.zeros(P.shape[0])
        for t, th in zip(self.times, self.thetas):
            arg += P[:, grid_index(t, n), :] @ th
        out = self.amplitude * np.cos(arg)
        return out[0] if single else out


def make_test_functional(times: Sequence[float], thetas, name: str = "g", norm: float = 1.0) -> TestFunctional:
    """Cosine functional with amplitude chosen so that certified_norm == norm."""
    times = tuple(float(t) for t in times)
    th = np.atleast_2d(np.asarray(thetas, dtype=float))
    if len(times) < 1:
        raise ValidationError("need at least one time")
    if th.shape[0] != len(times):
        raise ShapeMismatchError(f"{len(times)} times but {th.shape[0]} directions")
    if any(not (0.0 <= t <= 1.0) for t in times):
        raise DomainError("times must lie in [0, 1]")
    if not np.all(np.isfinite(th)):
        raise ValidationError("directions must be finite")
    S = float(np.sum(np.linalg.norm(th, axis=1)))
    if S == 0:
        raise ValidationError("all-zero directions give a constant (degenerate) functional")
    return TestFunctional(times, th, norm / (1.0 + S + S**2 + S**3), name)


def random_test_functionals(count: int, d: int, seed: int, *, k_max: int = 3, scale: float = 1.0) -> list[TestFunctional]:
    """A reproducible family of unit-norm cosine functionals."""
    rng = derive_rng(seed, stable_key("test-functionals"), d)
    out = []
    for i in range(count):
        k = int(rng.integers(1, k_max + 1))
        times = np.sort(rng.choice(np.arange(1, 21) / 20.0, size=k, replace=False))
        th = rng.standard_normal((k, d)) * scale
        out.append(make_test_functional(times, th, name=f"g{i}"))
    return out


# ---------------------------------------------------------------------------
# distance estimation
# ---------------------------------------------------------------------------
@dataclass(frozen=True)
class DistanceEstimate:
    estimate: float
    standard_error: float
    replications: int
    functional: str
    samplers: tuple
    mean_a: float = 0.0
    mean_b: float = 0.0

    def dominated_by(self, bound: float, k_se: float = 4.0) -> bool:
        return self.estimate <= bound + k_se * self.standard_error

    def to_dict(self) -> dict:
        return {
            "estimate": self.estimate,
            "se": self.standard_error,
            "replications": self.replications,
            "functional": self.functional,
            "samplers": list(self.samplers),
        }


def _check_compatible(a, b):
    if a.d != b.d:
        raise ShapeMismatchError(f"samplers have d={a.d} and d={b.d}")
    if a.n != b.n:
        raise ShapeMismatchError(f"samplers live on grids 1/{a.n} and 1/{b.n}")


def functional_values(sampler, gs: Sequence[TestFunctional], R: int, master_seed: int, *, threads: int = 1,
                      stream: int | None = None) -> np.ndarray:
    """(len(gs), R) values of each functional on R draws of ``sampler``.

    Draws come from the sampler's own stream (derived from its label), so the
    same sampler always sees the same randomness under a given master seed.
    """
    s = stable_key(sampler.label) if stream is None else stream
    chunk = getattr(sampler, "chunk", DEFAULT_CHUNK)

    def draw(rng, size):
        P = sampler.sample(rng, size)
        return np.stack([g(P) for g in gs], axis=1)

    return replicate(draw, R, master_seed, s, threads=threads, chunk=chunk).T


def _mean_se(v: np.ndarray) -> tuple[float, float]:
    return float(v.mean()), float(v.std(ddof=1) / math.sqrt(v.size))


def estimate_distances(samplerA, samplerB, gs: Sequence[TestFunctional], R: int, master_seed: int, *,
                       threads: int = 1) -> list[DistanceEstimate]:
    """|E g(A) - E g(B)| for several functionals sharing the same draws."""
    if R < 2:
        raise ValidationError("need R >= 2 replications")
    _check_compatible(samplerA, samplerB)
    va = functional_values(samplerA, gs, R, master_seed, threads=threads)
    vb = functional_values(samplerB, gs, R, master_seed, threads=threads)
    out = []
    for k, g in enumerate(gs):
        ma, sa = _mean_se(va[k])
        mb, sb = _mean_se(vb[k])
        out.append(DistanceEstimate(abs(ma - mb), math.hypot(sa, sb), R, g.name,
                                    (samplerA.label, samplerB.label), ma, mb))
    return out


def estimate_distance(samplerA, samplerB, g: TestFunctional, R: int, master_seed: int, *,
                      threads: int = 1) -> DistanceEstimate:
    """|mean_A - mean_B| with SE sqrt(SE_A^2 + SE_B^2); one stream per sampler label."""
    return estimate_distances(samplerA, samplerB, [g], R, master_seed, threads=threads)[0]


# ---------------------------------------------------------------------------
# covariance
# ---------------------------------------------------------------------------
@dataclass(frozen=True)
class CovarianceEstimate:
    """Covariance of the flattened vector (Y_k(t_a))_{a, k}, index a*d + k."""

    cov: np.ndarray
    se: np.ndarray
    times: tuple
    d: int
    replications: int

    def block(self, a: int, b: int) -> np.ndarray:
        d = self.d
        return self.cov[a * d : (a + 1) * d, b * d : (b + 1) * d]

    def se_block(self, a: int, b: int) -> np.ndarray:
        d = self.d
        return self.se[a * d : (a + 1) * d, b * d : (b + 1) * d]


def covariance_with_se(X: np.ndarray, groups: int = 50) -> tuple[np.ndarray, np.ndarray]:
    """Sample covariance of the rows of X with grouped (delete-a-group) jackknife SEs."""
    X = np.asarray(X, dtype=float)
    R = X.shape[0]
    C = np.cov(X, rowvar=False, ddof=1)
    C = np.atleast_2d(C)
    G = min(groups, R)
    idx = np.array_split(np.arange(R), G)
    # leave-one-group-out covariances from running sums
    s1 = X.sum(axis=0)
    s2 = X.T @ X
    reps = np.empty((G,) + C.shape)
    for k, I in enumerate(idx):
        Xi = X[I]
        m = R - len(I)
        a1 = s1 - Xi.sum(axis=0)
        a2 = s2 - Xi.T @ Xi
        mu = a1 / m
        reps[k] = (a2 - m * np.outer(mu, mu)) / (m - 1)
    se = np.sqrt((G - 1) / G * np.sum((reps - reps.mean(axis=0)) ** 2, axis=0))
    return C, se


def empirical_covariance(sampler, times: Sequence[float], R: int, seed: int, *, threads: int = 1,
                         groups: int = 50) -> CovarianceEstimate:
    """Sample covariance of the path at ``times`` across R draws, with jackknife SEs."""
    if R < 3:
        raise ValidationError("need R >= 3 replications")
    n = sampler.n
    ix = [grid_index(t, n) for t in times]
    chunk = getattr(sampler, "chunk", DEFAULT_CHUNK)

    def draw(rng, size):
        return sampler.sample(rng, size)[:, ix, :].reshape(size, -1)

    X = replicate(draw, R, seed, stable_key(sampler.label), threads=threads, chunk=chunk)
    C, se = covariance_with_se(X, groups)
    return CovarianceEstimate(C, se, tuple(times), sampler.d, R)


def covariance_zscores(a: CovarianceEstimate, b: CovarianceEstimate | np.ndarray) -> np.ndarray:
    """|C_a - C_b| / combined SE (entrywise); a model matrix contributes no SE."""
    if isinstance(b, CovarianceEstimate):
        diff, se = a.cov - b.cov, np.sqrt(a.se**2 + b.se**2)
    else:
        diff, se = a.cov - np.asarray(b), a.se
    with np.errstate(divide="ignore", invalid="ignore"):
        z = np.abs(diff) / se
    z[(se == 0) & (np.abs(diff) <= 1e-14)] = 0.0
    z[(se == 0) & (np.abs(diff) > 1e-14)] = np.inf
    return z


# ---------------------------------------------------------------------------
# rate fits
# ---------------------------------------------------------------------------
@dataclass(frozen=True)
class RateFit:
    slope: float
    intercept: float
    r2: float

    def to_dict(self) -> dict:
        return {"slope": self.slope, "intercept": self.intercept, "r2": self.r2}


def rate_fit(ns: Sequence[float], values: Sequence[float]) -> RateFit:
    """Ordinary least squares of log(values) on log(ns)."""
    x = np.asarray(ns, dtype=float)
    y = np.asarray(values, dtype=float)
    if x.size != y.size:
        raise ShapeMismatchError("ns and values differ in length")
    if x.size < 3:
        raise ValidationError("need at least three points")
    if np.any(np.diff(x) <= 0):
        raise ValidationError("ns must be strictly increasing")
    if np.any(~np.isfinite(y)) or np.any(y <= 0):
        raise DomainError("values must be positive and finite")
    lx, ly = np.log(x), np.log(y)
    slope, intercept = np.polyfit(lx, ly, 1)
    resid = ly - (slope * lx + intercept)
    sst = float(np.sum((ly - ly.mean()) ** 2))
    r2 = 1.0 - float(np.sum(resid**2)) / sst if sst > 0 else 1.0
    return RateFit(float(slope), float(intercept), r2)
