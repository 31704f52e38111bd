"""Weighted degenerate U-processes, their exchangeable pairs and homogeneous sums.

Component ``i`` of the process at grid point ``m`` is

    Y_i(m/n) = (1/sigma_i) * sum_{J subset [m], |J| = p_i} a_J(i) psi_i(X_J).

Weights are stored sparsely (sorted 1-based index tuples) together with an
inverted index element -> subsets, so that resampling one observation only
touches the subsets that contain it.
"""
from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterator, Mapping, Sequence

import numpy as np
import scipy.sparse as sp

from .errors import ShapeMismatchError, ValidationError
from .kernels import (
    BaseMeasure,
    FiniteSupport,
    Kernel,
    check_degenerate,
    check_symmetry,
    lr_norm,
    product_kernel,
)
from .paths import StepPath


def enumerate_subsets(n: int, p: int) -> Iterator[tuple[int, ...]]:
    """All p-subsets of {1..n} in lexicographic order (empty when p > n)."""
    if p < 1:
        raise ValidationError("subset order must be positive")
    return itertools.combinations(range(1, n + 1), p)


# ---------------------------------------------------------------------------
# weights
# ---------------------------------------------------------------------------
@dataclass(frozen=True)
class WeightArray:
    """Sparse weights a_J over p-subsets J of {1..n}."""

    n: int
    p: int
    subsets: np.ndarray  # (K, p) int, rows strictly increasing, 1-based, lexicographic
    weights: np.ndarray  # (K,)

    def __post_init__(self):
        S = np.asarray(self.subsets, dtype=np.int64).reshape(-1, self.p)
        w = np.asarray(self.weights, dtype=float).ravel()
        if S.shape[0] != w.size:
            raise ShapeMismatchError("one weight per subset required")
        if S.size:
            if S.min() < 1 or S.max() > self.n:
                raise ValidationError(f"subset indices must lie in [1, {self.n}]")
            if self.p > 1 and np.any(np.diff(S, axis=1) <= 0):
                raise ValidationError("subset index tuples must be strictly increasing")
            order = np.lexsort(S.T[::-1])
            S, w = S[order], w[order]
            if S.shape[0] > 1 and np.any(np.all(S[1:] == S[:-1], axis=1)):
                raise ValidationError("duplicate subsets in weight array")
        S.setflags(write=False)
        w.setflags(write=False)
        object.__setattr__(self, "subsets", S)
        object.__setattr__(self, "weights", w)

    # -- constructors --------------------------------------------------------
    @classmethod
    def from_dict(cls, n: int, p: int, entries: Mapping[Sequence[int], float]) -> "WeightArray":
        keys = [tuple(int(j) for j in k) for k in entries]
        for k in keys:
            if len(k) != p:
                raise ValidationError(f"subset {k} does not have order {p}")
        return cls(n, p, np.array(keys, dtype=np.int64).reshape(-1, p), np.array(list(entries.values()), dtype=float))

    @classmethod
    def empty(cls, n: int, p: int) -> "WeightArray":
        return cls(n, p, np.zeros((0, p), dtype=np.int64), np.zeros(0))

    # -- views ---------------------------------------------------------------
    def __len__(self) -> int:
        return self.weights.size

    def items(self) -> Iterator[tuple[tuple[int, ...], float]]:
        for row, a in zip(self.subsets, self.weights):
            yield tuple(int(j) for j in row), float(a)

    def to_dict(self) -> dict:
        return dict(self.items())

    @cached_property
    def key_index(self) -> dict:
        return {k: i for i, (k, _) in enumerate(self.items())}

    def get(self, J: Sequence[int], default: float = 0.0) -> float:
        i = self.key_index.get(tuple(J))
        return default if i is None else float(self.weights[i])

    @cached_property
    def max_index(self) -> np.ndarray:
        """max(J) for every stored subset."""
        return self.subsets[:, -1] if len(self) else np.zeros(0, dtype=np.int64)

    @cached_property
    def inverted_index(self) -> list:
        """``inverted_index[l]`` = positions of the subsets containing element l."""
        idx: list = [[] for _ in range(self.n + 1)]
        for k, row in enumerate(self.subsets):
            for j in row:
                idx[j].append(k)
        return [np.array(v, dtype=np.int64) for v in idx]

    def members(self, l: int) -> np.ndarray:
        return self.inverted_index[l]

    @cached_property
    def bucket_matrix(self) -> sp.csr_matrix:
        """Sparse (K, n+1) matrix placing a_J in column max(J)."""
        K = len(self)
        return sp.csr_matrix((self.weights, (np.arange(K), self.max_index)), shape=(K, self.n + 1))

    def abs(self) -> "WeightArray":
        return WeightArray(self.n, self.p, self.subsets, np.abs(self.weights))

    def sum_squares(self) -> float:
        return float(np.dot(self.weights, self.weights))

    # -- JSON ----------------------------------------------------------------
    def to_json_obj(self) -> dict:
        return {"n": self.n, "p": self.p, "entries": [[list(k), a] for k, a in self.items()]}

    @classmethod
    def from_json_obj(cls, obj: Mapping) -> "WeightArray":
        n, p = int(obj["n"]), int(obj["p"])
        entries = obj["entries"]
        S = np.array([e[0] for e in entries], dtype=np.int64).reshape(-1, p)
        w = np.array([e[1] for e in entries], dtype=float)
        return cls(n, p, S, w)

    def to_json(self) -> str:
        return json.dumps(self.to_json_obj())

    @classmethod
    def from_json(cls, text: str) -> "WeightArray":
        return cls.from_json_obj(json.loads(text))


def complete_weights(n: int, p: int, value: float = 1.0) -> WeightArray:
    S = np.array(list(enumerate_subsets(n, p)), dtype=np.int64).reshape(-1, p)
    return WeightArray(n, p, S, np.full(S.shape[0], value))


def incomplete_random_weights(n: int, p: int, keep: float, rng: np.random.Generator) -> WeightArray:
    """Keep each p-subset independently with probability ``keep`` (weight 1)."""
    S = np.array(list(enumerate_subsets(n, p)), dtype=np.int64).reshape(-1, p)
    mask = rng.random(S.shape[0]) < keep
    return WeightArray(n, p, S[mask], np.ones(int(mask.sum())))


def banded_weights(n: int, p: int, width: int, value: float = 1.0) -> WeightArray:
    """Weight ``value`` on subsets with max(J) - min(J) < width."""
    rows = [J for J in enumerate_subsets(n, p) if J[-1] - J[0] < width]
    S = np.array(rows, dtype=np.int64).reshape(-1, p)
    return WeightArray(n, p, S, np.full(S.shape[0], value))


def weights_from_matrix(A: np.ndarray) -> WeightArray:
    """Order-2 weights a_{ij} (i < j) from a symmetric zero-diagonal matrix."""
    A = np.asarray(A, dtype=float)
    n = A.shape[0]
    iu = np.triu_indices(n, 1)
    keep = A[iu] != 0
    S = np.stack([iu[0][keep] + 1, iu[1][keep] + 1], axis=1)
    return WeightArray(n, 2, S, A[iu][keep])


def weights_from_config(cfg: Mapping, n: int, p: int, rng: np.random.Generator | None = None) -> WeightArray:
    if "entries" in cfg:
        w = WeightArray.from_json_obj({"n": cfg.get("n", n), "p": cfg.get("p", p), "entries": cfg["entries"]})
        if w.n != n or w.p != p:
            raise ValidationError(f"weight array has (n, p) = ({w.n}, {w.p}), expected ({n}, {p})")
        return w
    kind = cfg.get("builtin")
    if kind == "complete":
        return complete_weights(n, p)
    if kind == "banded":
        return banded_weights(n, p, int(cfg["width"]))
    if kind == "incomplete_random":
        rng = rng if rng is not None else np.random.default_rng(int(cfg.get("seed", 0)))
        return incomplete_random_weights(n, p, float(cfg["keep"]), rng)
    raise ValidationError(f"unknown weight config {cfg!r}")


# ---------------------------------------------------------------------------
# process specification
# ---------------------------------------------------------------------------
@dataclass(frozen=True)
class UProcessSpec:
    """d weighted degenerate U-processes over a common i.i.d. sample."""

    n: int
    kernels: tuple
    weights: tuple
    sigmas: tuple
    measure: BaseMeasure = field(compare=False)
    validate: bool = field(default=True, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "kernels", tuple(self.kernels))
        object.__setattr__(self, "weights", tuple(self.weights))
        object.__setattr__(self, "sigmas", tuple(float(s) for s in self.sigmas))
        d = len(self.kernels)
        if d == 0 or len(self.weights) != d or len(self.sigmas) != d:
            raise ShapeMismatchError("need one kernel, weight array and sigma per component")
        for k, w in zip(self.kernels, self.weights):
            if k.p != w.p:
                raise ValidationError(f"kernel order {k.p} differs from weight order {w.p}")
            if w.n != self.n:
                raise ValidationError(f"weight array has n={w.n}, spec has n={self.n}")
        if any(a > b for a, b in zip(self.orders, self.orders[1:])):
            raise ValidationError("component orders must be nondecreasing")
        if any(not (s > 0) for s in self.sigmas):
            raise ValidationError("every sigma must be positive")
        if self.validate:
            for k in self.kernels:
                check_symmetry(k)
                if k.exact:
                    rep = check_degenerate(k)
                    if not rep.is_degenerate:
                        raise ValidationError(
                            f"kernel {k.name} is not degenerate (residual {rep.max_residual:.3g})"
                        )

    @property
    def d(self) -> int:
        return len(self.kernels)

    @property
    def orders(self) -> tuple:
        return tuple(k.p for k in self.kernels)

    def with_sigmas(self, sigmas: Sequence[float]) -> "UProcessSpec":
        return UProcessSpec(self.n, self.kernels, self.weights, tuple(sigmas), self.measure, validate=False)


def variance_sigma(kernels: Sequence[Kernel], weights: Sequence[WeightArray], **mc) -> np.ndarray:
    """sigma_i = sqrt(E[psi_i^2] * sum_J a_J(i)^2), the variance normalization."""
    out = []
    for k, w in zip(kernels, weights):
        s = math.sqrt(lr_norm(k, 2, **mc) ** 2 * w.sum_squares())
        if not s > 0:
            raise ValidationError("variance normalization is zero (all weights or the kernel vanish)")
        out.append(s)
    return np.array(out)


def homsum_spec(
    weights: Sequence[WeightArray],
    measure: BaseMeasure,
    sigmas: Sequence[float],
    tol: float = 1e-10,
) -> UProcessSpec:
    """Homogeneous sums: product kernels over a centered unit-variance law."""
    if isinstance(measure, FiniteSupport):
        mean, var = measure.mean, measure.variance
    else:
        mean, var = measure.mean, measure.variance
        if mean is None or var is None:
            raise ValidationError("sampler measures must supply mean and variance")
    if abs(mean) > tol:
        raise ValidationError(f"homogeneous sums need mean 0, got {mean!r}")
    if abs(var - 1.0) > tol:
        raise ValidationError(f"homogeneous sums need variance 1, got {var!r}")
    weights = list(weights)
    if not weights:
        raise ShapeMismatchError("need at least one component")
    kernels = [product_kernel(w.p, measure) for w in weights]
    return UProcessSpec(weights[0].n, kernels, weights, sigmas, measure)


def lambda_weighted(spec: UProcessSpec) -> np.ndarray:
    """diag(n / (2 p_i))."""
    return np.diag([spec.n / (2.0 * p) for p in spec.orders])


# ---------------------------------------------------------------------------
# simulation
# ---------------------------------------------------------------------------
def _terms(kernel: Kernel, w: WeightArray, X: np.ndarray) -> np.ndarray:
    """psi(X_J) for every stored subset J; X has shape (R, n) -> (R, K)."""
    if len(w) == 0:
        return np.zeros((X.shape[0], 0))
    return kernel(X[:, w.subsets - 1])


def _accumulate(terms: np.ndarray, w: WeightArray, sigma: float) -> np.ndarray:
    """(R, K) kernel values -> (R, n+1) path values via max(J) buckets."""
    if len(w) == 0:
        return np.zeros((terms.shape[0], w.n + 1))
    inc = np.asarray((w.bucket_matrix.T @ terms.T).T)
    return np.cumsum(inc, axis=1) / sigma


def paths_from_sample(spec: UProcessSpec, X: np.ndarray) -> np.ndarray:
    """Batch of paths, shape (R, n+1, d), from samples X of shape (R, n)."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    if X.shape[1] != spec.n:
        raise ShapeMismatchError(f"sample length {X.shape[1]} differs from n={spec.n}")
    out = np.empty((X.shape[0], spec.n + 1, spec.d))
    for i, (k, w, s) in enumerate(zip(spec.kernels, spec.weights, spec.sigmas)):
        out[:, :, i] = _accumulate(_terms(k, w, X), w, s)
    return out


def simulate_Y_batch(spec: UProcessSpec, rng: np.random.Generator, size: int) -> np.ndarray:
    X = spec.measure.draw(rng, (size, spec.n))
    return paths_from_sample(spec, X)


def simulate_Y(spec: UProcessSpec, rng: np.random.Generator) -> tuple[StepPath, np.ndarray]:
    """One draw of the process together with the underlying sample X_1..X_n."""
    X = np.asarray(spec.measure.draw(rng, spec.n), dtype=float)
    return StepPath(paths_from_sample(spec, X[None, :])[0]), X


@dataclass(frozen=True)
class PairDraw:
    Y: StepPath
    Yp: StepPath
    I: int
    X0: float
    sample: np.ndarray
    sample_prime: np.ndarray


def exchangeable_pair(
    spec: UProcessSpec, sample: np.ndarray, rng: np.random.Generator, Y: StepPath | None = None
) -> PairDraw:
    """Resample one uniformly chosen observation and update only affected subsets."""
    X = np.asarray(sample, dtype=float)
    if X.shape != (spec.n,):
        raise ShapeMismatchError(f"sample must have length n={spec.n}")
    I = int(rng.integers(1, spec.n + 1))
    X0 = float(spec.measure.draw(rng, None))
    return pair_update(spec, X, I, X0, Y)


def pair_update(spec: UProcessSpec, X: np.ndarray, I: int, X0: float, Y: StepPath | None = None) -> PairDraw:
    """The pair obtained by replacing X_I with X0 (deterministic given I, X0)."""
    Xp = X.copy()
    Xp[I - 1] = X0
    if Y is None:
        Y = StepPath(paths_from_sample(spec, X[None, :])[0])
    delta = np.zeros((spec.n + 1, spec.d))
    for i, (k, w, s) in enumerate(zip(spec.kernels, spec.weights, spec.sigmas)):
        ks = w.members(I)
        if ks.size == 0:
            continue
        sub = w.subsets[ks] - 1
        change = w.weights[ks] * (k(Xp[sub]) - k(X[sub]))
        inc = np.zeros(spec.n + 1)
        np.add.at(inc, w.max_index[ks], change)
        delta[:, i] = np.cumsum(inc) / s
    return PairDraw(Y, StepPath(Y.values + delta), I, X0, X, Xp)


@dataclass(frozen=True)
class UProcessSampler:
    """Batch sampler of Y_n for the Monte Carlo harness."""

    spec: UProcessSpec
    label: str = "uprocess"
    chunk: int = 1000

    @property
    def n(self) -> int:
        return self.spec.n

    @property
    def d(self) -> int:
        return self.spec.d

    def sample(self, rng: np.random.Generator, size: int) -> np.ndarray:
        return simulate_Y_batch(self.spec, rng, size)
