"""Edge and two-star statistics of an Erdos-Renyi graph revealed vertex by vertex.

With I_ij the edge indicators on [n] and m = floor(n t):

    T(t) = ((m - 2) / n^2) * #edges within [m]
    V(t) = (1 / n^2) * #two-stars within [m]

and Y = (T - E T, V - E V).  Edge sets are (n, n) boolean arrays whose strict
upper triangle holds I_ij for i < j (0-based vertex indices internally,
1-based in the public pair labels).
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from math import comb

import numpy as np

from .errors import DomainError, UnsupportedModeError, ValidationError
from .gaussian import CovModel
from .paths import StepPath, grid_index

MAX_EXACT_N = 12


@dataclass(frozen=True)
class GraphSpec:
    n: int
    p: float

    def __post_init__(self):
        if self.n < 4:
            raise ValidationError("graph process needs n >= 4")
        if not (0.0 < self.p < 1.0):
            raise ValidationError("p must lie in (0, 1)")


# ---------------------------------------------------------------------------
# statistics
# ---------------------------------------------------------------------------
def mean_paths(spec: GraphSpec) -> tuple[np.ndarray, np.ndarray]:
    """E T and E V at every grid point m = 0..n."""
    n, p = spec.n, spec.p
    m = np.arange(n + 1)
    ET = (m - 2) / n**2 * (m * (m - 1) / 2) * p
    EV = 3.0 * (m * (m - 1) * (m - 2) / 6) * p**2 / n**2
    return ET, EV


def graph_moments(spec: GraphSpec, t: float) -> dict:
    """E T(t), E V(t) and the 2x2 covariance of (T(t), V(t))."""
    n, p = spec.n, spec.p
    m = grid_index(t, n)
    ET = (m - 2) / n**2 * comb(m, 2) * p
    EV = 3.0 * comb(m, 3) * p**2 / n**2
    f = 3.0 * comb(m, 3) * p * (1 - p) / n**4
    cov = f * np.array([[m - 2, 2 * p * (m - 2)], [2 * p * (m - 2), 4 * p**2 * (m - 2) + p * (1 - p)]])
    return {"ET": ET, "EV": EV, "cov": cov}


def raw_counts(A: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Edge and two-star counts within [m] for m = 0..n, maintained via degrees."""
    A = np.asarray(A, dtype=bool)
    n = A.shape[0]
    deg = np.zeros(n, dtype=np.int64)
    E = np.zeros(n + 1, dtype=np.int64)
    S = np.zeros(n + 1, dtype=np.int64)
    for m in range(1, n + 1):
        nb = A[: m - 1, m - 1]
        k = int(nb.sum())
        S[m] = S[m - 1] + k * (k - 1) // 2 + int(deg[: m - 1][nb].sum())
        E[m] = E[m - 1] + k
        deg[: m - 1] += nb
        deg[m - 1] = k
    return E, S


def two_star_bruteforce(A: np.ndarray, m: int) -> int:
    """sum over i<j<k<=m of I_ij I_jk + I_ij I_ik + I_jk I_ik."""
    U = np.asarray(A, dtype=bool)
    U = U | U.T
    total = 0
    for i, j, k in itertools.combinations(range(m), 3):
        total += int(U[i, j] and U[j, k]) + int(U[i, j] and U[i, k]) + int(U[j, k] and U[i, k])
    return total


def graph_paths_from_edges(spec: GraphSpec, A: np.ndarray) -> np.ndarray:
    """Centered path values (n+1, 2) for a fixed edge set."""
    n = spec.n
    E, S = raw_counts(A)
    m = np.arange(n + 1)
    ET, EV = mean_paths(spec)
    return np.stack([(m - 2) / n**2 * E - ET, S / n**2 - EV], axis=1)


def random_edges(spec: GraphSpec, rng: np.random.Generator) -> np.ndarray:
    return np.triu(rng.random((spec.n, spec.n)) < spec.p, 1)


def simulate_graph(spec: GraphSpec, rng: np.random.Generator) -> tuple[StepPath, np.ndarray]:
    A = random_edges(spec, rng)
    return StepPath(graph_paths_from_edges(spec, A)), A


def simulate_graph_batch(spec: GraphSpec, rng: np.random.Generator, size: int) -> np.ndarray:
    """(size, n+1, 2) centered paths, revealing one vertex's back-edges at a time."""
    n, p = spec.n, spec.p
    deg = np.zeros((size, n))
    E = np.zeros(size)
    S = np.zeros(size)
    out = np.zeros((size, n + 1, 2))
    for m in range(2, n + 1):
        nb = rng.random((size, m - 1)) < p
        k = nb.sum(axis=1).astype(float)
        S += k * (k - 1) / 2 + np.einsum("rj,rj->r", nb, deg[:, : m - 1])
        deg[:, : m - 1] += nb
        deg[:, m - 1] = k
        E += k
        out[:, m, 0] = (m - 2) / n**2 * E
        out[:, m, 1] = S / n**2
    ET, EV = mean_paths(spec)
    out[:, :, 0] -= ET
    out[:, :, 1] -= EV
    return out


@dataclass(frozen=True)
class GraphSampler:
    spec: GraphSpec
    label: str = "graph"
    chunk: int = 1000

    @property
    def n(self) -> int:
        return self.spec.n

    @property
    def d(self) -> int:
        return 2

    def sample(self, rng, size):
        return simulate_graph_batch(self.spec, rng, size)


# ---------------------------------------------------------------------------
# exchangeable pair and regression identities
# ---------------------------------------------------------------------------
def pair_delta(spec: GraphSpec, A: np.ndarray, I: int, J: int, new: bool) -> np.ndarray:
    """Y' - Y (shape (n+1, 2)) when I_IJ is replaced by ``new`` (1-based I < J)."""
    n = spec.n
    if not (1 <= I < J <= n):
        raise DomainError("need 1 <= I < J <= n")
    U = np.asarray(A, dtype=bool)
    U = U | U.T
    old = float(U[I - 1, J - 1])
    diff = old - float(new)
    out = np.zeros((n + 1, 2))
    if diff == 0:
        return out
    m = np.arange(n + 1)
    on = m >= J
    out[:, 0] = -np.where(on, (m - 2) / n**2 * diff, 0.0)
    contrib = U[J - 1].astype(float) + U[I - 1].astype(float)
    contrib[[I - 1, J - 1]] = 0.0
    cum = np.concatenate([[0.0], np.cumsum(contrib)])
    out[:, 1] = -np.where(on, cum * diff / n**2, 0.0)
    return out


@dataclass(frozen=True)
class GraphPair:
    Y: StepPath
    Yp: StepPath
    I: int
    J: int
    new_value: bool
    edges_prime: np.ndarray


def graph_pair(spec: GraphSpec, edges: np.ndarray, rng: np.random.Generator, Y: StepPath | None = None) -> GraphPair:
    """Resample one uniformly chosen edge indicator."""
    n = spec.n
    k = int(rng.integers(comb(n, 2)))
    I, J = list(itertools.combinations(range(1, n + 1), 2))[k]
    new = bool(rng.random() < spec.p)
    if Y is None:
        Y = StepPath(graph_paths_from_edges(spec, edges))
    Yp = StepPath(Y.values + pair_delta(spec, edges, I, J, new))
    Ap = np.array(edges, dtype=bool, copy=True)
    Ap[I - 1, J - 1] = new
    return GraphPair(Y, Yp, I, J, new, Ap)


def graph_lambda(spec: GraphSpec) -> np.ndarray:
    n, p = spec.n, spec.p
    return n * (n - 1) / 8.0 * np.array([[2.0, 2.0 * p], [0.0, 1.0]])


def expected_pair_difference(spec: GraphSpec, A: np.ndarray) -> np.ndarray:
    """E[Y - Y' | edges] as a path (n+1, 2), by exact enumeration of the pair
    choice and the resampled value.

    Y - Y' is linear in (I_IJ - I'_IJ), whose conditional mean is I_IJ - p, so
    the enumeration over the two resampled values collapses to that weight.
    """
    n, p = spec.n, spec.p
    if n > MAX_EXACT_N:
        raise UnsupportedModeError(f"exact enumeration supports n <= {MAX_EXACT_N}; use Monte Carlo")
    U = np.asarray(A, dtype=bool)
    U = (U | U.T).astype(float)
    I, J = np.triu_indices(n, 1)  # 0-based, I < J
    w = U[I, J] - p
    C = U[I] + U[J]
    rows = np.arange(I.size)
    C[rows, I] = 0.0
    C[rows, J] = 0.0
    cum = np.concatenate([np.zeros((I.size, 1)), np.cumsum(C, axis=1)], axis=1)  # (P, n+1)
    m = np.arange(n + 1)
    on = m[None, :] >= (J + 1)[:, None]
    out = np.empty((n + 1, 2))
    out[:, 0] = (m - 2) / n**2 * np.sum(w[:, None] * on, axis=0)
    out[:, 1] = np.sum(w[:, None] * on * cum, axis=0) / n**2
    return out / I.size


def expected_pair_difference_enumerated(spec: GraphSpec, A: np.ndarray) -> np.ndarray:
    """Same quantity via explicit per-pair updates (slow reference)."""
    n, p = spec.n, spec.p
    acc = np.zeros((n + 1, 2))
    for I, J in itertools.combinations(range(1, n + 1), 2):
        acc -= p * pair_delta(spec, A, I, J, True) + (1 - p) * pair_delta(spec, A, I, J, False)
    return acc / comb(n, 2)


@dataclass(frozen=True)
class RegressionResidual:
    A: float
    B: float


def graph_regression_residual(spec: GraphSpec, edges: np.ndarray, lam: np.ndarray | None = None) -> RegressionResidual:
    """Sup-norm residuals of the linear-regression condition Y = 2 E[Y - Y' | edges] Lambda.

    Component 1 of Y - 2 E[Y - Y' | edges] Lambda is (n(n-1)/2) times the
    residual of identity A, E[T - T' | edges] = (2/(n(n-1)))(T - E T);
    component 2 is (n(n-1)/4) times the residual of identity B,
    E[2p(T - T') + (V - V') | edges] = (4/(n(n-1)))(V - E V).  Passing a
    different ``lam`` evaluates the same expression with that matrix (a
    negative control).
    """
    L = graph_lambda(spec) if lam is None else np.asarray(lam, dtype=float)
    Y = graph_paths_from_edges(spec, edges)
    D = expected_pair_difference(spec, edges)
    res = np.max(np.abs(Y - 2.0 * D @ L), axis=0)
    return RegressionResidual(float(res[0]), float(res[1]))


def all_edge_configurations(n: int):
    """Every strict-upper-triangular edge set on n vertices."""
    pairs = list(itertools.combinations(range(n), 2))
    for bits in itertools.product((False, True), repeat=len(pairs)):
        A = np.zeros((n, n), dtype=bool)
        for (i, j), b in zip(pairs, bits):
            A[i, j] = b
        yield A


# ---------------------------------------------------------------------------
# Gaussian pre-limit
# ---------------------------------------------------------------------------
def _coefficients(p: float) -> tuple[float, float, float]:
    a = math.sqrt(p * (1 - p)) / math.sqrt(2 + 8 * p**2)
    b = p * math.sqrt(2 * p * (1 - p)) / math.sqrt(1 + 4 * p**2)
    c = 2 * p**2 * math.sqrt(2 * p * (1 - p)) / math.sqrt(1 + 4 * p**2)
    return a, b, c


def _bm_at(rng: np.random.Generator, size: int, times: np.ndarray) -> np.ndarray:
    """Brownian motion at nondecreasing times (exact Gaussian increments)."""
    dt = np.diff(times, prepend=0.0)
    return np.cumsum(rng.standard_normal((size, times.size)) * np.sqrt(dt), axis=1)


@dataclass(frozen=True)
class GraphPrelimit:
    """Pre-limit Gaussian process via three independent Brownian motions."""

    spec: GraphSpec
    label: str = "graph_prelimit"
    chunk: int = 1000

    @property
    def n(self) -> int:
        return self.spec.n

    @property
    def d(self) -> int:
        return 2

    def sample(self, rng: np.random.Generator, size: int) -> np.ndarray:
        n, p = self.spec.n, self.spec.p
        a, b, c = _coefficients(p)
        m = np.arange(n + 1, dtype=float)
        s2 = m * (m - 1)
        s3 = m * (m - 1) * (m - 2)
        s2[:2] = 0.0
        s3[:3] = 0.0
        B1 = _bm_at(rng, size, s2)
        B2 = _bm_at(rng, size, s2)
        B3 = _bm_at(rng, size, s3)
        f = (m - 2) / n**2
        out = np.empty((size, n + 1, 2))
        out[:, :, 0] = f * (a * B1 + b * B2)
        out[:, :, 1] = f * (b * B1 + c * B2) + p * (1 - p) / (n**2 * math.sqrt(2)) * B3
        return out


def graph_prelimit_sampler(spec: GraphSpec) -> GraphPrelimit:
    return GraphPrelimit(spec)


def graph_prelimit_cov(spec: GraphSpec, t: float, u: float) -> np.ndarray:
    """Closed-form Cov((D1(t), D2(t)), (D1(u), D2(u))) as a 2x2 matrix."""
    n, p = spec.n, spec.p
    mt, mu = grid_index(t, n), grid_index(u, n)
    mm = min(mt, mu)
    A = (mt - 2) * (mu - 2) * mm * (mm - 1) * p * (1 - p) / (2 * n**4) if mm >= 2 else 0.0
    C = (mt - 2) * (mu - 2) * mm * (mm - 1) * p**2 * (1 - p) / n**4 if mm >= 2 else 0.0
    B = comb(mm, 3) * 3 * p**2 * (1 + 2 * p - 3 * p**2) / n**4 + comb(mm, 2) * (
        (mt - 2) * (mu - 2) - (mm - 2)
    ) * 4 * p**3 * (1 - p) / n**4
    return np.array([[A, C], [C, B]])


def _pairs_and_triples(n: int):
    pairs = list(itertools.combinations(range(n), 2))
    triples = list(itertools.combinations(range(n), 3))
    return pairs, triples


def graph_raw_covariance(n: int, p: float) -> CovModel:
    """Covariance table of the collection {Z1_ij} u {Z2_ijk} (pairs first)."""
    pairs, triples = _pairs_and_triples(n)
    mask = lambda S: sum(1 << v for v in S)  # noqa: E731
    mp = np.array([mask(P) for P in pairs], dtype=np.int64)
    mt = np.array([mask(T) for T in triples], dtype=np.int64)

    def popcount(x):
        x = x.copy()
        c = np.zeros(x.shape, dtype=np.int64)
        while np.any(x):
            c += x & 1
            x >>= 1
        return c

    n4 = float(n) ** 4
    P, T = len(pairs), len(triples)
    M = np.zeros((P + T, P + T))
    M[:P, :P] = np.eye(P) * p * (1 - p) / n4
    sub = popcount(mt[:, None] & mp[None, :]) == 2  # pair inside triple
    M[P:, :P] = sub * 2 * p**2 * (1 - p) / n4
    M[:P, P:] = M[P:, :P].T
    ov = popcount(mt[:, None] & mt[None, :])
    M[P:, P:] = np.where(ov == 3, 3 * p**2 * (1 + 2 * p - 3 * p**2), np.where(ov == 2, 4 * p**3 * (1 - p), 0.0)) / n4
    return CovModel((M,), "rule")


def graph_raw_D_covariance(n: int, p: float, ms) -> np.ndarray:
    """Exact covariance of (D1(m), D2(m)) over the listed grid points, built from
    the raw collection: D1(m) = (m-2) sum_{i<j<=m} Z1_ij, D2(m) = sum_{i<j<k<=m} Z2_ijk.

    Returns an array of shape (len(ms), 2, len(ms), 2).
    """
    pairs, triples = _pairs_and_triples(n)
    Sigma = graph_raw_covariance(n, p).to_dense()
    rows = []
    for m in ms:
        r1 = np.concatenate([[(m - 2) if max(P) < m else 0.0 for P in pairs], np.zeros(len(triples))])
        r2 = np.concatenate([np.zeros(len(pairs)), [1.0 if max(T) < m else 0.0 for T in triples]])
        rows += [r1, r2]
    L = np.array(rows)
    return (L @ Sigma @ L.T).reshape(len(ms), 2, len(ms), 2)


# ---------------------------------------------------------------------------
# continuous limit
# ---------------------------------------------------------------------------
@dataclass(frozen=True)
class GraphLimit:
    """Z1(t) = t (a B1(t^2) + b B2(t^2)), Z2(t) = t (b B1(t^2) + c B2(t^2))."""

    p: float
    grid: int
    label: str = "graph_limit"
    chunk: int = 1000

    @property
    def n(self) -> int:
        return self.grid

    @property
    def d(self) -> int:
        return 2

    def sample(self, rng: np.random.Generator, size: int) -> np.ndarray:
        a, b, c = _coefficients(self.p)
        t = np.arange(self.grid + 1) / self.grid
        B1 = _bm_at(rng, size, t**2)
        B2 = _bm_at(rng, size, t**2)
        out = np.empty((size, self.grid + 1, 2))
        out[:, :, 0] = t * (a * B1 + b * B2)
        out[:, :, 1] = t * (b * B1 + c * B2)
        return out


def graph_limit_sampler(p: float, grid: int) -> GraphLimit:
    if not (0.0 < p < 1.0):
        raise ValidationError("p must lie in (0, 1)")
    return GraphLimit(p, int(grid))


def graph_limit_cov(p: float, t: float, u: float) -> np.ndarray:
    """Closed-form 2x2 Cov(Z(t), Z(u))."""
    k = t * u * min(t, u) ** 2
    return k * np.array([[p * (1 - p) / 2, p**2 * (1 - p)], [p**2 * (1 - p), 2 * p**3 * (1 - p)]])


# ---------------------------------------------------------------------------
# bounds
# ---------------------------------------------------------------------------
def graph_bounds(n: float) -> dict:
    """Pre-limit bound 23/n and continuous bound 16422 sqrt(log n)/sqrt(n) + 138/sqrt(n)."""
    if not n > 1:
        raise DomainError("graph bounds need n > 1")
    return {
        "pre": 23.0 / n,
        "con": 16422.0 * math.sqrt(math.log(n)) / math.sqrt(n) + 138.0 / math.sqrt(n),
    }
