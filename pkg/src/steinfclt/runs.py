"""Success runs on a cycle: simulation, decomposition into homogeneous sums,
block covariances, closed-form bounds and Gaussian approximations.

For xi_1..xi_n i.i.d. Bernoulli(p) (indices taken mod n), component i of the
process at grid point m is

    V_i(m/n) = (1/sigma(r_i)) sum_{k=1}^m (xi_k ... xi_{k+r_i-1} - p^{r_i}),
    sigma(r) = sqrt(n p^r (1-p)).

Each window product expands over the centered variables X = xi - p as
sum over nonempty S in the window of p^(r-|S|) prod_{s in S} X_s.
"""
from __future__ import annotations

import itertools
import math
import time
from dataclasses import dataclass, field
from math import comb

import numpy as np
import scipy.sparse as sp

from .bounds import BoundReport
from .errors import DomainError, ValidationError
from .gaussian import CovModel, psd_sqrt
from .kernels import centered_bernoulli, product_kernel
from .paths import StepPath
from .uprocess import UProcessSpec, WeightArray, paths_from_sample


@dataclass(frozen=True)
class RunsSpec:
    n: int
    p: float
    rs: tuple

    def __post_init__(self):
        rs = tuple(int(r) for r in self.rs)
        object.__setattr__(self, "rs", rs)
        if not rs:
            raise ValidationError("need at least one run length")
        if not (0.0 < self.p < 1.0):
            raise ValidationError("p must lie in (0, 1)")
        if any(a < b for a, b in zip(rs, rs[1:])) or rs[-1] < 1:
            raise ValidationError("run lengths must be nonincreasing and >= 1")
        if not (rs[0] < self.n / 2):
            raise ValidationError("the longest run length must be below n/2")

    @property
    def d(self) -> int:
        return len(self.rs)

    @property
    def r1(self) -> int:
        return self.rs[0]

    def sigma(self, r: int) -> float:
        return math.sqrt(self.n * self.p**r * (1.0 - self.p))

    @property
    def sigmas(self) -> tuple:
        return tuple(self.sigma(r) for r in self.rs)

    def N(self, q: int) -> int:
        """Number of components with r_i >= q."""
        return sum(1 for r in self.rs if r >= q)


# ---------------------------------------------------------------------------
# simulation
# ---------------------------------------------------------------------------
def runs_paths_from_xi(spec: RunsSpec, xi: np.ndarray) -> np.ndarray:
    """Paths (R, n+1, d) from binary sequences xi of shape (R, n)."""
    xi = np.atleast_2d(np.asarray(xi, dtype=float))
    R, n = xi.shape
    out = np.zeros((R, n + 1, spec.d))
    prod = np.ones_like(xi)
    done = 0
    # window products for increasing r, reusing the previous product
    cache = {}
    for r in sorted(set(spec.rs)):
        while done < r:
            prod = prod * np.roll(xi, -done, axis=1)
            done += 1
        cache[r] = prod.copy()
    for i, r in enumerate(spec.rs):
        out[:, 1:, i] = np.cumsum(cache[r] - spec.p**r, axis=1) / spec.sigma(r)
    return out


def simulate_runs_batch(spec: RunsSpec, rng: np.random.Generator, size: int) -> np.ndarray:
    xi = (rng.random((size, spec.n)) < spec.p).astype(float)
    return runs_paths_from_xi(spec, xi)


def simulate_runs(spec: RunsSpec, rng: np.random.Generator) -> tuple[StepPath, np.ndarray]:
    """One path of the runs process together with the binary sequence."""
    xi = (rng.random(spec.n) < spec.p).astype(float)
    return StepPath(runs_paths_from_xi(spec, xi[None])[0]), xi


@dataclass(frozen=True)
class RunsSampler:
    spec: RunsSpec
    label: str = "runs"
    chunk: int = 1000

    @property
    def n(self) -> int:
        return self.spec.n

    @property
    def d(self) -> int:
        return self.spec.d

    def sample(self, rng, size):
        return simulate_runs_batch(self.spec, rng, size)


# ---------------------------------------------------------------------------
# decomposition
# ---------------------------------------------------------------------------
def window_expansion(xs: np.ndarray, p: float) -> float:
    """sum over nonempty S of p^(r-|S|) prod_{s in S} x_s, for a window x_1..x_r."""
    r = len(xs)
    total = 0.0
    for j in range(1, r + 1):
        for S in itertools.combinations(range(r), j):
            total += p ** (r - j) * float(np.prod([xs[s] for s in S]))
    return total


def decomposition_residual(r: int, p: float) -> float:
    """max over binary windows of |xi_1..xi_r - p^r - expansion in X = xi - p|."""
    worst = 0.0
    for bits in itertools.product((0.0, 1.0), repeat=r):
        lhs = float(np.prod(bits)) - p**r
        rhs = window_expansion(np.array(bits) - p, p)
        worst = max(worst, abs(lhs - rhs))
    return worst


def runs_weight(J, r: int, n: int, p: float) -> float:
    """Coefficient of prod_{j in J} X_j in the order-|J| part of the r-runs sum."""
    J = sorted(int(j) for j in J)
    if not J or J[0] < 1 or J[-1] > n:
        raise DomainError("J must be a nonempty subset of [1, n]")
    j = len(J)
    a = max(r - J[-1] + J[0], 0)
    low = [x for x in J if x < n / 2]
    high = [x for x in J if x > n / 2]
    if low and high:
        a += max(r + min(high) - max(low) - n, 0)
    return p ** (r - j) * a


def cyclic_window_count(J, r: int, n: int) -> int:
    """Number of cyclic windows {k, ..., k+r-1} (mod n) containing J."""
    Js = {int(j) for j in J}
    return sum(1 for k in range(1, n + 1) if Js <= {(k - 1 + s) % n + 1 for s in range(r)})


def _window_subsets(n: int, r: int, j: int) -> np.ndarray:
    """All distinct j-subsets of cyclic windows of length r, as sorted rows."""
    rows = set()
    for k in range(1, n + 1):
        win = [(k - 1 + s) % n + 1 for s in range(r)]
        for S in itertools.combinations(win, j):
            rows.add(tuple(sorted(S)))
    return np.array(sorted(rows), dtype=np.int64).reshape(-1, j)


def runs_weight_array(n: int, r: int, j: int, p: float) -> WeightArray:
    S = _window_subsets(n, r, j)
    w = np.array([runs_weight(row, r, n, p) for row in S])
    keep = w != 0
    return WeightArray(n, j, S[keep], w[keep])


@dataclass(frozen=True)
class RunsDecomposition:
    """Order-j components U^(r_i, j), ordered by (j, i) as a U-process spec."""

    spec: RunsSpec
    uspec: UProcessSpec
    index: tuple  # index[c] = (i, j): component c is the order-j part of run length r_i

    def flat(self, i: int, j: int) -> int:
        return self.index.index((i, j))


def runs_decompose(spec: RunsSpec) -> RunsDecomposition:
    meas = centered_bernoulli(spec.p)
    kernels, weights, sigmas, index = [], [], [], []
    cache = {}
    for q in range(1, spec.r1 + 1):
        for i in range(spec.N(q)):
            r = spec.rs[i]
            if (r, q) not in cache:
                cache[(r, q)] = runs_weight_array(spec.n, r, q, spec.p)
            kernels.append(product_kernel(q, meas))
            weights.append(cache[(r, q)])
            sigmas.append(spec.sigma(r))
            index.append((i, q))
    uspec = UProcessSpec(spec.n, kernels, weights, sigmas, meas)
    return RunsDecomposition(spec, uspec, tuple(index))


def compose_shifted(dec: RunsDecomposition, u_paths: np.ndarray) -> np.ndarray:
    """Apply the composition map: V_i(m) = sum_j U^(i,j)(min(m + r_i - 1, n))."""
    spec = dec.spec
    R, n1, _ = u_paths.shape
    n = n1 - 1
    out = np.zeros((R, n1, spec.d))
    m = np.arange(n1)
    for c, (i, j) in enumerate(dec.index):
        idx = np.minimum(m + spec.rs[i] - 1, n)
        out[:, :, i] += u_paths[:, idx, c]
    return out


def runs_paths_via_composition(dec: RunsDecomposition, xi: np.ndarray) -> np.ndarray:
    """Reconstruct the runs paths from the fixed-weight U-processes and the time shift."""
    X = np.atleast_2d(np.asarray(xi, dtype=float)) - dec.spec.p
    return compose_shifted(dec, paths_from_sample(dec.uspec, X))


def runs_paths_via_windows(spec: RunsSpec, xi: np.ndarray) -> np.ndarray:
    """Reconstruct the runs paths by expanding every window in the centered variables.

    Equivalent to weights that depend on the time point: the coefficient of
    prod X_J at grid m is p^(r-|J|) times the number of windows starting at
    k <= m that contain J.
    """
    X = np.atleast_2d(np.asarray(xi, dtype=float)) - spec.p
    R, n = X.shape
    out = np.zeros((R, n + 1, spec.d))
    for i, r in enumerate(spec.rs):
        inc = np.zeros((R, n))
        for j in range(1, r + 1):
            for S in itertools.combinations(range(r), j):
                term = np.ones((R, n))
                for s in S:
                    term = term * np.roll(X, -s, axis=1)
                inc += spec.p ** (r - j) * term
        out[:, 1:, i] = np.cumsum(inc, axis=1) / spec.sigma(r)
    return out


# ---------------------------------------------------------------------------
# block covariances
# ---------------------------------------------------------------------------
def _kernel_sum(q: int, ri: int, rl: int, k_lo: int, k_hi: int) -> float:
    if q == 1:
        return float(ri * rl)
    return float(sum(comb(k - 1, q - 2) * (ri - k) * (rl - k) for k in range(k_lo, k_hi + 1)))


def sigma_block_entry(spec: RunsSpec, q: int, i: int, l: int) -> float:
    """Interior block entry Sigma(q)(i, l) (0-based component indices)."""
    ri, rl, p = spec.rs[i], spec.rs[l], spec.p
    pref = p ** ((ri + rl) / 2.0 - q) / (1.0 - p)
    if q == 1:
        return pref * ri * rl
    return pref * _kernel_sum(q, ri, rl, q - 1, min(ri, rl) - 1)


@dataclass(frozen=True)
class RunsSigma:
    blocks: tuple  # blocks[q-1] is N(q) x N(q)
    N: tuple  # N[q-1] = N(q)
    normalization: str

    @property
    def cov(self) -> CovModel:
        return CovModel.block_diagonal(self.blocks)

    def offset(self, q: int) -> int:
        """Flat position of block q's first coordinate (N(1) + ... + N(q-1))."""
        return sum(self.N[: q - 1])


def runs_sigma_blocks(spec: RunsSpec, normalization: str = "printed") -> RunsSigma:
    """Block-diagonal limit covariance with blocks Sigma(1)..Sigma(r_1).

    ``printed`` evaluates the closed forms p^((r_i+r_l)/2-q)/(1-p) * (...).
    ``moment_consistent`` multiplies block q by (1-p)^q, which is what the
    increment covariance of the order-q homogeneous sums in X = xi - p
    (E X^2 = p(1-p)) actually equals at interior grid points.
    """
    if normalization not in ("printed", "moment_consistent"):
        raise ValueError("normalization must be 'printed' or 'moment_consistent'")
    blocks, Ns = [], []
    for q in range(1, spec.r1 + 1):
        Nq = spec.N(q)
        B = np.array([[sigma_block_entry(spec, q, i, l) for l in range(Nq)] for i in range(Nq)])
        if normalization == "moment_consistent":
            B = B * (1.0 - spec.p) ** q
        blocks.append(B)
        Ns.append(Nq)
    return RunsSigma(tuple(blocks), tuple(Ns), normalization)


def runs_sigma_n_m_blocks(spec: RunsSpec, m: int) -> list:
    """Per-grid-point blocks Sigma_n^(m)(q) including the printed boundary corrections."""
    if not (1 <= m <= spec.n):
        raise DomainError(f"m={m} outside [1, {spec.n}]")
    n, p = spec.n, spec.p
    out = []
    for q in range(1, spec.r1 + 1):
        Nq = spec.N(q)
        B = np.zeros((Nq, Nq))
        for i in range(Nq):
            for l in range(Nq):
                ri, rl = spec.rs[i], spec.rs[l]
                rm = min(ri, rl)
                pref = p ** ((ri + rl) / 2.0 - q) / (1.0 - p)
                if q == 1:
                    B[i, l] = pref * ri * rl
                elif m <= rm - 1:
                    B[i, l] = pref * _kernel_sum(q, ri, rl, q - 1, m - 1)
                elif m >= n + 2 - rm:
                    extra = sum(
                        _kernel_sum(q, ri, rl, max(q - 1, n - u - 1), rm - 1) for u in range(n + 2 - rm, m + 1)
                    )
                    B[i, l] = pref * (_kernel_sum(q, ri, rl, q - 1, rm - 1) + extra)
                else:
                    B[i, l] = pref * _kernel_sum(q, ri, rl, q - 1, rm - 1)
        out.append(B)
    return out


# ---------------------------------------------------------------------------
# closed-form bounds
# ---------------------------------------------------------------------------
def _moment_base(p: float) -> float:
    return 1.0 + p**3 - 2.0 * p**4


def runs_gamma1(spec: RunsSpec) -> float:
    p, rs, d = spec.p, spec.rs, spec.d
    c = _moment_base(p)
    s = sum(
        c**j * p ** (1.5 * r - 3 * j) / (1 - p) ** 1.5 * comb(r - 1, j - 1) ** 3
        for r in rs
        for j in range(1, r + 1)
    )
    return 2.0 * math.sqrt(d * rs[0]) * sum(rs) ** 1.5 / (3.0 * rs[-1]) * s


def runs_gamma2(spec: RunsSpec) -> float:
    p, rs, d = spec.p, spec.rs, spec.d
    c = _moment_base(p)
    s = 0.0
    for ru, rv, rw in itertools.product(rs, repeat=3):
        geo = rw * max(ru, rv) ** 2
        for j1 in range(1, ru + 1):
            for j2 in range(1, rv + 1):
                for j3 in range(1, rw + 1):
                    J = j1 + j2 + j3
                    s += (
                        c ** (J / 3.0)
                        * p ** ((ru + rv + rw) / 2.0 - J)
                        / (1 - p) ** 1.5
                        * geo
                        * comb(ru - 1, j1 - 1)
                        * comb(rv - 1, j2 - 1)
                        * comb(rw - 1, j3 - 1)
                    )
    return 2.0 * math.sqrt(d * rs[0]) * sum(rs) * s


def runs_gamma3(spec: RunsSpec) -> float:
    p, rs, d = spec.p, spec.rs, spec.d
    inner = 0.0
    for q in range(2, spec.r1 + 1):
        for i in range(spec.N(q)):
            ri = rs[i]
            for k in range(q - 1, ri):
                inner += comb(k - 1, q - 2) * p ** (ri - q) / (1 - p) * (ri - k) ** 2
    inner += sum(p ** (r - 1) / (1 - p) * r**2 for r in rs)
    return 22.0 * math.sqrt(d) * rs[0] ** 2 * sum(rs) * math.sqrt(inner)


def runs_bound_pre(spec: RunsSpec) -> BoundReport:
    """(gamma1 + gamma2) / sqrt(n) per unit ||g||_{M0} (composition factor included)."""
    t0 = time.perf_counter()
    g1, g2 = runs_gamma1(spec), runs_gamma2(spec)
    return BoundReport(
        theorem="runs_prelimit",
        terms={"gamma1": g1, "gamma2": g2},
        total=(g1 + g2) / math.sqrt(spec.n),
        multiplier="M0",
        combination="(gamma1 + gamma2) * n^-1/2",
        metadata={"n": spec.n, "d": spec.d, "p": spec.p, "rs": list(spec.rs),
                  "wall_time": time.perf_counter() - t0},
    )


def runs_bound_con(spec: RunsSpec) -> BoundReport:
    """(gamma1 + gamma2 + gamma3 sqrt(log n)) / sqrt(n) per unit ||g||_{M0}."""
    t0 = time.perf_counter()
    g1, g2, g3 = runs_gamma1(spec), runs_gamma2(spec), runs_gamma3(spec)
    n = spec.n
    return BoundReport(
        theorem="runs_continuous",
        terms={"gamma1": g1, "gamma2": g2, "gamma3": g3},
        total=(g1 + g2 + g3 * math.sqrt(math.log(n))) / math.sqrt(n),
        multiplier="M0",
        combination="(gamma1 + gamma2 + gamma3 * sqrt(log n)) * n^-1/2",
        metadata={"n": n, "d": spec.d, "p": spec.p, "rs": list(spec.rs),
                  "wall_time": time.perf_counter() - t0},
    )


# ---------------------------------------------------------------------------
# Gaussian approximations
# ---------------------------------------------------------------------------
@dataclass(frozen=True)
class RunsPrelimit:
    """Gaussian pre-limit: every centered product prod X_S replaced by Z_S.

    The Z_S are independent over subsets S of cyclic windows; their variance
    is (p(1-p))^|S| (the variance of prod X_S), or 1 with ``unit_variance``.
    """

    spec: RunsSpec
    subsets: tuple  # all subsets, as tuples
    scales: np.ndarray  # standard deviation of each Z_S
    maps: tuple  # per component: sparse (n, K) window-sum matrix
    label: str = "runs_prelimit"
    chunk: int = 1000

    @property
    def n(self) -> int:
        return self.spec.n

    @property
    def d(self) -> int:
        return self.spec.d

    def sample(self, rng: np.random.Generator, size: int) -> np.ndarray:
        Z = rng.standard_normal((size, len(self.subsets))) * self.scales
        out = np.zeros((size, self.n + 1, self.d))
        for i, M in enumerate(self.maps):
            inc = np.asarray((M @ Z.T).T)
            out[:, 1:, i] = np.cumsum(inc, axis=1) / self.spec.sigma(self.spec.rs[i])
        return out


def runs_prelimit_sampler(spec: RunsSpec, unit_variance: bool = False) -> RunsPrelimit:
    n, p = spec.n, spec.p
    index: dict = {}
    entries = []  # (component, window k, subset id, coefficient)
    for i, r in enumerate(spec.rs):
        for k in range(n):
            win = [(k + s) % n + 1 for s in range(r)]
            for j in range(1, r + 1):
                for S in itertools.combinations(win, j):
                    key = tuple(sorted(S))
                    sid = index.setdefault(key, len(index))
                    entries.append((i, k, sid, p ** (r - j)))
    K = len(index)
    subsets = tuple(sorted(index, key=index.get))
    var = np.array([1.0 if unit_variance else (p * (1 - p)) ** len(S) for S in subsets])
    maps = []
    arr = np.array(entries, dtype=float)
    for i in range(spec.d):
        sel = arr[:, 0] == i
        maps.append(sp.csr_matrix((arr[sel, 3], (arr[sel, 1].astype(int), arr[sel, 2].astype(int))), shape=(n, K)))
    label = "runs_prelimit_unit" if unit_variance else "runs_prelimit"
    return RunsPrelimit(spec, subsets, np.sqrt(var), tuple(maps), label=label)


@dataclass(frozen=True)
class RunsLimit:
    """Z_i(t) = (sum_{q <= r_i} Z'_{N(1)+..+N(q-1)+i})((t + (r_i - 1)/n) ^ 1), Z' = Sigma^(1/2) W."""

    spec: RunsSpec
    sqrt_cov: np.ndarray
    coords: tuple  # per component: flat coordinates of Z' summed
    grid: int
    label: str = "runs_limit"
    chunk: int = 1000

    @property
    def n(self) -> int:
        return self.grid

    @property
    def d(self) -> int:
        return self.spec.d

    def sample(self, rng: np.random.Generator, size: int) -> np.ndarray:
        G, D = self.grid, self.sqrt_cov.shape[0]
        dW = rng.standard_normal((size, G, D)) * math.sqrt(1.0 / G)
        W = np.zeros((size, G + 1, D))
        np.cumsum(dW, axis=1, out=W[:, 1:, :])
        Zp = W @ self.sqrt_cov.T
        out = np.zeros((size, G + 1, self.d))
        m = np.arange(G + 1)
        for i, cs in enumerate(self.coords):
            shift = (self.spec.rs[i] - 1) * G // self.spec.n
            out[:, :, i] = Zp[:, np.minimum(m + shift, G)][:, :, list(cs)].sum(axis=2)
        return out


def runs_limit_sampler(spec: RunsSpec, grid: int | None = None, normalization: str = "printed") -> RunsLimit:
    grid = spec.n if grid is None else int(grid)
    if grid % spec.n:
        raise ValidationError("the grid must be a multiple of n so that the time shift is grid-aligned")
    sig = runs_sigma_blocks(spec, normalization)
    S = psd_sqrt(sig.cov)
    coords = tuple(tuple(sig.offset(q) + i for q in range(1, r + 1)) for i, r in enumerate(spec.rs))
    return RunsLimit(spec, S, coords, grid, label=f"runs_limit_{normalization}")
