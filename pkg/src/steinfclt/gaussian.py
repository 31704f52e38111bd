"""Gaussian pre-limit processes and continuous limits Z = int phi dW.

Every sampler here exposes ``n``, ``d``, ``label`` and ``sample(rng, size)``
returning an ``(size, n+1, d)`` array of step paths, which is the interface the
Monte Carlo harness consumes.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Sequence

import numpy as np
import scipy.sparse as sp

from .errors import DomainError, NotPSDError, ShapeMismatchError, ValidationError
from .kernels import cross_moment
from .paths import StepPath
from .uprocess import UProcessSpec, WeightArray

SYM_TOL = 1e-10
PSD_TOL = 1e-8


# ---------------------------------------------------------------------------
# index bijection
# ---------------------------------------------------------------------------
def index_bijection(k: int, idx: Sequence[int], n: int, m: int, d: int) -> int:
    """(k-1) n^m + sum_{j<m} (i_j - 1) n^(m-j) + i_m, a bijection onto [1, d n^m]."""
    idx = list(idx)
    if len(idx) != m:
        raise DomainError(f"expected {m} indices, got {len(idx)}")
    if not (1 <= k <= d) or any(not (1 <= i <= n) for i in idx):
        raise DomainError(f"index (k={k}, i={idx}) outside the box d={d}, n={n}")
    out = (k - 1) * n**m
    for j, i in enumerate(idx[:-1], start=1):
        out += (i - 1) * n ** (m - j)
    return out + idx[-1]


def inverse_index_bijection(s: int, n: int, m: int, d: int) -> tuple[int, tuple[int, ...]]:
    if not (1 <= s <= d * n**m):
        raise DomainError(f"{s} outside [1, {d * n ** m}]")
    k, r = divmod(s - 1, n**m)
    digits = []
    for j in range(m - 1, -1, -1):
        digits.append(r // n**j)
        r %= n**j
    return k + 1, tuple(x + 1 for x in digits)


# ---------------------------------------------------------------------------
# covariance models
# ---------------------------------------------------------------------------
def _check_symmetric(M: np.ndarray) -> np.ndarray:
    M = np.asarray(M, dtype=float)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise ShapeMismatchError(f"covariance must be square, got {M.shape}")
    scale = max(1.0, float(np.max(np.abs(M)))) if M.size else 1.0
    if M.size and float(np.max(np.abs(M - M.T))) > SYM_TOL * scale:
        raise ValidationError("covariance matrix is not symmetric")
    return M


@dataclass(frozen=True)
class CovModel:
    """Symmetric PSD covariance stored as one or more diagonal blocks."""

    blocks: tuple
    kind: str = "dense"
    labels: tuple | None = None

    def __post_init__(self):
        blocks = tuple(_check_symmetric(b) for b in self.blocks)
        object.__setattr__(self, "blocks", blocks)

    @classmethod
    def dense(cls, M) -> "CovModel":
        return cls((np.asarray(M, dtype=float),), "dense")

    @classmethod
    def block_diagonal(cls, blocks) -> "CovModel":
        return cls(tuple(np.asarray(b, dtype=float) for b in blocks), "block")

    @classmethod
    def rule_based(cls, index_set: Sequence, rule: Callable[[object, object], float]) -> "CovModel":
        """Dense covariance assembled from a pairwise rule over structured indices."""
        idx = list(index_set)
        M = np.empty((len(idx), len(idx)))
        for a, ia in enumerate(idx):
            for b in range(a, len(idx)):
                M[a, b] = M[b, a] = rule(ia, idx[b])
        return cls((M,), "rule", tuple(idx))

    @property
    def dim(self) -> int:
        return sum(b.shape[0] for b in self.blocks)

    def to_dense(self) -> np.ndarray:
        if len(self.blocks) == 1:
            return self.blocks[0].copy()
        return np.asarray(sp.block_diag(self.blocks).toarray())

    def sqrt(self) -> np.ndarray:
        if len(self.blocks) == 1:
            return _sqrt_dense(self.blocks[0])
        return np.asarray(sp.block_diag([_sqrt_dense(b) for b in self.blocks]).toarray())

    def to_csv(self) -> str:
        M = self.to_dense()
        return "\n".join(",".join(repr(float(x)) for x in row) for row in M) + "\n"


def _sqrt_dense(M: np.ndarray) -> np.ndarray:
    if M.size == 0:
        return M.copy()
    lam, V = np.linalg.eigh(M)
    lmax = float(lam.max())
    floor = -PSD_TOL * max(lmax, 0.0)
    if lam.min() < floor or (lmax <= 0 and lam.min() < -PSD_TOL):
        raise NotPSDError(f"smallest eigenvalue {lam.min():.3g} below tolerance (largest {lmax:.3g})")
    lam = np.clip(lam, 0.0, None)
    S = (V * np.sqrt(lam)) @ V.T
    return 0.5 * (S + S.T)


def psd_sqrt(cov) -> np.ndarray:
    """Symmetric square root S (S S^T = cov) via eigendecomposition.

    Eigenvalues in [-1e-8 lambda_max, 0) are clamped to zero; anything lower
    raises :class:`NotPSDError`.
    """
    if isinstance(cov, CovModel):
        return cov.sqrt()
    return _sqrt_dense(_check_symmetric(cov))


def sqrt_roundtrip_error(cov) -> float:
    """||S S^T - cov||_F / ||cov||_F (0 for the zero matrix)."""
    M = cov.to_dense() if isinstance(cov, CovModel) else np.asarray(cov, dtype=float)
    S = psd_sqrt(cov)
    nrm = np.linalg.norm(M)
    return float(np.linalg.norm(S @ S.T - M) / nrm) if nrm > 0 else float(np.linalg.norm(S @ S.T))


# ---------------------------------------------------------------------------
# piecewise-constant matrix functions
# ---------------------------------------------------------------------------
@dataclass(frozen=True)
class StepMatrixFunction:
    """phi(s) = mats[k] for s in (breaks[k], breaks[k+1]]; breaks from 0 to 1."""

    breaks: np.ndarray
    mats: np.ndarray

    def __post_init__(self):
        b = np.asarray(self.breaks, dtype=float).ravel()
        M = np.asarray(self.mats, dtype=float)
        if M.ndim == 2:
            M = M[None]
        if M.ndim != 3 or M.shape[1] != M.shape[2]:
            raise ShapeMismatchError("mats must have shape (k, d, d)")
        if b.size != M.shape[0] + 1 or b[0] != 0.0 or b[-1] != 1.0 or np.any(np.diff(b) <= 0):
            raise ValidationError("breaks must increase from 0 to 1, one more than the matrices")
        object.__setattr__(self, "breaks", b)
        object.__setattr__(self, "mats", M)

    @classmethod
    def constant(cls, M) -> "StepMatrixFunction":
        M = np.atleast_2d(np.asarray(M, dtype=float))
        return cls(np.array([0.0, 1.0]), M[None])

    @classmethod
    def on_grid(cls, mats) -> "StepMatrixFunction":
        mats = np.asarray(mats, dtype=float)
        n = mats.shape[0]
        return cls(np.arange(n + 1) / n, mats)

    @property
    def d(self) -> int:
        return self.mats.shape[1]

    def grid_steps(self, n: int) -> np.ndarray:
        """Matrix on each grid interval ((m-1)/n, m/n], shape (n, d, d).

        Raises when a breakpoint does not fall on the grid.
        """
        pos = self.breaks * n
        if np.any(np.abs(pos - np.round(pos)) > 1e-9 * n):
            raise ValidationError(f"partition is not aligned with the grid of resolution {n}")
        pos = np.round(pos).astype(int)
        out = np.empty((n, self.d, self.d))
        for k in range(self.mats.shape[0]):
            out[pos[k] : pos[k + 1]] = self.mats[k]
        return out

    def integral_sq_frobenius(self) -> float:
        """int_0^1 ||phi(s)||_F^2 ds, exact."""
        return float(np.sum(np.diff(self.breaks) * np.sum(self.mats**2, axis=(1, 2))))


def common_grid(phi: StepMatrixFunction, psi: StepMatrixFunction) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Both functions on the common refinement: (lengths, phi mats, psi mats)."""
    b = np.union1d(phi.breaks, psi.breaks)
    mids = 0.5 * (b[1:] + b[:-1])
    ia = np.searchsorted(phi.breaks, mids) - 1
    ib = np.searchsorted(psi.breaks, mids) - 1
    return np.diff(b), phi.mats[ia], psi.mats[ib]


# ---------------------------------------------------------------------------
# samplers
# ---------------------------------------------------------------------------
@dataclass(frozen=True)
class ZeroProcess:
    n: int
    d: int
    label: str = "zero"
    chunk: int = 1000

    def sample(self, rng, size):
        return np.zeros((size, self.n + 1, self.d))


@dataclass(frozen=True)
class StochasticIntegral:
    """Z(t) = int_0^t phi(s) dW(s) on the grid m/n (exact for step phi)."""

    phi: StepMatrixFunction
    n: int
    label: str = "integral"
    chunk: int = 1000

    @property
    def d(self) -> int:
        return self.phi.d

    def sample(self, rng: np.random.Generator, size: int) -> np.ndarray:
        steps = self.phi.grid_steps(self.n)  # (n, d, d)
        dW = rng.standard_normal((size, self.n, self.d)) * math.sqrt(1.0 / self.n)
        inc = np.einsum("mij,rmj->rmi", steps, dW)
        out = np.zeros((size, self.n + 1, self.d))
        np.cumsum(inc, axis=1, out=out[:, 1:, :])
        return out


def sample_Z_grid(phi: StepMatrixFunction, n: int, rng: np.random.Generator) -> StepPath:
    return StepPath(StochasticIntegral(phi, n).sample(rng, 1)[0])


@dataclass(frozen=True)
class _OrderGroup:
    order: int
    components: tuple  # spec component indices with this order
    subsets: np.ndarray  # union of subsets, (K, q)
    buckets: tuple  # per component: sparse (K, n+1) weight/bucket matrix
    sqrt_cov: np.ndarray  # (g, g)


@dataclass(frozen=True)
class UStatPrelimit:
    """Pre-limit Gaussian process with the covariance structure of a U-process.

    One jointly Gaussian vector (Z_J(i))_i per subset J, with covariance
    E[psi_i psi_l] between components of equal order, independent across J.
    """

    n: int
    d: int
    sigmas: tuple
    groups: tuple
    label: str = "ustat_prelimit"
    chunk: int = 1000

    def sample(self, rng: np.random.Generator, size: int) -> np.ndarray:
        out = np.zeros((size, self.n + 1, self.d))
        for g in self.groups:
            K, m = g.subsets.shape[0], len(g.components)
            if K == 0:
                continue
            Z = rng.standard_normal((size, K, m)) @ g.sqrt_cov.T
            for pos, i in enumerate(g.components):
                inc = np.asarray((g.buckets[pos].T @ Z[:, :, pos].T).T)
                out[:, :, i] = np.cumsum(inc, axis=1) / self.sigmas[i]
        return out


def build_prelimit_ustat(spec: UProcessSpec, *, rng=None, n_samples: int = 200_000) -> UStatPrelimit:
    """Gaussian pre-limit for a U-process spec (exact cross-moments for finite support)."""
    groups = []
    orders = spec.orders
    for q in sorted(set(orders)):
        comps = tuple(i for i, p in enumerate(orders) if p == q)
        ws = [spec.weights[i] for i in comps]
        allS = np.concatenate([w.subsets for w in ws], axis=0)
        if allS.shape[0]:
            U, inv = np.unique(allS, axis=0, return_inverse=True)
            inv = np.asarray(inv).ravel()
        else:
            U, inv = np.zeros((0, q), dtype=np.int64), np.zeros(0, dtype=np.int64)
        buckets, start = [], 0
        for w in ws:
            rows = inv[start : start + len(w)]
            start += len(w)
            cols = w.max_index
            buckets.append(sp.csr_matrix((w.weights, (rows, cols)), shape=(U.shape[0], spec.n + 1)))
        M = np.empty((len(comps), len(comps)))
        for a, i in enumerate(comps):
            for b, l in enumerate(comps[a:], start=a):
                M[a, b] = M[b, a] = cross_moment(spec.kernels[i], spec.kernels[l], rng=rng, n_samples=n_samples)
        groups.append(_OrderGroup(q, comps, U, tuple(buckets), psd_sqrt(M)))
    return UStatPrelimit(spec.n, spec.d, spec.sigmas, tuple(groups))


def sample_D(gspec, rng: np.random.Generator) -> StepPath:
    """One exact draw of a Gaussian process recipe on its grid."""
    return StepPath(gspec.sample(rng, 1)[0])


# ---------------------------------------------------------------------------
# general pre-limit (toy scale)
# ---------------------------------------------------------------------------
MAX_GENERAL_INDICES = 4096


@dataclass(frozen=True)
class GeneralPrelimit:
    """D^(k)(t) = sum_i Z~_(k,i) J_i^(k)(t) with Z~ = Sigma^(1/2) X.

    ``indicators`` has shape (d n^m, n+1): row s is the 0/1 value of the
    indicator attached to flat index s (see :func:`index_bijection`) at the
    grid points.
    """

    n: int
    m: int
    d: int
    sqrt_cov: np.ndarray
    indicators: np.ndarray
    label: str = "general_prelimit"
    chunk: int = 1000

    def sample(self, rng: np.random.Generator, size: int) -> np.ndarray:
        N = self.d * self.n**self.m
        Zt = rng.standard_normal((size, N)) @ self.sqrt_cov.T
        out = np.empty((size, self.n + 1, self.d))
        block = self.n**self.m
        for k in range(self.d):
            sl = slice(k * block, (k + 1) * block)
            out[:, :, k] = Zt[:, sl] @ self.indicators[sl]
        return out


def interval_indicator(intervals: Sequence[tuple[float, float]], n: int) -> np.ndarray:
    """Grid values of 1_A for A a finite union of grid-aligned intervals [a, b)
    (an interval ending at 1 includes 1)."""
    row = np.zeros(n + 1)
    for a, b in intervals:
        fa, fb = Fraction(a).limit_denominator(10**9) * n, Fraction(b).limit_denominator(10**9) * n
        if fa.denominator != 1 or fb.denominator != 1:
            raise ValidationError(f"interval [{a}, {b}) is not aligned with the grid 1/{n}")
        lo, hi = int(fa), int(fb)
        row[lo : (n + 1 if hi == n else hi)] = 1.0
    return row


def build_general_prelimit(
    cov, n: int, m: int, d: int, intervals: Callable[[int, tuple], Sequence[tuple[float, float]]]
) -> GeneralPrelimit:
    """General pre-limit process with indicator-of-interval index functions."""
    N = d * n**m
    if N > MAX_GENERAL_INDICES:
        raise DomainError(f"d n^m = {N} exceeds the toy-scale limit {MAX_GENERAL_INDICES}")
    S = psd_sqrt(cov)
    if S.shape != (N, N):
        raise ShapeMismatchError(f"covariance must be {N} x {N}")
    ind = np.zeros((N, n + 1))
    for s in range(1, N + 1):
        k, idx = inverse_index_bijection(s, n, m, d)
        ind[s - 1] = interval_indicator(intervals(k, idx), n)
    return GeneralPrelimit(n, m, d, S, ind)


def donsker_prelimit(n: int, d: int = 1, scale: float | None = None) -> GeneralPrelimit:
    """Independent N(0, scale^2) variables switched on at i/n (a Gaussian random walk)."""
    s = 1.0 / math.sqrt(n) if scale is None else scale
    return build_general_prelimit(np.eye(d * n) * s * s, n, 1, d, lambda k, idx: [(idx[0] / n, 1.0)])
