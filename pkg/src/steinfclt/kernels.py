"""Symmetric kernels over a base measure: degeneracy checks, L^r norms and the
Hoeffding decomposition.

Two kinds of base measure are supported.  :class:`FiniteSupport` measures allow
exact computation by enumerating ``support**p`` (each kernel is materialized as
a dense tensor indexed by support positions).  :class:`SamplerMeasure` only
provides draws, and the same quantities are then estimated by Monte Carlo.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable, Sequence

import numpy as np

from .errors import (
    EnumerationTooLargeError,
    UnsupportedModeError,
    ValidationError,
)

DEFAULT_TUPLE_CAP = 10**7


# ---------------------------------------------------------------------------
# base measures
# ---------------------------------------------------------------------------
@dataclass(frozen=True)
class FiniteSupport:
    """Discrete probability measure with finitely many atoms."""

    values: np.ndarray
    masses: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float).ravel()
        m = np.asarray(self.masses, dtype=float).ravel()
        if v.shape != m.shape or v.size == 0:
            raise ValidationError("atoms need matching, nonempty value and mass lists")
        if np.any(m <= 0):
            raise ValidationError("atom masses must be positive")
        if abs(m.sum() - 1.0) > 1e-12:
            raise ValidationError(f"masses sum to {m.sum()!r}, not 1")
        if np.unique(v).size != v.size:
            raise ValidationError("atom values must be distinct")
        order = np.argsort(v)
        v, m = v[order], m[order]
        v.setflags(write=False)
        m.setflags(write=False)
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "masses", m)

    @classmethod
    def from_atoms(cls, atoms: Sequence[Sequence[float]]) -> "FiniteSupport":
        atoms = list(atoms)
        return cls(np.array([a[0] for a in atoms]), np.array([a[1] for a in atoms]))

    @property
    def size(self) -> int:
        return self.values.size

    def draw(self, rng: np.random.Generator, size) -> np.ndarray:
        idx = rng.choice(self.size, size=size, p=self.masses)
        return self.values[idx]

    def expect(self, f: Callable[[np.ndarray], np.ndarray]) -> float:
        return float(np.dot(f(self.values), self.masses))

    @property
    def mean(self) -> float:
        return self.expect(lambda x: x)

    @property
    def variance(self) -> float:
        mu = self.mean
        return self.expect(lambda x: (x - mu) ** 2)

    def abs_moment(self, r: float) -> float:
        return self.expect(lambda x: np.abs(x) ** r)

    def index_of(self, x: np.ndarray) -> np.ndarray:
        """Positions of the values ``x`` in the (sorted) support."""
        x = np.asarray(x, dtype=float)
        idx = np.searchsorted(self.values, x)
        idx = np.clip(idx, 0, self.size - 1)
        if not np.all(self.values[idx] == x):
            raise ValidationError("argument outside the support of the measure")
        return idx


@dataclass(frozen=True)
class SamplerMeasure:
    """Measure known only through a sampler, with user-supplied moments."""

    draw_fn: Callable[[np.random.Generator, object], np.ndarray]
    mean: float | None = None
    variance: float | None = None
    abs3: float | None = None
    name: str = "sampler"

    def draw(self, rng: np.random.Generator, size) -> np.ndarray:
        return np.asarray(self.draw_fn(rng, size), dtype=float)

    def abs_moment(self, r: float) -> float:
        if r == 3 and self.abs3 is not None:
            return self.abs3
        raise UnsupportedModeError("absolute moments of a sampler measure must be user-supplied")


BaseMeasure = FiniteSupport | SamplerMeasure


def rademacher() -> FiniteSupport:
    return FiniteSupport(np.array([-1.0, 1.0]), np.array([0.5, 0.5]))


def centered_bernoulli(p: float) -> FiniteSupport:
    """Law of xi - p for xi ~ Bernoulli(p)."""
    return FiniteSupport(np.array([-p, 1.0 - p]), np.array([1.0 - p, p]))


def standardized_bernoulli(p: float) -> FiniteSupport:
    """Law of (xi - p) / sqrt(p (1 - p)); mean 0, variance 1."""
    s = math.sqrt(p * (1.0 - p))
    return FiniteSupport(np.array([-p / s, (1.0 - p) / s]), np.array([1.0 - p, p]))


def standard_normal_measure() -> SamplerMeasure:
    return SamplerMeasure(
        lambda rng, size: rng.standard_normal(size),
        mean=0.0,
        variance=1.0,
        abs3=2.0 * math.sqrt(2.0 / math.pi),
        name="normal",
    )


# ---------------------------------------------------------------------------
# kernels
# ---------------------------------------------------------------------------
@dataclass(frozen=True)
class Kernel:
    """Symmetric kernel of order ``p``.

    ``func`` is vectorized: it maps an array of shape ``(..., p)`` to an array
    of shape ``(...)``.
    """

    p: int
    func: Callable[[np.ndarray], np.ndarray] = field(compare=False)
    measure: BaseMeasure = field(compare=False)
    name: str = "kernel"
    is_product: bool = False

    def __post_init__(self):
        if self.p < 1:
            raise ValidationError("kernel order must be positive")

    def __call__(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if x.shape[-1] != self.p:
            raise ValidationError(f"kernel of order {self.p} got arguments of width {x.shape[-1]}")
        return np.asarray(self.func(x), dtype=float)

    @property
    def exact(self) -> bool:
        return isinstance(self.measure, FiniteSupport)

    def tensor(self, cap: int = DEFAULT_TUPLE_CAP) -> np.ndarray:
        """Dense table of values on ``support**p`` (finite support only)."""
        if not self.exact:
            raise UnsupportedModeError("tensor() requires a finite-support measure")
        s = self.measure.size
        if s**self.p > cap:
            raise EnumerationTooLargeError(
                f"support^p = {s}^{self.p} tuples exceeds the cap {cap}; use Monte Carlo mode"
            )
        return self._tensor

    @cached_property
    def _tensor(self) -> np.ndarray:
        vals = self.measure.values
        grids = np.meshgrid(*([vals] * self.p), indexing="ij")
        t = self(np.stack(grids, axis=-1))
        t = np.broadcast_to(t, (self.measure.size,) * self.p).copy()
        t.setflags(write=False)
        return t

    def draw_args(self, rng: np.random.Generator, size: int, extra: int = 0) -> np.ndarray:
        return self.measure.draw(rng, (size, self.p + extra))


def product_kernel(p: int, measure: BaseMeasure) -> Kernel:
    """psi(x_1, ..., x_p) = x_1 ... x_p."""
    return Kernel(p, lambda x: np.prod(x, axis=-1), measure, name=f"product{p}", is_product=True)


def zero_kernel(p: int, measure: BaseMeasure) -> Kernel:
    return Kernel(p, lambda x: np.zeros(x.shape[:-1]), measure, name=f"zero{p}")


def table_kernel(tensor: np.ndarray, measure: FiniteSupport, name: str = "table") -> Kernel:
    """Kernel given by its values on ``support**p`` (indexed by support positions)."""
    tensor = np.array(tensor, dtype=float)
    if not isinstance(measure, FiniteSupport):
        raise ValidationError("table kernels need a finite-support measure")
    p = tensor.ndim
    if tensor.shape != (measure.size,) * p:
        raise ValidationError(f"table shape {tensor.shape} does not match support size {measure.size}")
    if p == 0:
        raise ValidationError("table kernels need order >= 1")
    tensor.setflags(write=False)

    def func(x: np.ndarray) -> np.ndarray:
        idx = measure.index_of(x)
        return tensor[tuple(np.moveaxis(idx, -1, 0))]

    return Kernel(p, func, measure, name=name)


def check_symmetry(kernel: Kernel, n_perm: int = 20, seed: int = 0, tol: float = 1e-12) -> float:
    """Largest |psi(x) - psi(x_perm)| over ``n_perm`` random points and permutations."""
    if kernel.p == 1:
        return 0.0
    rng = np.random.default_rng(seed)
    x = kernel.draw_args(rng, n_perm)
    perms = np.array([rng.permutation(kernel.p) for _ in range(n_perm)])
    xp = np.take_along_axis(x, perms, axis=1)
    worst = float(np.max(np.abs(kernel(x) - kernel(xp))))
    if worst > tol * max(1.0, float(np.max(np.abs(kernel(x))))):
        raise ValidationError(f"kernel {kernel.name} is not symmetric (discrepancy {worst:.3g})")
    return worst


# ---------------------------------------------------------------------------
# exact contractions
# ---------------------------------------------------------------------------
def _contract_last(t: np.ndarray, masses: np.ndarray, k: int) -> np.ndarray:
    """Integrate out the last ``k`` axes of ``t`` against ``masses``."""
    for _ in range(k):
        t = t @ masses
    return t


def conditional_mean_table(kernel: Kernel, q: int) -> np.ndarray:
    """Table of E[psi(x_1..x_q, X_{q+1}..X_p)] over ``support**q`` (exact)."""
    t = kernel.tensor()
    return _contract_last(t, kernel.measure.masses, kernel.p - q)


def _product_mass(measure: FiniteSupport, k: int) -> np.ndarray:
    w = np.ones(())
    for _ in range(k):
        w = np.multiply.outer(w, measure.masses)
    return w


# ---------------------------------------------------------------------------
# degeneracy
# ---------------------------------------------------------------------------
@dataclass(frozen=True)
class DegeneracyReport:
    is_degenerate: bool | None
    max_residual: float
    standard_error: float = 0.0
    mode: str = "exact"


def check_degenerate(
    kernel: Kernel,
    tol: float = 1e-10,
    *,
    rng: np.random.Generator | None = None,
    n_outer: int = 64,
    n_inner: int = 4096,
) -> DegeneracyReport:
    """Check E[psi | X_1..X_{p-1}] = 0.

    Exact mode enumerates ``support**(p-1)``.  Monte Carlo mode (sampler
    measures) estimates the conditional mean at ``n_outer`` random prefixes;
    it can refute degeneracy but never certifies it, so the verdict is
    ``None`` whenever the residual is within three standard errors of ``tol``.
    """
    if kernel.exact:
        res = float(np.max(np.abs(conditional_mean_table(kernel, kernel.p - 1))))
        return DegeneracyReport(res <= tol, res)
    if rng is None:
        raise UnsupportedModeError("Monte Carlo degeneracy check needs an explicit rng")
    prefix = kernel.measure.draw(rng, (n_outer, 1, kernel.p - 1))
    last = kernel.measure.draw(rng, (n_outer, n_inner, 1))
    args = np.concatenate([np.broadcast_to(prefix, (n_outer, n_inner, kernel.p - 1)), last], axis=-1)
    vals = kernel(args)
    means = vals.mean(axis=1)
    ses = vals.std(axis=1, ddof=1) / math.sqrt(n_inner)
    k = int(np.argmax(np.abs(means)))
    res, se = float(abs(means[k])), float(ses[k])
    verdict = None if res <= tol + 3.0 * se else False
    return DegeneracyReport(verdict, res, se, mode="mc")


# ---------------------------------------------------------------------------
# norms and moments
# ---------------------------------------------------------------------------
def lr_norm(
    kernel: Kernel,
    r: float,
    *,
    cap: int = DEFAULT_TUPLE_CAP,
    rng: np.random.Generator | None = None,
    n_samples: int = 200_000,
    return_se: bool = False,
):
    """(E|psi|^r)^(1/r); exact for finite support, Monte Carlo otherwise.

    With ``return_se=True`` a ``(value, standard_error)`` pair is returned
    (the error is 0 in exact mode; delta method in MC mode).
    """
    if r <= 0:
        raise ValidationError("r must be positive")
    if kernel.exact:
        m = float(np.sum(np.abs(kernel.tensor(cap)) ** r * _product_mass(kernel.measure, kernel.p)))
        val = m ** (1.0 / r)
        return (val, 0.0) if return_se else val
    if rng is None:
        raise UnsupportedModeError("Monte Carlo norm needs an explicit rng")
    v = np.abs(kernel(kernel.draw_args(rng, n_samples))) ** r
    m, se_m = float(v.mean()), float(v.std(ddof=1) / math.sqrt(n_samples))
    val = m ** (1.0 / r)
    se = (val / (r * m)) * se_m if m > 0 else 0.0
    return (val, se) if return_se else val


def cross_moment(k1: Kernel, k2: Kernel, *, rng=None, n_samples: int = 200_000) -> float:
    """E[psi_1(X_1..X_p) psi_2(X_1..X_p)] for two kernels of the same order."""
    if k1.p != k2.p:
        raise ValidationError("cross moments need kernels of equal order")
    if k1.exact and k2.exact:
        if k1.measure is not k2.measure and not (
            np.array_equal(k1.measure.values, k2.measure.values)
            and np.array_equal(k1.measure.masses, k2.measure.masses)
        ):
            raise ValidationError("kernels are defined over different measures")
        w = _product_mass(k1.measure, k1.p)
        return float(np.sum(k1.tensor() * k2.tensor() * w))
    if rng is None:
        raise UnsupportedModeError("Monte Carlo cross moment needs an explicit rng")
    x = k1.draw_args(rng, n_samples)
    return float(np.mean(k1(x) * k2(x)))


def shifted_difference_moment(
    kernel: Kernel, r: float = 3, *, cap: int = DEFAULT_TUPLE_CAP, rng=None, n_samples: int = 200_000
) -> float:
    """E|psi(X_1..X_p) - psi(X_2..X_{p+1})|^r (arguments overlap in p-1 places).

    Exact for finite support by enumerating ``support**(p+1)``.
    """
    p = kernel.p
    if kernel.exact:
        s = kernel.measure.size
        if s ** (p + 1) > cap:
            raise EnumerationTooLargeError(f"{s}^{p + 1} tuples exceeds the cap {cap}")
        t = kernel.tensor(cap)
        diff = t[..., None] - t[None, ...]
        return float(np.sum(np.abs(diff) ** r * _product_mass(kernel.measure, p + 1)))
    if rng is None:
        raise UnsupportedModeError("Monte Carlo moment needs an explicit rng")
    x = kernel.draw_args(rng, n_samples, extra=1)
    return float(np.mean(np.abs(kernel(x[:, :p]) - kernel(x[:, 1:])) ** r))


# ---------------------------------------------------------------------------
# Hoeffding decomposition
# ---------------------------------------------------------------------------
@dataclass(frozen=True)
class HoeffdingDecomposition:
    mean: float
    components: list  # components[q-1] is the degenerate kernel of order q

    def reconstruct(self, x: np.ndarray) -> np.ndarray:
        """mean + sum_q sum_{|K| = q} psi_q(x_K), evaluated at rows of ``x``."""
        x = np.asarray(x, dtype=float)
        p = x.shape[-1]
        out = np.full(x.shape[:-1], self.mean)
        for q, comp in enumerate(self.components, start=1):
            for K in itertools.combinations(range(p), q):
                out = out + comp(x[..., list(K)])
        return out


def hoeffding_decompose(kernel: Kernel) -> HoeffdingDecomposition:
    """Decompose psi into a constant plus completely degenerate components.

    psi_q(x_1..x_q) = sum over A subset of [q] of (-1)^(q-|A|) E[psi(x_A, X_rest)].
    """
    if not kernel.exact:
        raise UnsupportedModeError("the Hoeffding decomposition needs a finite-support measure")
    p, meas = kernel.p, kernel.measure
    cond = [conditional_mean_table(kernel, k) for k in range(p + 1)]  # cond[k] has k axes
    mean = float(cond[0])
    comps = []
    for q in range(1, p + 1):
        t = np.zeros((meas.size,) * q)
        for k in range(q + 1):
            sign = (-1.0) ** (q - k)
            for A in itertools.combinations(range(q), k):
                # place cond[k]'s axes at positions A, broadcast over the rest
                shape = [1] * q
                for a in A:
                    shape[a] = meas.size
                t = t + sign * cond[k].reshape(shape)
        comps.append(table_kernel(t, meas, name=f"{kernel.name}_h{q}"))
    return HoeffdingDecomposition(mean, comps)


# ---------------------------------------------------------------------------
# JSON config
# ---------------------------------------------------------------------------
def measure_from_config(cfg: dict) -> FiniteSupport:
    """``{"atoms": [[v, m], ...]}`` or a named builtin ``{"builtin": ...}``."""
    if "atoms" in cfg:
        return FiniteSupport.from_atoms(cfg["atoms"])
    name = cfg.get("builtin")
    if name == "rademacher":
        return rademacher()
    if name == "centered_bernoulli":
        return centered_bernoulli(float(cfg["p"]))
    if name == "standardized_bernoulli":
        return standardized_bernoulli(float(cfg["p"]))
    raise ValidationError(f"unknown measure config {cfg!r}")


def kernel_from_config(cfg: dict, measure: BaseMeasure, p: int | None = None) -> Kernel:
    """Build a kernel from ``{"type": "product" | "table" | "runs_builtin", ...}``."""
    kind = cfg.get("type")
    if kind == "product":
        order = int(cfg.get("p", p or 0))
        return product_kernel(order, measure)
    if kind == "runs_builtin":
        # the order-j component of the runs decomposition is a product kernel
        # over centered Bernoulli variables
        order = int(cfg.get("order", p or 0))
        return product_kernel(order, measure)
    if kind == "table":
        if not isinstance(measure, FiniteSupport):
            raise ValidationError("table kernels need a finite-support measure")
        support = [float(v) for v in cfg["support"]]
        if sorted(support) != list(measure.values):
            raise ValidationError("table support does not match the measure's atoms")
        values = cfg["values"]
        if isinstance(values, list):
            tensor = np.array(values, dtype=float)
            order = np.argsort(support)  # sorted position -> given position
            for ax in range(tensor.ndim):
                tensor = np.take(tensor, order, axis=ax)
            return table_kernel(tensor, measure)
        keys = {tuple(float(v) for v in k.split(",")): float(val) for k, val in values.items()}
        order = {len(k) for k in keys}
        if len(order) != 1:
            raise ValidationError("table keys have inconsistent arity")
        (q,) = order
        tensor = np.full((measure.size,) * q, np.nan)
        for key, val in keys.items():
            idx = tuple(measure.index_of(np.array(key)))
            for perm in itertools.permutations(idx):
                if not np.isnan(tensor[perm]) and tensor[perm] != val:
                    raise ValidationError(f"table values are not symmetric at {key}")
                tensor[perm] = val
        if np.isnan(tensor).any():
            raise ValidationError("table does not define every support tuple")
        return table_kernel(tensor, measure)
    raise ValidationError(f"unknown kernel type {kind!r}")
