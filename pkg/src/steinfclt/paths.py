"""Piecewise-constant paths on [0, 1] sampled on the uniform grid {m/n}.

A :class:`StepPath` with resolution ``n`` stores ``n + 1`` rows; the value at
time ``t`` is ``values[floor(n t)]``.  Every simulator in the package produces
paths (or batches of paths, as ``(R, n + 1, d)`` arrays) in this format.
"""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import DomainError, ShapeMismatchError


def grid_index(t: float, n: int) -> int:
    """Grid row holding the value at time ``t`` (``floor(n t)``).

    A tiny relative slack absorbs representation error, so that e.g.
    ``t = 0.3`` with ``n = 10`` maps to row 3 even though ``0.3 * 10``
    evaluates to ``2.9999999999999996``.
    """
    if not (0.0 <= t <= 1.0):
        raise DomainError(f"time {t!r} outside [0, 1]")
    x = n * t
    m = math.floor(x)
    if x - m > 1.0 - 1e-12 * max(1.0, x):
        m += 1
    return min(m, n)


@dataclass(frozen=True)
class StepPath:
    """Immutable d-dimensional step path on the grid {0, 1/n, ..., 1}."""

    values: np.ndarray

    def __post_init__(self):
        v = np.array(self.values, dtype=float)
        if v.ndim == 1:
            v = v[:, None]
        if v.ndim != 2 or v.shape[0] < 2 or v.shape[1] < 1:
            raise ShapeMismatchError(f"values must be (n+1) x d with n >= 1, got shape {v.shape}")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @property
    def n(self) -> int:
        return self.values.shape[0] - 1

    @property
    def d(self) -> int:
        return self.values.shape[1]

    @classmethod
    def zeros(cls, n: int, d: int) -> "StepPath":
        return cls(np.zeros((n + 1, d)))

    def __call__(self, t: float) -> np.ndarray:
        return eval_path(self, t)

    def __add__(self, other: "StepPath") -> "StepPath":
        return combine(1.0, self, 1.0, other)

    def __sub__(self, other: "StepPath") -> "StepPath":
        return combine(1.0, self, -1.0, other)

    def sup_norm(self) -> float:
        return sup_norm(self)

    # -- CSV ---------------------------------------------------------------
    def to_csv(self, path=None) -> str:
        """Serialize as CSV with header ``t,v1,...,vd``; returns the text."""
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["t"] + [f"v{k + 1}" for k in range(self.d)])
        for m, row in enumerate(self.values):
            w.writerow([repr(m / self.n)] + [repr(float(x)) for x in row])
        text = buf.getvalue()
        if path is not None:
            Path(path).write_text(text)
        return text

    @classmethod
    def from_csv(cls, source) -> "StepPath":
        """Inverse of :meth:`to_csv`; accepts CSV text or a file path."""
        text = source
        if isinstance(source, Path) or (isinstance(source, str) and "\n" not in source):
            text = Path(source).read_text()
        rows = list(csv.reader(io.StringIO(text)))
        header, body = rows[0], [r for r in rows[1:] if r]
        if not header or header[0] != "t":
            raise ShapeMismatchError("CSV header must start with 't'")
        n = len(body) - 1
        vals = np.array([[float(x) for x in r[1:]] for r in body])
        ts = np.array([float(r[0]) for r in body])
        if n < 1 or not np.allclose(ts, np.arange(n + 1) / n):
            raise ShapeMismatchError("CSV time column is not the uniform grid m/n")
        return cls(vals)


def eval_path(path: StepPath, t: float) -> np.ndarray:
    """Value of the path at time ``t``: ``values[floor(n t)]``."""
    return path.values[grid_index(t, path.n)].copy()


def sup_norm(path: StepPath) -> float:
    """Supremum over t of the Euclidean norm; exact for step paths."""
    return float(np.max(np.linalg.norm(path.values, axis=1)))


def combine(a: float, p: StepPath, b: float, q: StepPath) -> StepPath:
    """Pointwise linear combination ``a p + b q``."""
    if p.values.shape != q.values.shape:
        raise ShapeMismatchError(f"paths differ in shape: {p.values.shape} vs {q.values.shape}")
    return StepPath(a * p.values + b * q.values)


def batch_sup_norm(paths: np.ndarray) -> np.ndarray:
    """Sup norms of a batch of paths stored as an ``(R, n+1, d)`` array."""
    return np.max(np.linalg.norm(paths, axis=2), axis=1)
