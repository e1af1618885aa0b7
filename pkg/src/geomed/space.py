"""Geometry of the working space: weighted inner products, norms, linear updates.

Points are plain 1-D float64 numpy arrays.  A :class:`SpaceSpec` fixes the
dimension and, for function-on-grid data, the quadrature weights folded into
the inner product.  With no weights the space is plain Euclidean R^d.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = ["SpaceSpec", "as_point", "inner", "norm", "combine"]


@dataclass(frozen=True)
class SpaceSpec:
    """Dimension plus optional quadrature weights (None means unit weights)."""

    dimension: int
    quadrature_weights: tuple[float, ...] | None = None

    def __post_init__(self):
        if not isinstance(self.dimension, (int, np.integer)) or self.dimension < 1:
            raise ValueError(f"dimension must be a positive integer, got {self.dimension}")
        object.__setattr__(self, "dimension", int(self.dimension))
        if self.quadrature_weights is not None:
            w = np.asarray(self.quadrature_weights, dtype=float)
            if w.shape != (self.dimension,):
                raise ValueError(
                    f"expected {self.dimension} quadrature weights, got shape {w.shape}"
                )
            if not np.all(np.isfinite(w)) or np.any(w <= 0.0):
                raise ValueError("quadrature weights must be strictly positive and finite")
            object.__setattr__(self, "quadrature_weights", tuple(float(v) for v in w))

    @property
    def weights(self) -> np.ndarray | None:
        """Weight vector as an array, or None in the unit-weight case."""
        if self.quadrature_weights is None:
            return None
        return np.asarray(self.quadrature_weights, dtype=float)


def as_point(coords, space: SpaceSpec) -> np.ndarray:
    """Validate coordinates against the space and return them as float64."""
    a = np.asarray(coords, dtype=float)
    if a.shape != (space.dimension,):
        raise ValueError(f"expected shape ({space.dimension},), got {a.shape}")
    if not np.all(np.isfinite(a)):
        raise ValueError("coordinates must be finite (no NaN/Inf)")
    return a


def inner(a, b, space: SpaceSpec) -> float:
    """Weighted inner product sum_i w_i a_i b_i."""
    a = as_point(a, space)
    b = as_point(b, space)
    w = space.weights
    if w is None:
        return float((a * b).sum())
    return float((a * b * w).sum())


def norm(a, space: SpaceSpec) -> float:
    """Norm induced by :func:`inner`; zero iff `a` is the zero element."""
    a = as_point(a, space)
    w = space.weights
    if w is None:
        return float(np.sqrt((a * a).sum()))
    return float(np.sqrt((a * a * w).sum()))


def combine(a, s: float, b) -> np.ndarray:
    """Coordinatewise a + s*b, the only linear-algebra primitive the recursions need."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {a.shape} vs {b.shape}")
    s = float(s)
    if not np.isfinite(s):
        raise ValueError("scale factor must be finite")
    return a + s * b
