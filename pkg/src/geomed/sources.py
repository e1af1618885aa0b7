"""Sample generators, dataset loading, and distributional sanity checks.

Every source owns a 64-bit seed and generates its draws through a fixed block
protocol (PCG64 generator, blocks of :data:`BLOCK` samples), so that a stream
consumed one draw at a time, in bulk, or replicate-parallel is bit-identical.
Replicate r of an experiment derives its seed with :func:`mix_seed`.

Centrally symmetric kinds expose their geometric median in closed form; the
resampling (empirical) kind exposes the offline solver's solution.
"""

from __future__ import annotations

import csv
import math
import struct
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .estimators import _pairwise_scale, weiszfeld
from .space import SpaceSpec

__all__ = [
    "BLOCK",
    "mix_seed",
    "SampleSource",
    "SphericalGaussian",
    "Contaminated",
    "EllipticalStudent",
    "Empirical",
    "FunctionalBridge",
    "DatasetError",
    "load_dataset",
    "save_dataset",
    "AssumptionReport",
    "assumption_check",
]

BLOCK = 256

_MASK64 = (1 << 64) - 1
_GOLDEN = 0x9E3779B97F4A7C15


def mix_seed(master_seed: int, k: int) -> int:
    """Derive stream seed k from a master seed (SplitMix64 finalizer).

    Stated mix: ``splitmix64(master_seed + (k + 1) * 0x9E3779B97F4A7C15)``
    with all arithmetic modulo 2**64.  Replicates therefore own independent
    generators whose seeds do not depend on execution order.
    """
    z = (int(master_seed) + (int(k) + 1) * _GOLDEN) & _MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return (z ^ (z >> 31)) & _MASK64


class SampleSource:
    """Common streaming interface over the concrete source kinds."""

    seed: int

    @property
    def space(self) -> SpaceSpec:
        raise NotImplementedError

    def _blocks(self, gen: np.random.Generator):
        """Yield (<=BLOCK, d) arrays forever (finite kinds stop iterating)."""
        raise NotImplementedError

    def block_stream(self, seed: int | None = None):
        """Fresh block iterator, seeded from `seed` or the source's own seed."""
        gen = np.random.default_rng(np.random.PCG64(self.seed if seed is None else seed))
        return self._blocks(gen)

    def sample_stream(self, seed: int | None = None):
        """Yield draws one at a time, consistent with the block protocol."""
        for block in self.block_stream(seed):
            yield from block

    def draw(self, count: int) -> np.ndarray:
        """First `count` i.i.d. draws as a (count, d) array; restarts at the seed."""
        if count < 1:
            raise ValueError(f"count must be >= 1, got {count}")
        out = np.empty((count, self.space.dimension))
        filled = 0
        for block in self.block_stream():
            take = min(len(block), count - filled)
            out[filled : filled + take] = block[:take]
            filled += take
            if filled == count:
                return out
        raise RuntimeError(f"source exhausted after {filled} of {count} draws")

    def true_median(self) -> np.ndarray | None:
        """Geometric median of the source law, or None when unknown."""
        return None

    def with_seed(self, seed: int) -> "SampleSource":
        return replace(self, seed=int(seed))


def _check_center(center) -> np.ndarray:
    c = np.asarray(center, dtype=float)
    if c.ndim != 1 or c.size < 1 or not np.all(np.isfinite(c)):
        raise ValueError("center must be a finite 1-D vector")
    return c


@dataclass(frozen=True, eq=False)
class SphericalGaussian(SampleSource):
    """X = center + sigma * N(0, I_d); the median is the center by symmetry."""

    center: tuple[float, ...]
    sigma: float
    seed: int = 0

    def __post_init__(self):
        c = _check_center(self.center)
        object.__setattr__(self, "center", tuple(float(v) for v in c))
        if not (self.sigma > 0 and math.isfinite(self.sigma)):
            raise ValueError(f"sigma must be positive and finite, got {self.sigma}")

    @property
    def space(self) -> SpaceSpec:
        return SpaceSpec(len(self.center))

    def _blocks(self, gen):
        c = np.asarray(self.center)
        d = c.size
        while True:
            yield c + self.sigma * gen.standard_normal((BLOCK, d))

    def true_median(self):
        return np.asarray(self.center)


@dataclass(frozen=True, eq=False)
class Contaminated(SampleSource):
    """Two-component spherical Gaussian mixture about a common center.

    A fraction of the draws come from the wide (outlier) component.  Sharing
    the center keeps the law centrally symmetric, so the median is the center
    while the coordinate variance is inflated by the outliers.
    """

    center: tuple[float, ...]
    sigma_core: float
    sigma_outlier: float
    outlier_fraction: float
    seed: int = 0

    def __post_init__(self):
        c = _check_center(self.center)
        object.__setattr__(self, "center", tuple(float(v) for v in c))
        for name in ("sigma_core", "sigma_outlier"):
            v = getattr(self, name)
            if not (v > 0 and math.isfinite(v)):
                raise ValueError(f"{name} must be positive and finite, got {v}")
        if not (0.0 <= self.outlier_fraction < 1.0):
            raise ValueError(f"outlier_fraction must lie in [0, 1), got {self.outlier_fraction}")

    @property
    def space(self) -> SpaceSpec:
        return SpaceSpec(len(self.center))

    def _blocks(self, gen):
        c = np.asarray(self.center)
        d = c.size
        while True:
            # Fixed draw order per block: mixture labels first, then normals.
            labels = gen.random(BLOCK) < self.outlier_fraction
            z = gen.standard_normal((BLOCK, d))
            sig = np.where(labels, self.sigma_outlier, self.sigma_core)
            yield c + z * sig[:, None]

    def true_median(self):
        return np.asarray(self.center)


@dataclass(frozen=True, eq=False)
class EllipticalStudent(SampleSource):
    """Elliptical Student-t: center + diag(scale) * N(0, I) / sqrt(chi2_dof / dof).

    Heavy-tailed showcase; the median exists for any dof > 0 while the mean
    is fragile (or undefined) for small dof.
    """

    center: tuple[float, ...]
    scale_diag: tuple[float, ...]
    dof: float
    seed: int = 0

    def __post_init__(self):
        c = _check_center(self.center)
        object.__setattr__(self, "center", tuple(float(v) for v in c))
        s = np.asarray(self.scale_diag, dtype=float)
        if s.shape != (c.size,) or not np.all(np.isfinite(s)) or np.any(s <= 0):
            raise ValueError("scale_diag must be positive, finite, and match the center")
        object.__setattr__(self, "scale_diag", tuple(float(v) for v in s))
        if not (self.dof > 0 and math.isfinite(self.dof)):
            raise ValueError(f"dof must be positive and finite, got {self.dof}")

    @property
    def space(self) -> SpaceSpec:
        return SpaceSpec(len(self.center))

    def _blocks(self, gen):
        c = np.asarray(self.center)
        s = np.asarray(self.scale_diag)
        d = c.size
        while True:
            # Fixed draw order per block: mixing chi-squares first, then normals.
            g = gen.chisquare(self.dof, BLOCK) / self.dof
            z = gen.standard_normal((BLOCK, d))
            yield c + (s * z) / np.sqrt(g)[:, None]

    def true_median(self):
        return np.asarray(self.center)


@dataclass(frozen=True, eq=False)
class Empirical(SampleSource):
    """Resampling from a fixed dataset, uniformly with replacement by default.

    Without replacement the source is a single seeded permutation pass over
    the dataset and exhausts after N draws.  The true median of the resampling
    law is the offline solver's solution on the dataset.
    """

    dataset: np.ndarray
    with_replacement: bool = True
    seed: int = 0
    weights: tuple[float, ...] | None = None

    def __post_init__(self):
        pts = np.asarray(self.dataset, dtype=float)
        if pts.ndim != 2 or pts.shape[0] < 1:
            raise ValueError("dataset must be a nonempty (N, d) array")
        if not np.all(np.isfinite(pts)):
            raise ValueError("dataset must be finite")
        pts = pts.copy()
        pts.setflags(write=False)
        object.__setattr__(self, "dataset", pts)
        if self.weights is not None:
            SpaceSpec(pts.shape[1], self.weights)  # validates

    @property
    def space(self) -> SpaceSpec:
        return SpaceSpec(self.dataset.shape[1], self.weights)

    def _blocks(self, gen):
        n = self.dataset.shape[0]
        if self.with_replacement:
            while True:
                idx = gen.integers(0, n, BLOCK)
                yield self.dataset[idx]
        else:
            order = gen.permutation(n)
            for lo in range(0, n, BLOCK):
                yield self.dataset[order[lo : lo + BLOCK]]

    def true_median(self):
        cached = getattr(self, "_median_cache", None)
        if cached is None:
            cached = weiszfeld(self.dataset, space=self.space).point
            object.__setattr__(self, "_median_cache", cached)
        return cached


@dataclass(frozen=True, eq=False)
class FunctionalBridge(SampleSource):
    """Brownian-bridge paths around a center function, on a midpoint grid.

    Paths are evaluated at t_j = (j - 1/2)/G for j = 1..G and live in the
    quadrature space with weights 1/G (summing to one).  The bridge is
    symmetric about zero, so the median is the center function on the grid.
    """

    grid_size: int
    center_function: object = None
    seed: int = 0

    def __post_init__(self):
        if not isinstance(self.grid_size, (int, np.integer)) or self.grid_size < 2:
            raise ValueError(f"grid_size must be an integer >= 2, got {self.grid_size}")
        object.__setattr__(self, "grid_size", int(self.grid_size))
        if self.center_function is not None and not callable(self.center_function):
            raise ValueError("center_function must be callable (t -> value) or None")

    @property
    def grid(self) -> np.ndarray:
        g = self.grid_size
        return (np.arange(1, g + 1) - 0.5) / g

    @property
    def space(self) -> SpaceSpec:
        g = self.grid_size
        return SpaceSpec(g, tuple([1.0 / g] * g))

    def _center_values(self) -> np.ndarray:
        if self.center_function is None:
            return np.zeros(self.grid_size)
        vals = np.asarray([float(self.center_function(t)) for t in self.grid])
        if not np.all(np.isfinite(vals)):
            raise ValueError("center_function produced non-finite values")
        return vals

    def _blocks(self, gen):
        t = self.grid
        c = self._center_values()
        # Independent Wiener increments over the gaps between grid times,
        # including the final gap up to t = 1; the bridge pins W(1) back to 0.
        dts = np.diff(np.concatenate([[0.0], t, [1.0]]))
        sqrt_dts = np.sqrt(dts)
        while True:
            incr = gen.standard_normal((BLOCK, dts.size)) * sqrt_dts
            w_path = np.cumsum(incr, axis=1)
            w_one = w_path[:, -1]
            bridge = w_path[:, :-1] - t * w_one[:, None]
            yield c + bridge

    def true_median(self):
        return self._center_values()


class DatasetError(ValueError):
    """Unreadable or malformed dataset file."""


def load_dataset(path, fmt: str = "csv") -> tuple[np.ndarray, SpaceSpec]:
    """Read observations from disk; returns (points, space).

    csv: one observation per row, comma-separated decimals, an optional
    header row auto-detected by its first cell being non-numeric.
    binary_f64: little-endian uint32 dimension, then float64 coordinates
    row-major.
    """
    path = Path(path)
    if fmt == "csv":
        return _load_csv(path)
    if fmt == "binary_f64":
        return _load_binary(path)
    raise ValueError(f"unknown dataset format {fmt!r}")


def _load_csv(path: Path) -> tuple[np.ndarray, SpaceSpec]:
    try:
        text = path.read_text()
    except OSError as exc:
        raise DatasetError(f"cannot read {path}: {exc}") from exc
    rows = [row for row in csv.reader(text.splitlines()) if row]
    if not rows:
        raise DatasetError(f"{path}: empty file")
    start = 0
    try:
        float(rows[0][0])
    except ValueError:
        start = 1  # header row
    if start == len(rows):
        raise DatasetError(f"{path}: no data rows after header")
    width = len(rows[start])
    data = []
    for i, row in enumerate(rows[start:], start=start + 1):
        if len(row) != width:
            raise DatasetError(f"{path}: row {i} has {len(row)} cells, expected {width}")
        try:
            data.append([float(cell) for cell in row])
        except ValueError as exc:
            raise DatasetError(f"{path}: row {i}: {exc}") from exc
    pts = np.asarray(data, dtype=float)
    if not np.all(np.isfinite(pts)):
        raise DatasetError(f"{path}: non-finite values present")
    return pts, SpaceSpec(width)


def _load_binary(path: Path) -> tuple[np.ndarray, SpaceSpec]:
    try:
        raw = path.read_bytes()
    except OSError as exc:
        raise DatasetError(f"cannot read {path}: {exc}") from exc
    if len(raw) < 4:
        raise DatasetError(f"{path}: missing dimension header")
    (dim,) = struct.unpack("<I", raw[:4])
    if dim < 1:
        raise DatasetError(f"{path}: dimension header is {dim}")
    body = raw[4:]
    if len(body) % 8 != 0 or (len(body) // 8) % dim != 0:
        raise DatasetError(f"{path}: payload of {len(body)} bytes is not whole rows of {dim} float64")
    if len(body) == 0:
        raise DatasetError(f"{path}: no data rows")
    pts = np.frombuffer(body, dtype="<f8").reshape(-1, dim).astype(float)
    if not np.all(np.isfinite(pts)):
        raise DatasetError(f"{path}: non-finite values present")
    return pts, SpaceSpec(int(dim))


def save_dataset(path, points, fmt: str = "csv") -> None:
    """Write observations in one of the `load_dataset` formats."""
    pts = np.asarray(points, dtype=float)
    if pts.ndim != 2:
        raise ValueError("points must be a (N, d) array")
    path = Path(path)
    if fmt == "csv":
        lines = [",".join(format(v, ".17g") for v in row) for row in pts]
        path.write_text("\n".join(lines) + "\n")
    elif fmt == "binary_f64":
        payload = struct.pack("<I", pts.shape[1]) + pts.astype("<f8").tobytes()
        path.write_bytes(payload)
    else:
        raise ValueError(f"unknown dataset format {fmt!r}")


@dataclass(frozen=True)
class AssumptionReport:
    """Empirical evidence for the two distributional assumptions.

    `a1_ok` certifies two orthogonal directions of positive variance
    (covariance rank >= 2); `a2_inv_dist` / `a2_inv_dist_sq` are probe-grid
    suprema of the inverse-distance moments.  The probe sup is an honest
    surrogate for the uniform-in-h bound, reported, not certified.
    """

    a1_ok: bool
    a1_variances: tuple[float, float]
    a1_directions: np.ndarray
    a2_inv_dist: float
    a2_inv_dist_sq: float
    dimension_warning: bool
    excluded_probe_terms: int


def assumption_check(
    points,
    space: SpaceSpec | None = None,
    probe_count: int = 50,
    seed: int = 0,
) -> AssumptionReport:
    """Probe a dataset for non-collinearity and non-concentration.

    Probes are jittered data points (relative 1e-3) plus 10 interior points
    (random pairwise convex combinations); probe locations coinciding with a
    data point are excluded from the inverse-distance means.
    """
    pts = np.asarray(points, dtype=float)
    if pts.ndim != 2 or pts.shape[0] < 2:
        raise ValueError("need at least two points")
    n, d = pts.shape
    if space is None:
        space = SpaceSpec(d)
    w = space.weights
    sqrt_w = np.ones(d) if w is None else np.sqrt(w)

    # A1 via the spectrum of the weighted covariance: rank >= 2 up to a
    # relative floor.  Work in sqrt-weight coordinates where the space inner
    # product is Euclidean.
    centered = (pts - pts.mean(axis=0)) * sqrt_w
    svals = np.linalg.svd(centered, compute_uv=False)
    svals = np.concatenate([svals, np.zeros(max(0, 2 - svals.size))])
    variances = svals**2 / max(1, n - 1)
    a1_ok = bool(svals[0] > 0 and svals[1] > 1e-8 * svals[0])
    directions = np.zeros((2, d))
    if svals[0] > 0:
        _, _, vt = np.linalg.svd(centered, full_matrices=False)
        directions = vt[:2] / sqrt_w
        if directions.shape[0] < 2:
            directions = np.vstack([directions, np.zeros((2 - directions.shape[0], d))])

    gen = np.random.default_rng(np.random.PCG64(seed))
    scale = _pairwise_scale(pts, w)
    n_interior = min(10, probe_count)
    n_jitter = max(0, probe_count - n_interior)
    probes = []
    if n_jitter > 0:
        idx = gen.integers(0, n, n_jitter)
        noise = gen.standard_normal((n_jitter, d))
        nn = np.sqrt((noise * noise * (w if w is not None else 1.0)).sum(axis=1))
        nn[nn == 0] = 1.0
        probes.append(pts[idx] + 1e-3 * scale * noise / nn[:, None])
    if n_interior > 0:
        i = gen.integers(0, n, n_interior)
        j = gen.integers(0, n, n_interior)
        t = gen.random(n_interior)
        probes.append(pts[i] * t[:, None] + pts[j] * (1 - t[:, None]))
    probe_pts = np.vstack(probes)

    coincide_tol = 1e-12 * max(scale, 1e-300)
    c1_max = 0.0
    c2_max = 0.0
    excluded = 0
    for h in probe_pts:
        diff = pts - h
        sq = diff * diff if w is None else diff * diff * w
        dist = np.sqrt(sq.sum(axis=1))
        ok = dist > coincide_tol
        excluded += int(n - ok.sum())
        if not ok.any():
            continue
        inv = 1.0 / dist[ok]
        c1_max = max(c1_max, float(inv.mean()))
        c2_max = max(c2_max, float((inv * inv).mean()))

    return AssumptionReport(
        a1_ok=a1_ok,
        a1_variances=(float(variances[0]), float(variances[1])),
        a1_directions=directions,
        a2_inv_dist=c1_max,
        a2_inv_dist_sq=c2_max,
        dimension_warning=bool(d < 3),
        excluded_probe_terms=excluded,
    )
