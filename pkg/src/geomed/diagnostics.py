"""Exact decomposition diagnostics on empirical distributions.

On a finite point set the objective's gradient and Hessian are exactly
computable, so every term of the estimator's error decomposition can be
reconstructed along a recorded trajectory: the martingale noise `xi`, the
linearization remainder `delta`, and the summation-by-parts identity that
ties the averaged iterate to their partial sums.  For continuous laws the
identity is not checkable and is not attempted here.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .estimators import Trajectory, initial_state, rm_step
from .sources import Empirical
from .space import SpaceSpec, as_point

__all__ = [
    "phi_empirical",
    "c1_hat",
    "hessian_empirical",
    "operator_spectrum",
    "DiagnosticsRecord",
    "xi_delta",
    "abel_identity_residual",
    "BoundReport",
    "bound_report",
    "diagnostics_report",
]

HESSIAN_DIM_GUARD = 10_000

# Relative threshold for treating a probe location as sitting on a data point.
_COINCIDE_REL = 1e-12


def _dists(h: np.ndarray, pts: np.ndarray, w: np.ndarray | None):
    diff = pts - h
    sq = diff * diff if w is None else diff * diff * w
    return diff, np.sqrt(sq.sum(axis=-1))


def _wnorm(v: np.ndarray, w: np.ndarray | None) -> float:
    if w is None:
        return float(np.sqrt((v * v).sum()))
    return float(np.sqrt((v * v * w).sum()))


def phi_empirical(h, points, space: SpaceSpec, return_excluded: bool = False):
    """Empirical gradient -(1/N) sum_i (x_i - h)/||x_i - h||.

    Data points coinciding with `h` are excluded from the sum (their count is
    available via ``return_excluded=True``); if every point coincides there
    is no defined direction and a ValueError is raised.  The result has norm
    at most one, being an average of unit vectors.
    """
    pts = np.asarray(points, dtype=float)
    h = as_point(h, space)
    w = space.weights
    diff, dist = _dists(h, pts, w)
    scale = max(1.0, float(dist.max(initial=0.0)))
    ok = dist > _COINCIDE_REL * scale
    excluded = int(pts.shape[0] - ok.sum())
    if not ok.any():
        raise ValueError("all data points coincide with h; gradient undefined")
    unit = diff[ok] / dist[ok, None]
    phi = -unit.sum(axis=0) / pts.shape[0]
    if return_excluded:
        return phi, excluded
    return phi


def c1_hat(h, points, space: SpaceSpec) -> float:
    """Empirical mean of the inverse distance 1/||x_i - h|| (coincident excluded)."""
    pts = np.asarray(points, dtype=float)
    h = as_point(h, space)
    _, dist = _dists(h, pts, space.weights)
    scale = max(1.0, float(dist.max(initial=0.0)))
    ok = dist > _COINCIDE_REL * scale
    if not ok.any():
        raise ValueError("all data points coincide with h")
    return float((1.0 / dist[ok]).sum() / pts.shape[0])


def hessian_empirical(h, points, space: SpaceSpec) -> np.ndarray:
    """Empirical Hessian of the objective at `h`, as a coordinate matrix.

    Each sample contributes (1/r)(I - v (w*v)^T) with v the unit vector from
    `h` to the sample; the mean over samples is self-adjoint in the space
    inner product with spectrum inside [0, c1_hat].  In one dimension the
    tangential projector vanishes identically, so the operator is exactly
    zero.  Dimensions above 10^4 are refused (the matrix would not fit).
    """
    pts = np.asarray(points, dtype=float)
    h = as_point(h, space)
    d = space.dimension
    if d > HESSIAN_DIM_GUARD:
        raise ValueError(f"dimension {d} exceeds the materialization guard {HESSIAN_DIM_GUARD}")
    if d == 1:
        return np.zeros((1, 1))
    w = space.weights
    diff, dist = _dists(h, pts, w)
    scale = max(1.0, float(dist.max(initial=0.0)))
    ok = dist > _COINCIDE_REL * scale
    if not ok.any():
        raise ValueError("all data points coincide with h; Hessian undefined")
    n = pts.shape[0]
    v = diff[ok] / dist[ok, None]
    wv = v if w is None else v * w
    inv = 1.0 / dist[ok]
    mat = float(inv.sum() / n) * np.eye(d)
    mat -= (v * inv[:, None]).T @ wv / n
    return mat


def operator_spectrum(mat: np.ndarray, space: SpaceSpec) -> np.ndarray:
    """Eigenvalues of an operator that is self-adjoint in the space metric."""
    mat = np.asarray(mat, dtype=float)
    w = space.weights
    if w is None:
        sym = 0.5 * (mat + mat.T)
    else:
        s = np.sqrt(w)
        tilde = s[:, None] * mat / s[None, :]
        sym = 0.5 * (tilde + tilde.T)
    return np.linalg.eigvalsh(sym)


@dataclass(frozen=True)
class DiagnosticsRecord:
    """Per-step decomposition terms along a trajectory.

    `xi` is the martingale noise of step n -> n+1 (norm at most 2), `delta`
    the linearization remainder at Z_n, `dist` the error ||Z_n - m||, and the
    two ratios are ||delta||/dist and ||delta||/dist^2 (nan when dist is 0).
    """

    n: int
    xi: np.ndarray
    delta: np.ndarray
    dist: float
    delta_over_dist: float
    delta_over_dist_sq: float


def xi_delta(
    trajectory: Trajectory,
    points,
    space: SpaceSpec,
    m,
    gamma_m: np.ndarray,
) -> list[DiagnosticsRecord]:
    """Reconstruct the noise and remainder terms of every recorded step.

    The trajectory must come from the resampling source over `points` with a
    snapshot at every step, so the gradient is exact and the sample sequence
    can be replayed from the seed.  Each replayed step is checked against the
    recorded snapshot; any discrepancy raises (trajectory/source mismatch).

    For step n (consuming sample X_{n+1}):
      xi_{n+1} = phi(Z_n) + (X_{n+1} - Z_n)/||X_{n+1} - Z_n||
      delta_n  = phi(Z_n) - Gamma_m (Z_n - m)
    Degenerate (skipped) steps have no update direction; their xi reduces to
    phi(Z_n), which keeps the recursion identity exact.
    """
    pts = np.asarray(points, dtype=float)
    m = as_point(m, space)
    gamma_m = np.asarray(gamma_m, dtype=float)
    if not isinstance(trajectory.source, Empirical) or not np.array_equal(
        trajectory.source.dataset, pts
    ):
        raise ValueError("trajectory/source mismatch: trajectory was not run on these points")
    if trajectory.checkpoints != tuple(range(1, trajectory.n_max + 1)):
        raise ValueError("need a snapshot at every step (checkpoints = 1..n_max)")

    w = space.weights
    samples = trajectory.source.sample_stream()
    x1 = next(samples)
    state = initial_state(x1, space, trajectory.init_radius)
    if not (
        np.array_equal(state.z, trajectory.states[0].z)
        and np.array_equal(state.z_bar, trajectory.states[0].z_bar)
    ):
        raise ValueError("trajectory/source mismatch: initial state does not replay")

    records = []
    for k in range(1, trajectory.n_max):
        x = next(samples)
        prev = state
        state = rm_step(state, x, trajectory.schedule, space, trajectory.eps_degenerate)
        snap = trajectory.states[k]
        if not (np.array_equal(state.z, snap.z) and state.skipped == snap.skipped):
            raise ValueError(f"trajectory/source mismatch at step {k}: X_{k + 1} not reproducible")
        phi = phi_empirical(prev.z, pts, space)
        if state.skipped > prev.skipped:
            xi = phi.copy()
        else:
            diff = x - prev.z
            xi = phi + diff / _wnorm(diff, w)
        t_k = prev.z - m
        delta = phi - gamma_m @ t_k
        dist = _wnorm(t_k, w)
        dnorm = _wnorm(delta, w)
        records.append(
            DiagnosticsRecord(
                n=prev.n,
                xi=xi,
                delta=delta,
                dist=dist,
                delta_over_dist=dnorm / dist if dist > 0 else math.nan,
                delta_over_dist_sq=dnorm / dist**2 if dist > 0 else math.nan,
            )
        )
    return records


def abel_identity_residual(
    trajectory: Trajectory,
    records: list[DiagnosticsRecord],
    schedule,
    m,
    gamma_m: np.ndarray,
) -> float:
    """Relative residual of the summation-by-parts decomposition at n = len(records).

    With T_k = Z_k - m the recursion gives, exactly,

      n Gamma_m (Zbar_n - m) = T_1/gamma_1 - T_{n+1}/gamma_n
                               + sum_{k=2}^n T_k (1/gamma_k - 1/gamma_{k-1})
                               - sum_{k=1}^n delta_k + sum_{k=1}^n xi_{k+1},

    so the residual is pure floating-point roundoff when the records are
    exact.  The remainder sum enters with a minus sign: that is the form the
    single-step identity Gamma_m T_1 = (T_1 - T_2)/gamma_1 + xi_2 - delta_1
    forces once delta is defined as gradient minus its linearization.
    """
    n = len(records)
    if n < 1:
        raise ValueError("need at least one record")
    if trajectory.n_max < n + 1:
        raise ValueError("trajectory too short for the identity at this n")
    space = trajectory.space
    w = space.weights
    m = as_point(m, space)
    gamma_m = np.asarray(gamma_m, dtype=float)

    t = lambda k: trajectory.state_at(k).z - m  # noqa: E731
    lhs = n * (gamma_m @ (trajectory.state_at(n).z_bar - m))

    rhs = t(1) / schedule.step_size(1) - t(n + 1) / schedule.step_size(n)
    for k in range(2, n + 1):
        rhs += t(k) * (1.0 / schedule.step_size(k) - 1.0 / schedule.step_size(k - 1))
    for rec in records[:n]:
        rhs -= rec.delta
        rhs += rec.xi
    return _wnorm(lhs - rhs, w) / (1.0 + _wnorm(lhs, w))


@dataclass(frozen=True)
class BoundReport:
    """Extremes of the remainder ratios along a trajectory.

    `c_m_hat` is the empirical surrogate for the quadratic-remainder constant
    (max ||delta||/dist^2); no reference value exists for it, so it is
    reported rather than asserted.  `outlier_steps` flags records whose
    quadratic ratio exceeds 10x its median (a blowup screen as dist -> 0).
    """

    max_delta_over_dist: float
    c_m_hat: float
    median_ratio_sq: float
    outlier_steps: tuple[int, ...]
    n_records: int
    n_excluded: int


def bound_report(records: list[DiagnosticsRecord], dist_scale: float = 1.0) -> BoundReport:
    """Scan xi/delta records for their ratio extremes.

    Records with dist below ``1e-14 * dist_scale`` are excluded from the
    ratios (the quotient is numerically meaningless there); the exclusion
    count is reported.
    """
    if not records:
        raise ValueError("need at least one record")
    floor = 1e-14 * dist_scale
    kept = [r for r in records if r.dist > floor and math.isfinite(r.delta_over_dist)]
    excluded = len(records) - len(kept)
    if not kept:
        return BoundReport(0.0, 0.0, 0.0, (), len(records), excluded)
    r1 = np.asarray([r.delta_over_dist for r in kept])
    r2 = np.asarray([r.delta_over_dist_sq for r in kept])
    med = float(np.median(r2))
    outliers = tuple(int(kept[i].n) for i in np.flatnonzero(r2 > 10 * med))
    return BoundReport(
        max_delta_over_dist=float(r1.max()),
        c_m_hat=float(r2.max()),
        median_ratio_sq=med,
        outlier_steps=outliers,
        n_records=len(records),
        n_excluded=excluded,
    )


def diagnostics_report(
    trajectory: Trajectory,
    points,
    space: SpaceSpec,
    m,
    gamma_m: np.ndarray,
) -> dict:
    """One-shot JSON-ready diagnostics for an empirical-source trajectory."""
    records = xi_delta(trajectory, points, space, m, gamma_m)
    w = space.weights
    xi_norm_max = max(_wnorm(r.xi, w) for r in records)
    scale = max(r.dist for r in records)
    bounds = bound_report(records, dist_scale=scale)
    residual = abel_identity_residual(trajectory, records, trajectory.schedule, m, gamma_m)
    return {
        "n": len(records),
        "xi_norm_max": xi_norm_max,
        "delta_ratio_max": bounds.max_delta_over_dist,
        "abel_residual": residual,
        "c1_hat": c1_hat(m, points, space),
        "c_m_hat": bounds.c_m_hat,
        "skipped_steps": int(trajectory.states[-1].skipped),
        "outlier_steps": list(bounds.outlier_steps),
    }
