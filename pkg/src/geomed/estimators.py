"""Recursive geometric-median estimators and the offline fixed-point solver.

Two coupled online recursions driven by one sample per step:

* the stochastic-gradient iterate ``Z``, which moves a distance gamma_n along
  the unit vector pointing from the current iterate to the new sample, and
* its running average ``Z_bar``, which attains the faster 1/n quadratic-mean
  rate.

The offline solver (`weiszfeld`) computes the empirical geometric median of a
fixed point set and serves as the exact oracle the online estimators are
checked against.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .space import SpaceSpec, as_point

__all__ = [
    "StepSchedule",
    "EstimatorState",
    "Trajectory",
    "WeiszfeldResult",
    "initial_state",
    "rm_step",
    "run_stream",
    "weiszfeld",
    "objective_empirical",
]

# Relative threshold below which a sample is treated as coincident with the
# current iterate (the update direction is undefined there).
EPS_DEGENERATE = 1e-12


@dataclass(frozen=True)
class StepSchedule:
    """Gain sequence gamma_n = c_gamma * n**(-alpha) with alpha in (1/2, 1).

    The exponent range makes the step sums diverge while their squares stay
    summable, which is what the recursion needs to converge.
    """

    c_gamma: float = 1.0
    alpha: float = 2.0 / 3.0

    def __post_init__(self):
        if not (self.c_gamma > 0 and math.isfinite(self.c_gamma)):
            raise ValueError(f"c_gamma must be positive and finite, got {self.c_gamma}")
        if not (0.5 < self.alpha < 1.0):
            raise ValueError(f"alpha must lie in (0.5, 1), got {self.alpha}")

    def step_size(self, n: int) -> float:
        """Step gamma_n used when the estimator holds n samples."""
        if n < 1:
            raise ValueError(f"step index must be >= 1, got {n}")
        return self.c_gamma * float(n) ** (-self.alpha)


def _wnorm(v: np.ndarray, w: np.ndarray | None) -> float:
    if w is None:
        return float(np.sqrt((v * v).sum()))
    return float(np.sqrt((v * v * w).sum()))


@dataclass(frozen=True)
class EstimatorState:
    """Snapshot (n, Z_n, Z_bar_n) of the coupled recursions.

    `z_bar` is maintained by the running-mean recursion and equals the
    arithmetic mean of all iterates Z_1..Z_n.  `skipped` counts degenerate
    updates (sample coincident with the iterate) which leave `z` in place but
    still advance n and the step schedule.
    """

    n: int
    z: np.ndarray
    z_bar: np.ndarray
    skipped: int = 0

    def __post_init__(self):
        object.__setattr__(self, "z", np.asarray(self.z, dtype=float))
        object.__setattr__(self, "z_bar", np.asarray(self.z_bar, dtype=float))
        self.z.setflags(write=False)
        self.z_bar.setflags(write=False)


def initial_state(x1, space: SpaceSpec, init_radius: float = math.inf) -> EstimatorState:
    """First state Z_1 = Z_bar_1 from the first sample.

    When a finite `init_radius` is given, a first sample with norm above it is
    replaced by the zero element (bounded initialization).
    """
    x1 = as_point(x1, space)
    if math.isfinite(init_radius) and _wnorm(x1, space.weights) > init_radius:
        x1 = np.zeros(space.dimension)
    return EstimatorState(n=1, z=x1, z_bar=x1.copy())


def rm_step(
    state: EstimatorState,
    x,
    schedule: StepSchedule,
    space: SpaceSpec,
    eps_degenerate: float = EPS_DEGENERATE,
) -> EstimatorState:
    """One update of the coupled recursions with the next sample `x`.

    Non-degenerate step: the iterate moves exactly gamma_n in the space norm,
    along the unit vector toward `x`; the average then absorbs the new iterate
    with weight 1/(n+1).  A sample within ``eps_degenerate * max(1, ||Z_n||)``
    of the iterate leaves `z` unchanged and increments `skipped` (the schedule
    still advances with n).
    """
    x = as_point(x, space)
    if state.z.shape != x.shape:
        raise ValueError(f"state dimension {state.z.shape} does not match sample {x.shape}")
    w = space.weights
    gamma = schedule.step_size(state.n)
    diff = x - state.z
    dist = _wnorm(diff, w)
    scale = max(1.0, _wnorm(state.z, w))
    if dist > eps_degenerate * scale:
        z_new = state.z + diff * (gamma / dist)
        skipped = state.skipped
    else:
        z_new = state.z.copy()
        skipped = state.skipped + 1
    n_new = state.n + 1
    z_bar_new = state.z_bar - (state.z_bar - z_new) / n_new
    return EstimatorState(n=n_new, z=z_new, z_bar=z_bar_new, skipped=skipped)


@dataclass(frozen=True)
class Trajectory:
    """Checkpointed states of one run, plus everything needed to replay it.

    `states[i]` is the snapshot after consuming `checkpoints[i]` samples.  The
    source, schedule and initialization are echoed so diagnostics can re-draw
    the exact sample sequence.
    """

    states: tuple[EstimatorState, ...]
    checkpoints: tuple[int, ...]
    source: object
    schedule: StepSchedule
    space: SpaceSpec
    n_max: int
    init_radius: float = math.inf
    eps_degenerate: float = EPS_DEGENERATE

    def state_at(self, n: int) -> EstimatorState:
        """Snapshot at checkpoint n (raises if n was not checkpointed)."""
        try:
            i = self.checkpoints.index(n)
        except ValueError:
            raise KeyError(f"no snapshot recorded at n={n}") from None
        return self.states[i]


def run_stream(
    source,
    n_max: int,
    schedule: StepSchedule,
    checkpoints=None,
    init_radius: float = math.inf,
    eps_degenerate: float = EPS_DEGENERATE,
) -> Trajectory:
    """Consume `n_max` draws from `source` and snapshot the states.

    `checkpoints` defaults to every step; it must be a sorted subset of
    [1, n_max].  The run is fully determined by the source's seed.  A finite
    source that runs dry before `n_max` raises RuntimeError.
    """
    if n_max < 1:
        raise ValueError(f"n_max must be >= 1, got {n_max}")
    space = source.space
    if checkpoints is None:
        checkpoints = range(1, n_max + 1)
    checkpoints = tuple(int(c) for c in checkpoints)
    if any(c2 <= c1 for c1, c2 in zip(checkpoints, checkpoints[1:])):
        raise ValueError("checkpoints must be strictly increasing")
    if checkpoints and (checkpoints[0] < 1 or checkpoints[-1] > n_max):
        raise ValueError(f"checkpoints must lie in [1, {n_max}]")

    wanted = set(checkpoints)
    states = []
    samples = source.sample_stream()
    try:
        x1 = next(samples)
    except StopIteration:
        raise RuntimeError("source exhausted before the first draw") from None
    state = initial_state(x1, space, init_radius)
    if 1 in wanted:
        states.append(state)
    while state.n < n_max:
        try:
            x = next(samples)
        except StopIteration:
            raise RuntimeError(
                f"source exhausted after {state.n} of {n_max} draws"
            ) from None
        state = rm_step(state, x, schedule, space, eps_degenerate)
        if state.n in wanted:
            states.append(state)
    return Trajectory(
        states=tuple(states),
        checkpoints=checkpoints,
        source=source,
        schedule=schedule,
        space=space,
        n_max=n_max,
        init_radius=init_radius,
        eps_degenerate=eps_degenerate,
    )


@dataclass(frozen=True)
class WeiszfeldResult:
    """Offline solver output: minimizer, iteration count, last relative step."""

    point: np.ndarray
    iterations: int
    final_step: float
    converged: bool

    def __post_init__(self):
        object.__setattr__(self, "point", np.asarray(self.point, dtype=float))
        self.point.setflags(write=False)


def _pairwise_scale(pts: np.ndarray, w: np.ndarray | None, cap: int = 2000) -> float:
    """Mean pairwise distance, from an evenly spaced subsample when N is large."""
    n = pts.shape[0]
    if n > cap:
        idx = np.linspace(0, n - 1, cap).astype(int)
        pts = pts[idx]
        n = cap
    diffs = pts[:, None, :] - pts[None, :, :]
    sq = diffs * diffs if w is None else diffs * diffs * w
    dmat = np.sqrt(sq.sum(axis=-1))
    total = dmat.sum()
    pairs = n * (n - 1)
    return float(total / pairs) if pairs else 0.0


def weiszfeld(
    points,
    weights=None,
    space: SpaceSpec | None = None,
    tol: float = 1e-10,
    max_iter: int = 10_000,
) -> WeiszfeldResult:
    """Empirical geometric median of a weighted point set by fixed-point iteration.

    Parameters
    ----------
    points : (N, d) array of observations.
    weights : optional non-negative weights, default uniform.
    space : geometry; default plain Euclidean of the points' width.
    tol : relative tolerance; convergence requires both the stationarity test
        (gradient norm <= tol * scale, scale = mean pairwise distance) and a
        relative step <= tol.
    max_iter : iteration cap; on hitting it the result carries
        ``converged=False`` rather than raising.

    An iterate that lands on a data point is resolved by the modified update:
    the coincident point's singular term is dropped, and if the remaining pull
    does not exceed that point's weight the data point itself is optimal and
    is returned exactly.
    """
    pts = np.asarray(points, dtype=float)
    if pts.ndim != 2 or pts.shape[0] < 1:
        raise ValueError("need a nonempty (N, d) array of points")
    if space is None:
        space = SpaceSpec(pts.shape[1])
    elif pts.shape[1] != space.dimension:
        raise ValueError(f"points have width {pts.shape[1]}, space expects {space.dimension}")
    n_pts = pts.shape[0]
    if weights is None:
        wt = np.full(n_pts, 1.0 / n_pts)
    else:
        wt = np.asarray(weights, dtype=float)
        if wt.shape != (n_pts,) or np.any(wt < 0) or wt.sum() <= 0:
            raise ValueError("weights must be non-negative with positive total")
        wt = wt / wt.sum()
    w = space.weights

    if np.all(pts == pts[0]):
        return WeiszfeldResult(point=pts[0].copy(), iterations=0, final_step=0.0, converged=True)

    scale = _pairwise_scale(pts, w)
    coincide_tol = 1e-13 * scale

    h = (pts * wt[:, None]).sum(axis=0)
    last_step = math.inf
    for it in range(1, max_iter + 1):
        diff = pts - h
        sq = diff * diff if w is None else diff * diff * w
        dists = np.sqrt(sq.sum(axis=-1))
        near = dists <= coincide_tol
        far = ~near
        # Weighted pull of the non-coincident points toward their median.
        inv = np.zeros(n_pts)
        inv[far] = wt[far] / dists[far]
        pull = (diff * inv[:, None]).sum(axis=0)
        pull_norm = _wnorm(pull, w)

        if near.any():
            w_c = float(wt[near].sum())
            if pull_norm <= w_c:
                # Optimality condition at a data point: return it exactly.
                point = pts[int(np.flatnonzero(near)[0])].copy()
                return WeiszfeldResult(point=point, iterations=it, final_step=0.0, converged=True)
            damping = 1.0 - w_c / pull_norm
        else:
            damping = 1.0

        # Weights are normalized, so the pull is minus the empirical gradient.
        grad_norm = pull_norm
        if grad_norm <= tol * scale and last_step <= tol:
            return WeiszfeldResult(point=h, iterations=it - 1, final_step=last_step, converged=True)

        inv_total = float(inv.sum())
        step_vec = damping * pull / inv_total
        h = h + step_vec
        last_step = _wnorm(step_vec, w) / scale if scale > 0 else 0.0

    return WeiszfeldResult(point=h, iterations=max_iter, final_step=last_step, converged=False)


def objective_empirical(h, points, space: SpaceSpec) -> float:
    """Empirical objective mean_i(||x_i - h|| - ||x_i||), zero at h = 0."""
    pts = np.asarray(points, dtype=float)
    if pts.ndim != 2 or pts.shape[0] < 1:
        raise ValueError("need a nonempty (N, d) array of points")
    h = as_point(h, space)
    w = space.weights
    diff = pts - h
    sq_d = diff * diff if w is None else diff * diff * w
    sq_x = pts * pts if w is None else pts * pts * w
    return float((np.sqrt(sq_d.sum(axis=-1)) - np.sqrt(sq_x.sum(axis=-1))).mean())
