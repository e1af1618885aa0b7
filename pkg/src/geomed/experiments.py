"""Monte Carlo verification harness: moment curves, rate fits, envelope checks.

Replicated runs of the streaming estimators with per-replicate derived seeds
(see :func:`geomed.sources.mix_seed`), checkpointed error distances, power-law
fits of the moment curves, and trajectory-envelope trend statistics for the
almost-sure rate claims.  Replicates are stepped in lockstep as rows of one
array, which reproduces each replicate's solo trajectory bit for bit while
keeping the whole sweep vectorized.

Aggregation uses exactly rounded (compensated) summation, so aggregated
curves do not depend on replicate execution order.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy import stats

from .estimators import EPS_DEGENERATE, StepSchedule
from .sources import BLOCK, Empirical, assumption_check, mix_seed
from .space import as_point

__all__ = [
    "log_checkpoints",
    "ExperimentConfig",
    "DistanceTable",
    "simulate_distances",
    "MomentCurve",
    "run_replications",
    "RateFit",
    "fit_rate",
    "EnvelopeReport",
    "as_envelope",
    "averaged_as_check",
    "OracleComparison",
    "compare_to_oracle",
    "RobustnessReport",
    "mean_vs_median_report",
]


def log_checkpoints(n_max: int, per_decade: int = 20) -> tuple[int, ...]:
    """Log-spaced checkpoint grid on [1, n_max], n_max always included."""
    if n_max < 1:
        raise ValueError(f"n_max must be >= 1, got {n_max}")
    if per_decade < 1:
        raise ValueError(f"per_decade must be >= 1, got {per_decade}")
    exps = np.arange(0.0, math.log10(n_max) + 1e-12, 1.0 / per_decade)
    ns = np.unique(np.rint(10.0**exps).astype(int))
    ns = ns[(ns >= 1) & (ns <= n_max)]
    if ns.size == 0 or ns[-1] != n_max:
        ns = np.append(ns, n_max)
    return tuple(int(v) for v in ns)


@dataclass(frozen=True)
class ExperimentConfig:
    """Frame for one replicated run.

    `checkpoints` defaults to 20 per decade; `fit_window` is the (n_lo, n_hi)
    range later rate fits read from and must sit inside the checkpoint span.
    The source must have a known true median, since every recorded quantity
    is a distance to it.
    """

    source: object
    schedule: StepSchedule
    n_max: int
    replicates: int
    master_seed: int = 0
    checkpoints: tuple[int, ...] | None = None
    p_list: tuple[int, ...] = (1,)
    fit_window: tuple[float, float] | None = None
    init_radius: float = math.inf
    eps_degenerate: float = EPS_DEGENERATE

    def __post_init__(self):
        if self.n_max < 1:
            raise ValueError(f"n_max must be >= 1, got {self.n_max}")
        if self.replicates < 2:
            raise ValueError(f"need at least 2 replicates, got {self.replicates}")
        cps = self.checkpoints
        if cps is None:
            cps = log_checkpoints(self.n_max)
        cps = tuple(int(c) for c in cps)
        if any(c2 <= c1 for c1, c2 in zip(cps, cps[1:])):
            raise ValueError("checkpoints must be strictly increasing")
        if cps[0] < 1 or cps[-1] > self.n_max:
            raise ValueError(f"checkpoints must lie in [1, {self.n_max}]")
        object.__setattr__(self, "checkpoints", cps)
        plist = tuple(int(p) for p in self.p_list)
        if not plist or any(p < 1 for p in plist):
            raise ValueError("p_list must contain integers >= 1")
        object.__setattr__(self, "p_list", plist)
        if self.fit_window is not None:
            lo, hi = self.fit_window
            if not (cps[0] <= lo < hi <= cps[-1]):
                raise ValueError(
                    f"fit_window {self.fit_window} must sit inside the checkpoint span "
                    f"[{cps[0]}, {cps[-1]}]"
                )
            object.__setattr__(self, "fit_window", (float(lo), float(hi)))
        if self.source.true_median() is None:
            raise ValueError("source has no known true median; cannot measure distances")


@dataclass(frozen=True)
class DistanceTable:
    """Per-replicate distances to the true median at every checkpoint.

    `rm[r, k]` and `avg[r, k]` are the errors of the raw iterate and of its
    running average for replicate r at checkpoint `checkpoints[k]`; `mean`,
    when tracked, holds the plain sample mean's error for comparison.
    """

    checkpoints: tuple[int, ...]
    rm: np.ndarray
    avg: np.ndarray
    skipped: np.ndarray
    config: ExperimentConfig
    mean: np.ndarray | None = None


def _validate_source(config: ExperimentConfig) -> None:
    src = config.source
    if isinstance(src, Empirical):
        n = src.dataset.shape[0]
        if n < 2 or not assumption_check(src.dataset, src.space).a1_ok:
            raise ValueError("source fails the non-collinearity check (A1)")


def _row_norms(arr: np.ndarray, w: np.ndarray | None) -> np.ndarray:
    sq = arr * arr
    if w is not None:
        sq = sq * w
    return np.sqrt(sq.sum(axis=1))


def simulate_distances(config: ExperimentConfig, track_sample_mean: bool = False) -> DistanceTable:
    """Run all replicates and record their checkpoint distances.

    Replicate r draws from the source reseeded with
    ``mix_seed(master_seed, r)`` and follows exactly the update rule of
    :func:`geomed.estimators.rm_step`, so each row of the result matches the
    corresponding solo `run_stream` trajectory bit for bit.  With
    `track_sample_mean` the running mean of the raw draws is measured at the
    same checkpoints.
    """
    _validate_source(config)
    src = config.source
    space = src.space
    w = space.weights
    m = as_point(src.true_median(), space)
    mm = m[None, :]
    n_max = config.n_max
    n_rep = config.replicates
    d = space.dimension
    cps = config.checkpoints
    n_cp = len(cps)
    eps = config.eps_degenerate
    empirical = isinstance(src, Empirical)

    streams = [src.block_stream(seed=mix_seed(config.master_seed, r)) for r in range(n_rep)]
    buf = np.empty((BLOCK, n_rep, d))
    rm = np.empty((n_rep, n_cp))
    avg = np.empty((n_rep, n_cp))
    mean_dist = np.empty((n_rep, n_cp)) if track_sample_mean else None
    acc_sum = np.zeros((n_rep, d)) if track_sample_mean else None
    skipped = np.zeros(n_rep, dtype=np.int64)
    z = np.empty((n_rep, d))
    z_bar = np.empty((n_rep, d))

    n = 0
    k = 0
    while n < n_max:
        for r, stream in enumerate(streams):
            try:
                block = next(stream)
            except StopIteration:
                raise RuntimeError(f"source exhausted after {n} of {n_max} draws") from None
            if block.shape[0] < BLOCK and n + block.shape[0] < n_max:
                raise RuntimeError(f"source exhausted after {n + block.shape[0]} of {n_max} draws")
            buf[: block.shape[0], r, :] = block
        used = 0
        for b in range(BLOCK):
            if n == n_max:
                break
            x = buf[b]
            if n == 0:
                z[:] = x
                if math.isfinite(config.init_radius):
                    z[_row_norms(z, w) > config.init_radius] = 0.0
                z_bar[:] = z
                n = 1
            else:
                gamma = config.schedule.step_size(n)
                diff = x - z
                dist = _row_norms(diff, w)
                if empirical:
                    thr = eps * np.maximum(1.0, _row_norms(z, w))
                else:
                    # Continuous laws hit the iterate with probability zero;
                    # only an exact (or denormal-range) coincidence is skipped.
                    thr = 1e-250
                good = dist > thr
                safe = np.where(good, dist, 1.0)
                factor = np.where(good, gamma / safe, 0.0)
                skipped += ~good
                z += diff * factor[:, None]
                n += 1
                z_bar -= (z_bar - z) / n
            used = b + 1
            if k < n_cp and n == cps[k]:
                rm[:, k] = _row_norms(z - mm, w)
                avg[:, k] = _row_norms(z_bar - mm, w)
                if track_sample_mean:
                    cur = acc_sum + buf[: b + 1].sum(axis=0)
                    mean_dist[:, k] = _row_norms(cur / n - mm, w)
                k += 1
        if track_sample_mean:
            acc_sum += buf[:used].sum(axis=0)

    return DistanceTable(
        checkpoints=cps, rm=rm, avg=avg, skipped=skipped.copy(), config=config, mean=mean_dist
    )


@dataclass(frozen=True)
class MomentCurve:
    """Checkpointed Monte Carlo estimate of the 2p-th error moment.

    `moments[k]` is the replicate average of ``dist**(2p)`` at checkpoint
    `ns[k]`; `stderrs` are the matching standard errors of that average.
    """

    p: int
    estimator: str
    ns: tuple[int, ...]
    moments: tuple[float, ...]
    stderrs: tuple[float, ...]


def _aggregate(dists: np.ndarray, p: int, ns: tuple[int, ...], estimator: str) -> MomentCurve:
    n_rep = dists.shape[0]
    moments = []
    stderrs = []
    for col in range(dists.shape[1]):
        vals = dists[:, col] ** (2 * p)
        mean = math.fsum(vals) / n_rep
        var = math.fsum((v - mean) ** 2 for v in vals) / (n_rep - 1)
        moments.append(mean)
        stderrs.append(math.sqrt(var / n_rep))
    return MomentCurve(
        p=p, estimator=estimator, ns=ns, moments=tuple(moments), stderrs=tuple(stderrs)
    )


def run_replications(
    config: ExperimentConfig, table: DistanceTable | None = None
) -> list[MomentCurve]:
    """Moment curves for every (p, estimator) pair of the configuration.

    Runs the replicated simulation (or reuses a precomputed `table`) and
    aggregates ``E dist**(2p)`` with exactly rounded sums, so the curves are
    independent of replicate ordering.
    """
    if table is None:
        table = simulate_distances(config)
    curves = []
    for p in config.p_list:
        curves.append(_aggregate(table.rm, p, table.checkpoints, "rm"))
        curves.append(_aggregate(table.avg, p, table.checkpoints, "averaged"))
    return curves


@dataclass(frozen=True)
class RateFit:
    """Least-squares power-law fit of a moment curve (natural-log axes)."""

    slope: float
    intercept: float
    r_squared: float
    slope_stderr: float

    def __post_init__(self):
        if not (-1e-12 <= self.r_squared <= 1.0 + 1e-12):
            raise ValueError(f"r_squared outside [0, 1]: {self.r_squared}")


def fit_rate(curve: MomentCurve, window: tuple[float, float]) -> RateFit:
    """OLS of log(moment) on log(n) over checkpoints inside `window`."""
    lo, hi = window
    ns = np.asarray(curve.ns, dtype=float)
    ms = np.asarray(curve.moments, dtype=float)
    keep = (ns >= lo) & (ns <= hi)
    if keep.sum() < 5:
        raise ValueError(f"need at least 5 checkpoints in window [{lo}, {hi}], have {keep.sum()}")
    if np.any(ms[keep] <= 0):
        raise ValueError("moments must be positive for a log-log fit")
    res = stats.linregress(np.log(ns[keep]), np.log(ms[keep]))
    return RateFit(
        slope=float(res.slope),
        intercept=float(res.intercept),
        r_squared=float(res.rvalue**2),
        slope_stderr=float(res.stderr),
    )


@dataclass(frozen=True)
class EnvelopeReport:
    """Trend statistic for an almost-sure rate claim.

    For each trajectory, `stat_early` / `stat_late` are window suprema of the
    rescaled error; the a.s. claim predicts the late supremum to fall below
    the early one for (eventually) every trajectory, so `fraction` tending to
    one is the desk-scale surrogate for it.
    """

    fraction: float
    stat_early: np.ndarray
    stat_late: np.ndarray
    n_replicates: int


def _window_sup(values: np.ndarray, weights_n: np.ndarray, cps: np.ndarray, window) -> np.ndarray:
    lo, hi = window
    keep = (cps >= lo) & (cps <= hi)
    if not keep.any():
        raise ValueError(f"no checkpoints inside window [{lo}, {hi}]")
    return (values[:, keep] * weights_n[keep]).max(axis=1)


def _check_windows(window_early, window_late) -> None:
    lo_e, hi_e = window_early
    lo_l, hi_l = window_late
    if not (lo_e < hi_e and lo_l < hi_l and hi_e <= lo_l):
        raise ValueError("windows must be increasing and the late window must follow the early one")


def as_envelope(
    config: ExperimentConfig,
    beta: float,
    window_early: tuple[float, float],
    window_late: tuple[float, float],
    table: DistanceTable | None = None,
) -> EnvelopeReport:
    """Envelope trend check of the raw iterate at exponent beta < alpha.

    Per trajectory, S(w) = max over checkpoints n in w of n**(beta/2) * dist;
    reported is the fraction of trajectories with S(late) <= S(early).
    """
    if not beta < config.schedule.alpha:
        raise ValueError(f"beta must be below the step exponent alpha, got {beta}")
    _check_windows(window_early, window_late)
    if table is None:
        table = simulate_distances(config)
    cps = np.asarray(table.checkpoints, dtype=float)
    scaling = cps ** (beta / 2.0)
    s_early = _window_sup(table.rm, scaling, cps, window_early)
    s_late = _window_sup(table.rm, scaling, cps, window_late)
    return EnvelopeReport(
        fraction=float((s_late <= s_early).mean()),
        stat_early=s_early,
        stat_late=s_late,
        n_replicates=config.replicates,
    )


def averaged_as_check(
    config: ExperimentConfig,
    delta: float,
    window_early: tuple[float, float],
    window_late: tuple[float, float],
    table: DistanceTable | None = None,
) -> EnvelopeReport:
    """Envelope trend check of the averaged iterate at log-power delta > 0.

    Per trajectory, R_n = sqrt(n) * (ln n)**(-(1+delta)/2) * dist at the
    checkpoints; windows must start at n >= 2 so the log factor is positive.
    """
    if not delta > 0:
        raise ValueError(f"delta must be positive, got {delta}")
    _check_windows(window_early, window_late)
    if window_early[0] < 2:
        raise ValueError("windows must start at n >= 2 (the log factor vanishes at n = 1)")
    if table is None:
        table = simulate_distances(config)
    cps = np.asarray(table.checkpoints, dtype=float)
    with np.errstate(divide="ignore"):
        scaling = np.where(cps >= 2, np.sqrt(cps) * np.log(np.maximum(cps, 2.0)) ** (-(1 + delta) / 2), 0.0)
    s_early = _window_sup(table.avg, scaling, cps, window_early)
    s_late = _window_sup(table.avg, scaling, cps, window_late)
    return EnvelopeReport(
        fraction=float((s_late <= s_early).mean()),
        stat_early=s_early,
        stat_late=s_late,
        n_replicates=config.replicates,
    )


@dataclass(frozen=True)
class OracleComparison:
    """Distances between the averaged iterate and the offline solution."""

    checkpoints: tuple[int, ...]
    distances: np.ndarray
    oracle_point: np.ndarray


def compare_to_oracle(dataset, config: ExperimentConfig) -> OracleComparison:
    """Track ||Zbar_n - m_W|| over resampled streams of the dataset.

    `config.source` must be the resampling source over `dataset`; the target
    m_W is the offline solver's solution, which is that source's true median.
    """
    pts = np.asarray(dataset, dtype=float)
    if not isinstance(config.source, Empirical) or not np.array_equal(config.source.dataset, pts):
        raise ValueError("config.source must be the resampling source over this dataset")
    table = simulate_distances(config)
    return OracleComparison(
        checkpoints=table.checkpoints,
        distances=table.avg.copy(),
        oracle_point=config.source.true_median().copy(),
    )


@dataclass(frozen=True)
class RobustnessReport:
    """Endpoint accuracy of the robust stream versus the plain sample mean."""

    fraction_median_within: float
    fraction_mean_outside: float
    median_final: np.ndarray
    mean_final: np.ndarray
    radius_median: float
    radius_mean: float


def mean_vs_median_report(
    config: ExperimentConfig, radius_median: float, radius_mean: float
) -> RobustnessReport:
    """Compare the averaged estimator and the running sample mean at n_max.

    Reports the replicate fraction whose averaged estimate ends within
    `radius_median` of the true median, and the fraction whose sample mean
    ends farther than `radius_mean` from it.
    """
    if config.checkpoints[-1] != config.n_max:
        raise ValueError("last checkpoint must be n_max for an endpoint comparison")
    table = simulate_distances(config, track_sample_mean=True)
    med = table.avg[:, -1]
    mean = table.mean[:, -1]
    return RobustnessReport(
        fraction_median_within=float((med <= radius_median).mean()),
        fraction_mean_outside=float((mean > radius_mean).mean()),
        median_final=med.copy(),
        mean_final=mean.copy(),
        radius_median=float(radius_median),
        radius_mean=float(radius_mean),
    )
