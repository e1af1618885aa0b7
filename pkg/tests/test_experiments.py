import math

import numpy as np
import pytest

from geomed import (
    Empirical,
    ExperimentConfig,
    MomentCurve,
    SampleSource,
    SpaceSpec,
    SphericalGaussian,
    StepSchedule,
    as_envelope,
    averaged_as_check,
    compare_to_oracle,
    fit_rate,
    log_checkpoints,
    mix_seed,
    norm,
    run_replications,
    run_stream,
    simulate_distances,
)
from geomed.experiments import _aggregate


def _gaussian_config(**overrides):
    kwargs = dict(
        source=SphericalGaussian(center=(1.0, -1.0, 0.5), sigma=1.0, seed=0),
        schedule=StepSchedule(1.0, 2.0 / 3.0),
        n_max=2000,
        replicates=8,
        master_seed=42,
    )
    kwargs.update(overrides)
    return ExperimentConfig(**kwargs)


def test_log_checkpoints_cover_range():
    cps = log_checkpoints(10**5)
    assert cps[0] == 1
    assert cps[-1] == 10**5
    assert all(c2 > c1 for c1, c2 in zip(cps, cps[1:]))
    # about 20 per decade
    in_decade = [c for c in cps if 10**3 <= c < 10**4]
    assert 18 <= len(in_decade) <= 21


def test_config_validation():
    with pytest.raises(ValueError, match="replicates"):
        _gaussian_config(replicates=1)
    with pytest.raises(ValueError, match="checkpoints"):
        _gaussian_config(checkpoints=(0, 10))
    with pytest.raises(ValueError, match="checkpoints"):
        _gaussian_config(checkpoints=(10, 3000))
    with pytest.raises(ValueError, match="fit_window"):
        _gaussian_config(fit_window=(0.5, 100.0))
    with pytest.raises(ValueError, match="p_list"):
        _gaussian_config(p_list=(0,))


def test_config_rejects_unknown_median():
    class Mystery(SphericalGaussian):
        def true_median(self):
            return None

    src = Mystery(center=(0.0, 0.0), sigma=1.0, seed=0)
    with pytest.raises(ValueError, match="true median"):
        _gaussian_config(source=src)


def test_point_mass_rejected_by_assumption_validation():
    pts = np.tile([1.0, 2.0], (30, 1))
    cfg = _gaussian_config(source=Empirical(pts, seed=0), n_max=100)
    with pytest.raises(ValueError, match="A1"):
        simulate_distances(cfg)


def test_batch_matches_solo_runs_bitwise():
    cfg = _gaussian_config(n_max=600, replicates=3)
    table = simulate_distances(cfg)
    src = cfg.source
    space = src.space
    m = src.true_median()
    for r in range(3):
        solo = run_stream(
            src.with_seed(mix_seed(cfg.master_seed, r)),
            cfg.n_max,
            cfg.schedule,
            checkpoints=cfg.checkpoints,
        )
        for k, state in enumerate(solo.states):
            assert table.rm[r, k] == norm(state.z - m, space)
            assert table.avg[r, k] == norm(state.z_bar - m, space)


def test_batch_matches_solo_empirical_source():
    rng = np.random.default_rng(1)
    pts = rng.standard_normal((25, 3))
    cfg = _gaussian_config(source=Empirical(pts, seed=0), n_max=300, replicates=2)
    table = simulate_distances(cfg)
    src = cfg.source
    m = src.true_median()
    solo = run_stream(
        src.with_seed(mix_seed(cfg.master_seed, 1)),
        cfg.n_max,
        cfg.schedule,
        checkpoints=cfg.checkpoints,
    )
    for k, state in enumerate(solo.states):
        assert table.rm[1, k] == norm(state.z - m, src.space)


def test_simulate_deterministic():
    cfg = _gaussian_config()
    t1 = simulate_distances(cfg)
    t2 = simulate_distances(cfg)
    np.testing.assert_array_equal(t1.rm, t2.rm)
    np.testing.assert_array_equal(t1.avg, t2.avg)


def test_curves_reproducible_and_order_independent():
    cfg = _gaussian_config(p_list=(1, 2))
    table = simulate_distances(cfg)
    curves = run_replications(cfg, table=table)
    again = run_replications(cfg)
    assert curves == again

    # shuffling replicate rows leaves the exactly-rounded aggregates unchanged
    perm = np.random.default_rng(3).permutation(cfg.replicates)
    shuffled = _aggregate(table.rm[perm], 1, table.checkpoints, "rm")
    original = _aggregate(table.rm, 1, table.checkpoints, "rm")
    assert shuffled == original


def test_moment_jensen_monotonicity():
    cfg = _gaussian_config(replicates=50, n_max=3000, p_list=(1, 2))
    curves = run_replications(cfg)
    by_key = {(c.estimator, c.p): c for c in curves}
    c1, c2 = by_key[("rm", 1)], by_key[("rm", 2)]
    for m1, m2, s2 in zip(c1.moments, c2.moments, c2.stderrs):
        assert m1**2 <= m2 + 3 * s2


def test_fit_rate_exact_power_law():
    ns = tuple(int(v) for v in np.unique(np.logspace(0, 4, 30).astype(int)))
    moments = tuple(5.0 * n ** (-0.66) for n in ns)
    curve = MomentCurve(p=1, estimator="rm", ns=ns, moments=moments, stderrs=(0.0,) * len(ns))
    fit = fit_rate(curve, (1, 10**4))
    assert fit.slope == pytest.approx(-0.66, abs=1e-12)
    assert fit.intercept == pytest.approx(math.log(5.0), abs=1e-12)
    assert fit.r_squared == pytest.approx(1.0, abs=1e-12)
    assert fit.slope_stderr == pytest.approx(0.0, abs=1e-12)


def test_fit_rate_needs_five_points():
    curve = MomentCurve(
        p=1, estimator="rm", ns=(1, 10, 100, 1000), moments=(1.0, 0.5, 0.2, 0.1), stderrs=(0,) * 4
    )
    with pytest.raises(ValueError, match="5 checkpoints"):
        fit_rate(curve, (1, 1000))


def test_envelope_validation():
    cfg = _gaussian_config()
    with pytest.raises(ValueError, match="beta"):
        as_envelope(cfg, beta=0.7, window_early=(10, 100), window_late=(100, 1000))
    with pytest.raises(ValueError, match="window"):
        as_envelope(cfg, beta=0.1, window_early=(100, 1000), window_late=(50, 2000))
    with pytest.raises(ValueError, match="delta"):
        averaged_as_check(cfg, delta=0.0, window_early=(10, 100), window_late=(100, 1000))
    with pytest.raises(ValueError, match="delta"):
        averaged_as_check(cfg, delta=-1.0, window_early=(10, 100), window_late=(100, 1000))


def test_envelope_beta_zero_distances_shrink():
    cfg = _gaussian_config(replicates=30, n_max=10**4)
    rep = as_envelope(cfg, beta=0.0, window_early=(10, 100), window_late=(10**3, 10**4))
    assert rep.fraction >= 0.9


def test_envelope_documented_adjacent_windows():
    # Monte Carlo check at its pinned seed: adjacent-decade windows make the
    # trend statistic noisy, so this asserts at the documented threshold only
    # for the recorded master seed.
    src = SphericalGaussian(center=tuple(np.ones(10) / math.sqrt(10)), sigma=1.0, seed=0)
    cfg = ExperimentConfig(
        source=src,
        schedule=StepSchedule(2.0, 0.66),
        n_max=10**5,
        replicates=50,
        master_seed=42,
    )
    table = simulate_distances(cfg)
    rep = as_envelope(cfg, 0.56, (10**3, 10**4), (10**4, 10**5), table=table)
    assert rep.fraction >= 0.8
    avg_rep = averaged_as_check(cfg, 1.0, (10**3, 10**4), (10**4, 10**5), table=table)
    assert avg_rep.fraction >= 0.8


def test_averaged_check_scaling_homogeneity():
    # power-of-two joint scaling of data and step prefactor scales the
    # rescaled statistic exactly
    base = _gaussian_config(n_max=500, replicates=3)
    scaled = ExperimentConfig(
        source=SphericalGaussian(center=(2.0, -2.0, 1.0), sigma=2.0, seed=0),
        schedule=StepSchedule(2.0, 2.0 / 3.0),
        n_max=500,
        replicates=3,
        master_seed=42,
    )
    t1 = simulate_distances(base)
    t2 = simulate_distances(scaled)
    np.testing.assert_array_equal(t2.avg, 2.0 * t1.avg)
    np.testing.assert_array_equal(t2.rm, 2.0 * t1.rm)


def test_compare_to_oracle_requires_matching_source():
    rng = np.random.default_rng(0)
    pts = rng.standard_normal((30, 3))
    cfg = _gaussian_config(source=Empirical(pts, seed=0), n_max=200)
    with pytest.raises(ValueError, match="resampling source"):
        compare_to_oracle(pts + 1.0, cfg)


def test_compare_to_oracle_single_point_rejected():
    pts = np.array([[1.0, 2.0]])
    cfg = _gaussian_config(source=Empirical(pts, seed=0), n_max=50)
    with pytest.raises(ValueError):
        compare_to_oracle(pts, cfg)


def test_compare_to_oracle_distances_shrink():
    rng = np.random.default_rng(10)
    pts = rng.standard_normal((100, 3))
    cfg = _gaussian_config(source=Empirical(pts, seed=0), n_max=10**4, replicates=10)
    comp = compare_to_oracle(pts, cfg)
    med = np.median(comp.distances, axis=0)
    cps = np.asarray(comp.checkpoints)
    k3 = int(np.argmin(np.abs(cps - 10**3)))
    assert med[-1] < med[k3] < med[0]


def test_source_exhaustion_in_batch():
    pts = np.random.default_rng(8).standard_normal((20, 2))
    cfg = _gaussian_config(
        source=Empirical(pts, with_replacement=False, seed=0), n_max=50, replicates=2
    )
    with pytest.raises(RuntimeError, match="exhausted"):
        simulate_distances(cfg)
