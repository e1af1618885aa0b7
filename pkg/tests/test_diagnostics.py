import math

import numpy as np
import pytest

from geomed import (
    DiagnosticsRecord,
    Empirical,
    SpaceSpec,
    SphericalGaussian,
    StepSchedule,
    abel_identity_residual,
    bound_report,
    c1_hat,
    diagnostics_report,
    hessian_empirical,
    operator_spectrum,
    phi_empirical,
    run_stream,
    weiszfeld,
    xi_delta,
)

from .oracles import finite_difference_hessian


def _empirical_setup(n_pts=50, d=5, seed=7, stream_seed=99, n_max=200, schedule=None):
    rng = np.random.default_rng(seed)
    pts = rng.standard_normal((n_pts, d))
    space = SpaceSpec(d)
    src = Empirical(pts, seed=stream_seed)
    sch = schedule or StepSchedule(1.0, 2.0 / 3.0)
    traj = run_stream(src, n_max, sch)
    m = src.true_median()
    gm = hessian_empirical(m, pts, space)
    return pts, space, src, sch, traj, m, gm


# -- gradient -------------------------------------------------------------


def test_phi_symmetry_example():
    sp = SpaceSpec(2)
    pts = np.array([[1.0, 0.0], [-1.0, 0.0]])
    np.testing.assert_allclose(phi_empirical([0.0, 0.0], pts, sp), [0.0, 0.0], atol=1e-16)


def test_phi_single_point_unit_direction():
    sp = SpaceSpec(2)
    phi = phi_empirical([0.0, 0.0], np.array([[2.0, 0.0]]), sp)
    np.testing.assert_allclose(phi, [-1.0, 0.0], rtol=1e-15)


def test_phi_zero_at_weiszfeld_solution():
    rng = np.random.default_rng(12)
    pts = rng.standard_normal((80, 4))
    sp = SpaceSpec(4)
    h = weiszfeld(pts, space=sp).point
    assert np.linalg.norm(phi_empirical(h, pts, sp)) <= 1e-8


def test_phi_norm_at_most_one():
    rng = np.random.default_rng(5)
    pts = rng.standard_normal((30, 3))
    sp = SpaceSpec(3)
    for _ in range(100):
        h = 3.0 * rng.standard_normal(3)
        assert np.linalg.norm(phi_empirical(h, pts, sp)) <= 1.0 + 1e-12


def test_phi_coincident_excluded_and_counted():
    sp = SpaceSpec(2)
    pts = np.array([[0.0, 0.0], [2.0, 0.0]])
    phi, excluded = phi_empirical([0.0, 0.0], pts, sp, return_excluded=True)
    assert excluded == 1
    np.testing.assert_allclose(phi, [-0.5, 0.0], rtol=1e-15)
    with pytest.raises(ValueError):
        phi_empirical([0.0, 0.0], np.array([[0.0, 0.0]]), sp)


def test_phi_linear_growth_bound_near_median():
    # gradient norm is at most c1_hat * distance at probe points
    rng = np.random.default_rng(17)
    pts = rng.standard_normal((100, 4))
    sp = SpaceSpec(4)
    m = weiszfeld(pts, space=sp).point
    c1 = c1_hat(m, pts, sp)
    for _ in range(50):
        h = m + 0.5 * rng.standard_normal(4)
        dist = float(np.linalg.norm(h - m))
        assert np.linalg.norm(phi_empirical(h, pts, sp)) <= c1 * dist * (1 + 1e-9) + 1e-12


# -- Hessian --------------------------------------------------------------


def test_hessian_one_dimension_exactly_zero():
    sp = SpaceSpec(1)
    pts = np.array([[1.0], [-2.0], [5.0]])
    mat = hessian_empirical([0.3], pts, sp)
    assert mat.shape == (1, 1)
    assert mat[0, 0] == 0.0


def test_hessian_hand_computed_two_points():
    sp = SpaceSpec(2)
    pts = np.array([[2.0, 0.0], [-2.0, 0.0]])
    mat = hessian_empirical([0.0, 0.0], pts, sp)
    np.testing.assert_allclose(mat, np.diag([0.0, 0.5]), atol=1e-15)
    fd = finite_difference_hessian([0.0, 0.0], pts, sp)
    assert np.abs(mat - fd).max() <= 1e-5


@pytest.mark.parametrize("seed", range(6))
def test_hessian_matches_finite_differences(seed):
    rng = np.random.default_rng(seed)
    d = int(rng.integers(2, 21))
    pts = rng.standard_normal((40, d))
    sp = SpaceSpec(d)
    h = rng.standard_normal(d) * 0.5
    mat = hessian_empirical(h, pts, sp)
    fd = finite_difference_hessian(h, pts, sp)
    assert np.abs(mat - fd).max() <= 1e-5


def test_hessian_weighted_space_matches_finite_differences():
    rng = np.random.default_rng(100)
    d = 6
    w = tuple(rng.uniform(0.2, 2.0, d))
    sp = SpaceSpec(d, w)
    pts = rng.standard_normal((30, d))
    h = 0.3 * rng.standard_normal(d)
    mat = hessian_empirical(h, pts, sp)
    fd = finite_difference_hessian(h, pts, sp)
    assert np.abs(mat - fd).max() <= 1e-5
    eig = operator_spectrum(mat, sp)
    assert eig.min() >= -1e-10
    assert eig.max() <= c1_hat(h, pts, sp) + 1e-10


def test_hessian_spectrum_bounds_random_instances():
    rng = np.random.default_rng(200)
    for _ in range(10):
        d = int(rng.integers(2, 15))
        pts = rng.standard_normal((25, d))
        sp = SpaceSpec(d)
        h = rng.standard_normal(d)
        mat = hessian_empirical(h, pts, sp)
        eig = operator_spectrum(mat, sp)
        assert eig.min() >= -1e-10
        assert eig.max() <= c1_hat(h, pts, sp) + 1e-10


def test_hessian_dimension_guard():
    sp = SpaceSpec(10_001)
    with pytest.raises(ValueError, match="guard"):
        hessian_empirical(np.zeros(10_001), np.zeros((2, 10_001)), sp)


# -- xi / delta records ---------------------------------------------------


def test_xi_bounded_by_two_every_step():
    pts, space, _, _, traj, m, gm = _empirical_setup(n_max=500)
    records = xi_delta(traj, pts, space, m, gm)
    assert len(records) == 499
    for rec in records:
        assert np.linalg.norm(rec.xi) <= 2.0 + 1e-12


def test_xi_mean_small_martingale():
    pts, space, _, _, traj, m, gm = _empirical_setup(n_pts=100, n_max=10_000, stream_seed=5)
    records = xi_delta(traj, pts, space, m, gm)
    mean_xi = np.mean([r.xi for r in records], axis=0)
    assert np.linalg.norm(mean_xi) <= 0.05


def test_delta_bounded_by_linear_term():
    pts, space, _, _, traj, m, gm = _empirical_setup(n_max=1000)
    c1 = c1_hat(m, pts, space)
    records = xi_delta(traj, pts, space, m, gm)
    for rec in records:
        assert np.linalg.norm(rec.delta) <= 2.0 * c1 * rec.dist * (1 + 1e-9) + 1e-12


def test_xi_delta_rejects_wrong_points():
    pts, space, _, _, traj, m, gm = _empirical_setup()
    other = pts + 1.0
    with pytest.raises(ValueError, match="mismatch"):
        xi_delta(traj, other, space, m, gm)


def test_xi_delta_requires_full_snapshots():
    pts, space, src, sch, _, m, gm = _empirical_setup()
    sparse = run_stream(src, 100, sch, checkpoints=[1, 50, 100])
    with pytest.raises(ValueError, match="every step"):
        xi_delta(sparse, pts, space, m, gm)


# -- Abel identity --------------------------------------------------------


def test_abel_identity_single_step():
    pts, space, src, sch, _, m, gm = _empirical_setup()
    traj = run_stream(src, 2, sch)
    records = xi_delta(traj, pts, space, m, gm)
    assert abel_identity_residual(traj, records[:1], sch, m, gm) <= 1e-10


def test_abel_identity_hundred_steps():
    pts, space, src, sch, _, m, gm = _empirical_setup(n_max=101)
    traj = run_stream(src, 101, sch)
    records = xi_delta(traj, pts, space, m, gm)
    assert abel_identity_residual(traj, records[:100], sch, m, gm) <= 1e-8


def test_abel_identity_sensitive_to_corruption():
    pts, space, src, sch, traj, m, gm = _empirical_setup(n_max=101)
    records = xi_delta(traj, pts, space, m, gm)
    bad_xi = records[40].xi.copy()
    bad_xi[0] += 0.1
    corrupted = list(records)
    corrupted[40] = DiagnosticsRecord(
        n=records[40].n,
        xi=bad_xi,
        delta=records[40].delta,
        dist=records[40].dist,
        delta_over_dist=records[40].delta_over_dist,
        delta_over_dist_sq=records[40].delta_over_dist_sq,
    )
    assert abel_identity_residual(traj, corrupted[:100], sch, m, gm) > 1e-4


def test_abel_identity_weighted_space():
    rng = np.random.default_rng(55)
    pts = rng.standard_normal((30, 4)) * np.array([1.0, 2.0, 0.5, 1.5])
    w = (0.4, 0.3, 0.2, 0.1)
    sp = SpaceSpec(4, w)
    src = Empirical(pts, seed=3, weights=w)
    sch = StepSchedule(1.0, 0.7)
    traj = run_stream(src, 60, sch)
    m = src.true_median()
    gm = hessian_empirical(m, pts, sp)
    records = xi_delta(traj, pts, sp, m, gm)
    assert abel_identity_residual(traj, records, sch, m, gm) <= 1e-8


# -- bound report / emitted document --------------------------------------


def _dummy_record(n, delta_norm, dist):
    delta = np.array([delta_norm, 0.0])
    return DiagnosticsRecord(
        n=n,
        xi=np.zeros(2),
        delta=delta,
        dist=dist,
        delta_over_dist=delta_norm / dist,
        delta_over_dist_sq=delta_norm / dist**2,
    )


def test_bound_report_all_zero_deltas():
    recs = [_dummy_record(i, 0.0, 1.0) for i in range(1, 6)]
    rep = bound_report(recs)
    assert rep.max_delta_over_dist == 0.0
    assert rep.c_m_hat == 0.0


def test_bound_report_trajectory_scan():
    pts, space, _, _, traj, m, gm = _empirical_setup(n_max=2000, stream_seed=17)
    records = xi_delta(traj, pts, space, m, gm)
    c1 = c1_hat(m, pts, space)
    rep = bound_report(records, dist_scale=max(r.dist for r in records))
    assert rep.max_delta_over_dist <= 2.0 * c1 + 1e-9
    assert math.isfinite(rep.c_m_hat)


def test_diagnostics_report_fields():
    pts, space, _, _, traj, m, gm = _empirical_setup(n_max=150)
    doc = diagnostics_report(traj, pts, space, m, gm)
    for key in ("n", "xi_norm_max", "delta_ratio_max", "abel_residual", "c1_hat", "c_m_hat"):
        assert key in doc
    assert doc["n"] == 149
    assert doc["abel_residual"] <= 1e-8
    assert doc["xi_norm_max"] <= 2.0 + 1e-12
