"""Histogramming, moment extraction, calibration, deconvolution, fitting."""

import json
import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from jpatomo.detection import DetectionConfig, RecordBatch, measure
from jpatomo.errors import (
    DegenerateReferenceError,
    InvalidCovarianceError,
    RangeTooSmallError,
    UnphysicalStateError,
)
from jpatomo.gaussian import tms_theory_covariance, two_mode_squeeze, vacuum_state
from jpatomo.tomography import (
    PAIR_LABELS,
    Binning,
    Histogram2D,
    MomentAccumulator,
    MomentSet,
    WignerGrid,
    accumulate_histograms,
    accumulate_moments,
    apply_scale,
    auto_binning,
    calibrate,
    deconvolve,
    estimate_state,
    fit_squeezing,
    moment_set_from_histograms,
    moments_from_histogram,
    reconstruct,
)

# cosh(2 * 1.78) / 4 and sinh(2 * 1.78) / 4
DIAG_R178 = 4.3989544962276
CROSS_R178 = 4.391844790049054
# 0.06 * cosh(3.56) / 4; the excess photon number implied by +3% diagonals
N_ADD_3PCT = 0.263937269773656
# 2 / pi; peak of a 2D vacuum marginal (two variances of 1/4)
VACUUM_MARGINAL_PEAK = 0.6366197723675814


def batch_from_quadratures(q):
    return RecordBatch(q[:, 0] + 1j * q[:, 1], q[:, 2] + 1j * q[:, 3])


# ---------------------------------------------------------------------------
# binning


def test_binning_edges_and_width():
    b = Binning(-2.0, 2.0, bins=4)
    np.testing.assert_allclose(b.edges, [-2, -1, 0, 1, 2])
    assert b.width == 1.0


def test_binning_index_rule_includes_upper_edge():
    b = Binning(0.0, 4.0, bins=4)
    idx, inside = b.index(np.array([-0.1, 0.0, 3.999, 4.0, 4.1]))
    np.testing.assert_array_equal(inside, [False, True, True, True, False])
    assert idx[1] == 0 and idx[2] == 3 and idx[3] == 3


def test_binning_validation():
    with pytest.raises(ValueError):
        Binning(1.0, 1.0)
    with pytest.raises(ValueError):
        Binning(0.0, 1.0, bins=1)
    with pytest.raises(ValueError):
        Binning(0.0, np.inf)


def test_auto_binning_tracks_prefix_sigma():
    rng = np.random.default_rng(1)
    q = rng.standard_normal((20_000, 4)) * np.array([1.0, 1.0, 3.0, 3.0])
    b = auto_binning(batch_from_quadratures(q), bins=128, sigmas=6.0)
    sigma = q[:10_000].std(axis=0).max()
    assert b.bins == 128
    assert b.lo == -6.0 * sigma and b.hi == 6.0 * sigma


def test_auto_binning_rejects_degenerate_prefix():
    q = np.zeros((100, 4))
    with pytest.raises(DegenerateReferenceError):
        auto_binning(batch_from_quadratures(q))
    with pytest.raises(DegenerateReferenceError):
        auto_binning(batch_from_quadratures(np.zeros((1, 4))))


# ---------------------------------------------------------------------------
# histograms


def test_accumulate_empty_records():
    hists = accumulate_histograms(np.empty((0, 4)), Binning(-1, 1, 8))
    assert set(hists) == set(PAIR_LABELS)
    for h in hists.values():
        assert h.counts.sum() == 0 and h.n_total == 0 and h.overflow == 0


def test_accumulate_single_record_lands_once_per_pair():
    b = Binning(-1.0, 1.0, bins=8)
    # bin centers at -0.875 + k * 0.25; put each axis in a distinct bin
    q = np.array([[-0.875, -0.625, 0.125, 0.875]])
    hists = accumulate_histograms(q, b)
    for pair, h in hists.items():
        assert h.counts.sum() == 1 and h.n_total == 1 and h.overflow == 0
    assert hists[("X1", "P1")].counts[0, 1] == 1
    assert hists[("X1", "X2")].counts[0, 4] == 1
    assert hists[("P1", "P2")].counts[1, 7] == 1


def test_accumulate_counts_overflow():
    b = Binning(-1.0, 1.0, bins=4)
    q = np.array([[0.0, 0.0, 0.0, 0.0], [2.0, 0.0, 0.0, 0.0], [0.0, 0.0, 5.0, 0.0]])
    hists = accumulate_histograms(q, b)
    # record 2 overflows any pair touching X1, record 3 any pair touching X2
    assert hists[("X1", "P1")].overflow == 1
    assert hists[("X1", "X2")].overflow == 2
    assert hists[("P1", "P2")].overflow == 0
    for h in hists.values():
        assert int(h.counts.sum()) + h.overflow == h.n_total == 3


def test_pump_off_histogram_is_circularly_symmetric():
    batch = measure(vacuum_state(2), DetectionConfig(), 1_000_000, seed=31)
    hists = accumulate_histograms(batch, auto_binning(batch))
    m = moments_from_histogram(hists[("X1", "P1")])
    assert abs(m.var_x / m.var_y - 1.0) < 0.01
    assert abs(m.cov) < 0.01 * np.sqrt(m.var_x * m.var_y)


def test_histogram_merge_is_bin_exact_across_shards():
    batch = measure(two_mode_squeeze(vacuum_state(2), 1.0), DetectionConfig(), 40_000, seed=8)
    binning = auto_binning(batch)
    whole = accumulate_histograms(batch, binning)
    q = batch.quadratures()
    shards = [
        accumulate_histograms(q[k * 5000 : (k + 1) * 5000], binning) for k in range(8)
    ]
    for pair in PAIR_LABELS:
        merged = shards[0][pair]
        for shard in shards[1:]:
            merged = merged.merge(shard[pair])
        np.testing.assert_array_equal(merged.counts, whole[pair].counts)
        assert merged.n_total == whole[pair].n_total
        assert merged.overflow == whole[pair].overflow


def test_histogram_merge_rejects_mismatches():
    b1, b2 = Binning(-1, 1, 8), Binning(-2, 2, 8)
    h1 = Histogram2D.empty(("X1", "P1"), b1)
    h2 = Histogram2D.empty(("X1", "P1"), b2)
    h3 = Histogram2D.empty(("X1", "X2"), b1)
    with pytest.raises(ValueError):
        h1.merge(h2)
    with pytest.raises(ValueError):
        h1.merge(h3)


def test_histogram_invariant_enforced():
    b = Binning(-1, 1, 4)
    with pytest.raises(ValueError):
        Histogram2D(("X1", "P1"), b.edges, b.edges, np.ones((4, 4), np.int64), n_total=3)
    with pytest.raises(ValueError):
        Histogram2D(("X1", "Q9"), b.edges, b.edges, np.zeros((4, 4), np.int64))


def test_histogram_serialization(tmp_path):
    batch = measure(vacuum_state(2), DetectionConfig(), 5000, seed=2)
    hists = accumulate_histograms(batch, auto_binning(batch, bins=16))
    h = hists[("X1", "X2")]
    d = h.to_json_dict()
    assert d["labels"] == ["X1", "X2"]
    assert np.array(d["counts"], dtype=np.int64).sum() + d["overflow"] == d["n_total"]
    path = tmp_path / "h.csv"
    h.to_csv(path)
    lines = path.read_text().splitlines()
    assert lines[0] == "axis_x,X1"
    assert len(lines) == 6 + 16  # four metadata rows, two edge rows, counts
    h.to_csv(tmp_path / "h2.csv")
    assert (tmp_path / "h2.csv").read_text() == path.read_text()


# ---------------------------------------------------------------------------
# histogram moments


def test_moments_single_loaded_bin_clamps_variance():
    b = Binning(-1.0, 1.0, bins=8)
    q = np.tile([[0.13, 0.13, 0.13, 0.13]], (10, 1))
    h = accumulate_histograms(q, b)[("X1", "P1")]
    m = moments_from_histogram(h)
    assert m.var_x == 0.0 and m.var_y == 0.0
    assert abs(m.mean_x - 0.125) < 1e-12  # center of the containing bin


def test_moments_two_point_mass():
    b = Binning(-1.0, 1.0, bins=8)  # centers at +-0.875, ..., +-0.125
    a = 0.625
    q = np.array([[a, a, a, a], [-a, -a, -a, -a]] * 50, dtype=float)
    m = moments_from_histogram(accumulate_histograms(q, b)[("X1", "X2")])
    assert abs(m.var_x - a**2) <= b.width**2 / 12.0 + 1e-12
    assert abs(m.mean_x) < 1e-12


def test_moments_gaussian_matches_unbinned_tolerance():
    rng = np.random.default_rng(7)
    q = rng.standard_normal((200_000, 4))
    sigma = q[:, 0].std()
    bins = int(np.ceil(12.0 * sigma / (sigma / 5.0)))  # width = sigma/5
    b = Binning(-6.0 * sigma, 6.0 * sigma, bins)
    m = moments_from_histogram(accumulate_histograms(q, b)[("X1", "P1")])
    raw = q[:, 0].var()
    assert abs(m.var_x - raw) / raw < 0.003


def test_moments_overflow_gate():
    b = Binning(-1.0, 1.0, bins=8)
    q = np.zeros((100, 4))
    q[:2, 0] = 5.0  # 2% of records out of range on X1
    h = accumulate_histograms(q, b)[("X1", "P1")]
    with pytest.raises(RangeTooSmallError):
        moments_from_histogram(h)


def test_moments_need_two_in_range_records():
    h = Histogram2D.empty(("X1", "P1"), Binning(-1, 1, 8))
    with pytest.raises(DegenerateReferenceError):
        moments_from_histogram(h)


def test_sheppard_correction_matches_streaming_at_default_binning():
    batch = measure(two_mode_squeeze(vacuum_state(2), 1.2), DetectionConfig(), 300_000, seed=4)
    hists = accumulate_histograms(batch, auto_binning(batch))
    hm = moment_set_from_histograms(hists)
    sm = accumulate_moments(batch)
    scale = np.sqrt(np.outer(hm.variances, hm.variances))
    assert np.max(np.abs(hm.cov - sm.cov) / scale) < 0.005
    np.testing.assert_allclose(hm.mean, sm.mean, atol=0.01)


# ---------------------------------------------------------------------------
# streaming moments


def test_moment_accumulator_matches_numpy():
    rng = np.random.default_rng(3)
    q = rng.standard_normal((10_000, 4)) @ np.diag([1.0, 2.0, 3.0, 4.0])
    ms = accumulate_moments(q)
    np.testing.assert_allclose(ms.mean, q.mean(axis=0), rtol=1e-12, atol=1e-12)
    np.testing.assert_allclose(ms.cov, np.cov(q.T, bias=True), rtol=1e-9, atol=1e-12)
    assert ms.n == 10_000


def test_moment_accumulator_merge_equals_single_pass():
    rng = np.random.default_rng(5)
    q = rng.standard_normal((8192, 4))
    whole = MomentAccumulator().update(q).finalize()
    left = MomentAccumulator().update(q[:3000])
    right = MomentAccumulator().update(q[3000:])
    merged = left.merge(right).finalize()
    np.testing.assert_allclose(merged.cov, whole.cov, rtol=1e-12)
    np.testing.assert_allclose(merged.mean, whole.mean, rtol=1e-12, atol=1e-15)


def test_moment_accumulator_validation():
    acc = MomentAccumulator()
    with pytest.raises(ValueError):
        acc.update(np.zeros((3, 5)))
    with pytest.raises(DegenerateReferenceError):
        MomentAccumulator().update(np.zeros((1, 4))).finalize()


def test_moment_set_validation():
    good = MomentSet(np.zeros(4), np.eye(4), 10)
    assert good.variances.tolist() == [1.0] * 4
    with pytest.raises(InvalidCovarianceError):
        MomentSet(np.zeros(3), np.eye(4), 10)
    with pytest.raises(InvalidCovarianceError):
        MomentSet(np.zeros(4), np.diag([1.0, -1.0, 1.0, 1.0]), 10)
    bad = np.eye(4)
    bad[0, 1] = bad[1, 0] = 1.5  # exceeds sqrt(var_x var_y)
    with pytest.raises(InvalidCovarianceError):
        MomentSet(np.zeros(4), bad, 10)
    with pytest.raises(InvalidCovarianceError):
        MomentSet(np.full(4, np.nan), np.eye(4), 10)


def test_moment_set_from_histograms_requires_all_pairs():
    batch = measure(vacuum_state(2), DetectionConfig(), 1000, seed=6)
    hists = accumulate_histograms(batch, auto_binning(batch))
    del hists[("P1", "P2")]
    with pytest.raises(ValueError):
        moment_set_from_histograms(hists)


# ---------------------------------------------------------------------------
# calibration and deconvolution


def test_calibrate_recovers_injected_gain_imbalance():
    cfg = DetectionConfig(gain_ch1=1.0, gain_ch2=1.02)
    off = measure(vacuum_state(2), cfg, 500_000, seed=19, pump_on=False)
    g1, g2 = calibrate(accumulate_moments(off), cfg.noise_pair)
    assert abs(g2 / g1 - 1.0 / 1.02) < 0.005


def test_calibrate_already_calibrated_is_identity():
    cfg = DetectionConfig(gain_ch1=1.0, gain_ch2=1.0)
    off = measure(vacuum_state(2), cfg, 500_000, seed=23, pump_on=False)
    g1, g2 = calibrate(accumulate_moments(off), 69.0)
    assert abs(g1 - 1.0) < 0.005 and abs(g2 - 1.0) < 0.005


def test_calibrate_target_formula_at_zero_noise():
    # exact fixed point: variances already equal the target (2*0+2)/4 = 1/2
    ms = MomentSet(np.zeros(4), np.eye(4) * 0.5, 100)
    assert calibrate(ms, 0.0) == (1.0, 1.0)


def test_calibrate_per_channel_noise():
    ms = MomentSet(np.zeros(4), np.diag([35.0, 35.0, 18.0, 18.0]), 100)
    g1, g2 = calibrate(ms, (69.0, 35.0))
    assert abs(g1 - 1.0) < 1e-12
    assert abs(g2 - np.sqrt(((2 * 35.0 + 2) / 4) / 18.0)) < 1e-12


def test_calibrate_rejects_degenerate_reference():
    ms = MomentSet(np.zeros(4), np.diag([0.0, 0.0, 1.0, 1.0]), 100)
    with pytest.raises(DegenerateReferenceError):
        calibrate(ms, 69.0)
    with pytest.raises(ValueError):
        calibrate(MomentSet(np.zeros(4), np.eye(4), 10), -1.0)


def test_apply_scale_algebra():
    ms = MomentSet(np.ones(4), np.eye(4) * 4.0, 50)
    out = apply_scale(ms, (0.5, 2.0))
    np.testing.assert_allclose(out.mean, [0.5, 0.5, 2.0, 2.0])
    np.testing.assert_allclose(np.diag(out.cov), [1.0, 1.0, 16.0, 16.0])
    with pytest.raises(ValueError):
        apply_scale(ms, (0.0, 1.0))


def test_deconvolve_identical_moments_yields_vacuum():
    ms = MomentSet(np.zeros(4), np.eye(4) * 35.0, 1000)
    np.testing.assert_allclose(deconvolve(ms, ms), np.eye(4) / 4.0)


def test_deconvolve_recovers_ground_truth_at_one_million_records():
    cfg = DetectionConfig(gain_ch1=1.0, gain_ch2=1.0)
    state = two_mode_squeeze(vacuum_state(2), 1.78)
    on = accumulate_moments(measure(state, cfg, 1_000_000, seed=29))
    off = accumulate_moments(measure(state, cfg, 1_000_000, seed=29, pump_on=False))
    v = deconvolve(on, off)
    # statistical tolerance: 5 sigma with the paired-reference variance
    assert abs(v[0, 0] - DIAG_R178) < 0.12
    assert abs(v[0, 2] - CROSS_R178) < 0.12
    assert abs(v[1, 3] + CROSS_R178) < 0.12
    np.testing.assert_allclose(v, v.T, atol=1e-15)


# ---------------------------------------------------------------------------
# squeezing fit


def test_fit_exact_model_is_fixed_point():
    fit = fit_squeezing(tms_theory_covariance(1.78).cov)
    assert abs(fit.r - 1.78) < 1e-10
    assert abs(fit.n_add) < 1e-10
    assert fit.residual < 1e-10
    assert abs(fit.r_pure - 1.78) < 1e-10


def test_fit_mixed_model_is_fixed_point():
    fit = fit_squeezing(tms_theory_covariance(1.2, 0.3).cov)
    assert abs(fit.r - 1.2) < 1e-10
    assert abs(fit.n_add - 0.3) < 1e-10


def test_fit_inflated_diagonals_reports_excess_noise():
    v = tms_theory_covariance(1.78).cov.copy()
    v[np.diag_indices(4)] *= 1.03
    fit = fit_squeezing(v)
    assert abs(fit.n_add - N_ADD_3PCT) < 1e-9
    assert abs(fit.r - 1.78) < 1e-9
    assert fit.r_pure > 1.78  # pure fit absorbs the excess by drifting up
    assert fit.residual_pure > fit.residual


def test_fit_vacuum():
    fit = fit_squeezing(np.eye(4) / 4.0)
    assert fit.r == 0.0 and fit.n_add == 0.0 and fit.r_pure == 0.0


def test_fit_thermal_covariance_clamps_r():
    fit = fit_squeezing(np.eye(4) * 0.75)
    assert fit.r == 0.0
    assert abs(fit.n_add - 1.0) < 1e-12  # 2 * (0.75 - 0.25)


def test_fit_anticorrelated_cross_clamps_r():
    v = tms_theory_covariance(0.5).cov.copy()
    v[0, 2] = v[2, 0] = -v[0, 2]
    v[1, 3] = v[3, 1] = -v[1, 3]
    fit = fit_squeezing(v)
    assert fit.r == 0.0 and fit.n_add >= 0.0


def test_fit_validation():
    with pytest.raises(InvalidCovarianceError):
        fit_squeezing(np.eye(3))
    with pytest.raises(InvalidCovarianceError):
        fit_squeezing(np.full((4, 4), np.nan))
    bad = tms_theory_covariance(1.0).cov.copy()
    bad[0, 2] += 1.0
    with pytest.raises(InvalidCovarianceError):
        fit_squeezing(bad)


@given(c=st.floats(0.95, 1.05), r=st.floats(0.2, 2.2))
@settings(max_examples=40, deadline=None)
def test_fit_scale_consistency(c, r):
    base = fit_squeezing(tms_theory_covariance(r, 0.1).cov)
    scaled = fit_squeezing(c * tms_theory_covariance(r, 0.1).cov)
    assert abs(scaled.r - base.r) < 0.25 * abs(c - 1.0) * 10 + 1e-9
    assert scaled.n_add >= 0.0


# ---------------------------------------------------------------------------
# reconstruction


def test_wigner_grid():
    g = WignerGrid(extent=2.0, points=5)
    np.testing.assert_allclose(g.axis, [-2, -1, 0, 1, 2])
    with pytest.raises(ValueError):
        WignerGrid(extent=-1.0)
    with pytest.raises(ValueError):
        WignerGrid(points=1)


def test_reconstruct_vacuum():
    res = reconstruct(np.eye(4) / 4.0, WignerGrid(extent=3.0, points=61))
    assert abs(res.witness_d - 1.0) < 1e-12
    assert res.r_fit == 0.0 and res.n_add_fit == 0.0
    m = res.marginals["x1_p1"]
    center = 30
    assert abs(m.measured[center, center] - VACUUM_MARGINAL_PEAK) < 1e-12
    assert abs(m.ideal[center, center] - VACUUM_MARGINAL_PEAK) < 1e-12


def test_reconstruct_squeezed_marginal_orientation():
    v = tms_theory_covariance(1.78, 0.264).cov
    res = reconstruct(v, WignerGrid(extent=4.0, points=81))
    m = res.marginals["x1_x2"]
    ax = m.x
    k_pos = int(np.argmin(np.abs(ax - 2.0)))
    k_neg = int(np.argmin(np.abs(ax + 2.0)))
    # x1 and x2 are correlated: mass concentrates along the +diagonal
    assert m.measured[k_pos, k_pos] > 10.0 * m.measured[k_pos, k_neg]
    assert res.witness_d < 1.0


def test_reconstruct_rejects_grossly_unphysical():
    with pytest.raises(UnphysicalStateError):
        reconstruct(np.eye(4) * 1e-4)


def test_reconstruct_warns_on_marginal_violation():
    v = tms_theory_covariance(1.78).cov - 3e-6 * np.eye(4)
    with pytest.warns(RuntimeWarning):
        res = reconstruct(v, WignerGrid(extent=1.0, points=3))
    assert res.r_fit > 0.0


def test_reconstruct_json_round_trip(tmp_path):
    res = reconstruct(
        tms_theory_covariance(1.1, 0.05).cov,
        WignerGrid(extent=2.0, points=11),
        scale_factors=(1.0, 0.98),
        n_records=(1000, 1000),
    )
    d = res.to_json_dict()
    assert len(d["v"]) == 16
    assert d["v"][0] == pytest.approx(np.cosh(2.2) / 4 + 0.025)
    assert d["scale_factors"] == [1.0, 0.98]
    assert d["n_records"] == [1000, 1000]
    path = tmp_path / "res.json"
    res.save_json(path)
    assert json.loads(path.read_text()) == json.loads(json.dumps(d))


def test_wigner_marginal_csv(tmp_path):
    res = reconstruct(np.eye(4) / 4.0, WignerGrid(extent=1.0, points=3))
    path = tmp_path / "w.csv"
    res.marginals["x1_p1"].to_csv(path)
    lines = path.read_text().splitlines()
    assert lines[0] == "x1,p1,density"
    assert len(lines) == 1 + 9


# ---------------------------------------------------------------------------
# end-to-end estimation


def test_estimate_state_round_trip_small():
    cfg = DetectionConfig()
    state = two_mode_squeeze(vacuum_state(2), 1.78)
    on = measure(state, cfg, 300_000, seed=41)
    off = measure(state, cfg, 300_000, seed=41, pump_on=False)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        hist = estimate_state(on, off, cfg.noise_pair, method="histogram")
        stream = estimate_state(on, off, cfg.noise_pair, method="streaming")
    for est in (hist, stream):
        res = est.tomography
        assert abs(res.r_fit_pure - 1.78) < 0.02
        assert res.n_add_fit < 0.05
        assert abs(res.scale_factors[1] / res.scale_factors[0] - 1 / 1.02) < 0.01
        assert res.n_records == (300_000, 300_000)
    assert hist.binning is not None and stream.binning is None
    assert set(hist.histograms_on) == set(PAIR_LABELS)
    dv = np.abs(hist.tomography.v - stream.tomography.v)
    bound = np.sqrt(np.outer(np.diag(hist.tomography.v), np.diag(hist.tomography.v)))
    assert np.max(dv / bound) < 0.005


def test_estimate_state_validates_method():
    batch = measure(vacuum_state(2), DetectionConfig(), 100, seed=1)
    with pytest.raises(ValueError):
        estimate_state(batch, batch, 69.0, method="bogus")
