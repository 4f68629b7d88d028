import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import lpips_loops, ranks_by_sorting, ssim_sliding
from pfbench.errors import DegenerateInput, EmptyInput, ImageSmallerThanWindow, MissingCell, ShapeMismatch
from pfbench.metrics import (
    METRIC_DIRECTIONS,
    MetricReport,
    ProfileLine,
    average_rank,
    bootstrap_ci,
    extract_profile,
    lpips_from_features,
    mse_mae,
    pearson,
    psnr,
    ssim,
    summarize,
)


def test_psnr_constant_residual():
    a = np.full((3, 8, 8), 0.2)
    b = a + 10 / 255
    assert abs(psnr(a, b) - 28.131) < 1e-3
    c = a + 5 / 255
    assert abs(psnr(a, c) - psnr(a, b) - 6.021) < 1e-3


def test_psnr_identical_is_infinite():
    a = np.random.default_rng(0).random((3, 4, 4))
    assert psnr(a, a) == math.inf


def test_mse_mae_hand_values():
    a = np.zeros((1, 1, 4))
    b = np.array([[[1.0, -1.0, 2.0, 0.0]]])
    mse, mae = mse_mae(a, b)
    assert mse == pytest.approx(6 / 4)
    assert mae == pytest.approx(1.0)
    with pytest.raises(ShapeMismatch):
        mse_mae(a, np.zeros((1, 2, 2)))


def test_ssim_matches_sliding_window_reference():
    gen = np.random.default_rng(1)
    for _ in range(5):
        a = gen.random((3, 32, 32))
        b = np.clip(a + gen.normal(0, 0.1, a.shape), 0, 1)
        assert abs(ssim(a, b) - ssim_sliding(a, b)) < 1e-6


def test_ssim_identity_and_symmetry():
    gen = np.random.default_rng(2)
    a, b = gen.random((3, 20, 20)), gen.random((3, 20, 20))
    assert ssim(a, a) == 1.0
    assert ssim(a, b) == pytest.approx(ssim(b, a), abs=1e-15)
    assert -1 <= ssim(a, b) <= 1


def test_ssim_rejects_small_images():
    with pytest.raises(ImageSmallerThanWindow):
        ssim(np.zeros((1, 8, 30)), np.zeros((1, 8, 30)))


def test_lpips_matches_loops():
    gen = np.random.default_rng(3)
    shapes = [(4, 6, 5), (3, 3, 2)]
    fx = [gen.random(s) for s in shapes]
    fy = [gen.random(s) for s in shapes]
    w = [gen.random(s[0]) for s in shapes]
    assert abs(lpips_from_features(fx, fy, w) - lpips_loops(fx, fy, w)) < 1e-12
    assert lpips_from_features(fx, fx, w) == 0.0


def test_pearson_hand_oracle():
    # means 2.5 and 3.75; sum of cross products 3.5; variances 5 and 4.75
    r = pearson([1, 2, 3, 4], [2, 4, 5, 4])
    assert abs(r - 3.5 / math.sqrt(5 * 4.75)) < 1e-12
    assert pearson([1, 2, 3], [1, 1, 1]) == 0.0
    with pytest.raises(DegenerateInput):
        pearson([2, 2], [3, 3])


def test_profile_is_bilinear_and_channel_averaged():
    img = np.zeros((3, 5, 5))
    img[0] = np.arange(5)[None, :]
    img[1] = 2 * np.arange(5)[None, :]
    p = extract_profile(img, ProfileLine((0.0, 2.0), (4.0, 2.0), 9))
    np.testing.assert_allclose(p, np.linspace(0, 4, 9))
    p = extract_profile(img, ProfileLine((0.25, 0.0), (0.25, 4.0), 3))
    np.testing.assert_allclose(p, 0.25)


@settings(max_examples=50, deadline=None)
@given(st.lists(st.lists(st.integers(0, 4), min_size=3, max_size=3), min_size=1, max_size=6),
       st.lists(st.booleans(), min_size=6, max_size=6))
def test_average_rank_matches_sorting_oracle(rows, higher):
    table = {}
    expected = {m: 0.0 for m in "abc"}
    for i, row in enumerate(rows):
        metric = f"m{i}"
        vals = dict(zip("abc", map(float, row)))
        table[(f"t{i}", metric)] = vals
        for m, r in ranks_by_sorting(vals, higher[i]).items():
            expected[m] += r
    directions = {f"m{i}": higher[i] for i in range(len(rows))}
    got = average_rank(table, directions)
    for m in "abc":
        assert got[m] == pytest.approx(expected[m] / len(rows))


def test_average_rank_missing_cell():
    with pytest.raises(MissingCell):
        average_rank({("t", "psnr_db"): {"a": 1.0}, ("u", "psnr_db"): {"b": 2.0}}, METRIC_DIRECTIONS)


def test_bootstrap_ci_basic_properties():
    x = np.random.default_rng(5).normal(size=50)
    lo, hi = bootstrap_ci(x, seed=1)
    assert lo < x.mean() < hi
    assert (lo, hi) == bootstrap_ci(x, seed=1)
    assert bootstrap_ci([3.0, 3.0, 3.0]) == (3.0, 3.0)
    with pytest.raises(EmptyInput):
        bootstrap_ci([])


def test_bootstrap_coverage_small():
    gen = np.random.default_rng(7)
    hits = 0
    for i in range(200):
        lo, hi = bootstrap_ci(gen.normal(size=100), iterations=500, seed=i)
        hits += lo <= 0.0 <= hi
    # 95% nominal; binomial sd at n=200 is about 1.5%
    assert 0.88 <= hits / 200 <= 0.99


def _rows():
    return [
        {"image_id": "b", "psnr_db": 30.0, "ssim": 0.9, "mae": 2.0},
        {"image_id": "a", "psnr_db": math.inf, "ssim": 1.0, "mae": 0.0},
        {"image_id": "c", "psnr_db": 32.0, "ssim": 0.8, "mae": 4.0},
    ]


def test_summarize_excludes_infinite_psnr():
    rep = summarize(_rows(), iterations=200)
    assert [r["image_id"] for r in rep.per_image] == ["a", "b", "c"]
    agg = rep.aggregates["psnr_db"]
    assert agg["n"] == 2 and agg["n_excluded_inf"] == 1 and agg["mean"] == 31.0
    assert agg["ci_lo"] <= agg["mean"] <= agg["ci_hi"]
    assert rep.aggregates["ssim"]["n"] == 3


def test_report_round_trip_and_golden_csv():
    rep = summarize(_rows(), iterations=200)
    back = MetricReport.from_dict(rep.to_dict())
    assert back.per_image == rep.per_image and back.aggregates == rep.aggregates
    lines = rep.to_csv().splitlines()
    assert lines[0] == "image_id,psnr_db,ssim,mae,lpips"
    assert lines[1] == "a,inf,1.000000,0.000000,"
    assert lines[2] == "b,30.000000,0.900000,2.000000,"
    assert lines[4] == "mean,31.000000,0.900000,2.000000,"
    assert lines[5].startswith("ci95,")
