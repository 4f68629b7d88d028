import math

import cv2
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import correlate_loops, gaussian_kernel_direct
from pfbench.degrade import (
    COUPLED_RECIPE,
    Blur,
    BlurParams,
    DegradationSpec,
    Downscale,
    Noise,
    NoiseParams,
    ProvenanceRecord,
    ResampleMethod,
    add_gaussian_noise,
    add_poisson_noise,
    build_gaussian_kernel,
    convolve,
    degrade_pipeline,
    resample,
    sample_coupled_spec,
)
from pfbench.errors import DataError, SingularCovariance


def test_three_by_three_fixture():
    # sigma = 1 isotropic: weights are exp(-(i^2+j^2)/2) / N
    e1, e2 = math.exp(-0.5), math.exp(-1.0)
    n = 1 + 4 * e1 + 4 * e2
    k = build_gaussian_kernel(BlurParams(3, 1.0, 1.0, 0.0)).weights
    expected = np.array([[e2, e1, e2], [e1, 1, e1], [e2, e1, e2]]) / n
    np.testing.assert_allclose(k, expected, atol=1e-9)
    assert abs(k[1, 1] - 0.2042) < 5e-5
    assert abs(k[0, 1] - 0.1238) < 5e-5
    assert abs(k[0, 0] - 0.0751) < 5e-5


@settings(max_examples=60, deadline=None)
@given(size=st.sampled_from([3, 5, 7, 11, 15, 21]),
       s1=st.floats(0.3, 6.0), s2=st.floats(0.3, 6.0), theta=st.floats(0.0, math.pi))
def test_kernel_matches_direct_formula_and_sums_to_one(size, s1, s2, theta):
    k = build_gaussian_kernel(BlurParams(size, s1, s2, theta)).weights
    assert abs(k.sum() - 1.0) < 1e-9
    np.testing.assert_allclose(k, gaussian_kernel_direct(size, s1, s2, theta), atol=1e-12)


def test_isotropic_kernel_ignores_theta():
    base = build_gaussian_kernel(BlurParams(15, 2.5, 2.5, 0.0)).weights
    for theta in np.linspace(0, math.pi, 9):
        k = build_gaussian_kernel(BlurParams(15, 2.5, 2.5, float(theta))).weights
        assert np.max(np.abs(k - base)) < 1e-12


def test_rotating_by_half_pi_swaps_axes():
    a = build_gaussian_kernel(BlurParams(9, 3.0, 1.0, 0.0)).weights
    b = build_gaussian_kernel(BlurParams(9, 1.0, 3.0, math.pi / 2)).weights
    np.testing.assert_allclose(a, b, atol=1e-12)
    # elongated along x when theta = 0
    assert a[4, 0] > a[0, 4]


def test_kernel_parameter_validation():
    with pytest.raises(DataError):
        BlurParams(4, 1.0, 1.0)
    with pytest.raises(DataError):
        BlurParams(1, 1.0, 1.0)
    with pytest.raises(SingularCovariance):
        build_gaussian_kernel(BlurParams(5, 0.0, 1.0))


def test_convolution_matches_nested_loops():
    gen = np.random.default_rng(0)
    worst = 0.0
    for _ in range(50):
        size = int(gen.choice([3, 5, 7]))
        h, w = gen.integers(size, 16, size=2)
        img = gen.random((3, h, w)).astype(np.float32)
        p = BlurParams(size, *gen.uniform(0.5, 3.0, size=2), gen.uniform(0, math.pi))
        k = build_gaussian_kernel(p)
        out = convolve(img, k)
        for c in range(3):
            ref = correlate_loops(img[c].astype(np.float64), k.weights)
            worst = max(worst, float(np.max(np.abs(out[c] - ref))))
    assert worst < 1e-6


def test_convolution_preserves_constants():
    img = np.full((3, 20, 17), 0.37, dtype=np.float32)
    out = convolve(img, build_gaussian_kernel(BlurParams(15, 3.0, 1.2, 0.7)))
    np.testing.assert_allclose(out, 0.37, atol=1e-6)


@pytest.mark.parametrize("method,flag", [(ResampleMethod.BILINEAR, cv2.INTER_LINEAR),
                                         (ResampleMethod.AREA, cv2.INTER_AREA)])
@pytest.mark.parametrize("size", [(26, 18), (13, 9), (40, 30)])
def test_resample_agrees_with_opencv(method, flag, size):
    x = np.random.default_rng(1).random((1, 37, 53))
    ours = resample(x, *size, method)[0]
    ref = cv2.resize(x[0], size, interpolation=flag)
    assert np.max(np.abs(ours - ref)) < 1e-6


def _keys(x, a=-0.5):
    x = abs(x)
    if x <= 1:
        return (a + 2) * x ** 3 - (a + 3) * x ** 2 + 1
    if x < 2:
        return a * x ** 3 - 5 * a * x ** 2 + 8 * a * x - 4 * a
    return 0.0


def _bicubic_loops(plane, out_w, out_h):
    h, w = plane.shape

    def axis(n_in, n_out):
        rows = []
        for o in range(n_out):
            s = (o + 0.5) * n_in / n_out - 0.5
            b = math.floor(s)
            rows.append([(min(max(b + t, 0), n_in - 1), _keys(s - (b + t))) for t in (-1, 0, 1, 2)])
        return rows

    ax, ay = axis(w, out_w), axis(h, out_h)
    out = np.zeros((out_h, out_w))
    for y in range(out_h):
        for x in range(out_w):
            out[y, x] = sum(wy * wx * plane[iy, ix] for iy, wy in ay[y] for ix, wx in ax[x])
    return out


@pytest.mark.parametrize("size", [(8, 6), (17, 5), (48, 36)])
def test_bicubic_matches_loop_reference(size):
    x = np.random.default_rng(2).random((1, 12, 16))
    np.testing.assert_allclose(resample(x, *size, ResampleMethod.BICUBIC)[0],
                               _bicubic_loops(x[0], *size), atol=1e-6)


def test_area_downscale_is_block_mean():
    x = np.random.default_rng(3).random((3, 16, 24)).astype(np.float32)
    out = resample(x, 6, 4, ResampleMethod.AREA)
    ref = x.astype(np.float64).reshape(3, 4, 4, 6, 4).mean(axis=(2, 4))
    np.testing.assert_allclose(out, ref, atol=1e-6)


def test_gaussian_noise_statistics():
    img = np.full((1, 1000, 1000), 0.5, dtype=np.float32)
    out = add_gaussian_noise(img, 41, seed=11).astype(np.float64) - 0.5
    assert abs(out.std() / (41 / 255) - 1) < 0.01
    assert abs(out.mean()) < 4 * (41 / 255) / 1000


def test_gaussian_noise_is_not_clamped_and_can_share_channels():
    img = np.zeros((3, 50, 50), dtype=np.float32)
    out = add_gaussian_noise(img, 31, per_channel=False, seed=1)
    assert out.min() < 0
    np.testing.assert_array_equal(out[0], out[1])
    np.testing.assert_array_equal(out[0], out[2])
    out = add_gaussian_noise(img, 31, per_channel=True, seed=1)
    assert not np.array_equal(out[0], out[1])


def test_poisson_noise_statistics():
    img = np.full((1, 1000, 1000), 0.5, dtype=np.float32)
    d = add_poisson_noise(img, 1000.0, seed=5).astype(np.float64) - 0.5
    assert abs(d.var() / (0.5 / 1000) - 1) < 0.05
    assert abs(d.mean()) < 1e-4


def test_noise_is_seeded():
    img = np.full((3, 8, 8), 0.5, dtype=np.float32)
    np.testing.assert_array_equal(add_gaussian_noise(img, 21, seed=4), add_gaussian_noise(img, 21, seed=4))
    assert not np.array_equal(add_gaussian_noise(img, 21, seed=4), add_gaussian_noise(img, 21, seed=5))


def test_pipeline_order_size_and_provenance_replay():
    img = np.random.default_rng(9).random((3, 64, 48)).astype(np.float32)
    out, prov = degrade_pipeline(img, DegradationSpec(COUPLED_RECIPE.steps, seed=3), image_id="a")
    assert out.shape == (3, 16, 12)
    assert prov.input_size == (48, 64) and prov.output_size == (12, 16)
    assert [s["params"]["op"] for s in prov.steps] == ["blur", "downscale", "noise"]
    again = ProvenanceRecord.from_dict(prov.to_dict())
    replay, _ = degrade_pipeline(img, again.to_spec(), image_id=again.image_id)
    np.testing.assert_array_equal(out, replay)


def test_pipeline_streams_depend_on_image_id():
    img = np.full((3, 32, 32), 0.5, dtype=np.float32)
    spec = DegradationSpec((Noise(NoiseParams(21.0)),), seed=1)
    a, _ = degrade_pipeline(img, spec, "x")
    b, _ = degrade_pipeline(img, spec, "y")
    assert not np.array_equal(a, b)


def test_spec_dict_round_trip():
    spec = sample_coupled_spec(42)
    assert DegradationSpec.from_dict(spec.to_dict()) == spec
    assert spec.scale == 4
    steps = spec.steps
    assert isinstance(steps[0], Blur) and isinstance(steps[1], Downscale) and isinstance(steps[2], Noise)
    assert 200 <= steps[2].params.poisson_lambda <= 2000
    assert 0 <= steps[0].params.theta < math.pi


def test_nearest_neighbour_is_not_offered():
    with pytest.raises(ValueError):
        ResampleMethod("nearest")
