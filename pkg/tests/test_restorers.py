import json
import sys

import numpy as np
import pytest

from pfbench.degrade import COUPLED_RECIPE, ResampleMethod
from pfbench.errors import DataError, ExternalFailure, ShapeViolation
from pfbench.restorers import (
    SR,
    Coupled,
    Deblur,
    Denoise,
    External,
    Identity,
    ResampleSR,
    VirtualStain,
    parse_restorer,
    restore,
    task_from_dict,
    task_scale,
)

PY = sys.executable


def _img(h=12, w=10, seed=0):
    return (np.random.default_rng(seed).integers(0, 256, (3, h, w)) / 255).astype(np.float32)


def test_task_keys_and_dicts():
    assert SR(4).key == "sr_x4"
    assert Deblur(7, 1.5, 1.5).key == "deblur_k7_s1.5"
    assert Denoise(21).key == "denoise_s21"
    assert Coupled(COUPLED_RECIPE).key.startswith("coupled_b2.5_x4_n31_")
    for t in (SR(2), Deblur(11, 2.5, 1.0, 0.3), Denoise(31.0), Coupled(COUPLED_RECIPE), VirtualStain("HE", "IHC")):
        assert task_from_dict(json.loads(json.dumps(t.to_dict()))) == t
    assert task_scale(SR(8)) == 8 and task_scale(Coupled(COUPLED_RECIPE)) == 4 and task_scale(Denoise(1)) == 1
    with pytest.raises(DataError):
        task_from_dict({"kind": "colorize"})


def test_parse_restorer():
    assert parse_restorer("identity") == Identity()
    assert parse_restorer("bicubic") == ResampleSR(ResampleMethod.BICUBIC)
    h = parse_restorer('exec:python3 -c "pass"', timeout=5)
    assert h.command == ("python3", "-c", "pass") and h.timeout == 5 and h.label == "exec:python3"
    with pytest.raises(DataError):
        parse_restorer("nearest")


def test_identity_is_zero_order_hold():
    img = _img()
    out = restore(Identity(), img, SR(2))
    assert out.shape == (3, 24, 20)
    np.testing.assert_array_equal(out[:, ::2, ::2], img)
    np.testing.assert_array_equal(out[:, 1::2, 1::2], img)
    np.testing.assert_array_equal(restore(Identity(), img, Denoise(21)), img)


def test_bicubic_baseline_shape():
    out = restore(ResampleSR(ResampleMethod.BICUBIC), _img(), SR(4))
    assert out.shape == (3, 48, 40)


def test_echo_restorer_round_trip_is_pixel_exact():
    img = _img(seed=1)
    out = restore(External(("pf-echo-restorer",)), img, Denoise(21))
    np.testing.assert_array_equal(out, img)


def test_task_is_delivered_on_fd3_and_env():
    script = ("import os,sys,json;"
              "a=json.loads(os.fdopen(3).read());b=json.loads(os.environ['PF_TASK_JSON']);"
              "assert a==b=={'kind':'denoise','sigma_255':21.0};"
              "sys.stdout.buffer.write(sys.stdin.buffer.read())")
    img = _img(seed=2)
    np.testing.assert_array_equal(restore(External((PY, "-c", script)), img, Denoise(21.0)), img)


def test_crashing_child():
    with pytest.raises(ExternalFailure, match="status 3"):
        restore(External((PY, "-c", "import sys; sys.exit(3)")), _img(), Denoise(21))


def test_garbage_output_and_timeout():
    with pytest.raises(ExternalFailure, match="malformed"):
        restore(External((PY, "-c", "print('hello')")), _img(), Denoise(21))
    with pytest.raises(ExternalFailure, match="timed out"):
        restore(External((PY, "-c", "import time; time.sleep(5)"), timeout=0.5), _img(), Denoise(21))
    with pytest.raises(ExternalFailure):
        restore(External(("/nonexistent/restorer",)), _img(), Denoise(21))


def test_shape_contract_is_enforced():
    # echoing the low-resolution input violates the SR output-size contract
    with pytest.raises(ShapeViolation):
        restore(External(("pf-echo-restorer",)), _img(), SR(2))
