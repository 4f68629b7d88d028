import json
import math
import os

import numpy as np
import pytest

from oracles import central_diff, perceptual_loops, rel_err
from pfbench.errors import DataError, DimensionMismatch, NonFiniteTerm, NonPositiveTemperature, ScoreOutOfRange
from pfbench.losses import (
    PRETRAIN_TERMS,
    adversarial_terms,
    info_nce,
    l1_loss,
    perceptual_l1,
    total_pretrain_loss,
)

with open(os.path.join(os.path.dirname(__file__), "data", "loss_vectors.json")) as fh:
    VECTORS = json.load(fh)


@pytest.mark.parametrize("case", [c for c in VECTORS if c["kind"] == "info_nce"])
def test_info_nce_high_precision_vectors(case):
    loss, _ = info_nce(case["anchor"], case["positive"], case["negatives"], case["tau"],
                       case["normalize"], case["strict"])
    assert loss == pytest.approx(case["loss"], rel=1e-12, abs=1e-12)


@pytest.mark.parametrize("case", [c for c in VECTORS if c["kind"] == "adversarial"])
def test_adversarial_high_precision_vectors(case):
    t = adversarial_terms(case["d_real"], case["d_fake"])
    assert t["disc_objective"] == pytest.approx(case["disc_objective"], rel=1e-13)
    assert t["gen_loss"] == pytest.approx(case["gen_loss"], rel=1e-13)


def test_info_nce_uniform_similarity_is_log_k():
    a = np.array([1.0, 0.0, 0.0])
    v = np.array([0.0, 1.0, 0.0])
    loss, _ = info_nce(a, v, [v, v, v])
    assert abs(loss - math.log(4)) < 1e-9


def test_info_nce_extreme_similarities_stay_finite():
    a = np.array([1.0, 0.0])
    loss, g = info_nce(a, -a, [a] * 3, tau=1e-3)
    assert math.isfinite(loss) and loss == pytest.approx(2000 + math.log(3), rel=1e-12)
    loss, _ = info_nce(a, a, [-a], tau=1e-3)
    assert 0 <= loss < 1e-300 or loss == 0.0
    assert all(np.all(np.isfinite(x)) for x in (g.anchor, g.positive, g.negatives))


def test_info_nce_gradients():
    gen = np.random.default_rng(0)
    for i in range(25):
        d, k = 6, 4
        a, p, n = gen.normal(size=d), gen.normal(size=d), gen.normal(size=(k, d))
        strict, norm = bool(i % 2), bool(i % 3)
        _, g = info_nce(a, p, n, 0.3, norm, strict)
        f = lambda **kw: info_nce(kw.get("a", a), kw.get("p", p), kw.get("n", n), 0.3, norm, strict)[0]
        assert rel_err(g.anchor, central_diff(lambda x: f(a=x), a)) < 1e-5
        assert rel_err(g.positive, central_diff(lambda x: f(p=x), p)) < 1e-5
        assert rel_err(g.negatives, central_diff(lambda x: f(n=x), n)) < 1e-5


def test_info_nce_validation():
    with pytest.raises(NonPositiveTemperature):
        info_nce([1, 0], [0, 1], [[1, 1]], tau=0)
    with pytest.raises(DimensionMismatch):
        info_nce([1, 0], [0, 1, 0], [[1, 1]])
    with pytest.raises(DataError):
        info_nce([0, 0], [0, 1], [[1, 1]])


def test_l1_and_gradient():
    x = np.array([0.0, 1.0, 2.0, 3.0])
    y = np.array([1.0, 1.0, 0.0, 5.0])
    loss, g = l1_loss(x, y)
    assert loss == pytest.approx(5 / 4)
    np.testing.assert_array_equal(g, [0.25, 0.0, -0.25, 0.25])


def test_perceptual_matches_loops_and_gradient():
    gen = np.random.default_rng(1)
    shapes = [(3, 4, 5), (2, 2, 3)]
    fx = [gen.random(s) for s in shapes]
    fy = [gen.random(s) for s in shapes]
    loss, grads = perceptual_l1(fx, fy)
    assert abs(loss - perceptual_loops(fx, fy)) < 1e-12
    for i in range(len(shapes)):
        def f(layer):
            fy2 = list(fy)
            fy2[i] = layer
            return perceptual_l1(fx, fy2)[0]
        assert rel_err(grads[i], central_diff(f, fy[i])) < 1e-6


def test_adversarial_half_and_gradients():
    t = adversarial_terms([0.5] * 4, [0.5] * 3)
    assert abs(t["disc_objective"] - (-1.3863)) < 1e-4
    assert t["gen_loss"] == pytest.approx(math.log(2))
    gen = np.random.default_rng(2)
    r, f = gen.uniform(0.05, 0.95, 5), gen.uniform(0.05, 0.95, 4)
    t = adversarial_terms(r, f)
    assert rel_err(t["grad_disc_real"], central_diff(lambda x: adversarial_terms(x, f)["disc_loss"], r)) < 1e-6
    assert rel_err(t["grad_disc_fake"], central_diff(lambda x: adversarial_terms(r, x)["disc_loss"], f)) < 1e-6
    assert rel_err(t["grad_gen_fake"], central_diff(lambda x: adversarial_terms(r, x)["gen_loss"], f)) < 1e-6
    with pytest.raises(ScoreOutOfRange):
        adversarial_terms([1.0], [0.5])


def test_total_pretrain_loss():
    terms = dict(zip(PRETRAIN_TERMS, [1.0, 2.0, 3.0, 4.0, 5.0]))
    assert total_pretrain_loss(terms) == 15.0
    assert total_pretrain_loss(terms, {"adv": 0.0, "recon": 2.0}) == 12.0
    with pytest.raises(NonFiniteTerm):
        total_pretrain_loss(dict(terms, cont=math.nan))
