"""Reference numeric kernels for the pretraining losses, each with analytic gradients.

All kernels are pure NumPy in float64 and return ``(loss, gradients)``.
"""

import math
from dataclasses import dataclass

import numpy as np

from .errors import (
    DataError,
    DimensionMismatch,
    NonFiniteTerm,
    NonPositiveTemperature,
    ScoreOutOfRange,
    ShapeMismatch,
)

__all__ = [
    "InfoNceGrad",
    "info_nce",
    "l1_loss",
    "perceptual_l1",
    "adversarial_terms",
    "total_pretrain_loss",
    "PRETRAIN_TERMS",
]

PRETRAIN_TERMS = ("recon", "enhance", "cont", "adv", "perceptual")


@dataclass
class InfoNceGrad:
    anchor: np.ndarray
    positive: np.ndarray
    negatives: np.ndarray


def _unit(v):
    n = float(np.linalg.norm(v))
    if n == 0.0:
        raise DataError("cannot normalise a zero vector")
    return v / n, n


def _unit_backward(g, v_hat, norm):
    # Jacobian of v / |v| is (I - v_hat v_hat^T) / |v|
    return (g - v_hat * (v_hat @ g)) / norm


def info_nce(anchor, positive, negatives, tau=0.07, normalize=True, strict=False):
    """Contrastive loss ``-log softmax`` of the positive similarity.

    Similarities are inner products divided by ``tau`` (after L2 normalisation when
    ``normalize`` is set). By default the positive sits in the denominator alongside
    the negatives; ``strict=True`` sums over negatives only.
    """
    if tau <= 0:
        raise NonPositiveTemperature(f"tau must be positive, got {tau}")
    a = np.asarray(anchor, dtype=np.float64)
    p = np.asarray(positive, dtype=np.float64)
    neg = np.atleast_2d(np.asarray(negatives, dtype=np.float64))
    if neg.shape[0] < 1 or neg.size == 0:
        raise DataError("need at least one negative")
    if a.ndim != 1 or p.shape != a.shape or neg.shape[1] != a.shape[0]:
        raise DimensionMismatch(f"anchor {a.shape}, positive {p.shape}, negatives {neg.shape}")

    if normalize:
        a_h, a_n = _unit(a)
        p_h, p_n = _unit(p)
        rows = [_unit(v) for v in neg]
        n_h = np.array([r[0] for r in rows])
        n_n = np.array([r[1] for r in rows])
    else:
        a_h, p_h, n_h = a, p, neg

    s_pos = float(a_h @ p_h) / tau
    s_neg = (n_h @ a_h) / tau

    # loss = logsumexp(denominator) - s_pos, shifted by the largest similarity
    if strict:
        m = float(s_neg.max())
        e = np.exp(s_neg - m)
        loss = m + math.log(float(e.sum())) - s_pos
        g_pos = -1.0
        g_neg = e / e.sum()
    else:
        diff = s_neg - s_pos
        m = float(diff.max())
        if m <= 0.0:
            e = np.exp(diff)
            loss = math.log1p(float(e.sum()))
            z = 1.0 + e.sum()
            p_pos, p_neg = 1.0 / z, e / z
        else:
            e = np.exp(diff - m)
            z = math.exp(-m) + e.sum()
            loss = m + math.log(z)
            p_pos, p_neg = math.exp(-m) / z, e / z
        g_pos = p_pos - 1.0
        g_neg = p_neg

    # chain rule through s = <a, v> / tau
    d_a = (g_pos * p_h + g_neg @ n_h) / tau
    d_p = g_pos * a_h / tau
    d_n = np.outer(g_neg, a_h) / tau
    if normalize:
        d_a = _unit_backward(d_a, a_h, a_n)
        d_p = _unit_backward(d_p, p_h, p_n)
        d_n = np.array([_unit_backward(g, v, n) for g, v, n in zip(d_n, n_h, n_n)])
    return float(loss), InfoNceGrad(d_a, d_p, d_n)


def l1_loss(x, y):
    """Mean absolute error; the gradient is with respect to ``y`` (0 at exact ties)."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape:
        raise ShapeMismatch(f"{x.shape} vs {y.shape}")
    d = y - x
    return float(np.mean(np.abs(d))), np.sign(d) / d.size


def perceptual_l1(fx, fy):
    """Sum over layers of the feature L1 distance divided by H_l * W_l.

    Layers are arrays of shape (C, H, W); the gradient list is with respect to ``fy``.
    """
    if len(fx) == 0:
        raise DataError("EmptyStack: no feature layers given")
    if len(fx) != len(fy):
        raise ShapeMismatch("feature stacks differ in layer count")
    loss = 0.0
    grads = []
    for lx, ly in zip(fx, fy):
        lx = np.asarray(lx, dtype=np.float64)
        ly = np.asarray(ly, dtype=np.float64)
        if lx.shape != ly.shape or lx.ndim != 3:
            raise ShapeMismatch(f"layer shapes {lx.shape} vs {ly.shape}")
        hw = lx.shape[1] * lx.shape[2]
        d = ly - lx
        loss += float(np.sum(np.abs(d))) / hw
        grads.append(np.sign(d) / hw)
    return loss, grads


def adversarial_terms(d_real, d_fake):
    """Discriminator objective and non-saturating generator loss from scores in (0, 1).

    Returns a dict with ``disc_objective`` (mean log D(real) + mean log(1 - D(fake)),
    to be maximised), ``disc_loss`` (its negation), ``gen_loss`` (-mean log D(fake))
    and gradients of ``disc_loss`` and ``gen_loss`` with respect to the scores.
    """
    r = np.asarray(d_real, dtype=np.float64).ravel()
    f = np.asarray(d_fake, dtype=np.float64).ravel()
    if r.size == 0 or f.size == 0:
        raise DataError("EmptyBatch: score batches must be non-empty")
    if np.any((r <= 0) | (r >= 1)) or np.any((f <= 0) | (f >= 1)):
        raise ScoreOutOfRange("scores must lie strictly inside (0, 1)")
    objective = float(np.mean(np.log(r)) + np.mean(np.log1p(-f)))
    return {
        "disc_objective": objective,
        "disc_loss": -objective,
        "gen_loss": float(-np.mean(np.log(f))),
        "grad_disc_real": -1.0 / (r.size * r),
        "grad_disc_fake": 1.0 / (f.size * (1.0 - f)),
        "grad_gen_fake": -1.0 / (f.size * f),
    }


def total_pretrain_loss(terms, weights=None):
    """Weighted sum of the five pretraining terms; unit weights by default."""
    weights = weights or {}
    total = 0.0
    for name in PRETRAIN_TERMS:
        value = float(terms.get(name, 0.0))
        if not math.isfinite(value):
            raise NonFiniteTerm(f"term {name} is {value}")
        total += float(weights.get(name, 1.0)) * value
    return total
