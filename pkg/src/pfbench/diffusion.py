"""Noise schedules, forward corruption, ancestral/DDIM reverse steps and a closed-form
Gaussian noise predictor for end-to-end checks.

Timesteps are 1-based (``t = 1..T``); ``alpha_bar(0)`` is defined as 1.
"""

import json
import math
from dataclasses import dataclass

import numpy as np

from . import rng
from .errors import (
    DataError,
    InvalidRange,
    MissingNoise,
    NonFiniteState,
    PredictorShapeViolation,
    ShapeMismatch,
    TimestepOutOfRange,
)

__all__ = [
    "NoiseSchedule",
    "ConditioningContext",
    "SamplerConfig",
    "make_schedule",
    "forward_diffuse",
    "posterior_sigma",
    "ancestral_step",
    "ddim_step",
    "ddim_timesteps",
    "ddim_sample",
    "ancestral_sample",
    "analytic_epsilon",
    "AnalyticPredictor",
    "epsilon_loss",
    "epsilon_loss_grad",
]


@dataclass(frozen=True)
class NoiseSchedule:
    beta: np.ndarray

    @property
    def T(self):
        return len(self.beta)

    @property
    def alpha(self):
        return 1.0 - self.beta

    @property
    def alpha_bar(self):
        return np.cumprod(self.alpha)

    def ab(self, t):
        """alpha_bar at 1-based timestep t, with alpha_bar(0) = 1."""
        if t == 0:
            return 1.0
        self.check(t)
        return float(self.alpha_bar[t - 1])

    def a(self, t):
        self.check(t)
        return float(self.alpha[t - 1])

    def check(self, t):
        if not 1 <= t <= self.T:
            raise TimestepOutOfRange(f"t={t} outside 1..{self.T}")

    def to_json(self):
        return json.dumps({"T": self.T, "beta": [float(b) for b in self.beta]})

    @classmethod
    def from_json(cls, text):
        d = json.loads(text)
        beta = np.asarray(d["beta"], dtype=np.float64)
        if len(beta) != int(d["T"]):
            raise DataError("schedule length does not match T")
        if np.any(beta <= 0) or np.any(beta >= 1):
            raise InvalidRange("every beta must lie in (0, 1)")
        return cls(beta)


def make_schedule(T=1000, beta_start=1e-4, beta_end=2e-2):
    """Linear beta schedule."""
    if T < 1 or not 0 < beta_start <= beta_end < 1:
        raise InvalidRange(f"need T >= 1 and 0 < beta_start <= beta_end < 1, got {T}, {beta_start}, {beta_end}")
    if T == 1:
        beta = np.array([beta_start], dtype=np.float64)
    else:
        beta = np.linspace(beta_start, beta_end, T, dtype=np.float64)
    return NoiseSchedule(beta)


@dataclass(frozen=True)
class ConditioningContext:
    """Opaque payloads handed to the noise predictor unchanged."""

    coarse: np.ndarray | None = None
    prompt: np.ndarray | None = None


@dataclass(frozen=True)
class SamplerConfig:
    steps: int = 50
    eta: float = 0.0
    spacing: str = "quadratic"

    def validate(self, T):
        if not 1 <= self.steps <= T:
            raise DataError(f"steps must lie in 1..{T}, got {self.steps}")
        if not 0.0 <= self.eta <= 1.0:
            raise DataError("eta must lie in [0, 1]")
        if self.spacing not in ("uniform", "quadratic"):
            raise DataError(f"unknown timestep spacing {self.spacing!r}")


def _same_shape(*arrays):
    shape = np.shape(arrays[0])
    for a in arrays[1:]:
        if np.shape(a) != shape:
            raise ShapeMismatch(f"{np.shape(a)} vs {shape}")


def forward_diffuse(x0, t, eps, s):
    """x_t = sqrt(ab_t) x0 + sqrt(1 - ab_t) eps."""
    _same_shape(x0, eps)
    ab = s.ab(t)
    return math.sqrt(ab) * np.asarray(x0, dtype=np.float64) + math.sqrt(1.0 - ab) * np.asarray(eps, dtype=np.float64)


def posterior_sigma(s, t):
    """sigma_t with sigma_t^2 = beta_t (1 - ab_{t-1}) / (1 - ab_t)."""
    s.check(t)
    return math.sqrt(float(s.beta[t - 1]) * (1.0 - s.ab(t - 1)) / (1.0 - s.ab(t)))


def ancestral_step(x_t, t, eps_hat, s, sigma_t=0.0, z=None):
    """One reverse step: (x_t - (1-a_t)/sqrt(1-ab_t) eps_hat)/sqrt(a_t) + sigma_t z."""
    _same_shape(x_t, eps_hat)
    a, ab = s.a(t), s.ab(t)
    x_t = np.asarray(x_t, dtype=np.float64)
    mean = (x_t - (1.0 - a) / math.sqrt(1.0 - ab) * np.asarray(eps_hat, dtype=np.float64)) / math.sqrt(a)
    if sigma_t == 0.0 or t == 1:
        return mean
    if z is None:
        raise MissingNoise(f"sigma_t={sigma_t} at t={t} requires z")
    _same_shape(x_t, z)
    return mean + sigma_t * np.asarray(z, dtype=np.float64)


def ddim_sigma(s, t, t_prev, eta):
    ab, ab_prev = s.ab(t), s.ab(t_prev)
    return eta * math.sqrt((1.0 - ab_prev) / (1.0 - ab) * (1.0 - ab / ab_prev))


def ddim_step(x_t, t, t_prev, eps_hat, s, eta=0.0, z=None):
    """DDIM update from t to t_prev (t_prev = 0 yields the clean estimate)."""
    ab, ab_prev = s.ab(t), s.ab(t_prev)
    x_t = np.asarray(x_t, dtype=np.float64)
    eps_hat = np.asarray(eps_hat, dtype=np.float64)
    x0_hat = (x_t - math.sqrt(1.0 - ab) * eps_hat) / math.sqrt(ab)
    sigma = ddim_sigma(s, t, t_prev, eta)
    out = math.sqrt(ab_prev) * x0_hat + math.sqrt(max(0.0, 1.0 - ab_prev - sigma * sigma)) * eps_hat
    if sigma > 0.0:
        if z is None:
            raise MissingNoise(f"eta={eta} at t={t} requires z")
        out = out + sigma * np.asarray(z, dtype=np.float64)
    return out


def ddim_timesteps(T, steps, spacing="quadratic"):
    """Decreasing sub-sequence of ``steps`` distinct timesteps from T down to 1.

    ``uniform`` spaces them evenly; ``quadratic`` spaces them as 1 + (T-1) u^2 so that
    small t, where a Gaussian source's fine scale lives, is sampled densely.
    """
    if not 1 <= steps <= T:
        raise DataError(f"steps must lie in 1..{T}, got {steps}")
    if steps == 1:
        return [T]
    u = np.linspace(0.0, 1.0, steps)
    if spacing == "quadratic":
        u = u * u
    ts = [int(v) for v in np.round(1 + (T - 1) * u)]
    for i in range(1, steps):
        ts[i] = max(ts[i], ts[i - 1] + 1)
    ts[-1] = T
    for i in range(steps - 2, -1, -1):
        ts[i] = min(ts[i], ts[i + 1] - 1)
    return ts[::-1]


def _predict(f, x, t, cond):
    eps = np.asarray(f(x, t, cond), dtype=np.float64)
    if eps.shape != x.shape:
        raise PredictorShapeViolation(f"predictor returned {eps.shape} for input {x.shape}")
    if not np.all(np.isfinite(eps)):
        raise NonFiniteState(f"predictor returned non-finite values at t={t}")
    return eps


def ddim_sample(x_T, f, cond, s, cfg=SamplerConfig(), seed=0, callback=None):
    """Run DDIM over ``cfg.steps`` timesteps. Deterministic when ``cfg.eta == 0``;
    otherwise noise is drawn from the seeded stream in step order."""
    cfg.validate(s.T)
    x = np.asarray(x_T, dtype=np.float64)
    if not np.all(np.isfinite(x)):
        raise NonFiniteState("x_T is not finite")
    gen = rng.generator(seed)
    ts = ddim_timesteps(s.T, cfg.steps, cfg.spacing)
    for i, t in enumerate(ts):
        t_prev = ts[i + 1] if i + 1 < len(ts) else 0
        eps = _predict(f, x, t, cond)
        z = gen.standard_normal(x.shape) if cfg.eta > 0 and t_prev > 0 else None
        x = ddim_step(x, t, t_prev, eps, s, cfg.eta, z)
        if not np.all(np.isfinite(x)):
            raise NonFiniteState(f"state became non-finite at t={t}")
        if callback is not None:
            callback(t_prev, x)
    return x


def ancestral_sample(x_T, f, cond, s, seed=0):
    """Full T-step ancestral sampling with the posterior-variance sigma_t."""
    x = np.asarray(x_T, dtype=np.float64)
    gen = rng.generator(seed)
    for t in range(s.T, 0, -1):
        eps = _predict(f, x, t, cond)
        z = gen.standard_normal(x.shape) if t > 1 else None
        x = ancestral_step(x, t, eps, s, posterior_sigma(s, t), z)
    return x


def analytic_epsilon(x_t, t, s, mu0, var0):
    """Exact noise prediction when x0 ~ N(mu0, var0) independently per element."""
    ab = s.ab(t)
    x_t = np.asarray(x_t, dtype=np.float64)
    mu0 = np.asarray(mu0, dtype=np.float64)
    var0 = np.asarray(var0, dtype=np.float64)
    if np.any(var0 < 0):
        raise DataError("var0 must be >= 0")
    post_mean = (math.sqrt(ab) * var0 * x_t + (1.0 - ab) * mu0) / (ab * var0 + 1.0 - ab)
    return (x_t - math.sqrt(ab) * post_mean) / math.sqrt(1.0 - ab)


class AnalyticPredictor:
    """Noise predictor for Gaussian data; thread-safe (stateless)."""

    concurrent_safe = True

    def __init__(self, s, mu0, var0):
        self.s, self.mu0, self.var0 = s, mu0, var0

    def __call__(self, x_t, t, cond=None):
        return analytic_epsilon(x_t, t, self.s, self.mu0, self.var0)


def epsilon_loss(eps, eps_hat):
    """Mean squared error between true and predicted noise."""
    _same_shape(eps, eps_hat)
    d = np.asarray(eps_hat, dtype=np.float64) - np.asarray(eps, dtype=np.float64)
    return float(np.mean(d * d))


def epsilon_loss_grad(eps, eps_hat):
    """Gradient of :func:`epsilon_loss` with respect to ``eps_hat``."""
    _same_shape(eps, eps_hat)
    d = np.asarray(eps_hat, dtype=np.float64) - np.asarray(eps, dtype=np.float64)
    return 2.0 * d / d.size
