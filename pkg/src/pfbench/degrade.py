"""Degradation models (anisotropic blur, Gaussian/Poisson noise, resampling) and
seeded pipelines that compose them reproducibly."""

import enum
import math
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy import ndimage

from . import rng
from .errors import DataError, SingularCovariance
from .image_core import as_f32

__all__ = [
    "BlurParams",
    "BlurKernel",
    "NoiseParams",
    "ResampleMethod",
    "Blur",
    "Noise",
    "Downscale",
    "DegradationSpec",
    "ProvenanceRecord",
    "build_gaussian_kernel",
    "convolve",
    "resample",
    "add_gaussian_noise",
    "add_poisson_noise",
    "degrade_pipeline",
    "sample_coupled_spec",
    "COUPLED_RECIPE",
]


@dataclass(frozen=True)
class BlurParams:
    size: int
    sigma1: float
    sigma2: float
    theta: float = 0.0

    def __post_init__(self):
        if self.size < 3 or self.size % 2 == 0:
            raise DataError(f"kernel size must be odd and >= 3, got {self.size}")


@dataclass(frozen=True)
class BlurKernel:
    size: int
    weights: np.ndarray


@dataclass(frozen=True)
class NoiseParams:
    gaussian_sigma: float = 0.0
    poisson_lambda: float | None = None
    per_channel: bool = True

    def __post_init__(self):
        if self.gaussian_sigma < 0:
            raise DataError("gaussian_sigma must be >= 0")
        if self.poisson_lambda is not None and self.poisson_lambda <= 0:
            raise DataError("poisson_lambda must be > 0")


class ResampleMethod(str, enum.Enum):
    # nearest neighbour is intentionally not offered
    AREA = "area"
    BILINEAR = "bilinear"
    BICUBIC = "bicubic"


def build_gaussian_kernel(p):
    """Anisotropic Gaussian kernel on the centred integer lattice, normalised to sum 1.

    Covariance is ``R diag(sigma1^2, sigma2^2) R^T`` with ``R`` the rotation by ``theta``.
    """
    if not (p.sigma1 > 0 and p.sigma2 > 0):
        raise SingularCovariance(f"sigma1={p.sigma1}, sigma2={p.sigma2}")
    c, s = math.cos(p.theta), math.sin(p.theta)
    rot = np.array([[c, -s], [s, c]])
    cov = rot @ np.diag([p.sigma1 ** 2, p.sigma2 ** 2]) @ rot.T
    inv = np.linalg.inv(cov)
    r = p.size // 2
    # i indexes columns (x), j indexes rows (y); C = [i, j]^T
    jj, ii = np.mgrid[-r:r + 1, -r:r + 1].astype(np.float64)
    quad = inv[0, 0] * ii * ii + (inv[0, 1] + inv[1, 0]) * ii * jj + inv[1, 1] * jj * jj
    w = np.exp(-0.5 * quad)
    return BlurKernel(p.size, w / w.sum())


def convolve(img, k):
    """Per-channel 2-D correlation with reflect-101 borders; same output size."""
    img = as_f32(img)
    weights = k.weights if isinstance(k, BlurKernel) else np.asarray(k, dtype=np.float64)
    src = img.astype(np.float64)
    out = np.empty_like(src)
    for ch in range(src.shape[0]):
        # scipy's "mirror" mode is reflect-101 (edge sample not repeated)
        ndimage.correlate(src[ch], weights, output=out[ch], mode="mirror")
    return out.astype(np.float32)


def _keys_cubic(x, a=-0.5):
    x = np.abs(x)
    return np.where(
        x <= 1,
        (a + 2) * x ** 3 - (a + 3) * x ** 2 + 1,
        np.where(x < 2, a * x ** 3 - 5 * a * x ** 2 + 8 * a * x - 4 * a, 0.0),
    )


def _axis_taps(n_in, n_out, method):
    """Index and weight tables of shape (n_out, taps) for one axis."""
    out = np.arange(n_out)
    if method is ResampleMethod.AREA:
        lo = out * n_in / n_out
        hi = (out + 1) * n_in / n_out
        first = np.floor(lo).astype(np.int64)
        ntaps = int(np.max(np.ceil(hi).astype(np.int64) - first))
        idx = first[:, None] + np.arange(ntaps)[None, :]
        overlap = np.minimum(idx + 1, hi[:, None]) - np.maximum(idx, lo[:, None])
        w = np.clip(overlap, 0.0, None) / (hi - lo)[:, None]
    else:
        src = (out + 0.5) * n_in / n_out - 0.5
        base = np.floor(src).astype(np.int64)
        frac = src - base
        if method is ResampleMethod.BILINEAR:
            idx = base[:, None] + np.array([0, 1])[None, :]
            w = np.stack([1.0 - frac, frac], axis=1)
        else:
            offs = np.array([-1, 0, 1, 2])
            idx = base[:, None] + offs[None, :]
            w = _keys_cubic(frac[:, None] - offs[None, :])
    idx = np.clip(idx, 0, n_in - 1)
    return idx, w


def _resample_axis(src, n_out, method, axis):
    n_in = src.shape[axis]
    if n_in == n_out:
        return src
    idx, w = _axis_taps(n_in, n_out, method)
    src = np.moveaxis(src, axis, -1)
    acc = np.zeros(src.shape[:-1] + (n_out,))
    for k in range(idx.shape[1]):
        acc += w[:, k] * src[..., idx[:, k]]
    return np.moveaxis(acc, -1, axis)


def resample(img, out_w, out_h, m):
    """Resize with area averaging, bilinear, or Keys bicubic (a = -0.5)."""
    if out_w < 1 or out_h < 1:
        raise DataError("output dimensions must be >= 1")
    m = ResampleMethod(m)
    img = as_f32(img)
    src = img.astype(np.float64)
    src = _resample_axis(src, out_w, m, axis=2)
    src = _resample_axis(src, out_h, m, axis=1)
    return src.astype(np.float32)


def add_gaussian_noise(img, sigma_255, per_channel=True, seed=0):
    """Add N(0, (sigma_255/255)^2) noise; unclamped.

    With ``per_channel=False`` every channel of a pixel receives the same draw.
    """
    img = as_f32(img)
    if sigma_255 < 0:
        raise DataError("sigma_255 must be >= 0")
    if sigma_255 == 0:
        return img.copy()
    gen = rng.generator(seed)
    shape = img.shape if per_channel else (1,) + img.shape[1:]
    noise = gen.standard_normal(shape) * (sigma_255 / 255.0)
    return (img.astype(np.float64) + noise).astype(np.float32)


def add_poisson_noise(img, lam, seed=0):
    """Shot noise: ``I + (Poisson(lam * I) - lam * I) / lam``, intensities clamped at 0 for the draw."""
    if lam <= 0:
        raise DataError("lambda must be > 0")
    img = as_f32(img)
    rate = lam * np.clip(img.astype(np.float64), 0.0, None)
    counts = rng.generator(seed).poisson(rate)
    return (img.astype(np.float64) + (counts - rate) / lam).astype(np.float32)


@dataclass(frozen=True)
class Blur:
    params: BlurParams
    op: str = field(default="blur", init=False)


@dataclass(frozen=True)
class Noise:
    params: NoiseParams
    op: str = field(default="noise", init=False)


@dataclass(frozen=True)
class Downscale:
    factor: int
    method: ResampleMethod = ResampleMethod.BICUBIC
    op: str = field(default="downscale", init=False)

    def __post_init__(self):
        if self.factor < 1:
            raise DataError("downscale factor must be a positive integer")
        object.__setattr__(self, "method", ResampleMethod(self.method))


def _step_to_dict(step):
    if isinstance(step, Blur):
        return {"op": "blur", **asdict(step.params)}
    if isinstance(step, Noise):
        return {"op": "noise", **asdict(step.params)}
    return {"op": "downscale", "factor": step.factor, "method": step.method.value}


def _step_from_dict(d):
    d = dict(d)
    op = d.pop("op")
    if op == "blur":
        return Blur(BlurParams(int(d["size"]), float(d["sigma1"]), float(d["sigma2"]), float(d.get("theta", 0.0))))
    if op == "noise":
        lam = d.get("poisson_lambda")
        return Noise(NoiseParams(float(d.get("gaussian_sigma", 0.0)), None if lam is None else float(lam),
                                 bool(d.get("per_channel", True))))
    if op == "downscale":
        return Downscale(int(d["factor"]), ResampleMethod(d.get("method", "bicubic")))
    raise DataError(f"unknown degradation step {op!r}")


@dataclass(frozen=True)
class DegradationSpec:
    steps: tuple = ()
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "steps", tuple(self.steps))

    @property
    def scale(self):
        """Total downscale factor of the recipe."""
        return math.prod(s.factor for s in self.steps if isinstance(s, Downscale))

    def to_dict(self):
        return {"steps": [_step_to_dict(s) for s in self.steps], "seed": int(self.seed)}

    @classmethod
    def from_dict(cls, d):
        return cls(tuple(_step_from_dict(s) for s in d.get("steps", [])), int(d.get("seed", 0)))


@dataclass
class ProvenanceRecord:
    image_id: str
    seed: int
    steps: list = field(default_factory=list)
    input_size: tuple = ()
    output_size: tuple = ()

    def to_dict(self):
        return {
            "image_id": self.image_id,
            "seed": self.seed,
            "input_size": list(self.input_size),
            "output_size": list(self.output_size),
            "steps": self.steps,
        }

    @classmethod
    def from_dict(cls, d):
        return cls(d["image_id"], int(d["seed"]), list(d["steps"]),
                   tuple(d.get("input_size", ())), tuple(d.get("output_size", ())))

    def to_spec(self):
        """Resolved spec that regenerates the recorded output bit-exactly."""
        return DegradationSpec(tuple(_step_from_dict(s["params"]) for s in self.steps), self.seed)


def degrade_pipeline(img, spec, image_id=""):
    """Apply ``spec.steps`` in order. Random steps draw from streams keyed by
    ``(spec.seed, step_index, image_id, component)``."""
    out = as_f32(img).copy()
    prov = ProvenanceRecord(image_id, int(spec.seed), input_size=(out.shape[2], out.shape[1]))
    for i, step in enumerate(spec.steps):
        rec = {"index": i, "params": _step_to_dict(step)}
        if isinstance(step, Blur):
            out = convolve(out, build_gaussian_kernel(step.params))
        elif isinstance(step, Downscale):
            w, h = out.shape[2], out.shape[1]
            out = resample(out, max(1, w // step.factor), max(1, h // step.factor), step.method)
        elif isinstance(step, Noise):
            p = step.params
            seeds = {}
            if p.poisson_lambda is not None:
                seeds["poisson"] = rng.derive_seed(int(spec.seed), i, image_id, "poisson")
                out = add_poisson_noise(out, p.poisson_lambda, seeds["poisson"])
            if p.gaussian_sigma > 0:
                seeds["gaussian"] = rng.derive_seed(int(spec.seed), i, image_id, "gaussian")
                out = add_gaussian_noise(out, p.gaussian_sigma, p.per_channel, seeds["gaussian"])
            rec["sub_seeds"] = seeds
        else:
            raise DataError(f"unknown step {step!r}")
        prov.steps.append(rec)
    prov.output_size = (out.shape[2], out.shape[1])
    return out, prov


# blur sigma 2.5, noise sigma 31, 4x downsampling, applied blur -> downscale -> noise
COUPLED_RECIPE = DegradationSpec(
    (
        Blur(BlurParams(11, 2.5, 2.5, 0.0)),
        Downscale(4, ResampleMethod.BICUBIC),
        Noise(NoiseParams(31.0)),
    ),
    seed=0,
)


def sample_coupled_spec(seed, scale=4, sizes=(7, 11, 15), sigma_range=(1.5, 3.5),
                        noise_levels=(21.0, 31.0, 41.0), lambda_range=(200.0, 2000.0)):
    """Draw a randomized blur -> downscale -> noise recipe and resolve it to a concrete spec.

    theta ~ U[0, pi), resampling method uniform over the three methods, Poisson
    lambda log-uniform over ``lambda_range``.
    """
    gen = rng.generator(seed)
    size = int(gen.choice(sizes))
    s1, s2 = gen.uniform(*sigma_range, size=2)
    theta = gen.uniform(0.0, math.pi)
    method = list(ResampleMethod)[int(gen.integers(3))]
    sigma = float(gen.choice(noise_levels))
    lam = float(math.exp(gen.uniform(math.log(lambda_range[0]), math.log(lambda_range[1]))))
    steps = (
        Blur(BlurParams(size, float(s1), float(s2), float(theta))),
        Downscale(scale, method),
        Noise(NoiseParams(sigma, lam)),
    )
    return DegradationSpec(steps, rng.derive_seed(int(seed), "coupled"))
