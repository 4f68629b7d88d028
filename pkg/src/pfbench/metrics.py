"""Full-reference image quality metrics and the statistics used to aggregate them."""

import csv
import io
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage
from scipy.stats import rankdata

from . import rng
from .errors import (
    DataError,
    DegenerateInput,
    EmptyInput,
    ImageSmallerThanWindow,
    MissingCell,
    OutOfBounds,
    ShapeMismatch,
)

__all__ = [
    "SsimParams",
    "ProfileLine",
    "MetricReport",
    "mse_mae",
    "psnr",
    "ssim",
    "ssim_map",
    "gaussian_window",
    "lpips_from_features",
    "extract_profile",
    "pearson",
    "bootstrap_ci",
    "average_rank",
    "summarize",
    "METRIC_DIRECTIONS",
]

# True means higher is better
METRIC_DIRECTIONS = {"psnr_db": True, "ssim": True, "mae": False, "lpips": False}


def _check_pair(a, b):
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ShapeMismatch(f"{a.shape} vs {b.shape}")
    return a, b


def mse_mae(a, b, scale_255=False):
    """Mean squared and mean absolute difference over every sample."""
    a, b = _check_pair(a, b)
    d = a - b
    if scale_255:
        d = d * 255.0
    return float(np.mean(d * d)), float(np.mean(np.abs(d)))


def psnr(a, b, max_val=255.0, scale_255=True):
    """PSNR in dB; ``math.inf`` when the images are identical.

    With the default ``scale_255`` the [0, 1] working-range inputs are compared on
    the 0-255 scale against a peak of ``max_val``.
    """
    mse, _ = mse_mae(a, b, scale_255=scale_255)
    if mse == 0.0:
        return math.inf
    return 10.0 * math.log10(max_val * max_val / mse)


@dataclass(frozen=True)
class SsimParams:
    window: int = 11
    window_sigma: float = 1.5
    k1: float = 0.01
    k2: float = 0.03
    data_range: float = 1.0

    def __post_init__(self):
        if self.window < 3 or self.window % 2 == 0:
            raise DataError("SSIM window must be odd and >= 3")
        if self.k1 <= 0 or self.k2 <= 0 or self.data_range <= 0:
            raise DataError("k1, k2 and data_range must be positive")

    @property
    def c1(self):
        return (self.k1 * self.data_range) ** 2

    @property
    def c2(self):
        return (self.k2 * self.data_range) ** 2


def gaussian_window(size, sigma):
    """Normalised 1-D Gaussian taps."""
    x = np.arange(size) - size // 2
    g = np.exp(-(x * x) / (2.0 * sigma * sigma))
    return g / g.sum()


def _local_mean(x, g):
    out = ndimage.correlate1d(x, g, axis=-1, mode="mirror")
    return ndimage.correlate1d(out, g, axis=-2, mode="mirror")


def ssim_map(a, b, p=SsimParams()):
    """Per-pixel SSIM of planar images, shape (C, H, W)."""
    a, b = _check_pair(a, b)
    if a.ndim == 2:
        a, b = a[None], b[None]
    if min(a.shape[-2:]) < p.window:
        raise ImageSmallerThanWindow(f"image {a.shape[-1]}x{a.shape[-2]} smaller than window {p.window}")
    g = gaussian_window(p.window, p.window_sigma)
    maps = []
    for x, y in zip(a, b):
        mu_x, mu_y = _local_mean(x, g), _local_mean(y, g)
        mu_xx, mu_yy, mu_xy = mu_x * mu_x, mu_y * mu_y, mu_x * mu_y
        s_xx = _local_mean(x * x, g) - mu_xx
        s_yy = _local_mean(y * y, g) - mu_yy
        s_xy = _local_mean(x * y, g) - mu_xy
        num = (2 * mu_xy + p.c1) * (2 * s_xy + p.c2)
        den = (mu_xx + mu_yy + p.c1) * (s_xx + s_yy + p.c2)
        maps.append(num / den)
    return np.stack(maps)


def ssim(a, b, p=SsimParams()):
    """Mean SSIM over all pixels and channels (channels scored independently)."""
    return float(np.mean(ssim_map(a, b, p)))


def lpips_from_features(fx, fy, w):
    """Weighted squared L2 distance between externally computed feature stacks.

    ``fx[l]`` and ``fy[l]`` have shape (C_l, H_l, W_l); ``w[l]`` has shape (C_l,).
    """
    if len(fx) == 0:
        raise DataError("EmptyLayerList: no feature layers given")
    if not (len(fx) == len(fy) == len(w)):
        raise ShapeMismatch("feature stacks and weights differ in layer count")
    total = 0.0
    for lx, ly, lw in zip(fx, fy, w):
        lx, ly = _check_pair(lx, ly)
        lw = np.asarray(lw, dtype=np.float64)
        if lx.ndim != 3 or lw.shape != (lx.shape[0],):
            raise ShapeMismatch(f"layer {lx.shape} incompatible with weights {lw.shape}")
        d = lw[:, None, None] * (lx - ly)
        total += float(np.sum(d * d)) / (lx.shape[1] * lx.shape[2])
    return total


@dataclass(frozen=True)
class ProfileLine:
    start: tuple
    end: tuple
    samples: int

    def __post_init__(self):
        if self.samples < 2:
            raise DataError("a profile needs at least 2 samples")


def extract_profile(img, line):
    """Bilinear intensity samples along a segment; channels are averaged.

    Coordinates are ``(x, y)`` in pixel-index units.
    """
    img = np.asarray(img, dtype=np.float64)
    if img.ndim == 2:
        img = img[None]
    _, h, w = img.shape
    for x, y in (line.start, line.end):
        if not (0 <= x <= w - 1 and 0 <= y <= h - 1):
            raise OutOfBounds(f"profile endpoint {(x, y)} outside {w}x{h}")
    t = np.linspace(0.0, 1.0, line.samples)
    xs = line.start[0] + t * (line.end[0] - line.start[0])
    ys = line.start[1] + t * (line.end[1] - line.start[1])
    x0 = np.clip(np.floor(xs).astype(np.int64), 0, w - 1)
    y0 = np.clip(np.floor(ys).astype(np.int64), 0, h - 1)
    x1, y1 = np.minimum(x0 + 1, w - 1), np.minimum(y0 + 1, h - 1)
    fx, fy = xs - x0, ys - y0
    gray = img.mean(axis=0)
    top = gray[y0, x0] * (1 - fx) + gray[y0, x1] * fx
    bot = gray[y1, x0] * (1 - fx) + gray[y1, x1] * fx
    return top * (1 - fy) + bot * fy


def pearson(u, v):
    """Sample Pearson correlation. Returns 0.0 when exactly one input is constant."""
    u = np.asarray(u, dtype=np.float64).ravel()
    v = np.asarray(v, dtype=np.float64).ravel()
    if u.shape != v.shape or u.size < 2:
        raise ShapeMismatch("pearson needs two vectors of equal length >= 2")
    du, dv = u - u.mean(), v - v.mean()
    su, sv = math.sqrt(float(du @ du)), math.sqrt(float(dv @ dv))
    if su == 0.0 and sv == 0.0:
        raise DegenerateInput("both vectors are constant")
    if su == 0.0 or sv == 0.0:
        return 0.0
    r = float(du @ dv) / (su * sv)
    return max(-1.0, min(1.0, r))


def bootstrap_ci(samples, level=0.95, iterations=2000, seed=0):
    """Percentile bootstrap interval for the mean."""
    x = np.asarray(samples, dtype=np.float64).ravel()
    if x.size == 0:
        raise EmptyInput("bootstrap_ci needs at least one sample")
    if not 0.0 < level < 1.0:
        raise DataError("level must lie in (0, 1)")
    if np.all(x == x[0]):
        return float(x[0]), float(x[0])
    gen = rng.generator(seed)
    n = x.size
    means = np.empty(iterations)
    chunk = max(1, 2_000_000 // n)
    for start in range(0, iterations, chunk):
        stop = min(iterations, start + chunk)
        idx = gen.integers(0, n, size=(stop - start, n))
        means[start:stop] = x[idx].mean(axis=1)
    alpha = (1.0 - level) / 2.0
    lo, hi = np.quantile(means, [alpha, 1.0 - alpha])
    return float(lo), float(hi)


def average_rank(table, directions):
    """Mean rank of each method over all (task, metric) cells.

    ``table`` maps ``(task, metric)`` to ``{method: value}``; ``directions`` maps a
    metric name to True when higher values are better. Rank 1 is best, ties share
    the average rank.
    """
    methods = sorted({m for cell in table.values() for m in cell})
    if not methods:
        raise MissingCell("empty ranking table")
    totals = dict.fromkeys(methods, 0.0)
    for key in sorted(table, key=str):
        cell = table[key]
        missing = [m for m in methods if m not in cell or cell[m] is None or np.isnan(cell[m])]
        if missing:
            raise MissingCell(f"cell {key} lacks values for {missing}")
        vals = np.array([cell[m] for m in methods], dtype=np.float64)
        if directions[key[1]]:
            vals = -vals
        for m, r in zip(methods, rankdata(vals, method="average")):
            totals[m] += float(r)
    return {m: totals[m] / len(table) for m in methods}


@dataclass
class MetricReport:
    per_image: list
    aggregates: dict = field(default_factory=dict)

    def metrics(self):
        names = ["psnr_db", "ssim", "mae"]
        if self.per_image and all(r.get("lpips") is not None for r in self.per_image):
            names.append("lpips")
        return names

    def to_dict(self):
        return {"per_image": [_jsonable(r) for r in self.per_image],
                "aggregates": {k: _jsonable(v) for k, v in self.aggregates.items()}}

    @classmethod
    def from_dict(cls, d):
        per = [_unjson(r) for r in d["per_image"]]
        agg = {k: _unjson(v) for k, v in d["aggregates"].items()}
        return cls(per, agg)

    def to_csv(self):
        names = ["psnr_db", "ssim", "mae", "lpips"]
        buf = io.StringIO()
        wr = csv.writer(buf, lineterminator="\n")
        wr.writerow(["image_id"] + names)
        for r in self.per_image:
            wr.writerow([r["image_id"]] + [format_value(r.get(k)) for k in names])
        wr.writerow(["mean"] + [format_value(self.aggregates[k]["mean"]) if k in self.aggregates else ""
                                for k in names])
        wr.writerow(["ci95"] + [ci_text(self.aggregates[k]) if k in self.aggregates else "" for k in names])
        return buf.getvalue()


def format_value(x):
    if x is None:
        return ""
    if isinstance(x, float) and math.isinf(x):
        return "inf" if x > 0 else "-inf"
    return f"{x:.6f}"


def ci_text(agg):
    return f"({format_value(agg['ci_lo'])}, {format_value(agg['ci_hi'])})"


def _jsonable(d):
    return {k: ("inf" if isinstance(v, float) and math.isinf(v) else v) for k, v in d.items()}


def _unjson(d):
    return {k: (math.inf if v == "inf" else v) for k, v in d.items()}


def summarize(per_image, seed=0, level=0.95, iterations=2000):
    """Build a MetricReport: bootstrap CIs per metric, infinite PSNR excluded and counted."""
    if not per_image:
        raise EmptyInput("no per-image results to summarize")
    report = MetricReport(sorted(per_image, key=lambda r: r["image_id"]))
    for name in report.metrics():
        vals = np.array([r[name] for r in report.per_image], dtype=np.float64)
        finite = vals[np.isfinite(vals)]
        n_inf = int(vals.size - finite.size)
        if finite.size == 0:
            report.aggregates[name] = {"mean": math.inf, "ci_lo": math.inf, "ci_hi": math.inf,
                                       "n": 0, "n_excluded_inf": n_inf}
            continue
        mean = float(finite.mean())
        lo, hi = bootstrap_ci(finite, level, iterations, rng.derive_seed(int(seed), name))
        # percentile intervals can miss the sample mean by rounding on tiny samples
        lo, hi = min(lo, mean), max(hi, mean)
        report.aggregates[name] = {"mean": mean, "ci_lo": lo, "ci_hi": hi,
                                   "n": int(finite.size), "n_excluded_inf": n_inf}
    return report
