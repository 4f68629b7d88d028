"""Deterministic synthetic tissue-like images for smoke tests and demos."""

import os

import numpy as np
from scipy import ndimage

from . import rng
from .image_core import f32_to_u8, write_png

# rough H&E palette: pink stroma, purple nuclei, near-white background
_STROMA = np.array([0.93, 0.62, 0.78])
_NUCLEUS = np.array([0.36, 0.22, 0.55])
_BACKGROUND = np.array([0.96, 0.94, 0.96])


def synthetic_tile(seed, size=256, nuclei=60):
    """Smooth RGB image (C, H, W) in [0, 1] with blob 'nuclei' over a stromal field."""
    gen = rng.generator(seed)
    field = ndimage.gaussian_filter(gen.standard_normal((size, size)), 24, mode="wrap")
    field = (field - field.min()) / (np.ptp(field) + 1e-12)
    tissue = np.clip((field - 0.25) * 3.0, 0.0, 1.0)
    yy, xx = np.mgrid[0:size, 0:size].astype(np.float64)
    nuc = np.zeros((size, size))
    for _ in range(nuclei):
        cx, cy = gen.uniform(0, size, 2)
        sx, sy = gen.uniform(3.0, 7.0, 2)
        ang = gen.uniform(0, np.pi)
        c, s = np.cos(ang), np.sin(ang)
        u = (xx - cx) * c + (yy - cy) * s
        v = -(xx - cx) * s + (yy - cy) * c
        nuc = np.maximum(nuc, np.exp(-0.5 * ((u / sx) ** 2 + (v / sy) ** 2)))
    nuc *= tissue
    img = (_BACKGROUND[:, None, None] * (1 - tissue) + _STROMA[:, None, None] * tissue)
    img = img * (1 - nuc) + _NUCLEUS[:, None, None] * nuc
    texture = ndimage.gaussian_filter(gen.standard_normal((size, size)), 1.5) * 0.03
    return np.clip(img + texture * tissue, 0.0, 1.0).astype(np.float32)


def write_corpus(out_dir, n=10, size=256, seed=0):
    """Write ``n`` synthetic PNGs named ``synth_XX.png``; returns their paths."""
    os.makedirs(out_dir, exist_ok=True)
    paths = []
    for i in range(n):
        path = os.path.join(out_dir, f"synth_{i:02d}.png")
        write_png(path, f32_to_u8(synthetic_tile(rng.derive_seed(int(seed), "synthetic", i), size)))
        paths.append(path)
    return paths
