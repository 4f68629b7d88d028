# %% [markdown]
# # Full-reference metrics
#
# PSNR, SSIM, MAE, feature-space distance, intensity profiles and bootstrap
# intervals, checked against numbers that can be worked out by hand.

# %%
import math

import numpy as np

from pfbench.metrics import (
    ProfileLine,
    average_rank,
    bootstrap_ci,
    extract_profile,
    lpips_from_features,
    pearson,
    psnr,
    ssim,
)

gt = np.full((3, 64, 64), 0.5)

# %% [markdown]
# A constant error of 10 grey levels: 10 log10(255^2 / 100) = 28.131 dB.
# Halving the error buys 20 log10(2) = 6.021 dB.

# %%
print(f"{psnr(gt, gt + 10 / 255):.4f} dB")
print(f"{psnr(gt, gt + 5 / 255) - psnr(gt, gt + 10 / 255):.4f} dB")
print("identical images:", psnr(gt, gt))

# %% [markdown]
# SSIM drops as noise grows.

# %%
gen = np.random.default_rng(0)
tex = np.clip(gt + 0.2 * gen.standard_normal(gt.shape), 0, 1)
for sigma in (0.0, 0.02, 0.05, 0.1, 0.2):
    noisy = np.clip(tex + sigma * gen.standard_normal(gt.shape), 0, 1)
    print(f"sigma {sigma:.2f}: SSIM {ssim(tex, noisy):.4f}")

# %% [markdown]
# LPIPS needs deep features. The network lives outside this package, so here we
# just feed two toy feature stacks with unit channel weights.

# %%
fx = [gen.random((8, 16, 16)), gen.random((16, 8, 8))]
fy = [f + 0.1 for f in fx]
print("feature distance", lpips_from_features(fx, fy, [np.ones(8), np.ones(16)]))

# %% [markdown]
# Intensity profiles and their Pearson correlation.

# %%
ramp = np.tile(np.linspace(0, 1, 64), (3, 64, 1))
line = ProfileLine((0.0, 32.0), (63.0, 32.0), 50)
p = extract_profile(ramp, line)
q = extract_profile(np.clip(ramp + 0.05 * gen.standard_normal(ramp.shape), 0, 1), line)
print("profile PCC", round(pearson(p, q), 4))
print("hand example", pearson([1, 2, 3, 4], [2, 4, 5, 4]), 3.5 / math.sqrt(5 * 4.75))

# %% [markdown]
# Bootstrap interval for a mean, and average ranks with ties.

# %%
print("95% CI", bootstrap_ci(gen.normal(30, 2, 40), seed=1))
table = {("sr_x2", "psnr_db"): {"a": 30.0, "b": 31.0, "c": 31.0},
         ("sr_x2", "mae"): {"a": 2.0, "b": 3.0, "c": 1.0}}
print(average_rank(table, {"psnr_db": True, "mae": False}))
