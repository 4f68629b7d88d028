# %% [markdown]
# # Tiles and seamless stitching
#
# Slides are far too large to restore in one go, so they are cut into
# overlapping tiles and blended back with a linear ramp across every overlap.

# %%
import numpy as np

from pfbench.image_core import Rect
from pfbench.tiling import Tile, blend_weights, extract, plan_tiles, stitch

g = plan_tiles(500, 300, tile=256, overlap=32)
print("x origins", g.xs, "y origins", g.ys)

# %% [markdown]
# Cutting and re-stitching untouched tiles gives back the exact image.

# %%
img = np.random.default_rng(0).random((3, 300, 500)).astype(np.float32)
print("bit-exact:", np.array_equal(stitch(extract(img, g), g), img))

# %% [markdown]
# Two flat tiles of 0.2 and 0.8 meeting over 9 columns: the seam is a straight ramp.

# %%
grid = plan_tiles(2 * 32 - 9, 32, 32, 9)
tiles = [Tile(0, 0, Rect(0, 0, 32, 32), np.full((1, 32, 32), 0.2, np.float32)),
         Tile(1, 0, Rect(23, 0, 32, 32), np.full((1, 32, 32), 0.8, np.float32))]
row = stitch(tiles, grid)[0, 0]
print(np.round(row[20:35], 3))
print("left tile weights at its right edge", np.round(blend_weights(grid)[(0, 0)][0, 20:], 3))
