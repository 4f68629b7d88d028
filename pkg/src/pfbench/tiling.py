"""Tile planning, extraction and overlap-blended stitching for slide-scale images."""

import json
import os
from dataclasses import dataclass

import numpy as np

from .errors import GridMismatch, ImageSmallerThanTile, MissingTile, DataError
from .image_core import Rect, as_f32, read_image, u8_to_f32, write_png, f32_to_u8

__all__ = [
    "TileGrid",
    "Tile",
    "plan_tiles",
    "extract",
    "stitch",
    "blend_weights",
    "effective_weights",
    "save_tiles",
    "load_tiles",
]


def _origins(extent, tile, stride):
    xs = list(range(0, extent - tile + 1, stride))
    if xs[-1] + tile < extent:
        xs.append(extent - tile)
    return xs


@dataclass(frozen=True)
class TileGrid:
    image_w: int
    image_h: int
    tile: int
    overlap: int
    xs: tuple
    ys: tuple

    @property
    def stride(self):
        return self.tile - self.overlap

    def rects(self):
        """Tile rectangles in row-major grid order, keyed by (iy, ix)."""
        return {(iy, ix): Rect(x, y, self.tile, self.tile)
                for iy, y in enumerate(self.ys) for ix, x in enumerate(self.xs)}

    def scaled(self, factor):
        """The same grid on an image enlarged by an integer factor."""
        f = int(factor)
        return TileGrid(self.image_w * f, self.image_h * f, self.tile * f, self.overlap * f,
                        tuple(x * f for x in self.xs), tuple(y * f for y in self.ys))

    def to_dict(self):
        return {"image_w": self.image_w, "image_h": self.image_h, "tile": self.tile,
                "overlap": self.overlap, "xs": list(self.xs), "ys": list(self.ys)}

    @classmethod
    def from_dict(cls, d):
        return cls(int(d["image_w"]), int(d["image_h"]), int(d["tile"]), int(d["overlap"]),
                   tuple(int(v) for v in d["xs"]), tuple(int(v) for v in d["ys"]))


@dataclass
class Tile:
    ix: int
    iy: int
    rect: Rect
    pixels: np.ndarray


def plan_tiles(w, h, tile=256, overlap=32):
    if not 0 <= overlap < tile:
        raise DataError(f"overlap must satisfy 0 <= overlap < tile, got {overlap} for tile {tile}")
    if w < tile or h < tile:
        raise ImageSmallerThanTile(f"{w}x{h} image is smaller than tile {tile}")
    stride = tile - overlap
    return TileGrid(w, h, tile, overlap, tuple(_origins(w, tile, stride)), tuple(_origins(h, tile, stride)))


def extract(img, g):
    img = as_f32(img)
    if (img.shape[2], img.shape[1]) != (g.image_w, g.image_h):
        raise GridMismatch(f"grid planned for {g.image_w}x{g.image_h}, image is {img.shape[2]}x{img.shape[1]}")
    return [Tile(ix, iy, r, img[:, r.y:r.y + r.height, r.x:r.x + r.width].copy())
            for (iy, ix), r in g.rects().items()]


def _axis_weights(origins, tile):
    """1-D weight per tile: 1 inside, d/(L+1) at distance d from an edge shared
    with a neighbour that overlaps it by L pixels."""
    out = []
    u = np.arange(tile, dtype=np.float64)
    for k, o in enumerate(origins):
        w = np.ones(tile)
        if k > 0:
            left = origins[k - 1] + tile - o
            if left > 0:
                w = np.minimum(w, (u + 1) / (left + 1))
        if k < len(origins) - 1:
            right = o + tile - origins[k + 1]
            if right > 0:
                w = np.minimum(w, (tile - u) / (right + 1))
        out.append(w)
    return out


def blend_weights(g):
    """Unnormalised 2-D blend weight for every tile, keyed by (iy, ix)."""
    wx = _axis_weights(g.xs, g.tile)
    wy = _axis_weights(g.ys, g.tile)
    return {(iy, ix): np.outer(wy[iy], wx[ix]) for iy in range(len(g.ys)) for ix in range(len(g.xs))}


def effective_weights(g):
    """Per-tile weights after normalisation, i.e. what each tile contributes to each
    covered pixel of the stitched image. They sum to 1 at every pixel."""
    raw = blend_weights(g)
    norm = np.zeros((g.image_h, g.image_w))
    rects = g.rects()
    for key, r in rects.items():
        norm[r.y:r.y + g.tile, r.x:r.x + g.tile] += raw[key]
    return {key: raw[key] / norm[r.y:r.y + g.tile, r.x:r.x + g.tile] for key, r in rects.items()}


def stitch(tiles, g):
    """Weighted-average reassembly; accumulation order is row-major grid order."""
    by_index = {}
    for t in tiles:
        by_index[(t.iy, t.ix)] = t
    rects = g.rects()
    missing = sorted(set(rects) - set(by_index))
    if missing:
        raise MissingTile(f"tiles missing for grid indices {missing}")
    first = by_index[next(iter(rects))].pixels
    channels = first.shape[0]
    acc = np.zeros((channels, g.image_h, g.image_w))
    norm = np.zeros((g.image_h, g.image_w))
    weights = blend_weights(g)
    for key, r in rects.items():
        px = np.asarray(by_index[key].pixels, dtype=np.float64)
        if px.shape != (channels, g.tile, g.tile):
            raise GridMismatch(f"tile {key} has shape {px.shape}, expected {(channels, g.tile, g.tile)}")
        w = weights[key]
        acc[:, r.y:r.y + g.tile, r.x:r.x + g.tile] += w * px
        norm[r.y:r.y + g.tile, r.x:r.x + g.tile] += w
    return (acc / norm).astype(np.float32)


def save_tiles(tiles, g, out_dir):
    """Write ``tiles/{iy}_{ix}.png`` plus ``grid.json`` under ``out_dir``."""
    os.makedirs(os.path.join(out_dir, "tiles"), exist_ok=True)
    for t in tiles:
        write_png(os.path.join(out_dir, "tiles", f"{t.iy}_{t.ix}.png"), f32_to_u8(t.pixels))
    with open(os.path.join(out_dir, "grid.json"), "w") as fh:
        json.dump(g.to_dict(), fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_tiles(in_dir):
    with open(os.path.join(in_dir, "grid.json")) as fh:
        g = TileGrid.from_dict(json.load(fh))
    tiles = []
    for (iy, ix), r in g.rects().items():
        path = os.path.join(in_dir, "tiles", f"{iy}_{ix}.png")
        if not os.path.exists(path):
            raise MissingTile(f"missing tile file {path}")
        tiles.append(Tile(ix, iy, r, u8_to_f32(read_image(path))))
    return tiles, g
