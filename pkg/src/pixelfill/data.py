"""Synthetic factor-labelled shape corpus and rectangle mask sampling.

Each image shows one anti-aliased shape on a gray background; the six
generative factors are stored alongside so latent-control diagnostics can
correlate learned codes against ground truth. Identical seeds reproduce
bit-identical datasets.
"""

import colorsys
import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image

from .logistic_mixture import intensity_to_value

FACTOR_NAMES = ("shape", "pos_x", "pos_y", "size", "hue", "bg_light")

# hue deliberately stops short of 1.0 so it never wraps; monotone correlation
# against latent codes would be meaningless on a circular factor
FACTOR_RANGES = {
    "shape": (0, 2),
    "pos_x": (0.38, 0.62),
    "pos_y": (0.38, 0.62),
    "size": (0.22, 0.40),
    "hue": (0.0, 0.65),
    "bg_light": (0.25, 0.85),
}

_SUPERSAMPLE = 4


@dataclass
class SyntheticFactorDataset:
    images: np.ndarray   # [N, M, M, 3] uint8
    factors: np.ndarray  # [N, 6] float64, columns = FACTOR_NAMES
    seed: int

    def __len__(self):
        return self.images.shape[0]

    @property
    def image_size(self):
        return self.images.shape[1]

    def values(self, dtype=np.float64):
        """Images on the [-1, 1] intensity grid."""
        return intensity_to_value(self.images).astype(dtype)

    def factor(self, name):
        return self.factors[:, FACTOR_NAMES.index(name)]

    def split(self, holdout_fraction=0.1):
        """(train, heldout) split; the last fraction by index is held out."""
        n = len(self)
        cut = n - max(1, int(round(n * holdout_fraction)))
        return (
            SyntheticFactorDataset(self.images[:cut], self.factors[:cut], self.seed),
            SyntheticFactorDataset(self.images[cut:], self.factors[cut:], self.seed),
        )


def _shape_coverage(kind, xs, ys, cx, cy, r):
    """Boolean coverage of the supersampled grid by one shape."""
    dx, dy = xs - cx, ys - cy
    if kind == 0:  # circle
        return dx * dx + dy * dy <= r * r
    if kind == 1:  # square
        return np.maximum(np.abs(dx), np.abs(dy)) <= r
    # triangle, apex up
    v0 = np.array([cx, cy - r])
    v1 = np.array([cx - 0.9 * r, cy + 0.75 * r])
    v2 = np.array([cx + 0.9 * r, cy + 0.75 * r])
    def side(ax, ay, bx, by):
        return (bx - ax) * (ys - ay) - (by - ay) * (xs - ax)
    s0 = side(*v0, *v1)
    s1 = side(*v1, *v2)
    s2 = side(*v2, *v0)
    return (s0 <= 0) & (s1 <= 0) & (s2 <= 0)


def render_image(size, shape, pos_x, pos_y, radius, hue, bg_light):
    """[size, size, 3] uint8 anti-aliased render (supersampled box filter)."""
    ss = size * _SUPERSAMPLE
    grid = (np.arange(ss) + 0.5) / ss
    xs, ys = np.meshgrid(grid, grid)
    cover = _shape_coverage(int(shape), xs, ys, pos_x, pos_y, radius)
    cover = cover.reshape(size, _SUPERSAMPLE, size, _SUPERSAMPLE).mean(axis=(1, 3))
    fg = np.array(colorsys.hsv_to_rgb(hue, 0.9, 0.9))
    bg = np.full(3, bg_light)
    img = cover[..., None] * fg + (1.0 - cover[..., None]) * bg
    return np.clip(np.rint(img * 255.0), 0, 255).astype(np.uint8)


def generate_dataset(seed, count, size):
    if count < 1:
        raise ValueError("dataset needs at least one image")
    rng = np.random.default_rng(seed)
    images = np.empty((count, size, size, 3), dtype=np.uint8)
    factors = np.empty((count, len(FACTOR_NAMES)), dtype=np.float64)
    for i in range(count):
        shape = rng.integers(0, 3)
        px = rng.uniform(*FACTOR_RANGES["pos_x"])
        py = rng.uniform(*FACTOR_RANGES["pos_y"])
        r = rng.uniform(*FACTOR_RANGES["size"])
        hue = rng.uniform(*FACTOR_RANGES["hue"])
        bg = rng.uniform(*FACTOR_RANGES["bg_light"])
        images[i] = render_image(size, shape, px, py, r, hue, bg)
        factors[i] = (shape, px, py, r, hue, bg)
    return SyntheticFactorDataset(images, factors, seed)


def save_dataset(dataset, out_dir):
    """Directory of PNGs plus a factors.csv with one row per image."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    width = len(str(len(dataset) - 1))
    with open(out / "factors.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(("file",) + FACTOR_NAMES)
        for i in range(len(dataset)):
            name = f"{i:0{width}d}.png"
            Image.fromarray(dataset.images[i]).save(out / name)
            writer.writerow([name] + [repr(float(v)) for v in dataset.factors[i]])
    with open(out / "seed.txt", "w") as fh:
        fh.write(str(dataset.seed))


def load_dataset(in_dir):
    src = Path(in_dir)
    rows = list(csv.reader(open(src / "factors.csv")))
    header, rows = rows[0], rows[1:]
    assert tuple(header[1:]) == FACTOR_NAMES, f"unexpected factor columns {header}"
    images, factors = [], []
    for row in rows:
        images.append(np.asarray(Image.open(src / row[0]).convert("RGB")))
        factors.append([float(v) for v in row[1:]])
    seed_file = src / "seed.txt"
    seed = int(seed_file.read_text()) if seed_file.exists() else -1
    return SyntheticFactorDataset(np.stack(images), np.asarray(factors), seed)


@dataclass
class MaskSampler:
    """Uniform rectangles: width, height and position all uniform subject to
    the target rectangle staying inside the image. 1 = context, 0 = target."""

    size: int
    min_side: int
    max_side: int

    def __post_init__(self):
        if not 1 <= self.min_side <= self.max_side <= self.size:
            raise ValueError(
                f"invalid rectangle range [{self.min_side}, {self.max_side}] for size {self.size}")

    def sample(self, rng):
        w = int(rng.integers(self.min_side, self.max_side + 1))
        h = int(rng.integers(self.min_side, self.max_side + 1))
        x0 = int(rng.integers(0, self.size - w + 1))
        y0 = int(rng.integers(0, self.size - h + 1))
        mask = np.ones((self.size, self.size))
        mask[y0 : y0 + h, x0 : x0 + w] = 0.0
        return mask

    def sample_batch(self, rng, count):
        return np.stack([self.sample(rng) for _ in range(count)])
