"""Synthetic 32x32 shapes corpus, so the repo can train and evaluate offline.

Ten in-distribution classes plus two held-out shape classes used as
out-of-distribution inversion targets. Every image is a coloured shape on a
coloured background with mild texture noise; position, scale, rotation and
colours are random. Rendering is 2x supersampled for soft edges.
"""
from __future__ import annotations

import os
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
from PIL import Image

CLASSES = ["disk", "square", "triangle", "ring", "plus",
           "xcross", "hstripes", "vstripes", "diamond", "checker"]
OOD_CLASSES = ["crescent", "dots"]

_SS = 2  # supersampling factor

Mask = Callable[[np.ndarray, np.ndarray, np.random.Generator], np.ndarray]


def _rot(u, v, theta):
    c, s = np.cos(theta), np.sin(theta)
    return c * u - s * v, s * u + c * v


def _disk(u, v, rng):
    return u * u + v * v <= 1.0


def _square(u, v, rng):
    # near axis-aligned, so a square never turns into a diamond
    a, b = _rot(u, v, rng.uniform(-0.25, 0.25))
    return (np.abs(a) <= 0.8) & (np.abs(b) <= 0.8)


def _triangle(u, v, rng):
    a, b = _rot(u, v, rng.uniform(-0.3, 0.3))
    # equilateral triangle inscribed in the unit circle
    return (b >= -0.5) & (np.sqrt(3) * a + b <= 1.0) & (-np.sqrt(3) * a + b <= 1.0)


def _ring(u, v, rng):
    r2 = u * u + v * v
    return (r2 <= 1.0) & (r2 >= 0.45)


def _plus(u, v, rng):
    a, b = _rot(u, v, rng.uniform(-0.2, 0.2))
    w = 0.3
    return ((np.abs(a) <= w) & (np.abs(b) <= 1)) | ((np.abs(b) <= w) & (np.abs(a) <= 1))


def _xcross(u, v, rng):
    a, b = _rot(u, v, np.pi / 4 + rng.uniform(-0.2, 0.2))
    w = 0.28
    return ((np.abs(a) <= w) & (np.abs(b) <= 1)) | ((np.abs(b) <= w) & (np.abs(a) <= 1))


def _hstripes(u, v, rng):
    period = rng.uniform(0.5, 0.7)
    return (np.abs(u) <= 1) & (np.abs(v) <= 1) & (np.mod(v / period, 1.0) < 0.5)


def _vstripes(u, v, rng):
    period = rng.uniform(0.5, 0.7)
    return (np.abs(u) <= 1) & (np.abs(v) <= 1) & (np.mod(u / period, 1.0) < 0.5)


def _diamond(u, v, rng):
    return np.abs(u) / 0.75 + np.abs(v) <= 1.0


def _checker(u, v, rng):
    cell = rng.uniform(0.45, 0.6)
    inside = (np.abs(u) <= 1) & (np.abs(v) <= 1)
    return inside & ((np.floor(u / cell) + np.floor(v / cell)) % 2 == 0)


def _crescent(u, v, rng):
    a, b = _rot(u, v, rng.uniform(0, 2 * np.pi))
    return (a * a + b * b <= 1.0) & ((a - 0.45) ** 2 + b * b > 0.7)


def _dots(u, v, rng):
    g = 0.6
    du = np.mod(u + g / 2, g) - g / 2
    dv = np.mod(v + g / 2, g) - g / 2
    return (np.abs(u) <= 1.1) & (np.abs(v) <= 1.1) & (du * du + dv * dv <= 0.04)


SHAPES: Dict[str, Mask] = {
    "disk": _disk, "square": _square, "triangle": _triangle, "ring": _ring, "plus": _plus,
    "xcross": _xcross, "hstripes": _hstripes, "vstripes": _vstripes, "diamond": _diamond,
    "checker": _checker, "crescent": _crescent, "dots": _dots,
}


# per-channel half contrast |fg - bg| / 2 is drawn from [MIN_CONTRAST, 1) before clipping
MIN_CONTRAST = 0.45
# shape radius as a fraction of the image side
RADIUS_RANGE = (0.22, 0.34)
TEXTURE_STD = 0.04


def _colour_pair(rng: np.random.Generator) -> Tuple[np.ndarray, np.ndarray]:
    """Foreground and background colours symmetric about a random base colour."""
    base = rng.uniform(0, 1, 3)
    delta = rng.uniform(MIN_CONTRAST, 1.0) * np.sign(rng.uniform(-1, 1, 3)) * rng.uniform(0.5, 1, 3)
    return np.clip(base + delta, 0, 1), np.clip(base - delta, 0, 1)


def render_shape(name: str, rng: np.random.Generator, size: int = 32) -> np.ndarray:
    """One (3, size, size) float image in [0, 1]."""
    n = size * _SS
    coords = (np.arange(n) + 0.5) / n * size
    yy, xx = np.meshgrid(coords, coords, indexing="ij")
    radius = rng.uniform(*RADIUS_RANGE) * size
    cx = rng.uniform(radius * 0.9, size - radius * 0.9)
    cy = rng.uniform(radius * 0.9, size - radius * 0.9)
    mask = SHAPES[name]((xx - cx) / radius, (yy - cy) / radius, rng).astype(np.float32)
    mask = mask.reshape(size, _SS, size, _SS).mean(axis=(1, 3))
    fg, bg = _colour_pair(rng)
    img = bg[:, None, None] * (1 - mask) + fg[:, None, None] * mask
    # low-amplitude texture so images are not piecewise constant
    img = img + rng.normal(0.0, TEXTURE_STD, size=img.shape)
    return np.clip(img, 0.0, 1.0).astype(np.float32)


def make_shapes(n_per_class: int, seed: int, classes: Sequence[str] = CLASSES,
                size: int = 32) -> Tuple[np.ndarray, np.ndarray]:
    """Arrays ``(images[N,3,H,W], labels[N])`` ordered class by class."""
    rng = np.random.default_rng(seed)
    images, labels = [], []
    for label, name in enumerate(classes):
        for _ in range(n_per_class):
            images.append(render_shape(name, rng, size))
            labels.append(label)
    return np.stack(images), np.asarray(labels, dtype=np.int64)


def to_uint8(img: np.ndarray) -> np.ndarray:
    return np.rint(np.clip(img, 0.0, 1.0) * 255.0).astype(np.uint8).transpose(1, 2, 0)


def write_corpus(root: str, n_train: int = 300, n_test: int = 100, n_ood: int = 50,
                 seed: int = 0, size: int = 32) -> Dict[str, int]:
    """Write ``root/{train,test,ood}/<NN_class>/<NNNNN>.png``; returns counts per split."""
    plan: List[Tuple[str, Sequence[str], int, int]] = [
        ("train", CLASSES, n_train, seed),
        ("test", CLASSES, n_test, seed + 1),
        ("ood", OOD_CLASSES, n_ood, seed + 2),
    ]
    counts = {}
    for split, classes, n, split_seed in plan:
        if n <= 0:
            continue
        images, labels = make_shapes(n, split_seed, classes, size)
        for i, (img, lab) in enumerate(zip(images, labels)):
            d = os.path.join(root, split, f"{lab:02d}_{classes[lab]}")
            os.makedirs(d, exist_ok=True)
            Image.fromarray(to_uint8(img), mode="RGB").save(os.path.join(d, f"{i:05d}.png"))
        counts[split] = len(labels)
    return counts


def corpus_exists(root: str, splits: Optional[Sequence[str]] = ("train", "test")) -> bool:
    return all(os.path.isdir(os.path.join(root, s)) for s in splits)
