"""Datasets, superclass grouping, out-of-distribution seeds and artifact writers."""
from __future__ import annotations

import csv
import math
import os
import re
from dataclasses import dataclass, field
from typing import Iterable, List, Optional, Sequence, Tuple

import numpy as np
from PIL import Image

from .nn.tensor import DTYPE


class DatasetError(Exception):
    """Base class for dataset loading failures."""


class MissingSplitError(DatasetError):
    pass


class ImageDecodeError(DatasetError):
    pass


class DimensionError(DatasetError):
    pass


class SuperclassMapError(ValueError):
    pass


@dataclass
class Dataset:
    images: np.ndarray  # (N, C, H, W) float32 in [0, 1]
    labels: np.ndarray  # (N,) int64
    class_names: List[str]
    split: str = ""
    paths: List[str] = field(default_factory=list)

    def __post_init__(self):
        self.images = np.asarray(self.images, dtype=DTYPE)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if self.images.ndim != 4:
            raise DimensionError(f"images must be (N, C, H, W), got {self.images.shape}")
        if len(self.labels) != len(self.images):
            raise DatasetError(f"{len(self.labels)} labels for {len(self.images)} images")
        if self.images.size and (self.images.min() < 0.0 or self.images.max() > 1.0):
            raise DatasetError("pixel values must lie in [0, 1]")
        if len(self.labels) and (self.labels.min() < 0 or self.labels.max() >= len(self.class_names)):
            raise DatasetError("labels out of range for class_names")

    def __len__(self) -> int:
        return len(self.labels)

    @property
    def num_classes(self) -> int:
        return len(self.class_names)

    @property
    def image_shape(self) -> Tuple[int, int, int]:
        return tuple(self.images.shape[1:])

    def subset(self, idx) -> "Dataset":
        idx = np.asarray(idx)
        paths = [self.paths[i] for i in idx] if self.paths else []
        return Dataset(self.images[idx], self.labels[idx], list(self.class_names), self.split, paths)


def _decode_png(path: str) -> np.ndarray:
    try:
        with Image.open(path) as im:
            im = im.convert("RGB")
            arr = np.asarray(im, dtype=np.uint8)
    except Exception as exc:  # PIL raises a zoo of exception types
        raise ImageDecodeError(f"cannot decode image {path}: {exc}") from None
    return arr.transpose(2, 0, 1)


def load_dataset(root: str, split: str) -> Dataset:
    """Load ``root/split/<class_name>/*.png``.

    Classes are the sorted subdirectory names; files are ordered by the byte
    order of their relative paths, so loading is platform independent.
    """
    base = os.path.join(root, split)
    if not os.path.isdir(base):
        raise MissingSplitError(f"split directory not found: {base}")
    class_names = sorted((d for d in os.listdir(base) if os.path.isdir(os.path.join(base, d))),
                         key=lambda s: s.encode("utf-8"))
    entries: List[Tuple[bytes, str, int]] = []
    for label, name in enumerate(class_names):
        cdir = os.path.join(base, name)
        for fname in os.listdir(cdir):
            if fname.lower().endswith(".png"):
                rel = f"{name}/{fname}"
                entries.append((rel.encode("utf-8"), os.path.join(cdir, fname), label))
    entries.sort(key=lambda e: e[0])
    if not entries:
        raise DatasetError(f"no PNG images under {base}")

    images = []
    shape = None
    for _, path, _ in entries:
        arr = _decode_png(path)
        if shape is None:
            shape = arr.shape
        elif arr.shape != shape:
            raise DimensionError(f"image {path} has shape {arr.shape[1]}x{arr.shape[2]}, "
                                 f"expected {shape[1]}x{shape[2]}")
        images.append(arr)
    stacked = np.stack(images).astype(DTYPE) / DTYPE(255.0)
    labels = np.array([e[2] for e in entries], dtype=np.int64)
    return Dataset(stacked, labels, class_names, split, [e[1] for e in entries])


# -- superclass grouping -------------------------------------------------------

@dataclass
class SuperclassMap:
    entries: List[Tuple[str, List[Tuple[int, int]]]]

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        spans = []
        for name, ranges in self.entries:
            for lo, hi in ranges:
                if lo > hi:
                    raise SuperclassMapError(f"{name}: empty range {lo}-{hi}")
                spans.append((lo, hi, name))
        spans.sort()
        for (lo1, hi1, n1), (lo2, hi2, n2) in zip(spans, spans[1:]):
            if lo2 <= hi1:
                raise SuperclassMapError(f"overlapping ranges: {n1} {lo1}-{hi1} and {n2} {lo2}-{hi2}")

    @property
    def names(self) -> List[str]:
        return [name for name, _ in self.entries]

    def lookup(self, label: int) -> Optional[int]:
        for idx, (_, ranges) in enumerate(self.entries):
            for lo, hi in ranges:
                if lo <= label <= hi:
                    return idx
        return None

    @classmethod
    def parse(cls, text: str) -> "SuperclassMap":
        """Lines of ``Name: lo-hi[, lo-hi ...]``; ``#`` starts a comment."""
        entries = []
        for lineno, raw in enumerate(text.splitlines(), 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if ":" not in line:
                raise SuperclassMapError(f"line {lineno}: expected 'name: lo-hi'")
            name, rest = line.split(":", 1)
            ranges = []
            for part in rest.split(","):
                m = re.fullmatch(r"\s*(\d+)\s*(?:-\s*(\d+))?\s*", part)
                if not m:
                    raise SuperclassMapError(f"line {lineno}: bad range {part.strip()!r}")
                lo = int(m.group(1))
                ranges.append((lo, int(m.group(2)) if m.group(2) else lo))
            entries.append((name.strip(), ranges))
        return cls(entries)

    @classmethod
    def load(cls, path: str) -> "SuperclassMap":
        with open(path, encoding="utf-8") as fh:
            return cls.parse(fh.read())

    def dumps(self) -> str:
        return "".join(f"{name}: {', '.join(f'{lo}-{hi}' for lo, hi in ranges)}\n"
                       for name, ranges in self.entries)

    @classmethod
    def identity(cls, class_names: Sequence[str]) -> "SuperclassMap":
        return cls([(name, [(i, i)]) for i, name in enumerate(class_names)])


# Restricted-ImageNet grouping of ImageNet labels (inclusive ranges).
RESTRICTED_IMAGENET = SuperclassMap([
    ("Dog", [(151, 268)]),
    ("Cat", [(281, 285)]),
    ("Frog", [(30, 32)]),
    ("Turtle", [(33, 37)]),
    ("Bird", [(80, 100)]),
    ("Primate", [(365, 382)]),
    ("Fish", [(389, 397)]),
    ("Crab", [(118, 121)]),
    ("Insect", [(300, 319)]),
])


def apply_superclass_map(dataset: Dataset, scmap: SuperclassMap) -> Dataset:
    scmap.validate()
    new = np.array([-1 if (s := scmap.lookup(int(l))) is None else s for l in dataset.labels],
                   dtype=np.int64)
    keep = np.nonzero(new >= 0)[0]
    paths = [dataset.paths[i] for i in keep] if dataset.paths else []
    return Dataset(dataset.images[keep], new[keep], scmap.names, dataset.split, paths)


# -- seed images -----------------------------------------------------------------

def noise_seed(shape: Sequence[int], seed: int, mean: float = 0.5, std: float = 0.25) -> np.ndarray:
    """Gaussian noise image(s) clamped to [0, 1]."""
    rng = np.random.default_rng(seed)
    return np.clip(rng.normal(mean, std, size=tuple(shape)), 0.0, 1.0).astype(DTYPE)


def pattern_seed(shape: Sequence[int], seed: int, n_waves: int = 6, max_freq: int = 3) -> np.ndarray:
    """Kaleidoscope-style pattern: a random low-frequency field mirrored across both axes.

    ``shape`` ends in (C, H, W); any leading axes get independent patterns.
    """
    shape = tuple(int(s) for s in shape)
    *lead, C, H, W = shape
    rng = np.random.default_rng(seed)
    # fold coordinates so the field is symmetric under both flips by construction
    fy = np.minimum(np.arange(H), H - 1 - np.arange(H)) / max(H - 1, 1)
    fx = np.minimum(np.arange(W), W - 1 - np.arange(W)) / max(W - 1, 1)
    yy, xx = np.meshgrid(fy, fx, indexing="ij")
    count = int(np.prod(lead)) if lead else 1
    out = np.empty((count, C, H, W), dtype=np.float64)
    for n in range(count):
        for c in range(C):
            field_ = np.zeros((H, W))
            for _ in range(n_waves):
                ky, kx = rng.integers(0, max_freq + 1, size=2)
                phase = rng.uniform(0, 2 * np.pi)
                field_ += rng.normal() * np.cos(2 * np.pi * (ky * yy + kx * xx) + phase)
            scale = np.abs(field_).max()
            out[n, c] = 0.5 + 0.5 * field_ / scale if scale > 0 else 0.5
    return np.clip(out, 0.0, 1.0).astype(DTYPE).reshape(shape)


# -- writers ---------------------------------------------------------------------

GRID_SEPARATOR = 2
GRID_FILL = 128


def _to_rgb_uint8(img: np.ndarray) -> np.ndarray:
    img = np.asarray(img, dtype=np.float64)
    if img.ndim == 2:
        img = img[None]
    if img.shape[0] == 1:
        img = np.repeat(img, 3, axis=0)
    return np.rint(np.clip(img, 0.0, 1.0) * 255.0).astype(np.uint8).transpose(1, 2, 0)


def image_grid(images: Sequence[np.ndarray], columns: int) -> np.ndarray:
    """Compose (C, H, W) images into one HxWx3 uint8 array, row-major, mid-gray padding."""
    images = [np.asarray(im) for im in images]
    if not images:
        raise ValueError("image grid needs at least one image")
    shape = images[0].shape
    if any(im.shape != shape for im in images):
        raise ValueError("all images in a grid must share one shape")
    columns = max(1, min(int(columns), len(images)))
    rows = math.ceil(len(images) / columns)
    h, w = shape[-2], shape[-1]
    sep = GRID_SEPARATOR
    canvas = np.full((rows * h + (rows - 1) * sep, columns * w + (columns - 1) * sep, 3),
                     GRID_FILL, dtype=np.uint8)
    for k, im in enumerate(images):
        r, c = divmod(k, columns)
        y, x = r * (h + sep), c * (w + sep)
        canvas[y:y + h, x:x + w] = _to_rgb_uint8(im)
    return canvas


def write_image_grid(images: Sequence[np.ndarray], columns: int, path: str) -> str:
    canvas = image_grid(images, columns)
    parent = os.path.dirname(os.path.abspath(path))
    if not os.path.isdir(parent):
        raise OSError(f"output directory does not exist: {parent}")
    Image.fromarray(canvas, mode="RGB").save(path, format="PNG")
    return path


CURVE_HEADER = ["radius", "mean", "band_lo", "band_hi", "n_pairs"]


def write_curve_csv(curve, path: str) -> str:
    """Write a SweepCurve as ``radius,mean,band_lo,band_hi,n_pairs`` rows."""
    radii = list(curve.radii)
    if not radii:
        raise ValueError("refusing to write an empty curve")
    rows = sorted(zip(radii, curve.mean, curve.band_lo, curve.band_hi), key=lambda r: r[0])
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(CURVE_HEADER)
        for r, m, lo, hi in rows:
            writer.writerow([f"{r:.6g}", f"{m:.6g}", f"{lo:.6g}", f"{hi:.6g}", int(curve.n_pairs)])
    return path


def read_curve_csv(path: str):
    from .reptools import SweepCurve

    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if header != CURVE_HEADER:
            raise ValueError(f"unexpected curve header {header}")
        rows = [[float(v) for v in row] for row in reader if row]
    cols = list(zip(*rows))
    return SweepCurve(radii=list(cols[0]), mean=list(cols[1]), band_lo=list(cols[2]),
                      band_hi=list(cols[3]), n_pairs=int(cols[4][0]))


def iter_batches(n: int, batch_size: int) -> Iterable[slice]:
    for start in range(0, n, batch_size):
        yield slice(start, min(start + batch_size, n))
