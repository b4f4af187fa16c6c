"""Representation-space procedures: inversion, constrained sweeps, interpolation,
feature visualization, feature manipulation and activation ranking.

All input-space searches go through :func:`robustrep.pgd.pgd_optimize` with
one independent problem per leading-axis sample. Inversion, sweeps,
interpolation and visualization return the best iterate seen; manipulation
returns the iterate at which it stopped.
"""
from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np

from .data import Dataset, iter_batches
from .nn.network import Network, extract_representation
from .nn.tensor import DTYPE, ShapeError, Tensor, l2_norm
from .pgd import BallConstraint, PgdConfig, pgd_optimize

Radius = float
INF = math.inf


@dataclass
class InversionResult:
    x_result: np.ndarray
    source: np.ndarray
    target: np.ndarray
    final_rep_distance: Union[float, np.ndarray]
    normalized_rep_distance: Union[float, np.ndarray]
    steps_used: Union[int, np.ndarray]
    trace: List[float] = field(default_factory=list)


@dataclass
class SweepCurve:
    radii: List[float]
    mean: List[float]
    band_lo: List[float]
    band_hi: List[float]
    n_pairs: int
    # per-pair normalized distances, one row per radius
    per_pair: Optional[np.ndarray] = None

    def __post_init__(self):
        if any(b <= a for a, b in zip(self.radii, self.radii[1:])):
            raise ValueError("sweep radii must be strictly increasing")

    def at(self, radius: float) -> float:
        return self.mean[self.radii.index(radius)]


@dataclass
class ManipulationResult:
    x_result: np.ndarray
    unit: Union[int, np.ndarray]
    stop_reason: Union[str, List[str]]
    activation_trace: Union[List[float], List[List[float]]]
    steps_used: Union[int, np.ndarray] = 0


# -- helpers -----------------------------------------------------------------------

def _batched(x) -> Tuple[np.ndarray, bool]:
    x = np.asarray(x.data if isinstance(x, Tensor) else x, dtype=DTYPE)
    if x.ndim == 3:
        return x[None], True
    if x.ndim != 4:
        raise ShapeError(f"expected an image (C, H, W) or batch (B, C, H, W), got {x.shape}")
    return x, False


def _unbatch(value, single: bool):
    if not single:
        return value
    if isinstance(value, np.ndarray):
        return value[0] if value.ndim >= 1 else value.item()
    return value


def representations(net: Network, images, batch_size: int = 256) -> np.ndarray:
    x, _ = _batched(images)
    out = [extract_representation(net, x[sl]).data for sl in iter_batches(len(x), batch_size)]
    return np.concatenate(out, axis=0)


def _ball(center: np.ndarray, c: Optional[BallConstraint]) -> BallConstraint:
    if c is None:
        return BallConstraint(center, INF, (0.0, 1.0), per_sample=True)
    if c.center.shape not in (center.shape, center.shape[1:]):
        raise ShapeError(f"ball center shape {c.center.shape} does not match inputs {center.shape}")
    return BallConstraint(center, c.radius, c.pixel_box, per_sample=True)


def _check_unit(net: Network, unit) -> np.ndarray:
    units = np.atleast_1d(np.asarray(unit, dtype=np.int64))
    if np.any(units < 0) or np.any(units >= net.rep_dim):
        raise IndexError(f"unit index out of range [0, {net.rep_dim})")
    return units


def _zero_stop(x, values):
    return np.asarray(values) <= 0.0


def rep_distance(net: Network, x1, x2) -> Union[float, np.ndarray]:
    """||R(x1) - R(x2)||_2, per sample for batches."""
    a, single = _batched(x1)
    b, _ = _batched(x2)
    if a.shape != b.shape:
        raise ShapeError(f"shape mismatch {a.shape} vs {b.shape}")
    d = np.linalg.norm(representations(net, a).astype(np.float64)
                       - representations(net, b).astype(np.float64), axis=1)
    return float(d[0]) if single else d


def _match_reps(net: Network, target_reps: np.ndarray, x_init: np.ndarray,
                ball: BallConstraint, cfg: PgdConfig):
    tgt = Tensor(target_reps)

    def objective(x: Tensor) -> Tensor:
        return l2_norm(net.representation(x) - tgt, axis=1)

    cfg = dataclasses.replace(cfg, direction="minimize", keep_best=True,
                              early_stop=cfg.early_stop or _zero_stop)
    with net.frozen():
        return pgd_optimize(objective, x_init, ball, cfg)


# -- inversion ---------------------------------------------------------------------

def invert_representation(net: Network, target, source_seed, cfg: PgdConfig,
                          c: Optional[BallConstraint] = None) -> InversionResult:
    """Find x near ``source_seed`` whose representation is closest to R(target).

    Minimizes ||R(x) - R(target)||_2 by PGD started at ``source_seed`` inside
    the ball ``c`` (centered on the source; unconstrained with a [0, 1] box
    when omitted).
    """
    tgt, single = _batched(target)
    src, _ = _batched(source_seed)
    if tgt.shape != src.shape:
        raise ShapeError(f"target {tgt.shape} and source {src.shape} differ")
    target_reps = representations(net, tgt)
    res = _match_reps(net, target_reps, src, _ball(src, c), cfg)
    final = res.values
    norms = np.linalg.norm(target_reps.astype(np.float64), axis=1)
    normalized = final / np.where(norms > 0, norms, 1.0)
    return InversionResult(
        x_result=_unbatch(res.x, single), source=_unbatch(src, single), target=_unbatch(tgt, single),
        final_rep_distance=_unbatch(final, single), normalized_rep_distance=_unbatch(normalized, single),
        steps_used=_unbatch(res.steps_used, single), trace=res.trace)


def sweep_step_size(radius: float, steps: int, max_step: float, ratio: float = 2.5) -> float:
    """Step length for a ball of ``radius``: ratio * radius / steps, capped at ``max_step``."""
    if not math.isfinite(radius):
        return max_step
    return max(min(max_step, ratio * radius / steps), 1e-6)


def constrained_inversion_sweep(net: Network, pairs: Sequence[Tuple[np.ndarray, np.ndarray]],
                                radii: Sequence[float], cfg: PgdConfig,
                                step_ratio: float = 2.5, warm_start: bool = True) -> SweepCurve:
    """Minimum normalized representation distance reachable within each radius.

    Radii are visited in ascending order and, with ``warm_start``, each run
    starts from the previous radius's solution, which is feasible for the
    larger ball; combined with best-iterate returns this makes the curve
    non-increasing. ``cfg.step_size`` caps the per-radius step length.
    """
    if len(pairs) == 0:
        raise ValueError("constrained_inversion_sweep needs at least one (source, target) pair")
    radii = [float(r) for r in radii]
    if any(b <= a for a, b in zip(radii, radii[1:])) or any(r < 0 for r in radii):
        raise ValueError("radii must be nonnegative and strictly increasing")
    src = np.stack([np.asarray(s, dtype=DTYPE) for s, _ in pairs])
    tgt = np.stack([np.asarray(t, dtype=DTYPE) for _, t in pairs])
    target_reps = representations(net, tgt)
    norms = np.linalg.norm(target_reps.astype(np.float64), axis=1)
    norms = np.where(norms > 0, norms, 1.0)

    x = src.copy()
    rows = []
    for r in radii:
        ball = BallConstraint(src, r, (0.0, 1.0), per_sample=True)
        run_cfg = dataclasses.replace(cfg, step_size=sweep_step_size(r, max(cfg.steps, 1),
                                                                     cfg.step_size, step_ratio))
        res = _match_reps(net, target_reps, x if warm_start else src, ball, run_cfg)
        if warm_start:
            x = res.x
        rows.append(res.values / norms)
    per_pair = np.stack(rows)
    return SweepCurve(
        radii=radii,
        mean=[float(v) for v in per_pair.mean(axis=1)],
        band_lo=[float(v) for v in np.percentile(per_pair, 25, axis=1)],
        band_hi=[float(v) for v in np.percentile(per_pair, 75, axis=1)],
        n_pairs=len(pairs),
        per_pair=per_pair,
    )


# -- interpolation -----------------------------------------------------------------

def interpolation_weights(T: int) -> np.ndarray:
    if T < 1:
        raise ValueError("interpolation needs T >= 1")
    return np.arange(T + 1, dtype=np.float64) / T


def interpolate(net: Network, x1, x2, T: int, cfg: PgdConfig,
                c_radius: float = INF) -> List[np.ndarray]:
    """T+1 frames; frame k matches lam*R(x1) + (1-lam)*R(x2) with lam = k/T.

    Each frame's search is seeded with the pixel-space blend lam*x1 + (1-lam)*x2.
    """
    lams = interpolation_weights(T)
    a, _ = _batched(x1)
    b, _ = _batched(x2)
    r1, r2 = representations(net, a)[0], representations(net, b)[0]
    target_reps = np.stack([lam * r1 + (1 - lam) * r2 for lam in lams]).astype(DTYPE)
    seeds = np.stack([lam * a[0] + (1 - lam) * b[0] for lam in lams]).astype(DTYPE)
    ball = BallConstraint(seeds, c_radius, (0.0, 1.0), per_sample=True)
    res = _match_reps(net, target_reps, seeds, ball, cfg)
    return [frame for frame in res.x]


# -- visualization and manipulation ---------------------------------------------------

def _unit_objective(net: Network, units: np.ndarray, cache: Optional[dict] = None):
    rows = np.arange(len(units))

    def objective(x: Tensor) -> Tensor:
        rep = net.representation(x)
        if cache is not None:
            cache["rep"] = rep.data
        return rep[rows, units]

    return objective


def visualize_feature(net: Network, unit, x0, cfg: PgdConfig,
                      c: Optional[BallConstraint] = None) -> np.ndarray:
    """Maximize coordinate ``unit`` of R starting from ``x0``; returns the best iterate."""
    x, single = _batched(x0)
    units = _check_unit(net, unit)
    if len(units) == 1:
        units = np.repeat(units, len(x))
    cfg = dataclasses.replace(cfg, direction="maximize", keep_best=True)
    with net.frozen():
        res = pgd_optimize(_unit_objective(net, units), x, _ball(x, c), cfg)
    return _unbatch(res.x, single)


def is_strict_argmax(reps: np.ndarray, units: np.ndarray) -> np.ndarray:
    """True where ``units`` is the argmax of each row, ties going to the lowest index."""
    return np.argmax(reps, axis=1) == units


def manipulate_feature(net: Network, x, unit, cfg: PgdConfig,
                       c: Optional[BallConstraint] = None) -> ManipulationResult:
    """Ascend R(x)_unit and stop as soon as that unit becomes the representation's argmax."""
    xb, single = _batched(x)
    units = _check_unit(net, unit)
    if len(units) == 1:
        units = np.repeat(units, len(xb))
    cache: dict = {}

    def stop(x_, values):
        return is_strict_argmax(cache["rep"], units)

    run_cfg = dataclasses.replace(cfg, direction="maximize", keep_best=False, early_stop=stop)
    with net.frozen():
        res = pgd_optimize(_unit_objective(net, units, cache), xb, _ball(xb, c), run_cfg)
    reasons = ["argmax_reached" if s else "step_cap" for s in res.stopped]
    traces = [[float(h[i]) for h in res.history[:res.steps_used[i] + 1]] for i in range(len(xb))]
    if single:
        return ManipulationResult(res.x[0], int(units[0]), reasons[0], traces[0], int(res.steps_used[0]))
    return ManipulationResult(res.x, units, reasons, traces, res.steps_used)


# -- ranking -----------------------------------------------------------------------

def rank_activating_images(net: Network, dataset: Dataset, unit: int, n: int,
                           mode: str = "max") -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """The ``n`` images with the highest (``max``) or lowest (``min``) R(x)_unit.

    Returns ``(images, activations, dataset_indices)``; ties keep dataset order.
    """
    if len(dataset) == 0:
        raise ValueError("dataset is empty")
    if not 0 < n <= len(dataset):
        raise ValueError(f"n must be in [1, {len(dataset)}], got {n}")
    if mode not in ("max", "min"):
        raise ValueError(f"mode must be 'max' or 'min', got {mode!r}")
    u = int(_check_unit(net, unit)[0])
    acts = representations(net, dataset.images)[:, u]
    key = -acts if mode == "max" else acts
    order = np.argsort(key, kind="stable")[:n]
    return dataset.images[order], acts[order], order


# -- helpers for demos and semantic proxies -------------------------------------------

def select_units(rep_dim: int, count: int, seed: int) -> List[int]:
    """A seeded random subset of representation coordinates."""
    rng = np.random.default_rng(seed)
    return sorted(int(u) for u in rng.choice(rep_dim, size=min(count, rep_dim), replace=False))


def pixel_distance(x1, x2) -> np.ndarray:
    a, _ = _batched(x1)
    b, _ = _batched(x2)
    return np.linalg.norm((a - b).reshape(len(a), -1).astype(np.float64), axis=1)


def label_agreement(judge: Network, images, labels) -> np.ndarray:
    """Per-image flag: does an independent model classify the image as ``labels``?"""
    x, _ = _batched(images)
    from .trainer import predict

    return predict(judge, x) == np.asarray(labels)
