"""Desk-scale experiment pipeline used by ``scripts/`` and the acceptance suite.

A :class:`DeskConfig` pins the corpus, the training recipe and every search
budget. :func:`desk_models` trains (or reloads from a cache keyed by a hash of
the recipe) three RepNet-S models: a robust one, a standard one and a second,
independently seeded standard model that acts as the judge for the inversion
proxy. The ``measure_*`` functions each return a plain dict of numbers.
"""
from __future__ import annotations

import dataclasses
import hashlib
import json
import logging
import os
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from threadpoolctl import threadpool_limits

from . import __version__
from .checkpoint import load_checkpoint, save_checkpoint
from .data import Dataset, load_dataset, noise_seed
from .nn.network import Network, build_repnet_s
from .pgd import BallConstraint, PgdConfig
from .reptools import (
    INF,
    SweepCurve,
    constrained_inversion_sweep,
    interpolate,
    invert_representation,
    is_strict_argmax,
    label_agreement,
    manipulate_feature,
    representations,
    visualize_feature,
)
from .synth import corpus_exists, write_corpus
from .trainer import TrainConfig, eval_accuracy, eval_adversarial_accuracy, train_robust, train_standard, \
    write_metrics_csv

log = logging.getLogger(__name__)

CACHE_ENV = "ROBUSTREP_CACHE"
DESK_RADII = (0.125, 0.25, 0.5, 1.0, 2.0, 4.0, 8.0, 16.0)


@dataclass
class DeskConfig:
    n_train: int = 300
    n_test: int = 100
    n_ood: int = 50
    corpus_seed: int = 0
    # all three models share lr 0.05 / batch 64 without flip/crop augmentation;
    # robust training also ramps the attack radius in over the first 10 epochs
    standard_train: TrainConfig = field(default_factory=lambda: TrainConfig(
        lr=0.05, batch_size=64, augment=False))
    robust_train: TrainConfig = field(default_factory=lambda: TrainConfig(
        robust=True, lr=0.05, batch_size=64, augment=False, eps_warmup=10))
    model_seed: int = 0
    judge_seed: int = 1
    eval_steps: int = 20
    # constrained sweep
    sweep_pairs: int = 20
    sweep_steps: int = 200
    sweep_step_cap: float = 0.5
    floor_steps: int = 1000
    floor_step_size: float = 0.1
    # inversion proxy
    proxy_pairs: int = 50
    proxy_steps: int = 1000
    proxy_step_size: float = 0.1
    # interpolation
    interp_pairs: int = 5
    interp_frames: int = 8
    interp_steps: int = 1000
    interp_step_size: float = 0.05
    # manipulation
    manip_runs: int = 200
    manip_steps: int = 500
    manip_step_size: float = 0.1
    # feature visualization from a gray seed
    viz_steps: int = 200
    viz_step_size: float = 0.1
    seed: int = 0

    @property
    def eps(self) -> float:
        return self.robust_train.eps

    def protocol(self) -> Dict[str, object]:
        """Every setting as plain data (training recipes as dicts)."""
        out = {k: v for k, v in vars(self).items() if not isinstance(v, TrainConfig)}
        out["standard_train"] = self.standard_train.to_dict()
        out["robust_train"] = self.robust_train.to_dict()
        return out

    def corpus_key(self) -> Dict[str, int]:
        return {"n_train": self.n_train, "n_test": self.n_test, "n_ood": self.n_ood,
                "corpus_seed": self.corpus_seed}


def cache_root(path: Optional[str] = None) -> str:
    if path:
        return path
    return os.environ.get(CACHE_ENV) or os.path.join(os.getcwd(), ".desk_cache")


def _digest(payload) -> str:
    return hashlib.sha256(json.dumps(payload, sort_keys=True).encode()).hexdigest()[:16]


def ensure_corpus(cfg: DeskConfig, root: Optional[str] = None) -> str:
    """Write the synthetic corpus once per corpus settings and return its directory."""
    path = os.path.join(cache_root(root), "corpus-" + _digest([__version__, cfg.corpus_key()]))
    if not corpus_exists(path, ("train", "test", "ood")):
        tmp = path + ".partial"
        write_corpus(tmp, cfg.n_train, cfg.n_test, cfg.n_ood, seed=cfg.corpus_seed)
        os.replace(tmp, path)
    return path


def train_model(train_set: Dataset, tcfg: TrainConfig, seed: int) -> Tuple[Network, list]:
    """Single-threaded training of a fresh RepNet-S; init and data order both follow ``seed``."""
    tcfg = dataclasses.replace(tcfg, seed=seed)
    net = build_repnet_s(train_set.num_classes, seed=seed, input_shape=train_set.image_shape,
                         class_names=train_set.class_names)
    with threadpool_limits(limits=1):
        result = (train_robust if tcfg.robust else train_standard)(net, train_set, tcfg)
    return net, result.epochs


def cached_model(cfg: DeskConfig, kind: str, root: Optional[str] = None) -> Network:
    """``kind`` is ``robust``, ``standard`` or ``judge``; trains on a cache miss."""
    if kind not in ("robust", "standard", "judge"):
        raise ValueError(f"unknown model kind {kind!r}")
    tcfg = cfg.robust_train if kind == "robust" else cfg.standard_train
    seed = cfg.judge_seed if kind == "judge" else cfg.model_seed
    key = _digest([__version__, cfg.corpus_key(), tcfg.to_dict(), seed])
    path = os.path.join(cache_root(root), "models", f"{kind}-{key}.ckpt")
    if os.path.exists(path):
        return load_checkpoint(path).network
    corpus = ensure_corpus(cfg, root)
    train_set = load_dataset(corpus, "train")
    log.info("training %s model (%s)", kind, path)
    net, epochs = train_model(train_set, tcfg, seed)
    os.makedirs(os.path.dirname(path), exist_ok=True)
    save_checkpoint(net, {"config": dataclasses.replace(tcfg, seed=seed).to_dict(), "seed": seed,
                          "final_epoch": tcfg.epochs, "class_names": list(train_set.class_names)},
                    path + ".partial")
    write_metrics_csv(epochs, os.path.splitext(path)[0] + ".metrics.csv")
    os.replace(path + ".partial", path)
    return net


def desk_models(cfg: DeskConfig, root: Optional[str] = None) -> Dict[str, Network]:
    return {kind: cached_model(cfg, kind, root) for kind in ("robust", "standard", "judge")}


def desk_test_split(cfg: DeskConfig, root: Optional[str] = None) -> Dataset:
    return load_dataset(ensure_corpus(cfg, root), "test")


# -- measurements ----------------------------------------------------------------------

def measure_accuracy(nets: Dict[str, Network], test: Dataset, eps: float, steps: int = 20,
                     seed: int = 0) -> Dict[str, Dict[str, float]]:
    out = {}
    with threadpool_limits(limits=1):
        for name, net in nets.items():
            out[name] = {"clean": eval_accuracy(net, test),
                         "adversarial": eval_adversarial_accuracy(net, test, eps, steps=steps, seed=seed)}
    return out


def different_label_pairs(ds: Dataset, count: int, seed: int) -> List[Tuple[int, int]]:
    """Seeded (source, target) index pairs whose labels differ."""
    rng = np.random.default_rng(seed)
    pairs: List[Tuple[int, int]] = []
    while len(pairs) < count:
        i, j = (int(v) for v in rng.integers(0, len(ds), size=2))
        if ds.labels[i] != ds.labels[j]:
            pairs.append((i, j))
    return pairs


def measure_sweep(net: Network, test: Dataset, cfg: DeskConfig,
                  radii: Sequence[float] = DESK_RADII) -> Tuple[SweepCurve, float]:
    """The constrained-inversion curve plus the unconstrained floor.

    The floor is a separate, longer inversion with no ball at all; it is
    reported as the lower of that run and the curve's last point.
    """
    idx = different_label_pairs(test, cfg.sweep_pairs, cfg.seed)
    pairs = [(test.images[i], test.images[j]) for i, j in idx]
    pcfg = PgdConfig(steps=cfg.sweep_steps, step_size=cfg.sweep_step_cap, seed=cfg.seed)
    fcfg = PgdConfig(steps=cfg.floor_steps, step_size=cfg.floor_step_size, seed=cfg.seed)
    with threadpool_limits(limits=1):
        curve = constrained_inversion_sweep(net, pairs, list(radii), pcfg)
        free = constrained_inversion_sweep(net, pairs, [INF], fcfg)
    floor = float(min(free.mean[0], curve.mean[-1]))
    return curve, floor


def measure_inversion_proxy(net: Network, judge: Network, test: Dataset, cfg: DeskConfig) -> Dict[str, float]:
    """Fraction of noise-seeded inversions that ``judge`` labels as the target's class."""
    rng = np.random.default_rng(cfg.seed)
    idx = rng.choice(len(test), size=cfg.proxy_pairs, replace=len(test) < cfg.proxy_pairs)
    targets = test.images[idx]
    sources = np.stack([noise_seed(targets.shape[1:], int(s))
                        for s in rng.integers(0, 2 ** 31 - 1, size=len(idx))])
    pcfg = PgdConfig(steps=cfg.proxy_steps, step_size=cfg.proxy_step_size, seed=cfg.seed)
    with threadpool_limits(limits=1):
        res = invert_representation(net, targets, sources, pcfg)
        agree = label_agreement(judge, res.x_result, test.labels[idx])
    return {"agreement": float(agree.mean()),
            "mean_normalized_distance": float(np.mean(res.normalized_rep_distance))}


def measure_interpolation(net: Network, test: Dataset, cfg: DeskConfig) -> Dict[str, object]:
    """Endpoint errors and the worst rise of d(R(frame), R(x1)) as lambda grows."""
    idx = different_label_pairs(test, cfg.interp_pairs, cfg.seed + 1)
    pcfg = PgdConfig(steps=cfg.interp_steps, step_size=cfg.interp_step_size, seed=cfg.seed)
    endpoint, worst_rise, curves = [], 0.0, []
    with threadpool_limits(limits=1):
        for i, j in idx:
            x1, x2 = test.images[i], test.images[j]
            frames = interpolate(net, x1, x2, cfg.interp_frames, pcfg)
            reps = representations(net, np.stack(frames)).astype(np.float64)
            r1, r2 = representations(net, np.stack([x1, x2])).astype(np.float64)
            # frame k targets lam_k = k/T, so frame T should match R(x1) and frame 0 R(x2)
            d1 = np.linalg.norm(reps - r1, axis=1) / max(np.linalg.norm(r1), 1e-12)
            endpoint.append(float(d1[-1]))
            endpoint.append(float(np.linalg.norm(reps[0] - r2) / max(np.linalg.norm(r2), 1e-12)))
            # frames are already in order of increasing lambda
            worst_rise = max(worst_rise, float(np.max(np.diff(d1))))
            curves.append([float(v) for v in d1])
    return {"max_endpoint_distance": max(endpoint), "max_rise": worst_rise, "curves": curves}


def measure_manipulation(net: Network, test: Dataset, cfg: DeskConfig) -> Dict[str, float]:
    """Randomized (image, unit) runs; counts argmax violations and the success rate."""
    rng = np.random.default_rng(cfg.seed + 2)
    idx = rng.integers(0, len(test), size=cfg.manip_runs)
    units = rng.integers(0, net.rep_dim, size=cfg.manip_runs)
    pcfg = PgdConfig(steps=cfg.manip_steps, step_size=cfg.manip_step_size, seed=cfg.seed)
    with threadpool_limits(limits=1):
        res = manipulate_feature(net, test.images[idx], units, pcfg, BallConstraint(test.images[idx], INF,
                                                                                    per_sample=True))
        reps = representations(net, res.x_result)
    reached = np.array([r == "argmax_reached" for r in res.stop_reason])
    exact = is_strict_argmax(reps, units)
    return {"runs": int(cfg.manip_runs), "reached": float(reached.mean()),
            "violations": int(np.sum(reached & ~exact)),
            "max_steps_used": int(np.max(np.asarray(res.steps_used)[reached])) if reached.any() else 0}


def measure_gray_visualization(net: Network, cfg: DeskConfig) -> Dict[str, object]:
    """Ascend every representation unit from a uniform gray image.

    A unit that is inactive at gray has zero gradient there and cannot move,
    so the gain is reported separately for the units active at the seed.
    """
    units = np.arange(net.rep_dim)
    x0 = np.full((len(units),) + tuple(net.input_shape), 0.5, dtype=np.float32)
    pcfg = PgdConfig(steps=cfg.viz_steps, step_size=cfg.viz_step_size, seed=cfg.seed)
    with threadpool_limits(limits=1):
        before = representations(net, x0)[units, units].astype(np.float64)
        after = representations(net, visualize_feature(net, units, x0, pcfg))[units, units].astype(np.float64)
    active = before > 0
    return {"active_units": int(active.sum()),
            "active_increased": int(np.sum(after[active] > before[active])),
            "inactive_moved": int(np.sum(after[~active] > before[~active])),
            "min_active_gain": float(np.min(after[active] - before[active])) if active.any() else 0.0}
