"""Standard and adversarial training, clean and adversarial evaluation."""
from __future__ import annotations

import csv
import logging
import math
from dataclasses import asdict, dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .data import Dataset, DatasetError, iter_batches
from .nn.network import Network, forward_logits, gradient_wrt_params
from .nn.optim import OptimState, sgd_step
from .nn.tensor import DTYPE, NonFiniteError, Tensor, cross_entropy
from .pgd import BallConstraint, PgdConfig, pgd_optimize

log = logging.getLogger(__name__)

# training-time attack step = ATTACK_STEP_RATIO * eps / steps
ATTACK_STEP_RATIO = 1.75
# evaluation attack step = EVAL_STEP_RATIO * eps / steps (0.375 = 2.5 * 3 / 20)
EVAL_STEP_RATIO = 2.5


@dataclass
class TrainConfig:
    epochs: int = 30
    batch_size: int = 128
    lr: float = 0.1
    momentum: float = 0.9
    weight_decay: float = 5e-4
    drop_epochs: Tuple[int, ...] = (15, 23)
    robust: bool = False
    eps: float = 0.5
    attack_steps: int = 7
    attack_step_size: Optional[float] = None
    augment: bool = True
    seed: int = 0
    # robust training ramps the attack radius linearly over this many epochs
    eps_warmup: int = 0

    def __post_init__(self):
        self.drop_epochs = tuple(int(e) for e in self.drop_epochs)
        if self.epochs < 0 or self.batch_size <= 0:
            raise ValueError("epochs must be >= 0 and batch_size > 0")
        if self.eps < 0:
            raise ValueError(f"attack eps must be nonnegative, got {self.eps}")
        if self.attack_steps <= 0:
            raise ValueError("attack_steps must be positive")
        if self.attack_step_size is not None and self.attack_step_size <= 0:
            raise ValueError("attack_step_size must be positive")
        if self.eps_warmup < 0:
            raise ValueError("eps_warmup must be nonnegative")

    @property
    def resolved_attack_step(self) -> float:
        if self.attack_step_size is not None:
            return float(self.attack_step_size)
        if self.eps == 0:
            return 1.0  # any positive value: the ball is a single point
        return ATTACK_STEP_RATIO * self.eps / self.attack_steps

    def eps_at(self, epoch: int) -> float:
        """Attack radius used during 0-based ``epoch``."""
        if self.eps_warmup <= 0:
            return self.eps
        return self.eps * min(1.0, (epoch + 1) / self.eps_warmup)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["drop_epochs"] = list(self.drop_epochs)
        d["attack_step_size"] = self.resolved_attack_step
        d["attack_step_ratio"] = ATTACK_STEP_RATIO if self.attack_step_size is None else None
        return d


@dataclass
class EpochMetrics:
    epoch: int
    lr: float
    train_loss: float
    train_acc: float
    adv_train_loss: Optional[float] = None


@dataclass
class TrainResult:
    network: Network
    epochs: List[EpochMetrics] = field(default_factory=list)
    step_losses: List[float] = field(default_factory=list)


def derive_seed(*parts: int) -> int:
    return int(np.random.SeedSequence([int(p) & 0xFFFFFFFF for p in parts]).generate_state(1)[0])


def augment_batch(x: np.ndarray, rng: np.random.Generator, pad: int = 4) -> np.ndarray:
    """Random horizontal flip plus zero-pad-and-crop by up to ``pad`` pixels."""
    B, C, H, W = x.shape
    flips = rng.random(B) < 0.5
    out = np.where(flips[:, None, None, None], x[..., ::-1], x)
    padded = np.zeros((B, C, H + 2 * pad, W + 2 * pad), dtype=DTYPE)
    padded[:, :, pad:pad + H, pad:pad + W] = out
    dy = rng.integers(0, 2 * pad + 1, size=B)
    dx = rng.integers(0, 2 * pad + 1, size=B)
    res = np.empty_like(x)
    for i in range(B):
        res[i] = padded[i, :, dy[i]:dy[i] + H, dx[i]:dx[i] + W]
    return res


def _ce_per_sample(net: Network, labels: np.ndarray):
    def objective(x: Tensor) -> Tensor:
        return cross_entropy(net(x), labels, reduction="none")
    return objective


def pgd_attack(net: Network, x: np.ndarray, labels: np.ndarray, eps: float, steps: int,
               step_size: float, seed: int, random_init: bool = True) -> np.ndarray:
    """Per-sample l2 PGD maximizing cross-entropy, box [0, 1]."""
    ball = BallConstraint(x, eps, (0.0, 1.0), per_sample=True)
    cfg = PgdConfig(steps=steps, step_size=step_size, random_init=random_init,
                    direction="maximize", seed=seed)
    with net.frozen():
        return pgd_optimize(_ce_per_sample(net, labels), x, ball, cfg).x


def _check_dataset(dataset: Dataset) -> None:
    if len(dataset) == 0:
        raise DatasetError("dataset is empty")


def _train(net: Network, dataset: Dataset, cfg: TrainConfig, robust: bool) -> TrainResult:
    _check_dataset(dataset)
    net.check_input(dataset.images[:1])
    state = OptimState(lr=cfg.lr, momentum=cfg.momentum, weight_decay=cfg.weight_decay,
                       drop_epochs=cfg.drop_epochs)
    rng = np.random.default_rng(cfg.seed)
    params = {k: t.data for k, t in net.params.items()}
    result = TrainResult(net)
    step_size = cfg.resolved_attack_step
    n = len(dataset)

    for epoch in range(cfg.epochs):
        lr = state.set_epoch(epoch)
        perm = rng.permutation(n)
        tot_loss = tot_adv = 0.0
        correct = 0
        for b, sl in enumerate(iter_batches(n, cfg.batch_size)):
            idx = perm[sl]
            xb, yb = dataset.images[idx], dataset.labels[idx]
            if cfg.augment:
                xb = augment_batch(xb, rng)
            if robust:
                clean_logits = forward_logits(net, xb).data
                # the step shrinks with the radius while it is ramping up
                eps_now = cfg.eps_at(epoch)
                step_now = step_size * (eps_now / cfg.eps) if cfg.eps > 0 else step_size
                xin = pgd_attack(net, xb, yb, eps_now, cfg.attack_steps, step_now,
                                 seed=derive_seed(cfg.seed, epoch, b))
            else:
                xin = xb

            holder = {}

            def loss_fn(logits, rep, x, yb=yb):
                holder["logits"] = logits.data
                return cross_entropy(logits, yb)

            try:
                loss, grads = gradient_wrt_params(net, loss_fn, xin)
            except NonFiniteError as exc:
                raise NonFiniteError(f"training diverged at epoch {epoch}, batch {b}: {exc}") from None
            if not math.isfinite(loss):
                raise NonFiniteError(f"training diverged at epoch {epoch}, batch {b}")
            sgd_step(params, grads, state)
            result.step_losses.append(loss)

            if robust:
                tot_adv += loss * len(idx)
                clean_loss = cross_entropy(Tensor(clean_logits), yb).item()
                tot_loss += clean_loss * len(idx)
                correct += int((clean_logits.argmax(axis=1) == yb).sum())
            else:
                tot_loss += loss * len(idx)
                correct += int((holder["logits"].argmax(axis=1) == yb).sum())

        m = EpochMetrics(epoch=epoch + 1, lr=lr, train_loss=tot_loss / n, train_acc=correct / n,
                         adv_train_loss=(tot_adv / n) if robust else None)
        result.epochs.append(m)
        log.info("epoch %d lr %.4g loss %.4f acc %.4f%s", m.epoch, lr, m.train_loss, m.train_acc,
                 f" adv_loss {m.adv_train_loss:.4f}" if robust else "")
    # parameter arrays were updated in place
    return result


def train_standard(net: Network, dataset: Dataset, cfg: TrainConfig) -> TrainResult:
    """Minimize empirical cross-entropy with momentum SGD."""
    return _train(net, dataset, cfg, robust=False)


def train_robust(net: Network, dataset: Dataset, cfg: TrainConfig) -> TrainResult:
    """Adversarial training: every SGD step is taken on PGD-attacked inputs."""
    return _train(net, dataset, cfg, robust=True)


def predict(net: Network, images: np.ndarray, batch_size: int = 256) -> np.ndarray:
    out = []
    for sl in iter_batches(len(images), batch_size):
        out.append(forward_logits(net, images[sl]).data.argmax(axis=1))
    return np.concatenate(out) if out else np.zeros(0, dtype=np.int64)


def eval_accuracy(net: Network, dataset: Dataset, batch_size: int = 256) -> float:
    _check_dataset(dataset)
    return float(np.mean(predict(net, dataset.images, batch_size) == dataset.labels))


def eval_adversarial_accuracy(net: Network, dataset: Dataset, eps: float, steps: int = 20,
                              step_size: Optional[float] = None, restarts: int = 1,
                              seed: int = 0, batch_size: int = 256) -> float:
    """Accuracy on PGD-maximized cross-entropy inputs; a sample counts only if it
    survives every random restart."""
    _check_dataset(dataset)
    if eps < 0:
        raise ValueError("eps must be nonnegative")
    if step_size is None:
        step_size = EVAL_STEP_RATIO * eps / steps if eps > 0 else 1.0
    survived = np.ones(len(dataset), dtype=bool)
    for b, sl in enumerate(iter_batches(len(dataset), batch_size)):
        xb, yb = dataset.images[sl], dataset.labels[sl]
        for r in range(restarts):
            adv = pgd_attack(net, xb, yb, eps, steps, step_size, seed=derive_seed(seed, b, r))
            survived[sl] &= forward_logits(net, adv).data.argmax(axis=1) == yb
    return float(survived.mean())


METRICS_HEADER = ["epoch", "lr", "train_loss", "train_acc", "adv_train_loss"]


def write_metrics_csv(metrics: Sequence[EpochMetrics], path: str) -> str:
    robust = any(m.adv_train_loss is not None for m in metrics)
    header = METRICS_HEADER if robust else METRICS_HEADER[:-1]
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for m in metrics:
            row = [m.epoch, f"{m.lr:.6g}", f"{m.train_loss:.6g}", f"{m.train_acc:.6g}"]
            if robust:
                row.append(f"{m.adv_train_loss:.6g}")
            w.writerow(row)
    return path
