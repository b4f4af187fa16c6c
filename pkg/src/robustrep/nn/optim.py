"""SGD with momentum, weight decay and a step learning-rate schedule."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, Sequence, Tuple

import numpy as np

from .tensor import DTYPE, ShapeError


@dataclass
class OptimState:
    lr: float = 0.1
    momentum: float = 0.9
    weight_decay: float = 5e-4
    drop_epochs: Tuple[int, ...] = ()
    velocity: Dict[str, np.ndarray] = field(default_factory=dict)

    def __post_init__(self):
        if self.lr <= 0:
            raise ValueError(f"learning rate must be positive, got {self.lr}")
        self.drop_epochs = tuple(sorted(int(e) for e in self.drop_epochs))
        self.base_lr = self.lr

    def lr_at(self, epoch: int) -> float:
        """Learning rate for a 0-based epoch: divided by 10 at each scheduled epoch reached."""
        drops = sum(1 for e in self.drop_epochs if epoch >= e)
        return self.base_lr / (10.0 ** drops)

    def set_epoch(self, epoch: int) -> float:
        self.lr = self.lr_at(epoch)
        return self.lr


def sgd_step(params: Dict[str, np.ndarray], grads: Dict[str, np.ndarray],
             state: OptimState) -> Dict[str, np.ndarray]:
    """One update, in place on ``params`` and ``state.velocity``.

    v <- momentum * v + (g + weight_decay * p);  p <- p - lr * v
    """
    mu = DTYPE(state.momentum)
    wd = DTYPE(state.weight_decay)
    lr = DTYPE(state.lr)
    for name, p in params.items():
        g = grads[name]
        if g.shape != p.shape:
            raise ShapeError(f"gradient for {name} has shape {g.shape}, parameter {p.shape}")
        v = state.velocity.get(name)
        if v is None:
            v = np.zeros_like(p)
        elif v.shape != p.shape:
            raise ShapeError(f"velocity for {name} has shape {v.shape}, parameter {p.shape}")
        v = mu * v + (g + wd * p)
        state.velocity[name] = v.astype(DTYPE, copy=False)
        p -= lr * state.velocity[name]
    return params


def sgd_step_sequence(p: np.ndarray, grads: Sequence[np.ndarray], state: OptimState) -> np.ndarray:
    """Apply successive gradients to a single array; handy for unrolling the recurrence."""
    params = {"p": np.array(p, dtype=DTYPE)}
    for g in grads:
        sgd_step(params, {"p": np.asarray(g, dtype=DTYPE)}, state)
    return params["p"]
