"""Projected gradient descent/ascent over inputs inside an l2 ball and a pixel box.

Every input-space procedure in the package runs through :func:`pgd_optimize`:
adversarial attacks, representation inversion, feature visualization and
feature manipulation. With ``per_sample=True`` the leading axis indexes
independent problems: each sample gets its own ball, its own normalized step,
its own convergence flag and its own best iterate.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, List, Optional, Tuple

import numpy as np

from .nn.tensor import DTYPE, NonFiniteError, ShapeError, Tensor

GRAD_EPS = 1e-12

# objective(x) -> per-sample values (B,) or a scalar tensor
Objective = Callable[[Tensor], Tensor]
# early_stop(x, values) -> bool or per-sample bool mask
EarlyStop = Callable[[np.ndarray, np.ndarray], "np.ndarray | bool"]


@dataclass
class BallConstraint:
    center: np.ndarray
    radius: float
    pixel_box: Optional[Tuple[float, float]] = (0.0, 1.0)
    per_sample: bool = False

    def __post_init__(self):
        self.center = np.asarray(self.center, dtype=DTYPE)
        self.radius = float(self.radius)
        if not self.radius >= 0:
            raise ValueError(f"ball radius must be nonnegative, got {self.radius}")
        if self.pixel_box is not None:
            lo, hi = self.pixel_box
            if lo > hi:
                raise ValueError(f"pixel box lower bound {lo} exceeds upper bound {hi}")
            self.pixel_box = (float(lo), float(hi))
        if self.per_sample and self.center.ndim < 2:
            raise ShapeError("per-sample balls need a leading batch axis")


@dataclass
class PgdConfig:
    steps: int = 20
    step_size: float = 0.1
    random_init: bool = False
    direction: str = "minimize"
    seed: int = 0
    early_stop: Optional[EarlyStop] = None
    keep_best: bool = False

    def __post_init__(self):
        if self.steps < 0:
            raise ValueError(f"steps must be nonnegative, got {self.steps}")
        if not self.step_size > 0:
            raise ValueError(f"step size must be positive, got {self.step_size}")
        if self.direction not in ("minimize", "maximize"):
            raise ValueError(f"direction must be 'minimize' or 'maximize', got {self.direction!r}")


@dataclass
class PgdResult:
    x: np.ndarray
    trace: List[float]
    steps_used: np.ndarray
    converged: np.ndarray
    stopped: np.ndarray
    values: np.ndarray = field(default_factory=lambda: np.zeros(0))
    # per-sample objective after each executed step, history[0] at the start
    history: List[np.ndarray] = field(default_factory=list)

    def __iter__(self):
        # unpacks as (x, trace)
        yield self.x
        yield self.trace


def _norms(v: np.ndarray, per_sample: bool) -> np.ndarray:
    if per_sample:
        return np.sqrt(np.sum(v.astype(np.float64) ** 2, axis=tuple(range(1, v.ndim))))
    return np.asarray(np.sqrt(np.sum(v.astype(np.float64) ** 2)))


def _expand(s: np.ndarray, ndim: int) -> np.ndarray:
    return s.reshape(s.shape + (1,) * (ndim - s.ndim))


def project_l2(v, c: BallConstraint) -> np.ndarray:
    """Project onto the ball around ``c.center``, then clamp to the pixel box."""
    v = np.asarray(v, dtype=DTYPE)
    if v.shape != c.center.shape:
        raise ShapeError(f"point shape {v.shape} != ball center shape {c.center.shape}")
    out = v
    if math.isfinite(c.radius):
        delta = v - c.center
        norms = _norms(delta, c.per_sample)
        with np.errstate(divide="ignore", invalid="ignore"):
            scale = np.where(norms > c.radius, c.radius / np.where(norms > 0, norms, 1.0), 1.0)
        if np.any(scale < 1.0):
            out = (c.center + delta * _expand(scale, v.ndim).astype(DTYPE)).astype(DTYPE)
            # float32 rounding of center + delta can leave the point a hair outside
            # the ball, by more when |center| >> radius; shrink until it is inside
            for k in range(30):
                norms2 = _norms(out - c.center, c.per_sample)
                over = norms2 > c.radius
                if not np.any(over):
                    break
                shrink = (1 - 1e-7 * 2 ** k)
                fix = np.where(over, c.radius / np.where(norms2 > 0, norms2, 1.0) * shrink, 1.0)
                out = (c.center + (out - c.center) * _expand(fix, v.ndim).astype(DTYPE)).astype(DTYPE)
    if c.pixel_box is not None:
        out = np.clip(out, c.pixel_box[0], c.pixel_box[1]).astype(DTYPE)
    return np.array(out, dtype=DTYPE)


def random_init_in_ball(c: BallConstraint, seed: int) -> np.ndarray:
    """A uniform random point of the ball (per sample), clamped to the box.

    An infinite radius has no uniform distribution; the center is returned.
    """
    if c.radius == 0 or not math.isfinite(c.radius):
        return project_l2(c.center.copy(), c)
    rng = np.random.default_rng(seed)
    shape = c.center.shape
    direction = rng.standard_normal(shape)
    norms = _norms(direction, c.per_sample)
    norms = np.where(norms > 0, norms, 1.0)
    if c.per_sample:
        dim = int(np.prod(shape[1:]))
        radii = c.radius * rng.uniform(0, 1, size=shape[0]) ** (1.0 / dim)
    else:
        dim = int(np.prod(shape))
        radii = np.asarray(c.radius * rng.uniform() ** (1.0 / dim))
    delta = direction * _expand(radii / norms, len(shape))
    return project_l2((c.center + delta).astype(DTYPE), c)


def normalized_step(g, step_size: float, per_sample: bool = False) -> Tuple[np.ndarray, np.ndarray]:
    """``step_size * g / ||g||``; samples with ``||g|| < 1e-12`` get a zero step and a converged flag."""
    g = np.asarray(g, dtype=DTYPE)
    norms = _norms(g, per_sample)
    converged = norms < GRAD_EPS
    safe = np.where(converged, 1.0, norms)
    scale = np.where(converged, 0.0, step_size / safe)
    return (g * _expand(scale, g.ndim).astype(DTYPE)).astype(DTYPE), converged


def _evaluate(objective: Objective, x: np.ndarray, need_grad: bool) -> Tuple[np.ndarray, Optional[np.ndarray]]:
    xt = Tensor(x, requires_grad=need_grad)
    val = objective(xt)
    values = np.asarray(val.data, dtype=np.float64)
    if not np.all(np.isfinite(values)):
        raise NonFiniteError("objective is not finite")
    if not need_grad:
        return values, None
    val.sum().backward() if val.size != 1 else val.backward()
    grad = xt.grad if xt.grad is not None else np.zeros_like(x)
    return values, grad


def pgd_optimize(objective: Objective, x_init, c: BallConstraint, cfg: PgdConfig) -> PgdResult:
    """Run projected (normalized) gradient steps and return the final or best iterate.

    ``trace[t]`` is the total objective after ``t`` steps (``trace[0]`` at the
    projected start), so ``len(trace) == executed steps + 1``. The early-stop
    predicate is evaluated at the start and after every step; stopped or
    converged samples are frozen.
    """
    x0 = np.asarray(x_init, dtype=DTYPE)
    if x0.shape != c.center.shape:
        raise ShapeError(f"x_init shape {x0.shape} != ball center shape {c.center.shape}")
    per_sample = c.per_sample
    n = x0.shape[0] if per_sample else 1
    sign = -1.0 if cfg.direction == "minimize" else 1.0

    if cfg.random_init:
        x = random_init_in_ball(BallConstraint(x0, c.radius, c.pixel_box, per_sample), cfg.seed)
        x = project_l2(x, c)
    else:
        x = project_l2(x0, c)

    def per(values: np.ndarray) -> np.ndarray:
        values = np.asarray(values, dtype=np.float64)
        return values.reshape(n) if values.size == n else np.full(n, values.sum())

    def stop_mask(x_: np.ndarray, values: np.ndarray) -> np.ndarray:
        if cfg.early_stop is None:
            return np.zeros(n, dtype=bool)
        return np.broadcast_to(np.asarray(cfg.early_stop(x_, values), dtype=bool), (n,)).copy()

    values, grad = _evaluate(objective, x, need_grad=cfg.steps > 0)
    trace = [float(values.sum())]
    pv = per(values)
    history = [pv.copy()]
    best_x, best_v = x.copy(), pv.copy()
    stopped = stop_mask(x, values)
    converged = np.zeros(n, dtype=bool)
    steps_used = np.zeros(n, dtype=np.int64)

    for _ in range(cfg.steps):
        active = ~(stopped | converged)
        if not active.any():
            break
        step, conv = normalized_step(grad, cfg.step_size, per_sample)
        conv = np.broadcast_to(conv, (n,))
        converged |= conv & active
        active &= ~conv
        if not active.any():
            break
        mask = _expand(active, x.ndim).astype(DTYPE) if per_sample else DTYPE(1.0)
        x = project_l2(x + sign * step * mask, c)
        steps_used += active
        values, grad = _evaluate(objective, x, need_grad=True)
        trace.append(float(values.sum()))
        pv = per(values)
        history.append(pv.copy())
        better = (pv < best_v) if sign < 0 else (pv > best_v)
        better &= active
        if better.any():
            if per_sample:
                best_x[better] = x[better]
            else:
                best_x = x.copy()
            best_v = np.where(better, pv, best_v)
        stopped |= stop_mask(x, values) & active

    out = best_x if cfg.keep_best else x
    final_values = best_v if cfg.keep_best else pv
    return PgdResult(x=out, trace=trace, steps_used=steps_used, converged=converged,
                     stopped=stopped, values=final_values, history=history)
