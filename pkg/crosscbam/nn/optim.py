"""Momentum SGD with selective weight decay and the poly learning-rate schedule."""
from __future__ import annotations

from typing import Dict, Iterable, List, Optional, Tuple

import numpy as np

from crosscbam.errors import InternalError
from crosscbam.models.training import OptimConfig
from crosscbam.nn.tensor import Tensor

NO_DECAY_SUFFIXES = (".bias", ".gamma", ".beta")


def poly_lr(iteration: int, cfg: OptimConfig) -> float:
    """``base_lr * (1 - iter/max_iter)^power`` floored at ``min_lr``; past the end it stays at the floor."""
    if iteration >= cfg.max_iter:
        return cfg.min_lr
    iteration = max(iteration, 0)
    return max(cfg.base_lr * (1.0 - iteration / cfg.max_iter) ** cfg.power, cfg.min_lr)


def decays(name: str) -> bool:
    return not (name.endswith(NO_DECAY_SUFFIXES) or name in {"bias", "gamma", "beta"})


def sgd_step(
    params: List[Tuple[str, Tensor]],
    grads: List[Optional[np.ndarray]],
    velocities: Dict[str, np.ndarray],
    lr: float,
    cfg: OptimConfig,
) -> None:
    """In-place update ``v = m*v + (g + wd*p); p -= lr*v`` for every named parameter."""
    if len(params) != len(grads):
        raise InternalError(f"{len(params)} parameters but {len(grads)} gradients")
    for (name, param), grad in zip(params, grads):
        if grad is None:
            grad = np.zeros_like(param.data)
        if grad.shape != param.data.shape:
            raise InternalError(f"gradient shape {grad.shape} does not match parameter {name} {param.data.shape}")
        step = grad + cfg.weight_decay * param.data if decays(name) and cfg.weight_decay else grad
        velocity = velocities.get(name)
        if velocity is None:
            velocity = np.zeros_like(param.data)
        velocity = cfg.momentum * velocity + step
        velocities[name] = velocity.astype(param.data.dtype, copy=False)
        param.data -= (lr * velocities[name]).astype(param.data.dtype, copy=False)


class SGD:
    """Owns one zero-initialized velocity buffer per named parameter."""

    def __init__(self, named_params: Iterable[Tuple[str, Tensor]], cfg: Optional[OptimConfig] = None) -> None:
        self.cfg = cfg or OptimConfig()
        self.params: List[Tuple[str, Tensor]] = list(named_params)
        self.velocities: Dict[str, np.ndarray] = {}
        self.iteration = 0

    @property
    def lr(self) -> float:
        return poly_lr(self.iteration, self.cfg)

    def zero_grad(self) -> None:
        for _, param in self.params:
            param.zero_grad()

    def step(self) -> float:
        lr = self.lr
        sgd_step(self.params, [p.grad for _, p in self.params], self.velocities, lr, self.cfg)
        self.iteration += 1
        return lr


__all__ = ["NO_DECAY_SUFFIXES", "SGD", "decays", "poly_lr", "sgd_step"]
