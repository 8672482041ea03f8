"""Minimal numpy optimizers operating in place on a list of arrays.

``weight_decay`` here is the *decoupled* AdamW shrink. The coupled
``2 * lambda * W`` term used by RMSprop/Adam is added to the gradient by the
caller, since it is part of the objective rather than the update rule.
"""
import numpy as np

__all__ = ["RMSprop", "Adam", "AdamW", "make_optimizer"]


class _Optimizer:
    def __init__(self, params, lr):
        self.params = list(params)
        self.lr = float(lr)
        self.t = 0

    def step(self, grads):
        raise NotImplementedError


class RMSprop(_Optimizer):
    """Squared-gradient running average, torch defaults (alpha=0.99, eps=1e-8)."""

    def __init__(self, params, lr, alpha=0.99, eps=1e-8):
        super().__init__(params, lr)
        self.alpha = alpha
        self.eps = eps
        self.square_avg = [np.zeros_like(p) for p in self.params]

    def step(self, grads):
        self.t += 1
        for p, g, v in zip(self.params, grads, self.square_avg):
            v *= self.alpha
            v += (1.0 - self.alpha) * g * g
            p -= self.lr * g / (np.sqrt(v) + self.eps)


class Adam(_Optimizer):
    def __init__(self, params, lr, betas=(0.9, 0.999), eps=1e-8, weight_decay=0.0):
        super().__init__(params, lr)
        self.beta1, self.beta2 = betas
        self.eps = eps
        self.weight_decay = float(weight_decay)
        self.m = [np.zeros_like(p) for p in self.params]
        self.v = [np.zeros_like(p) for p in self.params]

    def step(self, grads):
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        bc1 = 1.0 - b1**self.t
        bc2 = 1.0 - b2**self.t
        for p, g, m, v in zip(self.params, grads, self.m, self.v):
            m *= b1
            m += (1.0 - b1) * g
            v *= b2
            v += (1.0 - b2) * g * g
            if self.weight_decay:
                p *= 1.0 - self.lr * self.weight_decay
            p -= self.lr * (m / bc1) / (np.sqrt(v / bc2) + self.eps)


class AdamW(Adam):
    """Adam with decoupled decay ``p <- p * (1 - lr * weight_decay)``."""


def make_optimizer(kind, params, lr, beta1=0.9, beta2=None, eps=1e-8, weight_decay=0.0):
    if kind == "rmsprop":
        return RMSprop(params, lr, alpha=0.99 if beta2 is None else beta2, eps=eps)
    b2 = 0.999 if beta2 is None else beta2
    if kind == "adam":
        return Adam(params, lr, betas=(beta1, b2), eps=eps)
    if kind == "adamw":
        return AdamW(params, lr, betas=(beta1, b2), eps=eps, weight_decay=weight_decay)
    raise ValueError(f"unknown optimizer kind {kind!r}")
