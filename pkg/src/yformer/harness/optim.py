from __future__ import annotations

import numpy as np


class Adam:
    """Adam with decoupled weight decay (the decay never enters the moment estimates)."""

    def __init__(self, params, lr=1e-3, betas=(0.9, 0.999), eps=1e-8, weight_decay=0.0):
        if lr < 0 or weight_decay < 0:
            raise ValueError("learning rate and weight decay must be non-negative")
        self.params = list(params)
        self.lr = lr
        self.beta1, self.beta2 = betas
        self.eps = eps
        self.weight_decay = weight_decay
        self.t = 0
        self.m = [np.zeros_like(p.data) for p in self.params]
        self.v = [np.zeros_like(p.data) for p in self.params]

    def zero_grad(self) -> None:
        for p in self.params:
            p.grad = None

    def step(self) -> None:
        self.t += 1
        c1 = 1.0 - self.beta1**self.t
        c2 = 1.0 - self.beta2**self.t
        for p, m, v in zip(self.params, self.m, self.v):
            if p.grad is None:
                continue
            g = p.grad
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            update = self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)
            if self.weight_decay:
                p.data = p.data * (1.0 - self.lr * self.weight_decay) - update
            else:
                p.data = p.data - update


class EarlyStopping:
    """Stop once the validation loss has not improved for ``patience`` consecutive epochs."""

    def __init__(self, patience: int = 3):
        if patience < 1:
            raise ValueError("patience must be >= 1")
        self.patience = patience
        self.best_loss = float("inf")
        self.best_epoch = 0
        self.epoch = 0
        self.bad_epochs = 0

    def update(self, val_loss: float) -> bool:
        """Record one epoch; True when it is a new best."""
        self.epoch += 1
        if val_loss < self.best_loss:
            self.best_loss = val_loss
            self.best_epoch = self.epoch
            self.bad_epochs = 0
            return True
        self.bad_epochs += 1
        return False

    @property
    def should_stop(self) -> bool:
        return self.bad_epochs >= self.patience


def early_stopping_trace(val_losses, patience: int = 3) -> tuple[int, int]:
    """(epoch training stops after, best epoch), both 1-based."""
    stopper = EarlyStopping(patience)
    for loss in val_losses:
        stopper.update(loss)
        if stopper.should_stop:
            break
    return stopper.epoch, stopper.best_epoch
