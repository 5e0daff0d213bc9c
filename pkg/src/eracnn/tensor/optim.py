"""Adam with bias correction."""

import numpy as np

from ..errors import NumericError, ShapeError


class Adam:
    """Standard Adam over a fixed parameter list.

    Moments live in ``state`` as (m, v) pairs shape-matched to their
    parameters; ``step_count`` increases by exactly 1 per update.
    """

    def __init__(self, params, lr=1e-3, beta1=0.9, beta2=0.999, eps=1e-8):
        self.params = list(params)
        self.lr = float(lr)
        self.beta1 = float(beta1)
        self.beta2 = float(beta2)
        self.eps = float(eps)
        self.step_count = 0
        self.m = [np.zeros_like(p.data) for p in self.params]
        self.v = [np.zeros_like(p.data) for p in self.params]

    def step(self, grads=None):
        """Apply one update. grads defaults to each parameter's .grad (None -> zeros)."""
        if grads is None:
            grads = [p.grad if p.grad is not None else np.zeros_like(p.data) for p in self.params]
        if len(grads) != len(self.params):
            raise ShapeError(f"got {len(grads)} gradients for {len(self.params)} parameters")
        self.step_count += 1
        t = self.step_count
        c1 = 1.0 - self.beta1 ** t
        c2 = 1.0 - self.beta2 ** t
        for p, g, m, v in zip(self.params, grads, self.m, self.v):
            g = np.asarray(g, dtype=p.data.dtype)
            if g.shape != p.data.shape:
                raise ShapeError(f"gradient shape {g.shape} does not match parameter {p.data.shape}")
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * np.square(g)
            update = (self.lr / c1) * m / (np.sqrt(v / c2) + self.eps)
            p.data -= update.astype(p.data.dtype, copy=False)
            if not np.all(np.isfinite(p.data)):
                raise NumericError("parameter became non-finite during Adam update")

    def zero_grad(self):
        for p in self.params:
            p.grad = None
