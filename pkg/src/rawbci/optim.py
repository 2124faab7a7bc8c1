import numpy as np

from .exceptions import NonFiniteError, ShapeError

__all__ = ["Adam"]


class Adam:
    """Adam with bias-corrected moments and epsilon added after the square root.

    Moment buffers are allocated on the first step and are matched to
    parameters by position, so the same list order must be passed every step.
    The step counter ``t`` is shared by all parameters.
    """

    def __init__(self, learning_rate=1e-3, beta1=0.9, beta2=0.999, epsilon=1e-8):
        if learning_rate <= 0:
            raise ValueError(f"learning_rate must be > 0, got {learning_rate}")
        for name, beta in (("beta1", beta1), ("beta2", beta2)):
            if not 0.0 <= beta < 1.0:
                raise ValueError(f"{name} must lie in [0, 1), got {beta}")
        if epsilon <= 0:
            raise ValueError(f"epsilon must be > 0, got {epsilon}")
        self.learning_rate = float(learning_rate)
        self.beta1 = float(beta1)
        self.beta2 = float(beta2)
        self.epsilon = float(epsilon)
        self.t = 0
        self.m = None
        self.v = None

    def _validate(self, params, grads):
        if len(params) != len(grads):
            raise ShapeError(f"{len(params)} parameters but {len(grads)} gradients")
        if self.m is not None and len(self.m) != len(params):
            raise ShapeError(f"optimizer tracks {len(self.m)} parameters, got {len(params)}")
        for i, (p, g) in enumerate(zip(params, grads)):
            if p.shape != g.shape:
                raise ShapeError(f"parameter {i}: shape {p.shape} but gradient {g.shape}")
            if self.m is not None and self.m[i].shape != p.shape:
                raise ShapeError(f"parameter {i}: shape {p.shape} changed from {self.m[i].shape}")
            if not np.all(np.isfinite(g)):
                raise NonFiniteError(f"gradient {i} contains NaN or Inf")

    def step(self, params, grads):
        """Update ``params`` in place. Nothing is modified if validation fails."""
        self._validate(params, grads)
        if self.m is None:
            self.m = [np.zeros_like(p) for p in params]
            self.v = [np.zeros_like(p) for p in params]
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        bc1 = 1.0 - b1**self.t
        bc2 = 1.0 - b2**self.t
        for p, g, m, v in zip(params, grads, self.m, self.v):
            m *= b1
            m += (1.0 - b1) * g
            v *= b2
            v += (1.0 - b2) * (g * g)
            p -= self.learning_rate * (m / bc1) / (np.sqrt(v / bc2) + self.epsilon)

    def state_dict(self):
        return {"t": self.t, "m": self.m, "v": self.v}
