"""NADAM (Nesterov-accelerated Adam) with standard bias correction."""

from dataclasses import dataclass, field

import numpy as np

from .errors import ArgumentError, NumericError, ShapeError


@dataclass
class NadamState:
    learning_rate: float = 5e-5
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    t: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)

    def __post_init__(self):
        if not self.learning_rate > 0:
            raise ArgumentError(f"learning_rate must be positive, got {self.learning_rate}")
        if not (0 <= self.beta1 < 1 and 0 <= self.beta2 < 1):
            raise ArgumentError("beta1 and beta2 must lie in [0, 1)")
        if not self.eps > 0:
            raise ArgumentError("eps must be positive")

    def hyperparameters(self):
        return {"learning_rate": self.learning_rate, "beta1": self.beta1,
                "beta2": self.beta2, "eps": self.eps}

    def to_arrays(self, prefix="opt."):
        """Flatten into named arrays for checkpointing."""
        out = {f"{prefix}t": np.array(self.t, dtype=np.int64),
               f"{prefix}hyper": np.array([self.learning_rate, self.beta1, self.beta2, self.eps])}
        for name, arr in self.m.items():
            out[f"{prefix}m.{name}"] = arr
        for name, arr in self.v.items():
            out[f"{prefix}v.{name}"] = arr
        return out

    @classmethod
    def from_arrays(cls, arrays, prefix="opt."):
        lr, b1, b2, eps = (float(x) for x in arrays[f"{prefix}hyper"])
        state = cls(learning_rate=lr, beta1=b1, beta2=b2, eps=eps, t=int(arrays[f"{prefix}t"]))
        for key, arr in arrays.items():
            if key.startswith(f"{prefix}m."):
                state.m[key[len(prefix) + 2:]] = np.array(arr, dtype=np.float64)
            elif key.startswith(f"{prefix}v."):
                state.v[key[len(prefix) + 2:]] = np.array(arr, dtype=np.float64)
        return state


def nadam_step(params, grads, state):
    """Update ``params`` in place from ``grads``; both are name -> array dicts.

    Only names present in ``grads`` are touched, so frozen parameters are
    left alone by simply not passing their gradients.
    """
    for name, g in grads.items():
        if name not in params:
            raise ShapeError(f"gradient for unknown parameter {name!r}")
        if g.shape != params[name].shape:
            raise ShapeError(f"gradient for {name!r} has shape {g.shape}, parameter {params[name].shape}")
        if not np.all(np.isfinite(g)):
            raise NumericError(f"non-finite gradient for {name!r} at step {state.t + 1}")

    state.t += 1
    t = state.t
    b1, b2 = state.beta1, state.beta2
    bc1 = 1.0 - b1**t
    bc2 = 1.0 - b2**t
    for name, g in grads.items():
        m = state.m.get(name)
        if m is None:
            m = state.m[name] = np.zeros_like(g)
            state.v[name] = np.zeros_like(g)
        v = state.v[name]
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        m_hat = m / bc1
        v_hat = v / bc2
        step = (b1 * m_hat + (1.0 - b1) * g / bc1) / (np.sqrt(v_hat) + state.eps)
        params[name] -= state.learning_rate * step
    return params, state
