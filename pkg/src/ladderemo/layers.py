"""Hand-differentiated building blocks.

Each ``*_forward`` returns ``(output, cache)``. ``layer_backward`` takes the
upstream gradient and the cache and returns ``(grad_in, param_grads)``.
A cache may be consumed exactly once.
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import ArgumentError, ShapeError, StateError
from .numerics import DTYPE, gaussian_sample

TRAIN = "train"
INFER = "infer"

BN_EPSILON = 1e-5
BN_MOMENTUM = 0.99
LEAKY_SLOPE = 0.1


def _check_mode(mode):
    if mode not in (TRAIN, INFER):
        raise ArgumentError(f"mode must be 'train' or 'infer', got {mode!r}")


@dataclass
class DenseParams:
    W: np.ndarray
    b: np.ndarray = None


@dataclass
class BatchNormParams:
    gamma: np.ndarray
    beta: np.ndarray
    running_mean: np.ndarray
    running_var: np.ndarray
    epsilon: float = BN_EPSILON
    momentum: float = BN_MOMENTUM

    @classmethod
    def fresh(cls, units):
        return cls(np.ones(units), np.zeros(units), np.zeros(units), np.ones(units))


@dataclass
class LayerCache:
    kind: str
    data: dict = field(default_factory=dict)
    consumed: bool = False


def he_uniform(fan_in, fan_out, rng):
    limit = np.sqrt(6.0 / fan_in)
    return rng.uniform(-limit, limit, size=(fan_in, fan_out))


def xavier_uniform(fan_in, fan_out, rng):
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=(fan_in, fan_out))


def dense_forward(x, p):
    if x.ndim != 2 or x.shape[1] != p.W.shape[0]:
        raise ShapeError(f"dense input {x.shape} does not match weights {p.W.shape}")
    y = x @ p.W
    if p.b is not None:
        if p.b.size != p.W.shape[1]:
            raise ShapeError(f"bias of size {p.b.size} for {p.W.shape[1]} outputs")
        y = y + p.b.reshape(1, -1)
    return y, LayerCache("dense", {"x": x, "W": p.W, "has_bias": p.b is not None})


def batchnorm_forward(x, p, mode, affine=True, update_stats=True):
    """Batch normalization over the batch axis.

    In train mode the batch mean and population variance are used and, when
    ``update_stats`` is set, folded into the running statistics with
    ``running = momentum * running + (1 - momentum) * batch``. With
    ``affine=False`` the scale/shift step is skipped and only the normalized
    value is returned.
    """
    _check_mode(mode)
    if mode == TRAIN:
        if x.shape[0] < 2:
            raise ArgumentError("batch normalization in train mode needs a batch of at least 2")
        mean = x.mean(axis=0)
        var = ((x - mean) ** 2).mean(axis=0)
        if update_stats:
            p.running_mean *= p.momentum
            p.running_mean += (1.0 - p.momentum) * mean
            p.running_var *= p.momentum
            p.running_var += (1.0 - p.momentum) * var
    else:
        mean = p.running_mean
        var = p.running_var
    inv_std = 1.0 / np.sqrt(var + p.epsilon)
    xhat = (x - mean) * inv_std
    y = p.gamma * xhat + p.beta if affine else xhat
    cache = LayerCache("batchnorm", {
        "xhat": xhat, "inv_std": inv_std, "gamma": p.gamma if affine else None,
        "mode": mode, "mean": mean, "var": var,
    })
    return y, cache


def scale_shift_forward(x, gamma, beta):
    return gamma * x + beta, LayerCache("scale_shift", {"x": x, "gamma": gamma})


def relu_forward(x):
    return np.maximum(x, 0.0), LayerCache("relu", {"x": x})


def leaky_relu_forward(x, slope=LEAKY_SLOPE):
    return np.where(x > 0, x, slope * x), LayerCache("leaky_relu", {"x": x, "slope": slope})


def dropout_forward(x, p_drop, rng, mode):
    """Inverted dropout: survivors are scaled by 1 / (1 - p_drop) at train time."""
    _check_mode(mode)
    if not 0.0 <= p_drop < 1.0:
        raise ArgumentError(f"dropout probability must lie in [0, 1), got {p_drop}")
    if mode == INFER or p_drop == 0.0:
        mask = None
        y = x
    else:
        keep = rng.random(x.shape) >= p_drop
        mask = keep.astype(DTYPE) / (1.0 - p_drop)
        y = x * mask
    return y, LayerCache("dropout", {"mask": mask})


def noise_forward(x, variance, rng, mode):
    _check_mode(mode)
    if mode == INFER:
        return x, LayerCache("noise", {"noise": None})
    n = gaussian_sample(x.shape[0], x.shape[1], variance, rng)
    return x + n, LayerCache("noise", {"noise": n})


def layer_backward(grad_out, cache):
    if not isinstance(cache, LayerCache):
        raise StateError(f"expected a LayerCache, got {type(cache).__name__}")
    if cache.consumed:
        raise StateError(f"{cache.kind} cache has already been consumed")
    cache.consumed = True
    d = cache.data
    kind = cache.kind

    if kind == "dense":
        grads = {"W": d["x"].T @ grad_out}
        if d["has_bias"]:
            grads["b"] = grad_out.sum(axis=0)
        return grad_out @ d["W"].T, grads

    if kind == "batchnorm":
        xhat, inv_std, gamma = d["xhat"], d["inv_std"], d["gamma"]
        grads = {}
        if gamma is not None:
            grads["gamma"] = (grad_out * xhat).sum(axis=0)
            grads["beta"] = grad_out.sum(axis=0)
            dxhat = grad_out * gamma
        else:
            dxhat = grad_out
        if d["mode"] == INFER:
            return dxhat * inv_std, grads
        n = grad_out.shape[0]
        dx = inv_std / n * (
            n * dxhat - dxhat.sum(axis=0) - xhat * (dxhat * xhat).sum(axis=0)
        )
        return dx, grads

    if kind == "scale_shift":
        grads = {"gamma": (grad_out * d["x"]).sum(axis=0), "beta": grad_out.sum(axis=0)}
        return grad_out * d["gamma"], grads

    if kind == "relu":
        return grad_out * (d["x"] > 0), {}

    if kind == "leaky_relu":
        return grad_out * np.where(d["x"] > 0, 1.0, d["slope"]), {}

    if kind == "dropout":
        if d["mask"] is None:
            return grad_out, {}
        return grad_out * d["mask"], {}

    if kind == "noise":
        return grad_out, {}

    raise StateError(f"unknown cache kind {kind!r}")
