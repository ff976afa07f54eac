"""Concordance correlation, reconstruction cost and the composite objectives."""

from dataclasses import dataclass, field

import numpy as np

from .errors import ArgumentError, ShapeError

LAMBDA_GRID = (0.1, 1.0, 10.0, 100.0)


@dataclass(frozen=True)
class MtlWeights:
    """Per-attribute weights of the multi-task cost.

    Arousal gets ``alpha``, valence ``beta`` and dominance the remainder.
    """

    alpha: float
    beta: float

    def __post_init__(self):
        a, b = self.alpha, self.beta
        if not (0.0 < a < 1.0 and 0.0 < b < 1.0):
            raise ArgumentError(f"alpha and beta must lie in (0, 1), got {a}, {b}")
        if a + b > 1.0:
            raise ArgumentError(f"alpha + beta must not exceed 1, got {a + b}")

    @property
    def dominance(self):
        return 1.0 - (self.alpha + self.beta)

    def as_tuple(self):
        return (self.alpha, self.beta, self.dominance)


@dataclass
class LossBreakdown:
    supervised_cost: float
    reconstruction_costs: list = field(default_factory=list)
    lambdas: list = field(default_factory=list)
    total: float = 0.0

    def recompute_total(self):
        return ladder_total(self.supervised_cost, self.reconstruction_costs, self.lambdas)


def _centered(x):
    # the float mean of identical values can miss them by an ulp; a constant
    # vector must center to exact zeros so its CCC is exactly 0
    if x[0] == x[-1] and np.all(x == x[0]):
        return np.zeros_like(x)
    return x - x.mean()


def _moments(pred, target):
    pred = np.asarray(pred, dtype=np.float64).ravel()
    target = np.asarray(target, dtype=np.float64).ravel()
    if pred.shape != target.shape:
        raise ArgumentError(f"length mismatch: {pred.size} predictions, {target.size} targets")
    if pred.size < 2:
        raise ArgumentError("CCC needs at least two samples")
    dp = _centered(pred)
    dt = _centered(target)
    cov = np.mean(dp * dt)
    denom = np.mean(dp * dp) + np.mean(dt * dt) + (pred.mean() - target.mean()) ** 2
    return dp, dt, cov, denom


def ccc(pred, target):
    """Lin's concordance correlation with population (1/N) moments.

    Returns 0 when the denominator vanishes (both inputs constant and equal).
    """
    _, _, cov, denom = _moments(pred, target)
    if denom == 0.0:
        return 0.0
    return float(2.0 * cov / denom)


def ccc_loss_and_grad(pred, target):
    """``1 - ccc`` and its gradient with respect to every prediction."""
    dp, dt, cov, denom = _moments(pred, target)
    n = dp.size
    if denom == 0.0:
        return 1.0, np.zeros(n)
    mean_gap = np.mean(pred) - np.mean(target)
    d_cov = dt / n
    d_denom = 2.0 * (dp + mean_gap) / n
    grad_ccc = 2.0 * (d_cov * denom - cov * d_denom) / denom**2
    return float(1.0 - 2.0 * cov / denom), -grad_ccc


def mse(a, b):
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ShapeError(f"mse needs identical shapes, got {a.shape} and {b.shape}")
    return float(np.mean((a - b) ** 2))


def mse_grad(a, b):
    """Gradient of ``mse(a, b)`` with respect to ``a``."""
    return 2.0 * (a - b) / a.size


def ladder_total(supervised_cost, reconstruction_costs, lambdas):
    if len(reconstruction_costs) != len(lambdas):
        raise ArgumentError(
            f"{len(reconstruction_costs)} reconstruction costs but {len(lambdas)} weights"
        )
    if any(lam < 0 for lam in lambdas):
        raise ArgumentError("reconstruction weights must be non-negative")
    total = supervised_cost
    for cost, lam in zip(reconstruction_costs, lambdas):
        total += lam * cost
    return total


def mtl_loss(c_aro, c_val, c_dom, w):
    if not isinstance(w, MtlWeights):
        w = MtlWeights(*w)
    return w.alpha * c_aro + w.beta * c_val + w.dominance * c_dom
