"""The five architectures: DAE baseline, STL, MTL, Ladder+STL and Ladder+MTL.

Every variant shares the same encoder layout. Hidden layer ``l`` computes::

    pre  = h[l-1] @ W_l                       (no bias, batch norm absorbs it)
    z    = normalize(pre)                     (batch statistics in training)
    z~   = z + N(0, noise)                    (noisy path only)
    h[l] = relu(gamma_l * z~ + beta_l)        (dropout after the first hidden layer)

The input layer is ``z[0] = dropout(x) + N(0, noise)``. Ladder variants run the
encoder twice over the same parameter arrays: a clean pass whose ``z`` are the
reconstruction targets, and a noisy pass that feeds both the supervised head
and the decoder. The decoder walks top-down, ``u[L] = normalize(z~[L])``,
``z_hat[l] = g(u[l], z~[l])`` and ``u[l-1] = normalize(z_hat[l] @ V_l)``, where
``g`` is a per-unit 3 -> 4 -> 1 MLP over ``[u, z~, u * z~]``.

Parameters live in flat ``name -> ndarray`` dicts so that the optimizer,
checkpoints and gradient checks all see the same storage.
"""

import itertools
import json
from dataclasses import asdict, dataclass, field

import numpy as np

from . import layers as L
from .errors import ConfigError, NumericError, ShapeError, StateError
from .losses import (
    LossBreakdown,
    MtlWeights,
    ccc_loss_and_grad,
    ladder_total,
    mse,
    mse_grad,
)
from .numerics import check_finite

VARIANTS = ("AE", "STL", "MTL", "LadderSTL", "LadderMTL")
ATTRIBUTES = ("arousal", "valence", "dominance")
DISPLAY_NAMES = {
    "AE": "Autoencoder",
    "STL": "STL",
    "MTL": "MTL",
    "LadderSTL": "Ladder+STL",
    "LadderMTL": "Ladder+MTL",
}
COMBINATOR_HIDDEN = 4
# 3x4 input weights, 4 hidden biases, 4 output weights, 1 output bias
COMBINATOR_PARAMS_PER_UNIT = 3 * COMBINATOR_HIDDEN + COMBINATOR_HIDDEN + COMBINATOR_HIDDEN + 1

_ids = itertools.count(1)


@dataclass
class ModelConfig:
    variant: str
    input_dim: int
    hidden_dims: tuple = (256, 256)
    output_attrs: tuple = ("arousal",)
    noise_variance: float = 0.3
    lambda_recon: float = 1.0
    dropout_input: float = None
    dropout_hidden1: float = None
    mtl_weights: MtlWeights = None
    primary_attr: str = None

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ConfigError(f"unknown variant {self.variant!r}; expected one of {VARIANTS}")
        self.hidden_dims = tuple(int(h) for h in self.hidden_dims)
        self.output_attrs = tuple(self.output_attrs)
        if not self.hidden_dims or min(self.hidden_dims) < 1:
            raise ConfigError("hidden_dims must be a non-empty list of positive widths")
        if self.input_dim < 1:
            raise ConfigError("input_dim must be positive")
        if self.noise_variance < 0:
            raise ConfigError("noise_variance must be >= 0")
        if self.lambda_recon < 0:
            raise ConfigError("lambda_recon must be >= 0")
        unknown = set(self.output_attrs) - set(ATTRIBUTES)
        if unknown:
            raise ConfigError(f"unknown attributes {sorted(unknown)}")
        if self.is_mtl:
            if self.output_attrs != ATTRIBUTES:
                raise ConfigError(f"{self.variant} predicts all three attributes in order {ATTRIBUTES}")
            if self.mtl_weights is None:
                self.mtl_weights = MtlWeights(1 / 3, 1 / 3)
            elif not isinstance(self.mtl_weights, MtlWeights):
                self.mtl_weights = MtlWeights(*self.mtl_weights)
            if self.primary_attr is None:
                self.primary_attr = "arousal"
        else:
            if len(self.output_attrs) != 1:
                raise ConfigError(f"{self.variant} predicts exactly one attribute")
            if self.mtl_weights is not None:
                raise ConfigError("mtl_weights only apply to MTL variants")
            if self.primary_attr is None:
                self.primary_attr = self.output_attrs[0]
        if self.primary_attr not in self.output_attrs:
            raise ConfigError(f"primary attribute {self.primary_attr!r} is not predicted")
        default_drop = 0.1 if self.is_ladder else 0.5
        if self.dropout_input is None:
            self.dropout_input = default_drop
        if self.dropout_hidden1 is None:
            self.dropout_hidden1 = default_drop
        for p in (self.dropout_input, self.dropout_hidden1):
            if not 0.0 <= p < 1.0:
                raise ConfigError(f"dropout probability {p} outside [0, 1)")

    @property
    def is_ladder(self):
        return self.variant in ("LadderSTL", "LadderMTL")

    @property
    def is_mtl(self):
        return self.variant in ("MTL", "LadderMTL")

    @property
    def widths(self):
        """Layer widths from the input (index 0) to the top hidden layer."""
        return (self.input_dim,) + self.hidden_dims

    @property
    def depth(self):
        return len(self.hidden_dims)

    def to_dict(self):
        d = asdict(self)
        d["hidden_dims"] = list(self.hidden_dims)
        d["output_attrs"] = list(self.output_attrs)
        d["mtl_weights"] = list(self.mtl_weights.as_tuple()[:2]) if self.mtl_weights else None
        return d

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        if d.get("mtl_weights") is not None:
            d["mtl_weights"] = MtlWeights(*d["mtl_weights"])
        return cls(**d)


@dataclass
class Model:
    config: ModelConfig
    params: dict
    state: dict
    frozen: set = field(default_factory=set)
    phase: str = None
    uid: int = field(default_factory=lambda: next(_ids))

    def trainable(self):
        return {k: v for k, v in self.params.items() if k not in self.frozen}

    def bn_params(self, layer):
        return L.BatchNormParams(
            self.params[f"enc.gamma{layer}"], self.params[f"enc.beta{layer}"],
            self.state[f"enc.mean{layer}"], self.state[f"enc.var{layer}"],
        )

    def combinator_params(self, layer):
        return {k: self.params[f"comb{layer}.{k}"] for k in ("A", "a", "w", "c")}

    def copy(self):
        return Model(
            self.config,
            {k: v.copy() for k, v in self.params.items()},
            {k: v.copy() for k, v in self.state.items()},
            set(self.frozen),
            self.phase,
        )

    def load_from(self, other):
        """Copy another model's arrays into this model's storage."""
        for k, v in other.params.items():
            self.params[k][...] = v
        for k, v in other.state.items():
            self.state[k][...] = v
        self.frozen = set(other.frozen)
        self.phase = other.phase


def build_model(config, rng):
    """Initialize all parameters for ``config`` deterministically from ``rng``."""
    widths = config.widths
    depth = config.depth
    params = {}
    state = {}
    for l in range(1, depth + 1):
        params[f"enc.W{l}"] = L.he_uniform(widths[l - 1], widths[l], rng)
        params[f"enc.gamma{l}"] = np.ones(widths[l])
        params[f"enc.beta{l}"] = np.zeros(widths[l])
        state[f"enc.mean{l}"] = np.zeros(widths[l])
        state[f"enc.var{l}"] = np.ones(widths[l])
    k = len(config.output_attrs)
    params["head.W"] = L.xavier_uniform(widths[depth], k, rng)
    params["head.b"] = np.zeros(k)
    state["target_mean"] = np.zeros(k)
    state["target_std"] = np.ones(k)

    if config.is_ladder:
        for l in range(depth, 0, -1):
            params[f"dec.V{l}"] = L.xavier_uniform(widths[l], widths[l - 1], rng)
        for l in range(depth + 1):
            n = widths[l]
            params[f"comb{l}.A"], params[f"comb{l}.w"] = _combinator_init(n, rng)
            params[f"comb{l}.a"] = np.zeros((n, COMBINATOR_HIDDEN))
            params[f"comb{l}.c"] = np.zeros(n)
    elif config.variant == "AE":
        for l in range(depth, 0, -1):
            init = L.he_uniform if l > 1 else L.xavier_uniform
            params[f"ae.W{l}"] = init(widths[l], widths[l - 1], rng)
            params[f"ae.b{l}"] = np.zeros(widths[l - 1])

    phase = "pretrain" if config.variant == "AE" else None
    return Model(config, params, state, set(), phase)


def _combinator_init(n, rng):
    """Start every unit at ``g(u, z~) = z~``.

    Hidden units 0 and 1 read +z~ and -z~; since
    ``lrelu(x) - lrelu(-x) = (1 + slope) x`` the output weights
    ``+-1 / (1 + slope)`` pass z~ through unchanged. The remaining units get
    random input weights and zero output weights, so the decoder begins at
    the identity-on-noisy reconstruction and learns to denoise from there.
    """
    A = np.zeros((n, 3, COMBINATOR_HIDDEN))
    A[:, 1, 0] = 1.0
    A[:, 1, 1] = -1.0
    A[:, :, 2:] = rng.uniform(-1.0, 1.0, size=(n, 3, COMBINATOR_HIDDEN - 2)) * np.sqrt(6.0 / 5)
    w = np.zeros((n, COMBINATOR_HIDDEN))
    w[:, 0] = 1.0 / (1.0 + L.LEAKY_SLOPE)
    w[:, 1] = -1.0 / (1.0 + L.LEAKY_SLOPE)
    return A, w


def combinator_param_count(config):
    return sum(config.widths) * COMBINATOR_PARAMS_PER_UNIT


def set_target_scaling(model, targets):
    """Store the training-target mean/std used to map head outputs to the rating scale."""
    targets = np.asarray(targets, dtype=np.float64).reshape(len(targets), -1)
    std = targets.std(axis=0)
    model.state["target_mean"][...] = targets.mean(axis=0)
    model.state["target_std"][...] = np.where(std > 0, std, 1.0)


# -- combinator ---------------------------------------------------------------

def combinator_g(u, z_tilde, params):
    """Per-unit denoising MLP; returns ``(z_hat, cache)``.

    Unit ``i`` maps ``[u_i, z~_i, u_i * z~_i]`` through its own 3 -> 4 -> 1
    network with a leaky-ReLU hidden layer.
    """
    if u.shape != z_tilde.shape:
        raise ShapeError(f"combinator inputs differ in shape: {u.shape} vs {z_tilde.shape}")
    A, a, w, c = params["A"], params["a"], params["w"], params["c"]
    if A.shape[0] != u.shape[1]:
        raise ShapeError(f"combinator has {A.shape[0]} units, input has {u.shape[1]}")
    inputs = (u, z_tilde, u * z_tilde)
    pres, hidden = [], []
    out = np.broadcast_to(c, u.shape).copy()
    for j in range(COMBINATOR_HIDDEN):
        pre = a[:, j] + inputs[0] * A[:, 0, j] + inputs[1] * A[:, 1, j] + inputs[2] * A[:, 2, j]
        h = np.where(pre > 0, pre, L.LEAKY_SLOPE * pre)
        out += h * w[:, j]
        pres.append(pre)
        hidden.append(h)
    cache = L.LayerCache("combinator", {"inputs": inputs, "pre": pres, "H": hidden, "A": A, "w": w})
    return out, cache


def combinator_backward(grad_out, cache):
    """Returns ``(grad_u, grad_z_tilde, param_grads)``."""
    if cache.consumed:
        raise StateError("combinator cache has already been consumed")
    cache.consumed = True
    d = cache.data
    inputs, A, w = d["inputs"], d["A"], d["w"]
    grads = {"A": np.empty_like(A), "a": np.empty_like(A[:, 0, :]),
             "w": np.empty_like(w), "c": grad_out.sum(axis=0)}
    d_in = [np.zeros_like(grad_out) for _ in range(3)]
    for j in range(COMBINATOR_HIDDEN):
        grads["w"][:, j] = (d["H"][j] * grad_out).sum(axis=0)
        dpre = grad_out * w[:, j] * np.where(d["pre"][j] > 0, 1.0, L.LEAKY_SLOPE)
        grads["a"][:, j] = dpre.sum(axis=0)
        for k in range(3):
            grads["A"][:, k, j] = (inputs[k] * dpre).sum(axis=0)
            d_in[k] += dpre * A[:, k, j]
    u, zt = inputs[0], inputs[1]
    du = d_in[0] + d_in[2] * zt
    dzt = d_in[1] + d_in[2] * u
    return du, dzt, grads


# -- encoder ------------------------------------------------------------------

@dataclass
class EncoderPass:
    z: list
    h: list
    caches: list
    batch_stats: list


def _normalize(x, mode=L.TRAIN):
    stub = L.BatchNormParams.fresh(x.shape[1])
    return L.batchnorm_forward(x, stub, mode, affine=False, update_stats=False)


def _encode(model, x, rng, noise, dropout, bn_mode):
    """One pass through the encoder.

    ``noise`` is a per-layer variance list (``None`` for no noise) and
    ``dropout`` is ``(p_input, p_hidden1)`` or ``None`` for inference.
    """
    cfg = model.config
    depth = cfg.depth
    noise = noise or [None] * (depth + 1)
    drop_mode = L.INFER if dropout is None else L.TRAIN
    p_in, p_h1 = dropout or (0.0, 0.0)

    caches = []
    x_d, c_drop = L.dropout_forward(x, p_in, rng, drop_mode)
    z0, c_noise = _maybe_noise(x_d, noise[0], rng)
    zs, hs, stats = [z0], [z0], [None]
    caches.append({"dropout": c_drop, "noise": c_noise})

    for l in range(1, depth + 1):
        lc = {}
        pre, lc["dense"] = L.dense_forward(hs[l - 1], L.DenseParams(model.params[f"enc.W{l}"]))
        bn = model.bn_params(l)
        zn, lc["bn"] = L.batchnorm_forward(pre, bn, bn_mode, affine=False, update_stats=False)
        z, lc["noise"] = _maybe_noise(zn, noise[l], rng)
        check_finite(z, f"encoder layer {l}")
        s, lc["scale_shift"] = L.scale_shift_forward(z, bn.gamma, bn.beta)
        h, lc["relu"] = L.relu_forward(s)
        if l == 1:
            h, lc["dropout"] = L.dropout_forward(h, p_h1, rng, drop_mode)
        zs.append(z)
        hs.append(h)
        stats.append((lc["bn"].data["mean"], lc["bn"].data["var"]))
        caches.append(lc)
    return EncoderPass(zs, hs, caches, stats)


def _maybe_noise(x, variance, rng):
    if variance is None:
        return L.noise_forward(x, 0.0, None, L.INFER)
    return L.noise_forward(x, variance, rng, L.TRAIN)


def _encoder_backward(model, enc, dh_top, dz_extra):
    depth = model.config.depth
    grads = {}
    dh = dh_top
    for l in range(depth, 0, -1):
        lc = enc.caches[l]
        if dh is None:
            dh = np.zeros_like(enc.h[l])
        if "dropout" in lc:
            dh, _ = L.layer_backward(dh, lc["dropout"])
        ds, _ = L.layer_backward(dh, lc["relu"])
        dz, g = L.layer_backward(ds, lc["scale_shift"])
        grads[f"enc.gamma{l}"] = g["gamma"]
        grads[f"enc.beta{l}"] = g["beta"]
        if dz_extra[l] is not None:
            dz = dz + dz_extra[l]
        dz, _ = L.layer_backward(dz, lc["noise"])
        dpre, _ = L.layer_backward(dz, lc["bn"])
        dh, g = L.layer_backward(dpre, lc["dense"])
        grads[f"enc.W{l}"] = g["W"]
    # input layer carries no parameters; consume its caches for bookkeeping
    dz0 = dh if dz_extra[0] is None else dh + dz_extra[0]
    dz0, _ = L.layer_backward(dz0, enc.caches[0]["noise"])
    L.layer_backward(dz0, enc.caches[0]["dropout"])
    return grads


def _add_grads(total, extra):
    for k, v in extra.items():
        total[k] = total[k] + v if k in total else v
    return total


# -- forward passes -----------------------------------------------------------

@dataclass
class LadderTrace:
    """Record of one training forward pass.

    For ladder variants ``clean`` and ``noisy`` are both populated and
    ``z_hat``/``u`` hold the decoder outputs. Baselines fill ``noisy`` only.
    The DAE pretraining phase stores its input reconstruction in ``recon``.
    """

    model_uid: int
    kind: str
    x: np.ndarray
    noisy: EncoderPass
    clean: EncoderPass = None
    predictions: np.ndarray = None
    head_cache: object = None
    z_hat: list = None
    u: list = None
    decoder_caches: list = None
    recon: np.ndarray = None
    consumed: bool = False

    @property
    def z(self):
        return self.clean.z if self.clean is not None else self.noisy.z

    @property
    def z_tilde(self):
        return self.noisy.z


def _check_input(model, x):
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != model.config.input_dim:
        raise ShapeError(f"expected input of width {model.config.input_dim}, got shape {x.shape}")
    return x


def _head(model, h):
    raw, cache = L.dense_forward(h, L.DenseParams(model.params["head.W"], model.params["head.b"]))
    pred = raw * model.state["target_std"] + model.state["target_mean"]
    return pred, cache


def forward_train(model, x, rng):
    """Training-mode forward pass for the model's variant (and phase)."""
    x = _check_input(model, x)
    cfg = model.config
    depth = cfg.depth
    dropout = (cfg.dropout_input, cfg.dropout_hidden1)

    if cfg.variant == "AE":
        if model.phase == "pretrain":
            noise = [cfg.noise_variance] + [None] * depth
            enc = _encode(model, x, rng, noise, dropout, L.TRAIN)
            d = enc.h[depth]
            dec_caches = []
            for l in range(depth, 0, -1):
                d, cd = L.dense_forward(d, L.DenseParams(model.params[f"ae.W{l}"], model.params[f"ae.b{l}"]))
                cr = None
                if l > 1:
                    d, cr = L.relu_forward(d)
                dec_caches.append((l, cd, cr))
            check_finite(d, "autoencoder reconstruction")
            return LadderTrace(model.uid, "ae_pretrain", x, enc, recon=d, decoder_caches=dec_caches)
        enc = _encode(model, x, None, None, None, L.INFER)
        pred, hc = _head(model, enc.h[depth])
        return LadderTrace(model.uid, "ae_head", x, enc, predictions=pred, head_cache=hc)

    if not cfg.is_ladder:
        enc = _encode(model, x, rng, None, dropout, L.TRAIN)
        pred, hc = _head(model, enc.h[depth])
        check_finite(pred, "output layer")
        return LadderTrace(model.uid, "supervised", x, enc, predictions=pred, head_cache=hc)

    clean = _encode(model, x, None, None, None, L.TRAIN)
    noisy = _encode(model, x, rng, [cfg.noise_variance] * (depth + 1), dropout, L.TRAIN)
    pred, hc = _head(model, noisy.h[depth])
    check_finite(pred, "output layer")

    z_hat = [None] * (depth + 1)
    u = [None] * (depth + 1)
    dec = [dict() for _ in range(depth + 1)]
    u[depth], dec[depth]["bn"] = _normalize(noisy.z[depth])
    for l in range(depth, -1, -1):
        if l < depth:
            v, dec[l]["dense"] = L.dense_forward(z_hat[l + 1], L.DenseParams(model.params[f"dec.V{l + 1}"]))
            u[l], dec[l]["bn"] = _normalize(v)
        z_hat[l], dec[l]["comb"] = combinator_g(u[l], noisy.z[l], model.combinator_params(l))
        check_finite(z_hat[l], f"decoder layer {l}")
    return LadderTrace(model.uid, "ladder", x, noisy, clean, pred, hc, z_hat, u, dec)


def forward_infer(model, x):
    """Clean-path predictions (running batch-norm statistics, no noise or dropout)."""
    x = _check_input(model, x)
    enc = _encode(model, x, None, None, None, L.INFER)
    pred, _ = _head(model, enc.h[model.config.depth])
    return check_finite(pred, "output layer")


def encode_features(model, x):
    """Top hidden representation of the clean encoder in inference mode."""
    x = _check_input(model, x)
    return _encode(model, x, None, None, None, L.INFER).h[model.config.depth]


def update_running_stats(model, trace):
    """Fold the trace's batch statistics into the running batch-norm estimates."""
    if trace.kind == "ae_head":
        return
    source = trace.clean if trace.clean is not None else trace.noisy
    for l in range(1, model.config.depth + 1):
        mean, var = source.batch_stats[l]
        bn = model.bn_params(l)
        bn.running_mean *= bn.momentum
        bn.running_mean += (1.0 - bn.momentum) * mean
        bn.running_var *= bn.momentum
        bn.running_var += (1.0 - bn.momentum) * var


def freeze_batch_stats(model, trace):
    """Set running statistics to exactly the trace's batch statistics."""
    source = trace.clean if trace.clean is not None else trace.noisy
    for l in range(1, model.config.depth + 1):
        mean, var = source.batch_stats[l]
        model.state[f"enc.mean{l}"][...] = mean
        model.state[f"enc.var{l}"][...] = var


# -- objective ----------------------------------------------------------------

def _select_targets(model, targets):
    targets = np.asarray(targets, dtype=np.float64)
    if targets.ndim == 1:
        targets = targets.reshape(-1, 1)
    k = len(model.config.output_attrs)
    if targets.shape[1] == len(ATTRIBUTES) and k != len(ATTRIBUTES):
        cols = [ATTRIBUTES.index(a) for a in model.config.output_attrs]
        targets = targets[:, cols]
    if targets.shape[1] != k:
        raise ShapeError(f"targets have {targets.shape[1]} columns, model predicts {k}")
    return targets


def _supervised(model, pred, targets):
    """Supervised cost and its gradient with respect to the predictions."""
    cfg = model.config
    if pred.shape[0] != targets.shape[0]:
        raise ShapeError(f"{pred.shape[0]} predictions for {targets.shape[0]} targets")
    losses = []
    dpred = np.zeros_like(pred)
    for j in range(pred.shape[1]):
        loss, g = ccc_loss_and_grad(pred[:, j], targets[:, j])
        losses.append(loss)
        dpred[:, j] = g
    if not cfg.is_mtl:
        return losses[0], dpred
    weights = cfg.mtl_weights.as_tuple()
    cost = weights[0] * losses[0] + weights[1] * losses[1] + weights[2] * losses[2]
    return cost, dpred * np.array(weights)


def compute_loss(model, trace, targets=None):
    """Evaluate the composite objective for a trace without touching its caches."""
    if trace.kind == "ae_pretrain":
        c = mse(trace.recon, trace.x)
        return LossBreakdown(0.0, [c], [1.0], ladder_total(0.0, [c], [1.0]))
    targets = _select_targets(model, targets)
    supervised, _ = _supervised(model, trace.predictions, targets)
    if trace.kind != "ladder":
        return LossBreakdown(supervised, [], [], supervised)
    recon = [mse(zh, z) for zh, z in zip(trace.z_hat, trace.clean.z)]
    lambdas = [model.config.lambda_recon] * len(recon)
    return LossBreakdown(supervised, recon, lambdas, ladder_total(supervised, recon, lambdas))


def backward(model, trace, targets=None):
    """Gradients of the full objective with respect to every trainable parameter.

    Returns ``(grads, breakdown)``. Frozen parameters are omitted from
    ``grads``; parameters the objective does not reach get zero arrays.
    """
    if not isinstance(trace, LadderTrace) or trace.model_uid != model.uid:
        raise StateError("trace was not produced by this model")
    if trace.consumed:
        raise StateError("trace has already been consumed by a backward pass")
    breakdown = compute_loss(model, trace, targets)
    trace.consumed = True
    cfg = model.config
    depth = cfg.depth
    grads = {}

    if trace.kind == "ae_pretrain":
        d = mse_grad(trace.recon, trace.x)
        for l, cd, cr in reversed(trace.decoder_caches):
            if cr is not None:
                d, _ = L.layer_backward(d, cr)
            d, g = L.layer_backward(d, cd)
            grads[f"ae.W{l}"] = g["W"]
            grads[f"ae.b{l}"] = g["b"]
        _add_grads(grads, _encoder_backward(model, trace.noisy, d, [None] * (depth + 1)))
        return _finish(model, grads), breakdown

    targets = _select_targets(model, targets)
    _, dpred = _supervised(model, trace.predictions, targets)
    draw = dpred * model.state["target_std"]
    dh_top, g = L.layer_backward(draw, trace.head_cache)
    grads["head.W"] = g["W"]
    grads["head.b"] = g["b"]

    if trace.kind == "ae_head":
        return _finish(model, grads), breakdown
    if trace.kind == "supervised":
        _add_grads(grads, _encoder_backward(model, trace.noisy, dh_top, [None] * (depth + 1)))
        return _finish(model, grads), breakdown

    lam = cfg.lambda_recon
    clean = trace.clean
    dz_hat = [lam * mse_grad(zh, z) for zh, z in zip(trace.z_hat, clean.z)]
    dz_clean = [None] + [-dz_hat[l] for l in range(1, depth + 1)]
    dz_tilde = [np.zeros_like(z) for z in trace.noisy.z]
    for l in range(depth + 1):
        dec = trace.decoder_caches[l]
        du, dzt, g = combinator_backward(dz_hat[l], dec["comb"])
        for k, v in g.items():
            grads[f"comb{l}.{k}"] = v
        dz_tilde[l] += dzt
        dv, _ = L.layer_backward(du, dec["bn"])
        if l < depth:
            dz_up, g = L.layer_backward(dv, dec["dense"])
            grads[f"dec.V{l + 1}"] = g["W"]
            dz_hat[l + 1] = dz_hat[l + 1] + dz_up
        else:
            dz_tilde[depth] += dv
    _add_grads(grads, _encoder_backward(model, trace.noisy, dh_top, dz_tilde))
    _add_grads(grads, _encoder_backward(model, clean, None, dz_clean))
    return _finish(model, grads), breakdown


def _finish(model, grads):
    out = {}
    for name, arr in model.params.items():
        if name in model.frozen:
            continue
        g = grads.get(name)
        out[name] = np.zeros_like(arr) if g is None else g
        if not np.all(np.isfinite(out[name])):
            raise NumericError(f"non-finite gradient for {name}")
    return out


# -- denoising autoencoder baseline ------------------------------------------

def freeze_encoder(model):
    """Freeze encoder and decoder weights; only the linear head stays trainable."""
    model.frozen = {k for k in model.params if not k.startswith("head.")}
    model.phase = "head"
    return model


def dae_pretrain_then_freeze(config, train_features, rng, optimizer_config=None,
                             epochs=50, batch_size=128, model=None):
    """Train the DAE to reconstruct clean inputs from noisy ones, then freeze it.

    Returns ``(model, losses)`` where ``model`` only exposes the head as
    trainable and ``losses`` holds the mean reconstruction cost per epoch.
    """
    from .data import batch_indices
    from .optim import NadamState, nadam_step

    if config.variant != "AE":
        raise ConfigError("dae_pretrain_then_freeze needs an AE variant config")
    if model is None:
        model = build_model(config, rng)
    opt = NadamState(**(optimizer_config or {}))
    x_all = np.asarray(train_features, dtype=np.float64)
    losses = []
    for _ in range(epochs):
        epoch = []
        for idx in batch_indices(len(x_all), batch_size, rng, drop_last=True):
            trace = forward_train(model, x_all[idx], rng)
            grads, bd = backward(model, trace)
            nadam_step(model.params, grads, opt)
            update_running_stats(model, trace)
            epoch.append(bd.total)
        losses.append(float(np.mean(epoch)) if epoch else float("nan"))
    return freeze_encoder(model), losses


# -- checkpoints --------------------------------------------------------------

def save_checkpoint(path, model, opt_state=None, extra=None):
    """Write config, parameters, running statistics and optimizer state to ``.npz``.

    Arrays are stored as raw float64 so a load/save round trip is lossless.
    """
    meta = {
        "format": "ladderemo-checkpoint-1",
        "config": model.config.to_dict(),
        "frozen": sorted(model.frozen),
        "phase": model.phase,
        "extra": extra or {},
    }
    arrays = {"__meta__": np.array(json.dumps(meta))}
    arrays.update({f"param.{k}": v for k, v in model.params.items()})
    arrays.update({f"state.{k}": v for k, v in model.state.items()})
    if opt_state is not None:
        arrays.update(opt_state.to_arrays("opt."))
    with open(path, "wb") as fh:
        np.savez(fh, **arrays)


def load_checkpoint(path):
    """Returns ``(model, opt_state_or_None, extra)``."""
    from .optim import NadamState

    with np.load(path, allow_pickle=False) as npz:
        arrays = {k: npz[k] for k in npz.files}
    meta = json.loads(str(arrays.pop("__meta__")))
    config = ModelConfig.from_dict(meta["config"])
    params = {k[6:]: v for k, v in arrays.items() if k.startswith("param.")}
    state = {k[6:]: v for k, v in arrays.items() if k.startswith("state.")}
    opt = None
    if "opt.t" in arrays:
        opt = NadamState.from_arrays({k: v for k, v in arrays.items() if k.startswith("opt.")})
    model = Model(config, params, state, set(meta["frozen"]), meta["phase"])
    return model, opt, meta.get("extra", {})
