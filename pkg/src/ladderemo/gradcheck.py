"""Central finite-difference checks of the analytic model gradients."""

import numpy as np

from .models import ModelConfig, VARIANTS, backward, build_model, compute_loss, forward_train, freeze_encoder
from .numerics import make_rng


def relative_error(analytic, numeric):
    """``||a - n|| / max(||a|| + ||n||, 1e-8)`` over a whole parameter array."""
    num = np.linalg.norm(analytic - numeric)
    den = max(np.linalg.norm(analytic) + np.linalg.norm(numeric), 1e-8)
    return float(num / den)


def numeric_gradients(model, x, targets, seed, h=1e-5, names=None):
    """Central differences of the total loss; the rng is re-seeded per evaluation
    so noise and dropout draws stay fixed."""

    def loss():
        trace = forward_train(model, x, make_rng(seed))
        return compute_loss(model, trace, targets).total

    out = {}
    for name in names or model.trainable():
        arr = model.params[name]
        g = np.zeros_like(arr)
        flat = arr.reshape(-1)
        gflat = g.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + h
            up = loss()
            flat[i] = orig - h
            down = loss()
            flat[i] = orig
            gflat[i] = (up - down) / (2 * h)
        out[name] = g
    return out


def check_model(model, x, targets, seed=0, h=1e-5):
    """Returns ``{parameter name: relative error}`` for every trainable array."""
    trace = forward_train(model, x, make_rng(seed))
    analytic, _ = backward(model, trace, targets)
    numeric = numeric_gradients(model, x, targets, seed, h)
    return {name: relative_error(analytic[name], numeric[name]) for name in analytic}


def tiny_instance(seed=0, input_dim=7, hidden=(5, 3), batch=4):
    rng = make_rng(seed)
    x = rng.standard_normal((batch, input_dim))
    targets = rng.uniform(1.0, 7.0, size=(batch, 3))
    return x, targets


def check_variant(variant, seed=0, input_dim=7, hidden=(5, 3), batch=4, h=1e-5):
    """Gradient check for one variant on a tiny random instance.

    The DAE baseline is checked in both of its phases; its results are keyed
    ``pretrain:<name>`` and ``head:<name>``.
    """
    x, targets = tiny_instance(seed, input_dim, hidden, batch)
    is_mtl = variant in ("MTL", "LadderMTL")
    attrs = ("arousal", "valence", "dominance") if is_mtl else ("valence",)
    config = ModelConfig(
        variant, input_dim, hidden, attrs,
        mtl_weights=(0.5, 0.3) if is_mtl else None,
    )
    model = build_model(config, make_rng(seed + 1))
    # non-trivial target scaling and batch-norm affine parameters
    model.state["target_mean"][...] = 4.0
    model.state["target_std"][...] = 1.5
    prng = make_rng(seed + 2)
    for name in list(model.params):
        if ".gamma" in name or ".beta" in name or name.endswith(".a") or name.endswith(".c"):
            model.params[name] += 0.2 * prng.standard_normal(model.params[name].shape)
    if variant != "AE":
        return check_model(model, x, targets, seed + 3, h)
    results = {f"pretrain:{k}": v for k, v in check_model(model, x, targets, seed + 3, h).items()}
    for name in model.state:
        if name.startswith("enc.var"):
            model.state[name][...] = prng.uniform(0.5, 2.0, model.state[name].shape)
    freeze_encoder(model)
    results.update({f"head:{k}": v for k, v in check_model(model, x, targets, seed + 3, h).items()})
    return results


def check_all(seed=0, h=1e-5):
    return {v: check_variant(v, seed=seed, h=h) for v in VARIANTS}
