"""Training protocol: per-seed runs with best-validation checkpointing,
multi-seed aggregation, MTL weight selection and the comparison table."""

import csv
import io
import json
import logging
import math
import os
from dataclasses import asdict, dataclass, field

import numpy as np

from . import data as D
from .errors import ArgumentError, ConfigError, LadderError, NumericError
from .losses import MtlWeights, ccc
from .models import (
    ATTRIBUTES,
    DISPLAY_NAMES,
    VARIANTS,
    ModelConfig,
    backward,
    build_model,
    dae_pretrain_then_freeze,
    forward_infer,
    forward_train,
    save_checkpoint,
    set_target_scaling,
    update_running_stats,
)
from .numerics import spawn_rngs
from .optim import NadamState, nadam_step
from .stats import t_test_one_tailed

log = logging.getLogger(__name__)

SIGNIFICANCE_LEVEL = 0.05
BASELINES = ("AE", "STL", "MTL")
SPLITS = ("validation", "test")

_MODEL_KEYS = ("variant", "hidden_dims", "noise_variance", "lambda_recon",
               "dropout_input", "dropout_hidden1", "mtl_weights")


@dataclass
class RunConfig:
    """Everything needed to reproduce one variant's experiment.

    ``model`` holds ModelConfig options except the input width and the
    predicted attributes, which follow from the data and ``attributes``.
    ``model["mtl_weights"]`` may be ``None`` (equal weights), a pair
    ``[alpha, beta]``, a mapping from target attribute to pair, or ``"grid"``.
    ``data`` is either ``{"features": path, "labels": path}`` or
    ``{"synth": {SynthSpec fields}}``, plus optional ``fractions`` and
    ``split_seed``.
    """

    model: dict
    data: dict
    optimizer: dict = field(default_factory=lambda: {"learning_rate": 5e-5})
    max_epochs: int = 50
    batch_size: int = 128
    seeds: list = field(default_factory=lambda: list(range(10)))
    attributes: list = field(default_factory=lambda: list(ATTRIBUTES))
    output_dir: str = None
    ae_pretrain_epochs: int = None
    mtl_grid_step: float = 0.1

    def __post_init__(self):
        self.model = dict(self.model)
        unknown = set(self.model) - set(_MODEL_KEYS)
        if unknown:
            raise ConfigError(f"unknown model options {sorted(unknown)}")
        if self.model.get("variant") not in VARIANTS:
            raise ConfigError(f"model.variant must be one of {VARIANTS}")
        if self.max_epochs < 1:
            raise ConfigError("max_epochs must be at least 1")
        if not self.seeds or len(set(self.seeds)) != len(self.seeds):
            raise ConfigError("seeds must be a non-empty list of distinct integers")
        if not set(self.attributes) <= set(ATTRIBUTES) or not self.attributes:
            raise ConfigError(f"attributes must be a non-empty subset of {ATTRIBUTES}")
        if self.batch_size < 2:
            raise ConfigError("batch_size must be at least 2")
        try:
            NadamState(**self.optimizer)
        except (TypeError, ArgumentError) as exc:
            raise ConfigError(f"bad optimizer options: {exc}") from exc

    @property
    def variant(self):
        return self.model["variant"]

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, d):
        return cls(**d)

    @classmethod
    def from_file(cls, path):
        """Load a JSON config; relative data paths resolve against its directory."""
        with open(path) as fh:
            d = json.load(fh)
        base = os.path.dirname(os.path.abspath(path))
        data = dict(d.get("data", {}))
        for key in ("synth_spec", "features", "labels"):
            if key in data and not os.path.isabs(data[key]):
                data[key] = os.path.join(base, data[key])
        d["data"] = data
        return cls.from_dict(d)

    def save(self, path):
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=2)

    def model_config(self, input_dim, target_attr, mtl_weights=None):
        opts = {k: v for k, v in self.model.items() if k != "mtl_weights"}
        if self.variant in ("MTL", "LadderMTL"):
            return ModelConfig(input_dim=input_dim, output_attrs=ATTRIBUTES,
                               primary_attr=target_attr, mtl_weights=mtl_weights, **opts)
        return ModelConfig(input_dim=input_dim, output_attrs=(target_attr,), **opts)


def prepare_splits(config):
    """Load or synthesize the corpus, split by speaker and standardize."""
    spec = config.data
    if "synth" in spec:
        table = D.generate_synthetic(D.SynthSpec(**spec["synth"]))
    elif "synth_spec" in spec:
        table = D.generate_synthetic(D.SynthSpec.from_file(spec["synth_spec"]))
    else:
        table, _ = D.load_corpus(spec["features"], spec["labels"])
    fractions = spec.get("fractions", (0.6, 0.2, 0.2))
    rng = spawn_rngs(spec.get("split_seed", 0), 1)[0]
    train, val, test = D.split_by_speaker(table, fractions, rng)
    (train, val, test), _ = D.standardize(train, val, test)
    return train, val, test


# -- one seed -----------------------------------------------------------------

@dataclass
class SeedResult:
    seed: int
    target_attr: str
    best_epoch: int = 0
    best_validation: dict = field(default_factory=dict)
    test: dict = field(default_factory=dict)
    train: dict = field(default_factory=dict)
    history: list = field(default_factory=list)
    failed: bool = False
    diagnostic: str = ""
    mtl_weights: list = None


def split_ccc(model, split):
    pred = forward_infer(model, split.features)
    out = {}
    for j, attr in enumerate(model.config.output_attrs):
        out[attr] = ccc(pred[:, j], split.targets[:, ATTRIBUTES.index(attr)])
    return out


def _write_history(path, history, attrs):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["epoch", "train_loss", "supervised_cost", "reconstruction_cost"]
                   + [f"val_ccc_{a}" for a in attrs])
        for row in history:
            w.writerow([row["epoch"], repr(row["train_loss"]), repr(row["supervised_cost"]),
                        repr(row["reconstruction_cost"])] + [repr(row["val_ccc"][a]) for a in attrs])


def train_one(config, seed, splits, target_attr, mtl_weights=None, out_dir=None):
    """Train one network for one seed and keep its best-validation checkpoint.

    Returns ``(SeedResult, model)``; ``model`` holds the selected checkpoint
    (``None`` if the run failed).
    """
    train, val, test = splits
    init_rng, batch_rng, noise_rng = spawn_rngs(seed, 3)
    mcfg = config.model_config(train.features.shape[1], target_attr, mtl_weights)
    result = SeedResult(seed, target_attr,
                        mtl_weights=list(mcfg.mtl_weights.as_tuple()[:2]) if mcfg.mtl_weights else None)
    attrs = mcfg.output_attrs
    cols = [ATTRIBUTES.index(a) for a in attrs]
    model = build_model(mcfg, init_rng)
    set_target_scaling(model, train.targets[:, cols])
    try:
        if mcfg.variant == "AE":
            pre_epochs = config.ae_pretrain_epochs or config.max_epochs
            model, _ = dae_pretrain_then_freeze(
                mcfg, train.features, noise_rng, config.optimizer, pre_epochs,
                config.batch_size, model=model,
            )
        opt = NadamState(**config.optimizer)
        best = None
        best_score = -math.inf
        for epoch in range(1, config.max_epochs + 1):
            totals, sup, rec = [], [], []
            for xb, yb in D.batches(train, config.batch_size, batch_rng):
                trace = forward_train(model, xb, noise_rng)
                grads, bd = backward(model, trace, yb)
                if abs(bd.total - bd.recompute_total()) > 1e-12:
                    raise LadderError(f"loss decomposition drifted at epoch {epoch}")
                nadam_step(model.params, grads, opt)
                update_running_stats(model, trace)
                totals.append(bd.total)
                sup.append(bd.supervised_cost)
                rec.append(sum(bd.reconstruction_costs))
            val_ccc = split_ccc(model, val)
            result.history.append({
                "epoch": epoch, "train_loss": float(np.mean(totals)),
                "supervised_cost": float(np.mean(sup)), "reconstruction_cost": float(np.mean(rec)),
                "val_ccc": val_ccc,
            })
            score = val_ccc[mcfg.primary_attr]
            if score > best_score:
                best_score = score
                best = model.copy()
                result.best_epoch = epoch
        model.load_from(best)
    except (NumericError, FloatingPointError, LadderError) as exc:
        result.failed = True
        result.diagnostic = f"{type(exc).__name__}: {exc}"
        log.warning("seed %s (%s) failed: %s", seed, target_attr, result.diagnostic)
        return result, None

    result.best_validation = split_ccc(model, val)
    result.test = split_ccc(model, test)
    result.train = split_ccc(model, train)
    if out_dir is not None:
        os.makedirs(out_dir, exist_ok=True)
        _write_history(os.path.join(out_dir, "metrics.csv"), result.history, attrs)
        save_checkpoint(os.path.join(out_dir, "checkpoint.npz"), model, opt,
                        extra={"seed": seed, "target_attr": target_attr, "best_epoch": result.best_epoch})
    return result, model


# -- MTL weight selection -----------------------------------------------------

def mtl_weight_grid(step=0.1):
    k = int(round(1 / step))
    return [MtlWeights(i / k, j / k) for i in range(1, k) for j in range(1, k) if i + j <= k]


def select_mtl_weights(config, splits, target_attr, seed=None):
    """Pick (alpha, beta) on validation CCC of ``target_attr`` with one seed per grid point."""
    seed = config.seeds[0] if seed is None else seed
    best, best_score = None, -math.inf
    for w in mtl_weight_grid(config.mtl_grid_step):
        res, _ = train_one(config, seed, splits, target_attr, mtl_weights=w)
        if res.failed:
            continue
        score = res.best_validation[target_attr]
        if score > best_score:
            best, best_score = w, score
    if best is None:
        raise LadderError(f"every MTL weight setting failed for {target_attr}")
    return best


def _resolve_mtl_weights(config, splits, attr):
    spec = config.model.get("mtl_weights")
    if config.variant not in ("MTL", "LadderMTL") or spec is None:
        return None
    if spec == "grid":
        return select_mtl_weights(config, splits, attr)
    if isinstance(spec, dict):
        spec = spec.get(attr)
        if spec is None:
            return None
    return MtlWeights(*spec)


# -- aggregation --------------------------------------------------------------

def mean_std(values):
    """Mean and sample standard deviation (0 for a single value)."""
    values = [float(v) for v in values]
    if not values:
        return float("nan"), float("nan")
    m = math.fsum(values) / len(values)
    if len(values) < 2:
        return m, 0.0
    return m, math.sqrt(math.fsum((v - m) ** 2 for v in values) / (len(values) - 1))


@dataclass
class AttributeSummary:
    attribute: str
    seeds: list
    validation: list
    test: list
    best_epochs: list
    failed_seeds: list = field(default_factory=list)
    mtl_weights: list = None

    def stats(self, split):
        return mean_std(getattr(self, split))


@dataclass
class RunSummary:
    variant: str
    attributes: dict
    runs: list = field(default_factory=list)

    @property
    def display_name(self):
        return DISPLAY_NAMES[self.variant]

    @property
    def flagged(self):
        return any(a.failed_seeds for a in self.attributes.values())

    def to_dict(self):
        out = {"variant": self.variant, "attributes": {}, "runs": [asdict(r) for r in self.runs]}
        for attr, s in self.attributes.items():
            d = asdict(s)
            for split in SPLITS:
                d[f"{split}_mean"], d[f"{split}_std"] = s.stats(split)
            out["attributes"][attr] = d
        return out

    @classmethod
    def from_dict(cls, d):
        attrs = {}
        for attr, s in d["attributes"].items():
            s = {k: v for k, v in s.items() if not k.endswith(("_mean", "_std"))}
            attrs[attr] = AttributeSummary(**s)
        runs = [SeedResult(**r) for r in d.get("runs", [])]
        return cls(d["variant"], attrs, runs)

    def save(self, path):
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=2)

    @classmethod
    def load(cls, path):
        with open(path) as fh:
            return cls.from_dict(json.load(fh))


def run_experiment(config, splits, out_dir=None):
    """Train every (target attribute, seed) pair and aggregate CCC over seeds."""
    out_dir = out_dir or config.output_dir
    summary = RunSummary(config.variant, {})
    for attr in config.attributes:
        weights = _resolve_mtl_weights(config, splits, attr)
        agg = AttributeSummary(attr, [], [], [], [],
                               mtl_weights=list(weights.as_tuple()[:2]) if weights else None)
        for seed in config.seeds:
            run_dir = None
            if out_dir is not None:
                run_dir = os.path.join(out_dir, config.variant, attr, f"seed{seed}")
            res, _ = train_one(config, seed, splits, attr, weights, run_dir)
            summary.runs.append(res)
            if res.failed:
                agg.failed_seeds.append(seed)
                continue
            agg.seeds.append(seed)
            agg.validation.append(res.best_validation[attr])
            agg.test.append(res.test[attr])
            agg.best_epochs.append(res.best_epoch)
        summary.attributes[attr] = agg
    if out_dir is not None:
        os.makedirs(os.path.join(out_dir, config.variant), exist_ok=True)
        summary.save(os.path.join(out_dir, config.variant, "summary.json"))
    return summary


# -- reporting ----------------------------------------------------------------

def format_cell(mean, std):
    return f"{mean:.3f} ± {std:.3f}"


def _cell_flags(by_variant, split, attr):
    """Best-performer and significance flags for one table column.

    A variant is marked best when it has the highest mean or the top
    variant is not significantly better than it. A ladder variant gets the
    significance flag when it beats every baseline present at p < 0.05.
    """
    samples = {v: getattr(s.attributes[attr], split) for v, s in by_variant.items()
               if attr in s.attributes and len(getattr(s.attributes[attr], split)) > 0}
    best, signif = set(), set()
    if len(samples) < 2:
        return best, signif
    means = {v: mean_std(x)[0] for v, x in samples.items()}
    top = max(means, key=means.get)
    for v, x in samples.items():
        if v == top:
            best.add(v)
        elif len(x) >= 2 and len(samples[top]) >= 2:
            if t_test_one_tailed(samples[top], x) >= SIGNIFICANCE_LEVEL:
                best.add(v)
    baselines = [b for b in BASELINES if b in samples]
    for v in ("LadderSTL", "LadderMTL"):
        if v not in samples or not baselines or len(samples[v]) < 2:
            continue
        if all(len(samples[b]) >= 2 and t_test_one_tailed(samples[v], samples[b]) < SIGNIFICANCE_LEVEL
               for b in baselines):
            signif.add(v)
    return best, signif


def report(summaries, attributes=ATTRIBUTES):
    """Render the comparison table.

    Returns ``(text, csv_text)``. In the text table best performers are
    wrapped in brackets and significant ladder improvements carry ``*``.
    """
    if not summaries:
        raise ConfigError("report needs at least one summary")
    by_variant = {s.variant: s for s in summaries}
    order = [v for v in VARIANTS if v in by_variant]
    columns = [(split, attr) for split in SPLITS for attr in attributes]
    flags = {col: _cell_flags(by_variant, *col) for col in columns}

    short = {"arousal": "Aro", "valence": "Val", "dominance": "Dom"}
    split_label = {"validation": "Val", "test": "Test"}
    header = ["Task"] + [f"{split_label[split]} {short[attr]}" for split, attr in columns]
    rows = []
    buf = io.StringIO()
    w = csv.writer(buf)
    w.writerow(["variant", "split", "attribute", "mean", "std", "n", "best", "significant"])
    for v in order:
        s = by_variant[v]
        row = [s.display_name + (" (!)" if s.flagged else "")]
        for col in columns:
            split, attr = col
            if attr not in s.attributes or not getattr(s.attributes[attr], split):
                row.append("-")
                continue
            m, sd = s.attributes[attr].stats(split)
            best, signif = flags[col]
            cell = format_cell(m, sd)
            if v in best:
                cell = f"[{cell}]"
            if v in signif:
                cell += "*"
            row.append(cell)
            w.writerow([s.display_name, split, attr, repr(m), repr(sd),
                        len(getattr(s.attributes[attr], split)), int(v in best), int(v in signif)])
        rows.append(row)

    widths = [max(len(r[i]) for r in [header] + rows) for i in range(len(header))]
    lines = [" | ".join(c.ljust(widths[i]) for i, c in enumerate(header))]
    lines.append("-+-".join("-" * wd for wd in widths))
    for r in rows:
        lines.append(" | ".join(c.ljust(widths[i]) for i, c in enumerate(r)))
    notes = ["[x]: best performer (or not significantly worse than it)",
             "*: ladder variant significantly better than every baseline "
             f"(one-tailed Welch t-test, p < {SIGNIFICANCE_LEVEL})"]
    if any(by_variant[v].flagged for v in order):
        notes.append("(!): some seeds failed and were excluded")
    return "\n".join(lines + [""] + notes) + "\n", buf.getvalue()
