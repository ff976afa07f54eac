"""Feature/label ingestion, speaker-disjoint splits, standardization, batching,
and a synthetic stand-in corpus.

File formats (comma separated, one header line):

* features: ``segment_id,f0001,...,fNNNN``; values are decimal floats.
* labels: ``segment_id,arousal,valence,dominance,speaker_id``; attribute
  scores are rater means on the 1-7 scale. Empty attribute fields mark
  missing labels; such rows are dropped at load time.
"""

import csv
import logging
import math
from dataclasses import dataclass, fields, replace

import numpy as np

from .errors import ArgumentError, DataError, ParseError
from .numerics import make_rng

log = logging.getLogger(__name__)

ATTRIBUTES = ("arousal", "valence", "dominance")
LABEL_HEADER = ("segment_id",) + ATTRIBUTES + ("speaker_id",)
SCALE_MIN, SCALE_MAX = 1.0, 7.0
FULL_FEATURE_DIM = 6373


@dataclass
class DatasetSplit:
    segment_ids: list
    features: np.ndarray
    targets: np.ndarray
    speaker_ids: list
    feature_names: list = None

    def __post_init__(self):
        n = len(self.segment_ids)
        self.features = np.asarray(self.features, dtype=np.float64)
        self.targets = np.asarray(self.targets, dtype=np.float64).reshape(n, len(ATTRIBUTES))
        if self.features.shape[0] != n or len(self.speaker_ids) != n:
            raise DataError("segment ids, features, targets and speakers disagree in row count")
        if self.feature_names is None:
            self.feature_names = default_feature_names(self.features.shape[1])

    def __len__(self):
        return len(self.segment_ids)

    def subset(self, rows):
        rows = np.asarray(rows, dtype=np.int64)
        return DatasetSplit(
            [self.segment_ids[i] for i in rows], self.features[rows], self.targets[rows],
            [self.speaker_ids[i] for i in rows], list(self.feature_names),
        )

    def validate(self):
        if not np.all(np.isfinite(self.features)):
            raise DataError("features contain NaN or Inf")
        if np.any(self.targets < SCALE_MIN) or np.any(self.targets > SCALE_MAX):
            raise DataError(f"targets fall outside [{SCALE_MIN}, {SCALE_MAX}]")
        return self


def default_feature_names(d):
    width = max(4, len(str(d)))
    return [f"f{i:0{width}d}" for i in range(1, d + 1)]


# -- file I/O -----------------------------------------------------------------

def _parse_float(text, path, line, column):
    try:
        value = float(text)
    except ValueError:
        raise ParseError(path, line, f"column {column!r}: cannot parse {text!r} as a number") from None
    if not math.isfinite(value):
        raise ParseError(path, line, f"column {column!r}: non-finite value {text!r}")
    return value


def read_features(path):
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ParseError(path, 1, "empty file") from None
        if not header or header[0] != "segment_id":
            raise ParseError(path, 1, "header must start with 'segment_id'")
        names = header[1:]
        ids, rows, seen = [], [], set()
        for row in reader:
            line = reader.line_num
            if not row:
                continue
            if len(row) != len(header):
                raise ParseError(path, line, f"expected {len(header)} fields, found {len(row)}")
            sid = row[0]
            if sid in seen:
                raise DataError(f"{path}:{line}: duplicate segment id {sid!r}")
            seen.add(sid)
            ids.append(sid)
            rows.append([_parse_float(v, path, line, names[j]) for j, v in enumerate(row[1:])])
    feats = np.array(rows, dtype=np.float64).reshape(len(ids), len(names))
    return ids, names, feats


def read_labels(path):
    """Returns ``{segment_id: (targets or None, speaker_id)}``; ``None`` marks a missing label."""
    out = {}
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ParseError(path, 1, "empty file") from None
        if tuple(h.strip() for h in header) != LABEL_HEADER:
            raise ParseError(path, 1, f"header must be {','.join(LABEL_HEADER)}")
        for row in reader:
            line = reader.line_num
            if not row:
                continue
            if len(row) != len(LABEL_HEADER):
                raise ParseError(path, line, f"expected {len(LABEL_HEADER)} fields, found {len(row)}")
            sid, speaker = row[0], row[4]
            if sid in out:
                raise DataError(f"{path}:{line}: duplicate segment id {sid!r}")
            raw = row[1:4]
            if any(v.strip() == "" for v in raw):
                out[sid] = (None, speaker)
                continue
            vals = tuple(_parse_float(v, path, line, ATTRIBUTES[j]) for j, v in enumerate(raw))
            if any(v < SCALE_MIN or v > SCALE_MAX for v in vals):
                raise ParseError(path, line, f"attribute scores {vals} outside [1, 7]")
            out[sid] = (vals, speaker)
    return out


def load_corpus(features_path, labels_path):
    """Join features and labels on segment id.

    Returns ``(table, dropped)`` where ``dropped`` counts feature rows
    without a usable label.
    """
    ids, names, feats = read_features(features_path)
    labels = read_labels(labels_path)
    keep, targets, speakers = [], [], []
    for i, sid in enumerate(ids):
        entry = labels.get(sid)
        if entry is None or entry[0] is None:
            continue
        keep.append(i)
        targets.append(entry[0])
        speakers.append(entry[1])
    dropped = len(ids) - len(keep)
    if dropped:
        log.info("dropped %d segments without labels", dropped)
    table = DatasetSplit(
        [ids[i] for i in keep], feats[keep], np.array(targets).reshape(len(keep), 3),
        speakers, names,
    )
    return table.validate(), dropped


def save_corpus(table, features_path, labels_path):
    """Write a table in the ingestion format; ``repr`` keeps floats bit-exact."""
    with open(features_path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["segment_id"] + list(table.feature_names))
        for sid, row in zip(table.segment_ids, table.features):
            w.writerow([sid] + [repr(float(v)) for v in row])
    with open(labels_path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(LABEL_HEADER)
        for sid, t, spk in zip(table.segment_ids, table.targets, table.speaker_ids):
            w.writerow([sid] + [repr(float(v)) for v in t] + [spk])


# -- partitioning -------------------------------------------------------------

def split_by_speaker(table, fractions, rng):
    """Assign whole speakers to train/validation/test.

    Speakers are shuffled; the first three seed one split each (test,
    validation, train), and every remaining speaker goes to the split
    furthest below its target segment count.
    """
    fractions = tuple(float(f) for f in fractions)
    if len(fractions) != 3 or min(fractions) <= 0 or abs(sum(fractions) - 1.0) > 1e-9:
        raise ArgumentError(f"fractions must be three positive numbers summing to 1, got {fractions}")
    speakers = sorted(set(table.speaker_ids))
    if len(speakers) < 3:
        raise ArgumentError(f"need at least 3 speakers for a speaker-independent split, found {len(speakers)}")
    rows_by_speaker = {s: [] for s in speakers}
    for i, s in enumerate(table.speaker_ids):
        rows_by_speaker[s].append(i)
    order = [speakers[i] for i in rng.permutation(len(speakers))]

    n = len(table)
    targets = [f * n for f in fractions]
    assigned = [[], [], []]
    counts = [0, 0, 0]
    for k, spk in enumerate(order):
        if k < 3:
            j = 2 - k
        else:
            j = int(np.argmax([targets[i] - counts[i] for i in range(3)]))
        assigned[j].append(spk)
        counts[j] += len(rows_by_speaker[spk])
    parts = []
    for spk_list in assigned:
        rows = sorted(r for s in spk_list for r in rows_by_speaker[s])
        parts.append(table.subset(rows))
    return tuple(parts)


# -- standardization ----------------------------------------------------------

@dataclass
class Standardizer:
    mean: np.ndarray
    std: np.ndarray
    kept: np.ndarray
    dropped: np.ndarray

    @classmethod
    def fit(cls, features):
        features = np.asarray(features, dtype=np.float64)
        if len(features) == 0:
            raise ArgumentError("cannot fit a standardizer on an empty split")
        mean = features.mean(axis=0)
        std = features.std(axis=0)
        kept = np.flatnonzero(std > 0)
        dropped = np.flatnonzero(~(std > 0))
        return cls(mean[kept], std[kept], kept, dropped)

    def transform(self, features):
        return (np.asarray(features, dtype=np.float64)[:, self.kept] - self.mean) / self.std

    def inverse(self, standardized):
        return standardized * self.std + self.mean


def standardize(train, *others):
    """Z-score every split with training statistics; zero-variance features are dropped.

    Returns ``(standardized_splits, standardizer)`` with the training split first.
    """
    scaler = Standardizer.fit(train.features)
    if len(scaler.dropped):
        log.info("dropping %d zero-variance features", len(scaler.dropped))
    names = [train.feature_names[i] for i in scaler.kept]
    out = [replace(s, features=scaler.transform(s.features), feature_names=list(names))
           for s in (train,) + others]
    return out, scaler


# -- batching -----------------------------------------------------------------

def batch_indices(n, batch_size, rng, drop_last=True):
    if batch_size < 2:
        raise ArgumentError("batch size must be at least 2 for batch normalization")
    order = rng.permutation(n)
    stop = n - n % batch_size if drop_last else n
    return [order[i:i + batch_size] for i in range(0, stop, batch_size)]


def batches(split, batch_size, rng, drop_last=True):
    """One epoch of shuffled ``(features, targets)`` mini-batches."""
    for idx in batch_indices(len(split), batch_size, rng, drop_last):
        yield split.features[idx], split.targets[idx]


# -- synthetic corpus ---------------------------------------------------------

DEFAULT_CORRELATION = ((1.0, 0.3, 0.6), (0.3, 1.0, 0.3), (0.6, 0.3, 1.0))


@dataclass
class SynthSpec:
    """Parameters of the synthetic corpus.

    Features are ``tanh(latents @ A) @ B`` plus a per-speaker offset and
    per-feature noise, so they carry a rank-``rank`` signal. Attribute
    scores are smooth functions of the first three latent factors, mixed to
    the requested correlation, rated by ``n_raters`` simulated annotators on
    an integer 1-7 scale and averaged.
    """

    n_samples: int = 2000
    feature_dim: int = 50
    rank: int = 8
    attr_correlation: tuple = DEFAULT_CORRELATION
    feature_noise: float = 0.5
    speaker_noise: float = 0.3
    rater_noise: float = 0.8
    n_raters: int = 5
    n_speakers: int = 40
    signal_gain: float = 1.0
    seed: int = 0

    def __post_init__(self):
        corr = np.asarray(self.attr_correlation, dtype=np.float64)
        if corr.shape != (3, 3):
            raise ArgumentError("attr_correlation must be 3x3")
        if not np.allclose(corr, corr.T) or not np.allclose(np.diag(corr), 1.0):
            raise ArgumentError("attr_correlation must be symmetric with unit diagonal")
        if np.linalg.eigvalsh(corr).min() < -1e-10:
            raise ArgumentError("attr_correlation must be positive semidefinite")
        self.attr_correlation = tuple(tuple(float(v) for v in row) for row in corr)
        if not 3 <= self.rank <= self.feature_dim:
            raise ArgumentError("rank must satisfy 3 <= rank <= feature_dim")
        if self.n_samples < 3 or self.n_speakers < 3 or self.n_speakers > self.n_samples:
            raise ArgumentError("need at least 3 speakers and no more speakers than samples")
        if min(self.feature_noise, self.speaker_noise, self.rater_noise) < 0 or self.n_raters < 1:
            raise ArgumentError("noise levels must be >= 0 and n_raters >= 1")

    def to_text(self):
        lines = ["# synthetic corpus specification"]
        for f in fields(self):
            value = getattr(self, f.name)
            if f.name == "attr_correlation":
                value = "; ".join(" ".join(repr(v) for v in row) for row in value)
            lines.append(f"{f.name} = {value}")
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text):
        kinds = {f.name: f.type for f in fields(cls)}
        values = {}
        for n, raw in enumerate(text.splitlines(), 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ParseError("<synth spec>", n, f"expected 'key = value', got {raw!r}")
            key, value = (s.strip() for s in line.split("=", 1))
            if key not in kinds:
                raise ParseError("<synth spec>", n, f"unknown key {key!r}")
            if key == "attr_correlation":
                values[key] = tuple(tuple(float(v) for v in row.split()) for row in value.split(";"))
            elif kinds[key] in (int, "int"):
                values[key] = int(value)
            else:
                values[key] = float(value)
        return cls(**values)

    @classmethod
    def from_file(cls, path):
        with open(path) as fh:
            return cls.from_text(fh.read())


def generate_synthetic(spec):
    rng = make_rng(spec.seed)
    n, d, r = spec.n_samples, spec.feature_dim, spec.rank
    latents = rng.standard_normal((n, r))

    A = rng.standard_normal((r, r)) / np.sqrt(r)
    B = rng.standard_normal((r, d))
    signal = np.tanh(spec.signal_gain * (latents @ A) + latents) @ B / np.sqrt(r)

    speakers = np.minimum(np.arange(n) * spec.n_speakers // n, spec.n_speakers - 1)
    offsets = rng.standard_normal((spec.n_speakers, d)) * np.sqrt(spec.speaker_noise)
    feats = signal + offsets[speakers] + rng.standard_normal((n, d)) * np.sqrt(spec.feature_noise)

    chol = np.linalg.cholesky(np.asarray(spec.attr_correlation) + 1e-12 * np.eye(3))
    mixed = latents[:, :3] @ chol.T
    true_scores = 4.0 + 2.4 * np.tanh(0.6 * mixed)
    ratings = np.rint(true_scores[:, None, :] + rng.standard_normal((n, spec.n_raters, 3)) * spec.rater_noise)
    targets = np.clip(ratings, SCALE_MIN, SCALE_MAX).mean(axis=1)

    width = len(str(n))
    ids = [f"seg{i:0{width}d}" for i in range(n)]
    spk_width = len(str(spec.n_speakers))
    spk = [f"spk{s:0{spk_width}d}" for s in speakers]
    return DatasetSplit(ids, feats, targets, spk).validate()
