"""The reference-free metric estimator.

Per-track features (toy encoder or RFQF files) are concatenated along the
feature axis into a (T, 3D) sequence, run through one transformer encoder
layer, mean pooled over time, and mapped by a linear head to per-source
and average metric values. Training uses MSE with two Adam parameter
groups (extractor vs from-scratch) under linear warmup/decay schedules.
"""

from __future__ import annotations

import json
import struct
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .audio import SeparationTriplet
from .autodiff import (Tensor, add, concat_cols, gelu, matmul, mean_pool,
                       mean_pool_blocks, mse_loss)
from .encoder import (ToyEncoderParams, extract, frame_samples, init_encoder_params,
                      load_triplet_features)
from .errors import DataError, FormatError, NumericsError
from .features import FeatureSequence
from .manifest import ManifestEntry, MetricLabels
from .optim import AdamState, LrSchedule, adam_step, lr_at
from .transformer import init_transformer_params, sinusoidal_encoding, transformer_layer
from .wavio import read_wav_int16

MODES = ("wer", "sisnr", "joint")
FEATURE_SOURCES = ("toy", "files")

OUTPUT_FIELDS = {
    "wer": ("wer_s1", "wer_s2", "wer_avg"),
    "sisnr": ("sisnr_s1", "sisnr_s2", "sisnr_avg"),
    "joint": ("wer_s1", "wer_s2", "wer_avg", "sisnr_s1", "sisnr_s2", "sisnr_avg"),
}

_CKPT_MAGIC = b"RFQC"
_CKPT_VERSION = 1
_CKPT_HEADER = struct.Struct("<4sII")

_INT16_SCALE = 32767.0


@dataclass
class EstimatorConfig:
    metric_mode: str = "sisnr"
    feature_dim: int = 64
    heads: int = 4
    batch_size: int = 12
    warmup_steps: int = 10000
    total_steps: int = 100000
    peak_lr_encoder: float = 1e-5
    peak_lr_scratch: float = 1e-4
    encoder_trainable: bool = True
    feature_source: str = "toy"
    frame_len: int = 400
    hop: int = 320
    positional_encoding: bool = False
    seed: int = 0

    def __post_init__(self):
        if self.metric_mode not in MODES:
            raise DataError(f"metric_mode must be one of {MODES}, got {self.metric_mode!r}")
        if self.feature_source not in FEATURE_SOURCES:
            raise DataError(f"feature_source must be one of {FEATURE_SOURCES}")
        if (3 * self.feature_dim) % self.heads != 0:
            raise DataError(f"3*feature_dim ({3 * self.feature_dim}) must be "
                            f"divisible by heads ({self.heads})")
        if self.batch_size < 1:
            raise DataError("batch_size must be >= 1")
        if not 0 < self.warmup_steps < self.total_steps:
            raise DataError(f"need 0 < warmup_steps ({self.warmup_steps}) < "
                            f"total_steps ({self.total_steps})")

    @property
    def n_out(self) -> int:
        return len(OUTPUT_FIELDS[self.metric_mode])

    @property
    def model_dim(self) -> int:
        return 3 * self.feature_dim


@dataclass
class LabelNormalizer:
    """Per-output min-max scaling to [0, 1], fit on train+valid labels."""

    lo: np.ndarray
    hi: np.ndarray

    @classmethod
    def fit(cls, labels: np.ndarray, names: tuple[str, ...]) -> "LabelNormalizer":
        lo = labels.min(axis=0)
        hi = labels.max(axis=0)
        flat = np.nonzero(hi <= lo)[0]
        if flat.size:
            bad = ", ".join(names[i] for i in flat)
            raise DataError(f"cannot min-max normalize constant labels: {bad}")
        return cls(lo, hi)

    def normalize(self, y: np.ndarray) -> np.ndarray:
        return (y - self.lo) / (self.hi - self.lo)

    def denormalize(self, z: np.ndarray) -> np.ndarray:
        return z * (self.hi - self.lo) + self.lo


@dataclass
class EstimatorModel:
    config: EstimatorConfig
    params: dict[str, np.ndarray]
    normalizer: LabelNormalizer | None = None


@dataclass
class TrainingLog:
    step_losses: list[float] = field(default_factory=list)
    validations: list[tuple[int, float]] = field(default_factory=list)
    best_step: int = 0
    best_valid_mse: float = float("inf")
    encoder_group_active: bool = True
    seed: int = 0

    def to_dict(self) -> dict:
        return {
            "step_losses": self.step_losses,
            "validations": [[s, v] for s, v in self.validations],
            "best_step": self.best_step,
            "best_valid_mse": self.best_valid_mse,
            "encoder_group_active": self.encoder_group_active,
            "seed": self.seed,
        }


def init_model(config: EstimatorConfig) -> EstimatorModel:
    rng = np.random.default_rng(config.seed)
    params: dict[str, np.ndarray] = {}
    enc = init_encoder_params(rng, config.frame_len, config.hop, config.feature_dim)
    params["enc.projection"] = enc.projection
    params["enc.bias"] = enc.bias
    params.update(init_transformer_params(rng, config.model_dim))
    bound = 1.0 / np.sqrt(config.model_dim)
    params["head.w"] = rng.uniform(-bound, bound, size=(config.model_dim, config.n_out))
    params["head.b"] = np.zeros(config.n_out)
    return EstimatorModel(config, params)


# --- forward -----------------------------------------------------------------

def _head_graph(ptensors: dict[str, Tensor], config: EstimatorConfig,
                feats: list[Tensor]) -> Tensor:
    shapes = {f.data.shape for f in feats}
    if len(shapes) != 1:
        raise DataError(f"track feature shapes differ: {sorted(shapes)}")
    (t, d), = shapes
    if d != config.feature_dim:
        raise DataError(f"feature dim {d} does not match model dim {config.feature_dim}")
    x = concat_cols(feats)
    if config.positional_encoding:
        x = add(x, Tensor(sinusoidal_encoding(t, config.model_dim)))
    h = transformer_layer(x, ptensors, config.heads)
    pooled = mean_pool(h)
    return add(matmul(pooled, ptensors["head.w"]), ptensors["head.b"])


def _wrap_params(params: dict[str, np.ndarray],
                 trainable: set[str] | None = None) -> dict[str, Tensor]:
    trainable = trainable or set()
    return {k: Tensor(v, requires_grad=k in trainable) for k, v in params.items()}


def forward(model: EstimatorModel, feats_mix: FeatureSequence,
            feats_s1: FeatureSequence, feats_s2: FeatureSequence) -> np.ndarray:
    """Raw head outputs for one triplet of (T, D) feature matrices.

    Joint-mode outputs live in normalized space; single-metric outputs are
    metric-space values.
    """
    ptensors = _wrap_params(model.params)
    feats = [Tensor(f.data) for f in (feats_mix, feats_s1, feats_s2)]
    return _head_graph(ptensors, model.config, feats).data


def training_loss(outputs, labels: np.ndarray, normalizer: LabelNormalizer | None,
                  mode: str):
    """MSE over all outputs; joint-mode labels are normalized first.

    Accepts a Tensor (returns a Tensor for backprop) or a plain array
    (returns a float).
    """
    if mode == "joint":
        if normalizer is None:
            raise DataError("joint mode requires a fitted label normalizer")
        target = normalizer.normalize(np.asarray(labels, dtype=np.float64))
    else:
        target = np.asarray(labels, dtype=np.float64)
    if isinstance(outputs, Tensor):
        return mse_loss(outputs, target)
    diff = np.asarray(outputs, dtype=np.float64) - target
    return float(np.mean(diff * diff))


# --- data plumbing -------------------------------------------------------------

def label_vector(labels: MetricLabels, mode: str) -> np.ndarray:
    values = []
    for name in OUTPUT_FIELDS[mode]:
        v = getattr(labels, name)
        if v is None:
            raise DataError(f"entry label {name} is missing")
        values.append(float(v))
    return np.array(values)


def label_matrix(entries: list[ManifestEntry], mode: str) -> np.ndarray:
    if not entries:
        raise DataError("no entries")
    return np.stack([label_vector(e.labels, mode) for e in entries])


class _TripletSource:
    """Loads and caches per-entry track data in its most compact exact form."""

    def __init__(self, entries: list[ManifestEntry], root: Path,
                 config: EstimatorConfig):
        self.entries = entries
        self.root = Path(root)
        self.config = config
        self._cache: dict[int, tuple] = {}

    def _load(self, idx: int):
        entry = self.entries[idx]
        if self.config.feature_source == "toy":
            tracks = []
            for key in ("mixture", "est1", "est2"):
                data, _rate = read_wav_int16(self.root / entry.audio[key])
                tracks.append(data)
            return tuple(tracks)
        seqs = load_triplet_features(entry, self.root)
        return tuple(seqs[k].data.astype(np.float32) for k in ("mix", "est1", "est2"))

    def track_arrays(self, idx: int) -> tuple:
        if idx not in self._cache:
            self._cache[idx] = self._load(idx)
        return self._cache[idx]

    def item_frames(self, idx: int) -> list[np.ndarray]:
        """Per-track constants entering the graph: windowed frames (toy)
        or feature matrices (files)."""
        cfg = self.config
        if cfg.feature_source == "toy":
            return [frame_samples(samples.astype(np.float64) / _INT16_SCALE,
                                  cfg.frame_len, cfg.hop)
                    for samples in self.track_arrays(idx)]
        return [f.astype(np.float64) for f in self.track_arrays(idx)]


def _encode_frames(frames: Tensor, ptensors: dict[str, Tensor]) -> Tensor:
    return gelu(add(matmul(frames, ptensors["enc.projection"]), ptensors["enc.bias"]))


def batch_outputs(ptensors: dict[str, Tensor], config: EstimatorConfig,
                  batch_mats: list[list[np.ndarray]]) -> Tensor:
    """Head outputs (B, n_out) for a batch, via row-stacked sequences.

    Row-wise sublayers run as single large matmuls; attention and pooling
    respect per-item block boundaries. All items are truncated to the
    batch-minimum frame count first.
    """
    t_min = min(mats[0].shape[0] for mats in batch_mats)
    feats = []
    for track in range(3):
        stacked = Tensor(np.concatenate([mats[track][:t_min] for mats in batch_mats]))
        if config.feature_source == "toy":
            feats.append(_encode_frames(stacked, ptensors))
        else:
            feats.append(stacked)
    x = concat_cols(feats)
    if config.positional_encoding:
        pe = sinusoidal_encoding(t_min, config.model_dim)
        x = add(x, Tensor(np.tile(pe, (len(batch_mats), 1))))
    h = transformer_layer(x, ptensors, config.heads, block_len=t_min)
    pooled = mean_pool_blocks(h, t_min)
    return add(matmul(pooled, ptensors["head.w"]), ptensors["head.b"])


def batch_loss(ptensors: dict[str, Tensor], config: EstimatorConfig,
               batch: list[tuple[list[np.ndarray], np.ndarray]],
               normalizer: LabelNormalizer | None) -> Tensor:
    """Mean training loss (MSE over all outputs) for a batch."""
    outputs = batch_outputs(ptensors, config, [mats for mats, _ in batch])
    targets = np.stack([labels for _, labels in batch])
    return training_loss(outputs, targets, normalizer, config.metric_mode)


# --- training ------------------------------------------------------------------

def fit(config: EstimatorConfig, train_entries: list[ManifestEntry],
        valid_entries: list[ManifestEntry], root) -> tuple[EstimatorModel, TrainingLog]:
    """Train an estimator; returns the model at best validation MSE."""
    if not train_entries or not valid_entries:
        raise DataError("fit requires nonempty train and valid entry lists")
    root = Path(root)
    mode = config.metric_mode
    y_train = label_matrix(train_entries, mode)
    y_valid = label_matrix(valid_entries, mode)
    normalizer = None
    if mode == "joint":
        normalizer = LabelNormalizer.fit(np.vstack([y_train, y_valid]),
                                         OUTPUT_FIELDS[mode])

    model = init_model(config)
    model.normalizer = normalizer
    params = model.params
    targets = normalizer.normalize(y_train) if normalizer else y_train
    # Centering the head bias on the target mean removes the slow constant
    # offset the schedule would otherwise spend most of its budget on.
    params["head.b"][:] = targets.mean(axis=0)

    source = _TripletSource(train_entries, root, config)
    valid_source = _TripletSource(valid_entries, root, config)

    enc_active = config.encoder_trainable and config.feature_source == "toy"
    enc_keys = {k for k in params if k.startswith("enc.")}
    scratch_keys = set(params) - enc_keys
    trainable = set(scratch_keys) | (enc_keys if enc_active else set())

    sched_enc = LrSchedule(config.peak_lr_encoder, config.warmup_steps, config.total_steps)
    sched_scr = LrSchedule(config.peak_lr_scratch, config.warmup_steps, config.total_steps)
    adam_enc = AdamState()
    adam_scr = AdamState()

    log = TrainingLog(encoder_group_active=enc_active, seed=config.seed)
    shuffle_rng = np.random.default_rng(config.seed + 1)
    best_params = None
    step = 0
    n = len(train_entries)
    if n < config.batch_size:
        raise DataError(f"batch_size {config.batch_size} exceeds train set size {n}")

    def validate() -> float:
        outputs = _chunked_outputs(params, config, valid_source, len(valid_entries))
        return training_loss(outputs, y_valid, normalizer, mode)

    while step < config.total_steps:
        order = shuffle_rng.permutation(n)
        for start in range(0, n - config.batch_size + 1, config.batch_size):
            if step >= config.total_steps:
                break
            step += 1
            idxs = order[start:start + config.batch_size]
            batch = [(source.item_frames(int(i)), y_train[int(i)]) for i in idxs]
            ptensors = _wrap_params(params, trainable)
            loss = batch_loss(ptensors, config, batch, normalizer)
            loss_val = float(loss.data)
            if not np.isfinite(loss_val):
                raise NumericsError(
                    f"non-finite training loss at step {step} "
                    f"(mode={mode}, lr_scratch={lr_at(min(step, config.total_steps), sched_scr):.3e})")
            loss.backward()
            log.step_losses.append(loss_val)
            grads = {k: ptensors[k].grad for k in trainable if ptensors[k].grad is not None}
            scr_grads = {k: g for k, g in grads.items() if k in scratch_keys}
            adam_step(params, scr_grads, adam_scr, lr_at(step, sched_scr))
            if enc_active:
                enc_grads = {k: g for k, g in grads.items() if k in enc_keys}
                adam_step(params, enc_grads, adam_enc, lr_at(step, sched_enc))
        valid_mse = validate()
        log.validations.append((step, valid_mse))
        if valid_mse < log.best_valid_mse:
            log.best_valid_mse = valid_mse
            log.best_step = step
            best_params = {k: v.copy() for k, v in params.items()}

    if best_params is not None:
        model.params = best_params
    return model, log


def fit_manifest(config: EstimatorConfig, manifest_path) -> tuple[EstimatorModel, TrainingLog]:
    from .manifest import read_manifest, split_entries

    manifest_path = Path(manifest_path)
    entries = read_manifest(manifest_path)
    return fit(config, split_entries(entries, "train"), split_entries(entries, "valid"),
               manifest_path.parent)


_INFER_CHUNK = 24


def _chunked_outputs(params: dict[str, np.ndarray], config: EstimatorConfig,
                     source: _TripletSource, n: int) -> np.ndarray:
    """Raw head outputs for n entries, batched through the stacked graph.

    Chunks group entries of equal frame count so no truncation happens at
    inference time.
    """
    ptensors = _wrap_params(params)
    outputs = np.empty((n, config.n_out))
    start = 0
    while start < n:
        stop = min(start + _INFER_CHUNK, n)
        mats = [source.item_frames(i) for i in range(start, stop)]
        t0 = mats[0][0].shape[0]
        while stop > start + 1 and any(m[0].shape[0] != t0 for m in mats):
            stop -= 1
            mats.pop()
        outputs[start:stop] = batch_outputs(ptensors, config, mats).data
        start = stop
    return outputs


def infer_outputs(model: EstimatorModel, entries: list[ManifestEntry],
                  root) -> np.ndarray:
    """Metric-space outputs (n, n_out) for a list of manifest entries."""
    source = _TripletSource(entries, Path(root), model.config)
    raw = _chunked_outputs(model.params, model.config, source, len(entries))
    if model.config.metric_mode == "joint":
        if model.normalizer is None:
            raise DataError("joint model without a normalizer cannot predict")
        return model.normalizer.denormalize(raw)
    return raw


# --- prediction ------------------------------------------------------------------

def _encoder_view(model: EstimatorModel) -> ToyEncoderParams:
    return ToyEncoderParams(model.params["enc.projection"], model.params["enc.bias"],
                            model.config.frame_len, model.config.hop)


def predict_from_features(model: EstimatorModel, feats_mix: FeatureSequence,
                          feats_s1: FeatureSequence, feats_s2: FeatureSequence) -> MetricLabels:
    """Estimated labels; only the heads the model was trained for are set."""
    t_min = min(f.n_frames for f in (feats_mix, feats_s1, feats_s2))
    raw = forward(model, feats_mix.truncated(t_min), feats_s1.truncated(t_min),
                  feats_s2.truncated(t_min))
    mode = model.config.metric_mode
    if mode == "joint":
        if model.normalizer is None:
            raise DataError("joint model without a normalizer cannot predict")
        raw = model.normalizer.denormalize(raw)
    values = dict(zip(OUTPUT_FIELDS[mode], (float(v) for v in raw)))
    return MetricLabels(**values)


def predict(model: EstimatorModel, triplet: SeparationTriplet) -> MetricLabels:
    if model.config.feature_source != "toy":
        raise DataError("model was trained on file-backed features; "
                        "use predict_from_features with RFQF inputs")
    enc = _encoder_view(model)
    feats = [extract(sig, enc)
             for sig in (triplet.mixture, triplet.estimates[0], triplet.estimates[1])]
    return predict_from_features(model, *feats)


# --- checkpoints -------------------------------------------------------------------

def save(model: EstimatorModel, path) -> None:
    names = sorted(model.params)
    header = {
        "config": asdict(model.config),
        "params": [[k, list(model.params[k].shape)] for k in names],
        "has_normalizer": model.normalizer is not None,
    }
    if model.config.metric_mode == "joint" and model.normalizer is None:
        raise DataError("refusing to save a joint checkpoint without a normalizer")
    blob = json.dumps(header, sort_keys=True).encode("utf-8")
    chunks = [_CKPT_HEADER.pack(_CKPT_MAGIC, _CKPT_VERSION, len(blob)), blob]
    for k in names:
        chunks.append(np.ascontiguousarray(model.params[k], dtype="<f8").tobytes())
    if model.normalizer is not None:
        chunks.append(np.ascontiguousarray(model.normalizer.lo, dtype="<f8").tobytes())
        chunks.append(np.ascontiguousarray(model.normalizer.hi, dtype="<f8").tobytes())
    Path(path).write_bytes(b"".join(chunks))


def load(path) -> EstimatorModel:
    path = Path(path)
    blob = path.read_bytes()
    if len(blob) < _CKPT_HEADER.size:
        raise FormatError(f"{path}: truncated checkpoint header")
    magic, version, hlen = _CKPT_HEADER.unpack_from(blob)
    if magic != _CKPT_MAGIC:
        raise FormatError(f"{path}: bad checkpoint magic {magic!r}")
    if version != _CKPT_VERSION:
        raise FormatError(f"{path}: unsupported checkpoint version {version}")
    try:
        header = json.loads(blob[_CKPT_HEADER.size:_CKPT_HEADER.size + hlen])
        config = EstimatorConfig(**header["config"])
    except (json.JSONDecodeError, TypeError, KeyError) as exc:
        raise FormatError(f"{path}: corrupt checkpoint header ({exc})") from exc
    offset = _CKPT_HEADER.size + hlen
    params = {}
    for name, shape in header["params"]:
        count = int(np.prod(shape)) if shape else 1
        end = offset + count * 8
        if end > len(blob):
            raise FormatError(f"{path}: checkpoint payload truncated at {name}")
        params[name] = np.frombuffer(blob, dtype="<f8", count=count,
                                     offset=offset).reshape(shape).copy()
        offset = end
    normalizer = None
    if header["has_normalizer"]:
        n_out = config.n_out
        end = offset + 2 * n_out * 8
        if end > len(blob):
            raise FormatError(f"{path}: checkpoint normalizer truncated")
        lo = np.frombuffer(blob, dtype="<f8", count=n_out, offset=offset).copy()
        hi = np.frombuffer(blob, dtype="<f8", count=n_out, offset=offset + n_out * 8).copy()
        normalizer = LabelNormalizer(lo, hi)
        offset = end
    if offset != len(blob):
        raise FormatError(f"{path}: {len(blob) - offset} trailing bytes in checkpoint")
    if config.metric_mode == "joint" and normalizer is None:
        raise DataError(f"{path}: joint checkpoint is missing its normalizer")
    return EstimatorModel(config, params, normalizer)
