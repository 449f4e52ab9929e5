"""Seeded training loop with per-epoch dev evaluation and best-snapshot retention.

A run is fully determined by (datasets, vocabulary, config): parameter init,
per-epoch shuffling and dropout noise all derive from the config seed, so
identical inputs reproduce the best checkpoint bit for bit.
"""

from __future__ import annotations

import json
import struct
import time
from dataclasses import dataclass, field, replace

import numpy as np

from . import metrics as M
from .data import EMOTIONS, Dataset, emotion_id
from .errors import FormatError, ValidationError
from .nn.autodiff import Tape
from .nn.encoder import (
    EncoderConfig,
    Parameters,
    collect_grads,
    forward,
    head_apply,
    init_params,
    run_model,
    wrap_params,
)
from .nn.losses import loss_cross_entropy, loss_mse, loss_multitask, softmax
from .optim import AdamW, AdamWConfig
from .predictions import ClassificationPredictions, RegressionPredictions
from .text import Vocab, encode, vocab_hash

TASKS = ("empathy", "distress", "multitask", "emotion")
PRESETS = ("paper_faithful", "desk_scale")

CHECKPOINT_MAGIC = b"MTAF"
CHECKPOINT_VERSION = 1

_EVAL_CHUNK = 64

_HEAD_KIND = {
    "empathy": "regression_single",
    "distress": "regression_single",
    "multitask": "regression_dual",
    "emotion": "classify7",
}

_DEFAULT_SNAPSHOT = {
    "empathy": "pearson_empathy",
    "distress": "pearson_distress",
    "multitask": "pearson_avg",
    "emotion": "macro_f1",
}

_COMPATIBLE_SNAPSHOTS = {
    "empathy": {"pearson_empathy"},
    "distress": {"pearson_distress"},
    "multitask": {"pearson_empathy", "pearson_distress", "pearson_avg"},
    "emotion": {"macro_f1"},
}

# Single-task regression trains with batch 16, the joint and classification
# setups with batch 8.
_DEFAULT_BATCH = {"empathy": 16, "distress": 16, "multitask": 8, "emotion": 8}

_PRESET_LR = {"paper_faithful": 1e-5, "desk_scale": 1e-3}


@dataclass(frozen=True)
class TrainConfig:
    task: str
    epochs: int
    batch_size: int
    seed: int
    shuffle: bool
    snapshot_metric: str
    optimizer: AdamWConfig
    encoder: EncoderConfig
    preset: str
    vocab_max_size: int = 8000
    vocab_min_freq: int = 1

    def validate(self) -> None:
        if self.task not in TASKS:
            raise ValidationError(f"unknown task {self.task!r} (expected one of {', '.join(TASKS)})")
        if self.preset not in PRESETS:
            raise ValidationError(f"unknown preset {self.preset!r}")
        if self.epochs < 0:
            raise ValidationError(f"epochs must be >= 0, got {self.epochs}")
        if self.batch_size < 1:
            raise ValidationError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.snapshot_metric not in _COMPATIBLE_SNAPSHOTS[self.task]:
            raise ValidationError(
                f"snapshot metric {self.snapshot_metric!r} is incompatible with task {self.task!r}"
            )
        self.optimizer.validate()

    def to_dict(self) -> dict:
        return {
            "task": self.task,
            "epochs": self.epochs,
            "batch_size": self.batch_size,
            "seed": self.seed,
            "shuffle": self.shuffle,
            "snapshot_metric": self.snapshot_metric,
            "preset": self.preset,
            "vocab_max_size": self.vocab_max_size,
            "vocab_min_freq": self.vocab_min_freq,
            "optimizer": vars(self.optimizer).copy(),
            "encoder": vars(self.encoder).copy(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        return cls(
            task=d["task"],
            epochs=d["epochs"],
            batch_size=d["batch_size"],
            seed=d["seed"],
            shuffle=d["shuffle"],
            snapshot_metric=d["snapshot_metric"],
            preset=d["preset"],
            vocab_max_size=d.get("vocab_max_size", 8000),
            vocab_min_freq=d.get("vocab_min_freq", 1),
            optimizer=AdamWConfig(**d["optimizer"]),
            encoder=EncoderConfig(**d["encoder"]),
        )


def make_config(
    task: str,
    epochs: int,
    preset: str = "desk_scale",
    seed: int = 0,
    batch_size: int | None = None,
    shuffle: bool = True,
    snapshot_metric: str | None = None,
    optimizer: dict | None = None,
    encoder: dict | None = None,
    vocab_max_size: int = 8000,
    vocab_min_freq: int = 1,
) -> TrainConfig:
    """Resolve a full TrainConfig from a preset plus selective overrides.

    ``desk_scale`` (default) uses lr 1e-3 so the randomly initialized micro
    encoder trains in minutes; ``paper_faithful`` keeps the same micro encoder
    but the finetuning-style lr 1e-5 and per-task batch sizes.
    """
    if task not in TASKS:
        raise ValidationError(f"unknown task {task!r} (expected one of {', '.join(TASKS)})")
    if preset not in PRESETS:
        raise ValidationError(f"unknown preset {preset!r} (expected one of {', '.join(PRESETS)})")
    opt_kwargs = {"lr": _PRESET_LR[preset], **(optimizer or {})}
    enc_kwargs = {"head_kind": _HEAD_KIND[task], **(encoder or {})}
    cfg = TrainConfig(
        task=task,
        epochs=epochs,
        batch_size=batch_size if batch_size is not None else _DEFAULT_BATCH[task],
        seed=seed,
        shuffle=shuffle,
        snapshot_metric=snapshot_metric if snapshot_metric is not None else _DEFAULT_SNAPSHOT[task],
        optimizer=AdamWConfig(**opt_kwargs),
        encoder=EncoderConfig(**enc_kwargs),
        preset=preset,
        vocab_max_size=vocab_max_size,
        vocab_min_freq=vocab_min_freq,
    )
    cfg.validate()
    return cfg


@dataclass
class EpochStats:
    epoch: int
    train_loss: float
    dev: dict[str, float]


@dataclass
class TrainReport:
    task: str
    seed: int
    snapshot_metric: str
    epochs: list[EpochStats] = field(default_factory=list)
    best_epoch: int | None = None
    best_metric: float | None = None
    wall_time_s: float = 0.0

    def to_dict(self) -> dict:
        return {
            "task": self.task,
            "seed": self.seed,
            "snapshot_metric": self.snapshot_metric,
            "best_epoch": self.best_epoch,
            "best_metric": self.best_metric,
            "wall_time_s": self.wall_time_s,
            "epochs": [
                {"epoch": e.epoch, "train_loss": e.train_loss, "dev": e.dev} for e in self.epochs
            ],
        }


@dataclass
class Checkpoint:
    version: int
    config: TrainConfig
    vocab_hash: str
    params: Parameters
    best_metric: float | None
    best_epoch: int | None
    seed: int


def make_batches(d: Dataset, batch_size: int, shuffle: bool, seed: int, epoch: int) -> list[list[int]]:
    """Chunk a (possibly reshuffled) index permutation into batches.

    The permutation seed mixes the run seed with the epoch index, so every
    epoch reshuffles differently but reproducibly. The last batch may be
    short. shuffle=False keeps the original order.
    """
    n = len(d.records)
    if n == 0:
        raise ValidationError("cannot batch an empty dataset")
    if batch_size < 1:
        raise ValidationError(f"batch_size must be >= 1, got {batch_size}")
    if shuffle:
        rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence([seed, epoch])))
        order = rng.permutation(n)
    else:
        order = np.arange(n)
    return [order[i : i + batch_size].tolist() for i in range(0, n, batch_size)]


def encode_dataset(d: Dataset, vocab: Vocab, max_len: int) -> tuple[np.ndarray, np.ndarray]:
    seqs = [encode(r.text, vocab, max_len) for r in d.records]
    ids = np.array([s.ids for s in seqs], dtype=np.int64)
    lengths = np.array([s.true_length for s in seqs], dtype=np.int64)
    return ids, lengths


def _require_labels(d: Dataset, task: str, role: str) -> None:
    for r in d.records:
        if task in ("empathy", "multitask") and r.empathy is None:
            raise ValidationError(f"{role} record {r.id!r} has no empathy score (needed for {task})")
        if task in ("distress", "multitask") and r.distress is None:
            raise ValidationError(f"{role} record {r.id!r} has no distress score (needed for {task})")
        if task == "emotion" and r.emotion is None:
            raise ValidationError(f"{role} record {r.id!r} has no emotion label")


def _targets(d: Dataset, task: str) -> dict[str, np.ndarray]:
    out: dict[str, np.ndarray] = {}
    if task in ("empathy", "multitask"):
        out["empathy"] = np.array([r.empathy for r in d.records], dtype=np.float64)
    if task in ("distress", "multitask"):
        out["distress"] = np.array([r.distress for r in d.records], dtype=np.float64)
    if task == "emotion":
        out["emotion"] = np.array([emotion_id(r.emotion) for r in d.records], dtype=np.int64)
    return out


def _batch_loss(pnodes, enc_cfg, cfg, ids, lengths, targets, idxs, tape, train_mode=True):
    cls = forward(pnodes, enc_cfg, ids[idxs], lengths[idxs], tape, train_mode=train_mode)
    out = head_apply(pnodes, enc_cfg, cls, tape)
    if cfg.task == "empathy":
        return loss_mse(tape, out, targets["empathy"][idxs])
    if cfg.task == "distress":
        return loss_mse(tape, out, targets["distress"][idxs])
    if cfg.task == "multitask":
        return loss_multitask(tape, out[0], out[1], targets["empathy"][idxs], targets["distress"][idxs])
    return loss_cross_entropy(tape, out, targets["emotion"][idxs])


def _model_outputs(params, enc_cfg, ids, lengths):
    """Eval-mode head outputs over a whole dataset, chunked."""
    outputs = []
    for start in range(0, ids.shape[0], _EVAL_CHUNK):
        outputs.append(run_model(params, enc_cfg, ids[start : start + _EVAL_CHUNK], lengths[start : start + _EVAL_CHUNK]))
    if isinstance(outputs[0], tuple):
        return (
            np.concatenate([o[0] for o in outputs]),
            np.concatenate([o[1] for o in outputs]),
        )
    return np.concatenate(outputs)


def _dev_metrics(params, enc_cfg, task, dev_ids, dev_lengths, dev_targets) -> dict[str, float]:
    out = _model_outputs(params, enc_cfg, dev_ids, dev_lengths)
    if task == "empathy":
        return {"pearson_empathy": M.pearson(out, dev_targets["empathy"])}
    if task == "distress":
        return {"pearson_distress": M.pearson(out, dev_targets["distress"])}
    if task == "multitask":
        pe = M.pearson(out[0], dev_targets["empathy"])
        pd = M.pearson(out[1], dev_targets["distress"])
        return {"pearson_empathy": pe, "pearson_distress": pd, "pearson_avg": (pe + pd) / 2.0}
    pred_labels = np.argmax(out, axis=1)
    macro, _ = M.macro_f1(pred_labels, dev_targets["emotion"])
    return {"macro_f1": macro, "accuracy": M.accuracy(pred_labels, dev_targets["emotion"])}


def train(train_set: Dataset, dev_set: Dataset, vocab: Vocab, cfg: TrainConfig) -> tuple[Checkpoint, TrainReport]:
    """Run the configured number of epochs and keep the best-on-dev snapshot.

    Ties on the snapshot metric keep the earlier epoch. With epochs=0 the
    checkpoint holds the untouched initialization and no metric.
    """
    cfg.validate()
    _require_labels(train_set, cfg.task, "train")
    _require_labels(dev_set, cfg.task, "dev")
    enc_cfg = replace(cfg.encoder, vocab_size=len(vocab), head_kind=_HEAD_KIND[cfg.task])
    enc_cfg.validate()

    started = time.perf_counter()
    ids, lengths = encode_dataset(train_set, vocab, enc_cfg.max_len)
    dev_ids, dev_lengths = encode_dataset(dev_set, vocab, enc_cfg.max_len)
    targets = _targets(train_set, cfg.task)
    dev_targets = _targets(dev_set, cfg.task)

    params = init_params(enc_cfg, cfg.seed)
    optimizer = AdamW(cfg.optimizer)
    report = TrainReport(task=cfg.task, seed=cfg.seed, snapshot_metric=cfg.snapshot_metric)

    best_params = {name: arr.copy() for name, arr in params.items()}
    best_metric: float | None = None
    best_epoch: int | None = None

    for epoch in range(cfg.epochs):
        batches = make_batches(train_set, cfg.batch_size, cfg.shuffle, cfg.seed, epoch)
        loss_sum = 0.0
        for batch_idx, idxs in enumerate(batches):
            rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence([cfg.seed, epoch, batch_idx])))
            tape = Tape(rng=rng)
            pnodes = wrap_params(params)
            loss = _batch_loss(pnodes, enc_cfg, cfg, ids, lengths, targets, idxs, tape)
            tape.backward(loss)
            optimizer.step(params, collect_grads(pnodes, params))
            loss_sum += float(loss.value) * len(idxs)

        dev = _dev_metrics(params, enc_cfg, cfg.task, dev_ids, dev_lengths, dev_targets)
        report.epochs.append(EpochStats(epoch=epoch, train_loss=loss_sum / len(train_set), dev=dev))
        metric = dev[cfg.snapshot_metric]
        if best_metric is None or metric > best_metric:
            best_metric = metric
            best_epoch = epoch
            best_params = {name: arr.copy() for name, arr in params.items()}

    report.best_epoch = best_epoch
    report.best_metric = best_metric
    report.wall_time_s = time.perf_counter() - started

    ckpt = Checkpoint(
        version=CHECKPOINT_VERSION,
        config=replace(cfg, encoder=enc_cfg),
        vocab_hash=vocab_hash(vocab),
        params=best_params,
        best_metric=best_metric,
        best_epoch=best_epoch,
        seed=cfg.seed,
    )
    return ckpt, report


def predict(
    ckpt: Checkpoint, d: Dataset, vocab: Vocab, clamp: bool = False
) -> RegressionPredictions | ClassificationPredictions:
    """Eval-mode predictions over a dataset in its original record order.

    ``clamp`` clips regression outputs into the [1, 7] score range; raw
    outputs are the default.
    """
    if vocab_hash(vocab) != ckpt.vocab_hash:
        raise ValidationError("vocabulary hash does not match the one used to train this checkpoint")
    enc_cfg = ckpt.config.encoder
    ids, lengths = encode_dataset(d, vocab, enc_cfg.max_len)
    rec_ids = [r.id for r in d.records]
    out = _model_outputs(ckpt.params, enc_cfg, ids, lengths)
    task = ckpt.config.task

    def _clip(values: np.ndarray) -> np.ndarray:
        return np.clip(values, 1.0, 7.0) if clamp else values

    if task == "empathy":
        return RegressionPredictions(ids=rec_ids, empathy=_clip(out))
    if task == "distress":
        return RegressionPredictions(ids=rec_ids, distress=_clip(out))
    if task == "multitask":
        return RegressionPredictions(ids=rec_ids, empathy=_clip(out[0]), distress=_clip(out[1]))
    probs = softmax(out, axis=1)
    labels = [EMOTIONS[int(i)] for i in np.argmax(probs, axis=1)]
    return ClassificationPredictions(ids=rec_ids, scores=probs, labels=labels)


@dataclass
class SweepEntry:
    seed: int
    best_metric: float
    best_epoch: int


@dataclass
class SweepReport:
    metric: str
    entries: list[SweepEntry]
    mean: float
    std: float
    min: float
    max: float

    def to_dict(self) -> dict:
        return {
            "metric": self.metric,
            "entries": [vars(e).copy() for e in self.entries],
            "mean": self.mean,
            "std": self.std,
            "min": self.min,
            "max": self.max,
        }


def seed_sweep(
    train_set: Dataset, dev_set: Dataset, vocab: Vocab, cfg: TrainConfig, seeds: list[int]
) -> SweepReport:
    """Train once per seed and summarize the best dev metrics.

    ``std`` is the population standard deviation of the per-seed values.
    """
    if len(seeds) < 2:
        raise ValidationError("seed sweep needs at least 2 seeds")
    if cfg.epochs < 1:
        raise ValidationError("seed sweep needs at least 1 epoch")
    entries = []
    for seed in seeds:
        _, report = train(train_set, dev_set, vocab, replace(cfg, seed=seed))
        entries.append(SweepEntry(seed=seed, best_metric=report.best_metric, best_epoch=report.best_epoch))
    values = np.array([e.best_metric for e in entries], dtype=np.float64)
    return SweepReport(
        metric=cfg.snapshot_metric,
        entries=entries,
        mean=float(values.mean()),
        std=float(values.std()),
        min=float(values.min()),
        max=float(values.max()),
    )


def save_checkpoint(ckpt: Checkpoint, path) -> None:
    """Write the binary checkpoint format.

    Layout: magic ``MTAF``, little-endian u32 format version, little-endian
    u64 JSON header length, the UTF-8 JSON header (config echo, vocab hash,
    best metric/epoch, seed, tensor manifest with name/shape/offset), then the
    tensors as raw little-endian float64 in manifest order. Offsets are
    relative to the start of the tensor section.
    """
    manifest = []
    blobs = []
    offset = 0
    for name, arr in ckpt.params.items():
        blob = np.ascontiguousarray(arr, dtype="<f8").tobytes()
        manifest.append({"name": name, "shape": list(arr.shape), "offset": offset})
        blobs.append(blob)
        offset += len(blob)
    header = {
        "version": ckpt.version,
        "config": ckpt.config.to_dict(),
        "vocab_hash": ckpt.vocab_hash,
        "best_metric": ckpt.best_metric,
        "best_epoch": ckpt.best_epoch,
        "seed": ckpt.seed,
        "tensors": manifest,
    }
    header_bytes = json.dumps(header, sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(CHECKPOINT_MAGIC)
        fh.write(struct.pack("<I", CHECKPOINT_VERSION))
        fh.write(struct.pack("<Q", len(header_bytes)))
        fh.write(header_bytes)
        for blob in blobs:
            fh.write(blob)


def load_checkpoint(path) -> Checkpoint:
    with open(path, "rb") as fh:
        raw = fh.read()
    if len(raw) < 16 or raw[:4] != CHECKPOINT_MAGIC:
        raise FormatError(f"{path}: not a checkpoint file (bad magic)")
    (version,) = struct.unpack_from("<I", raw, 4)
    if version != CHECKPOINT_VERSION:
        raise FormatError(f"{path}: unsupported checkpoint version {version}")
    (header_len,) = struct.unpack_from("<Q", raw, 8)
    header_end = 16 + header_len
    if len(raw) < header_end:
        raise FormatError(f"{path}: truncated checkpoint header")
    try:
        header = json.loads(raw[16:header_end].decode("utf-8"))
        config = TrainConfig.from_dict(header["config"])
        manifest = header["tensors"]
    except (json.JSONDecodeError, UnicodeDecodeError, KeyError, TypeError) as exc:
        raise FormatError(f"{path}: corrupt checkpoint header: {exc}") from None

    data = raw[header_end:]
    expected = sum(int(np.prod(entry["shape"])) * 8 for entry in manifest)
    if len(data) != expected:
        raise FormatError(f"{path}: tensor section is {len(data)} bytes, expected {expected}")
    params: Parameters = {}
    for entry in manifest:
        shape = tuple(entry["shape"])
        nbytes = int(np.prod(shape)) * 8
        start = entry["offset"]
        chunk = data[start : start + nbytes]
        if len(chunk) != nbytes:
            raise FormatError(f"{path}: truncated tensor {entry['name']!r}")
        params[entry["name"]] = np.frombuffer(chunk, dtype="<f8").reshape(shape).copy()
    return Checkpoint(
        version=version,
        config=config,
        vocab_hash=header["vocab_hash"],
        params=params,
        best_metric=header["best_metric"],
        best_epoch=header["best_epoch"],
        seed=header["seed"],
    )
