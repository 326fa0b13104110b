"""Training loop: plain SGD, batch size 1, plateau-halving learning rate.

The learning rate starts at 1e-4 and halves whenever four consecutive
epochs fail to improve the best validation loss seen so far (within a
small epsilon, since strict float comparison is noise-sensitive); the
stagnation counter resets on improvement and after each halving. The
parameter state achieving the best validation loss is checkpointed.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .autodiff import Graph, backward
from .data import Manifest
from .model import (
    ModelParams,
    PipelineConfig,
    init_model,
    prepare_inputs,
    utterance_loss,
)

CKPT_MAGIC = b"CKPT"
CKPT_VERSION = 1


@dataclass
class TrainConfig:
    max_epochs: int
    lr0: float = 1e-4
    plateau_patience: int = 4
    lr_factor: float = 0.5
    batch_size: int = 1
    seed: int = 0
    improvement_eps: float = 1e-8
    target_train_loss: float | None = None  # optional early exit for sanity runs

    def __post_init__(self):
        if self.max_epochs < 1:
            raise ValueError("max_epochs must be >= 1")
        if self.lr0 <= 0:
            raise ValueError("lr0 must be positive")
        if not (0 < self.lr_factor < 1):
            raise ValueError("lr_factor must lie in (0, 1)")
        if self.plateau_patience < 1:
            raise ValueError("plateau_patience must be >= 1")
        if self.batch_size != 1:
            raise ValueError("training runs one utterance at a time (batch_size 1)")

    def to_dict(self) -> dict:
        return {
            "max_epochs": self.max_epochs,
            "lr0": self.lr0,
            "plateau_patience": self.plateau_patience,
            "lr_factor": self.lr_factor,
            "batch_size": self.batch_size,
            "seed": self.seed,
            "improvement_eps": self.improvement_eps,
            "target_train_loss": self.target_train_loss,
        }


@dataclass
class EpochRecord:
    epoch: int
    train_loss: float
    val_loss: float
    lr: float  # rate used during this epoch

    def line(self) -> str:
        return f"{self.epoch},{self.train_loss:.8f},{self.val_loss:.8f},{self.lr:.10g}"


def save_epoch_records(path, records) -> None:
    Path(path).write_text("\n".join(r.line() for r in records) + "\n", encoding="utf-8")


def sgd_step(named_params, lr: float) -> None:
    """p <- p - lr * g for every trainable parameter; no momentum, no decay."""
    for name, t in named_params:
        if not t.requires_grad:
            continue
        if t.grad is None:
            raise ValueError(f"missing gradient for parameter '{name}'")
        t.data -= np.asarray(lr, dtype=t.data.dtype) * t.grad


class PlateauScheduler:
    """Halve the rate after `patience` consecutive non-improving epochs."""

    def __init__(self, lr0: float, patience: int = 4, factor: float = 0.5, eps: float = 1e-8):
        self.lr = lr0
        self.patience = patience
        self.factor = factor
        self.eps = eps
        self.best = np.inf
        self.stale = 0
        self.halvings = 0

    def update(self, val_loss: float) -> bool:
        """Feed one epoch's validation loss; True when a halving fired."""
        if val_loss < self.best - self.eps:
            self.best = val_loss
            self.stale = 0
            return False
        self.stale += 1
        if self.stale >= self.patience:
            self.lr *= self.factor
            self.halvings += 1
            self.stale = 0
            return True
        return False


def plateau_schedule(history, lr0: float = 1e-4, patience: int = 4, factor: float = 0.5, eps: float = 1e-8):
    """Replay a validation-loss history; returns the 1-based epochs after
    which a halving fired, plus the final learning rate."""
    sched = PlateauScheduler(lr0, patience=patience, factor=factor, eps=eps)
    events = [epoch for epoch, loss in enumerate(history, start=1) if sched.update(loss)]
    return events, sched.lr


# ---------------------------------------------------------------------------
# checkpoints
# ---------------------------------------------------------------------------


def save_checkpoint(path, named_arrays: dict, meta: dict | None = None) -> None:
    """Container of named float32 arrays; entries are sorted by name.

    Layout: magic "CKPT", u32 version, u32 entry count, then per entry a
    u16 name length, the UTF-8 name, u8 rank, one u32 per dimension, and
    the row-major float32 data. Metadata rides along as a reserved entry
    whose name embeds canonical JSON.
    """
    entries = dict(named_arrays)
    if meta is not None:
        blob = json.dumps(meta, sort_keys=True, separators=(",", ":"))
        entries[f"__meta={blob}"] = np.zeros((), dtype=np.float32)
    with open(path, "wb") as fh:
        fh.write(CKPT_MAGIC)
        fh.write(struct.pack("<II", CKPT_VERSION, len(entries)))
        for name in sorted(entries):
            arr = np.ascontiguousarray(entries[name], dtype="<f4")
            encoded = name.encode("utf-8")
            fh.write(struct.pack("<H", len(encoded)))
            fh.write(encoded)
            fh.write(struct.pack("<B", arr.ndim))
            for dim in arr.shape:
                fh.write(struct.pack("<I", dim))
            fh.write(arr.tobytes())


def load_checkpoint(path):
    """Returns (named arrays, meta dict or None); values are bit-exact."""
    blob = Path(path).read_bytes()
    if blob[:4] != CKPT_MAGIC:
        raise ValueError(f"{path}: bad checkpoint magic {blob[:4]!r}")
    version, count = struct.unpack_from("<II", blob, 4)
    if version != CKPT_VERSION:
        raise ValueError(f"{path}: unsupported checkpoint version {version}")
    offset = 12
    arrays: dict[str, np.ndarray] = {}
    meta = None
    for _ in range(count):
        (name_len,) = struct.unpack_from("<H", blob, offset)
        offset += 2
        name = blob[offset : offset + name_len].decode("utf-8")
        offset += name_len
        (rank,) = struct.unpack_from("<B", blob, offset)
        offset += 1
        dims = struct.unpack_from(f"<{rank}I", blob, offset) if rank else ()
        offset += 4 * rank
        size = int(np.prod(dims)) if rank else 1
        data = np.frombuffer(blob, dtype="<f4", count=size, offset=offset).reshape(dims)
        offset += 4 * size
        if name.startswith("__meta="):
            meta = json.loads(name[len("__meta=") :])
        else:
            arrays[name] = data.copy()
    if offset != len(blob):
        raise ValueError(f"{path}: {len(blob) - offset} trailing bytes after entries")
    return arrays, meta


def snapshot_params(params: ModelParams) -> dict:
    return {name: t.data.copy() for name, t in params.named()}


def restore_params(params: ModelParams, arrays: dict) -> None:
    named = dict(params.named())
    missing = set(named) - set(arrays)
    extra = set(arrays) - set(named)
    if missing or extra:
        raise ValueError(f"checkpoint mismatch: missing {sorted(missing)}, extra {sorted(extra)}")
    for name, t in named.items():
        if tuple(arrays[name].shape) != t.shape:
            raise ValueError(f"checkpoint entry '{name}' has shape {arrays[name].shape}, expected {t.shape}")
        t.data = arrays[name].astype(t.data.dtype).copy()


# ---------------------------------------------------------------------------
# training
# ---------------------------------------------------------------------------


@dataclass
class TrainResult:
    params: ModelParams  # final state after the last epoch
    best_state: dict  # parameter snapshot at the best validation loss
    best_epoch: int
    best_val_loss: float
    records: list


def mean_split_loss(params: ModelParams, cfg: PipelineConfig, records, inputs_cache) -> float:
    total = 0.0
    for record in records:
        loss = utterance_loss(params, cfg, record, inputs_cache[record.utterance_id])
        total += float(loss.data)
    return total / len(records)


def train(
    manifest: Manifest,
    model_cfg: PipelineConfig,
    cfg: TrainConfig,
    on_step=None,
    on_epoch=None,
) -> TrainResult:
    """One backward plus SGD step per utterance, in seeded shuffled order.

    Deterministic for a fixed seed: parameter init, the per-epoch shuffles,
    and every update replay identically across runs.
    """
    train_records = manifest.split("train")
    val_records = manifest.split("val")
    if not train_records:
        raise ValueError("train split is empty")
    if not val_records:
        raise ValueError("val split is empty")

    params = init_model(model_cfg)
    inputs_cache = {
        r.utterance_id: prepare_inputs(r, manifest, model_cfg)
        for r in train_records + val_records
    }

    shuffle_rng = np.random.default_rng(cfg.seed)
    sched = PlateauScheduler(
        cfg.lr0, patience=cfg.plateau_patience, factor=cfg.lr_factor, eps=cfg.improvement_eps
    )
    records: list[EpochRecord] = []
    best_state = snapshot_params(params)
    best_val = np.inf
    best_epoch = 0
    step = 0

    for epoch in range(1, cfg.max_epochs + 1):
        lr_used = sched.lr
        order = shuffle_rng.permutation(len(train_records))
        total = 0.0
        for idx in order:
            record = train_records[idx]
            graph = Graph()
            with graph:
                loss = utterance_loss(params, model_cfg, record, inputs_cache[record.utterance_id])
            backward(graph, loss)
            sgd_step(params.named(), lr_used)
            params.zero_grads()
            total += float(loss.data)
            step += 1
            if on_step is not None:
                on_step(step, params)
        train_loss = total / len(train_records)
        val_loss = mean_split_loss(params, model_cfg, val_records, inputs_cache)
        record_row = EpochRecord(epoch, train_loss, val_loss, lr_used)
        records.append(record_row)
        if on_epoch is not None:
            on_epoch(record_row)
        if val_loss < best_val - cfg.improvement_eps:
            best_val = val_loss
            best_epoch = epoch
            best_state = snapshot_params(params)
        sched.update(val_loss)
        if cfg.target_train_loss is not None and train_loss < cfg.target_train_loss:
            break

    return TrainResult(
        params=params,
        best_state=best_state,
        best_epoch=best_epoch,
        best_val_loss=float(best_val),
        records=records,
    )


def checkpoint_meta(model_cfg: PipelineConfig, cfg: TrainConfig, epoch: int, val_loss: float) -> dict:
    return {
        "pipeline": model_cfg.to_dict(),
        "train": cfg.to_dict(),
        "epoch": epoch,
        "val_loss": val_loss,
    }


def load_model_from_checkpoint(path):
    """Rebuild a model from a checkpoint written with its config echo."""
    arrays, meta = load_checkpoint(path)
    if meta is None or "pipeline" not in meta:
        raise ValueError(f"{path}: checkpoint carries no pipeline config")
    model_cfg = PipelineConfig.from_dict(meta["pipeline"])
    params = init_model(model_cfg)
    restore_params(params, arrays)
    return params, model_cfg, meta
