"""Training: sample assembly, the optimization loop, logging and resume.

Videos are expanded into fixed-length training samples (overlapping windows
or one rescaled sequence each) with boundary and anchor-map labels attached.
The loop is deterministic under the run seed: model init, data order and
every other random choice derive from named substreams, so an interrupted
run resumed from a checkpoint reproduces the uninterrupted trajectory.
"""

from __future__ import annotations

import hashlib
import json
import os
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Optional, Union

import numpy as np
import torch

from .checkpoint import Checkpoint, restore_optimizer
from .config import RunConfig
from .data import (
    DatasetManifest,
    SnippetFeatureSequence,
    load_feature_sequence,
    rescale_sequence,
    window_instances,
    window_sequence,
)
from .labels import boundary_labels, proposal_label_map
from .losses import (
    LossBreakdown,
    boundary_loss,
    proposal_loss,
    total_loss,
    weight_penalty,
)
from .network import ModelConfig, PRSANet
from .seeding import derive_seed, substream
from .tensorfile import read_matrix, write_matrix


class TrainingDiverged(RuntimeError):
    """Loss became non-finite; carries the offending epoch and step."""

    def __init__(self, epoch: int, step: int):
        super().__init__(f"non-finite loss at epoch {epoch}, step {step}")
        self.epoch = epoch
        self.step = step


@dataclass
class TrainSample:
    """One fixed-length window with labels, ready for batching."""

    video_id: str
    features: np.ndarray  # (L, C) float32
    mask: np.ndarray  # (L,) bool
    g_start: np.ndarray  # (L,) float32
    g_end: np.ndarray  # (L,) float32
    g_map: np.ndarray  # (D, L) float32
    map_valid: np.ndarray  # (D, L) bool


def model_config(cfg: RunConfig, in_channels: int) -> ModelConfig:
    return ModelConfig(
        in_channels=in_channels,
        c_input=cfg.c_input,
        c_embed=cfg.c_embed,
        c_out=cfg.c_out,
        scales=cfg.scales,
        t_iter=cfg.t_iter,
        attention_variant=cfg.attention_variant,
        fusion=cfg.fusion,
        residual=cfg.residual,
        softmax_axis=cfg.softmax_axis,
        max_duration=cfg.max_duration,
        k_bins=cfg.k_bins,
        head_hidden=cfg.head_hidden,
    )


def build_model(cfg: ModelConfig, seed: int) -> PRSANet:
    """Construct a model with deterministic initialization."""
    torch.manual_seed(derive_seed(seed, "model-init"))
    return PRSANet(cfg)


def prepare_sequences(
    manifest: DatasetManifest, cfg: RunConfig
) -> list[tuple[str, SnippetFeatureSequence, list]]:
    """Load and window/rescale every video, pairing each piece with its
    window-local ground-truth instances."""
    prepared = []
    for record, path in manifest.entries:
        try:
            seq = load_feature_sequence(
                path, snippet_interval=cfg.snippet_interval, fps=record.fps
            )
        except FileNotFoundError:
            raise FileNotFoundError(
                f"feature file for video {record.id!r} missing: {path}"
            ) from None
        if manifest.mode == "rescaled":
            seq = rescale_sequence(seq, cfg.sequence_length)
            prepared.append((record.id, seq, list(record.instances)))
        else:
            for win in window_sequence(seq, cfg.sequence_length, cfg.window_stride):
                t0 = win.origin_offset * win.time_per_snippet
                t1 = (win.origin_offset + int(win.mask().sum())) * win.time_per_snippet
                local = window_instances(record.instances, t0, t1)
                prepared.append((record.id, win, local))
    return prepared


def _map_cache_path(video_id: str, seq: SnippetFeatureSequence, instances, max_duration: int) -> Optional[Path]:
    cache_dir = os.environ.get("PRSLOT_CACHE_DIR")
    if not cache_dir:
        return None
    key = repr((
        video_id, seq.origin_offset, seq.length, max_duration,
        round(seq.time_per_snippet, 9),
        [(round(i.t_start, 9), round(i.t_end, 9)) for i in instances],
    ))
    digest = hashlib.sha256(key.encode()).hexdigest()[:24]
    return Path(cache_dir) / f"gmap_{digest}.prsf"


def build_samples(manifest: DatasetManifest, cfg: RunConfig) -> list[TrainSample]:
    samples = []
    for video_id, seq, instances in prepare_sequences(manifest, cfg):
        length = seq.length
        mask = seq.mask()
        blabels = boundary_labels(instances, length, seq.time_per_snippet)

        cache_path = _map_cache_path(video_id, seq, instances, cfg.max_duration)
        if cache_path is not None and cache_path.exists():
            g_map = read_matrix(cache_path, cfg.max_duration, length)
        else:
            g_map = proposal_label_map(
                instances, cfg.max_duration, length, seq.time_per_snippet
            ).g_map.astype(np.float32)
            if cache_path is not None:
                cache_path.parent.mkdir(parents=True, exist_ok=True)
                write_matrix(cache_path, g_map)

        valid_len = int(mask.sum())
        durations = np.arange(1, cfg.max_duration + 1)
        map_valid = (np.arange(length)[None, :] + durations[:, None]) <= valid_len
        samples.append(
            TrainSample(
                video_id=video_id,
                features=seq.features.astype(np.float32),
                mask=mask,
                g_start=blabels.g_start.astype(np.float32),
                g_end=blabels.g_end.astype(np.float32),
                g_map=np.where(map_valid, g_map, 0.0).astype(np.float32),
                map_valid=map_valid,
            )
        )
    return samples


def _stack_batch(samples: list[TrainSample], device=None):
    feats = torch.from_numpy(np.stack([s.features.T for s in samples]))  # (B, C, L)
    mask = torch.from_numpy(np.stack([s.mask for s in samples]))
    g_start = torch.from_numpy(np.stack([s.g_start for s in samples]))
    g_end = torch.from_numpy(np.stack([s.g_end for s in samples]))
    g_map = torch.from_numpy(np.stack([s.g_map for s in samples]))
    map_valid = torch.from_numpy(np.stack([s.map_valid for s in samples]))
    return feats, mask, g_start, g_end, g_map, map_valid


def batch_losses(
    model: PRSANet,
    batch,
    cfg: RunConfig,
) -> tuple[torch.Tensor, LossBreakdown]:
    """Forward one batch and assemble the full training objective."""
    feats, mask, g_start, g_end, g_map, map_valid = batch
    outputs = model(feats, valid_mask=mask)
    flat_mask = mask.reshape(-1)
    l_b = boundary_loss(
        outputs.p_start.reshape(-1)[flat_mask],
        outputs.p_end.reshape(-1)[flat_mask],
        g_start.reshape(-1)[flat_mask],
        g_end.reshape(-1)[flat_mask],
        cfg.label_binarize_thresh,
    )
    l_p, l_cls, l_com = proposal_loss(
        outputs.m_cls,
        outputs.m_com,
        g_map,
        map_valid,
        cfg.lambda_com,
        cfg.map_binarize_thresh,
    )
    penalty = weight_penalty(model.parameters())
    return total_loss(l_b, l_p, penalty, l_cls, l_com, cfg.lambda_reg)


def _epoch_lr(schedule, epoch: int) -> float:
    done = 0
    for stage_epochs, lr in schedule:
        if epoch < done + stage_epochs:
            return lr
        done += stage_epochs
    return schedule[-1][1]


@dataclass
class EpochRecord:
    epoch: int
    breakdown: LossBreakdown
    wall_time_s: float

    def to_json(self) -> str:
        rec = {"epoch": self.epoch}
        rec.update(self.breakdown.to_dict())
        rec["wall_time_s"] = round(self.wall_time_s, 4)
        return json.dumps(rec, sort_keys=True)


def train(
    model: PRSANet,
    samples: list[TrainSample],
    cfg: RunConfig,
    *,
    epochs: Optional[int] = None,
    start_epoch: int = 0,
    optimizer: Optional[torch.optim.Optimizer] = None,
    log_path: Optional[Union[str, Path]] = None,
    epoch_callback: Optional[Callable[[EpochRecord], None]] = None,
) -> tuple[list[EpochRecord], torch.optim.Optimizer]:
    """Run the optimization loop over flattened window samples.

    Data order for epoch e derives from substream(seed, "shuffle-<e>") so a
    resumed run sees exactly the batches the uninterrupted one would have.
    """
    if not samples:
        raise ValueError("training requires a non-empty sample list")
    total_epochs = cfg.epochs if epochs is None else epochs
    if optimizer is None:
        optimizer = torch.optim.Adam(model.parameters(), lr=_epoch_lr(cfg.lr_schedule, start_epoch))

    log_fp = open(log_path, "a") if log_path is not None else None
    records = []
    model.train()
    try:
        for epoch in range(start_epoch, total_epochs):
            lr = _epoch_lr(cfg.lr_schedule, epoch)
            for group in optimizer.param_groups:
                group["lr"] = lr
            order = substream(cfg.seed, f"shuffle-{epoch}").permutation(len(samples))
            tick = time.perf_counter()
            sums = np.zeros(6)
            steps = 0
            for lo in range(0, len(order), cfg.batch_size):
                chunk = [samples[i] for i in order[lo:lo + cfg.batch_size]]
                batch = _stack_batch(chunk)
                loss, breakdown = batch_losses(model, batch, cfg)
                if not np.isfinite(breakdown.total):
                    raise TrainingDiverged(epoch, steps)
                optimizer.zero_grad()
                loss.backward()
                optimizer.step()
                sums += [
                    breakdown.total, breakdown.boundary, breakdown.proposal,
                    breakdown.cls, breakdown.com, breakdown.norm,
                ]
                steps += 1
            mean = sums / max(steps, 1)
            record = EpochRecord(
                epoch=epoch,
                breakdown=LossBreakdown(*mean),
                wall_time_s=time.perf_counter() - tick,
            )
            records.append(record)
            if log_fp is not None:
                log_fp.write(record.to_json() + "\n")
                log_fp.flush()
            if epoch_callback is not None:
                epoch_callback(record)
    finally:
        if log_fp is not None:
            log_fp.close()
    return records, optimizer


def resume_training(
    model: PRSANet,
    ckpt: Checkpoint,
    samples: list[TrainSample],
    cfg: RunConfig,
    **kwargs,
) -> tuple[list[EpochRecord], torch.optim.Optimizer]:
    """Continue a run from a checkpoint that carries optimizer state."""
    optimizer = torch.optim.Adam(model.parameters(), lr=_epoch_lr(cfg.lr_schedule, ckpt.epoch))
    if ckpt.optimizer_state is not None:
        restore_optimizer(ckpt, model, optimizer)
    return train(
        model, samples, cfg,
        start_epoch=ckpt.epoch, optimizer=optimizer, **kwargs,
    )
