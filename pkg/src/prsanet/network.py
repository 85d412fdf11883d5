"""The proposal-generation network.

Snippet features are embedded into per-snippet slots, refined by a stack of
banded-attention iterations fused across region scales, then mapped by a
dual-branch head to per-snippet boundary probabilities and dense per-anchor
confidence maps.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple, Optional

import torch
import torch.nn.functional as F
from torch import Tensor, nn

from .attention import (
    AttentionBand,
    RegionAttention,
    SimilarityAttention,
    apply_band,
    fuse_bands,
    normalize_band,
)


@dataclass(frozen=True)
class ModelConfig:
    """Architecture hyperparameters."""

    in_channels: int
    c_input: int = 256
    c_embed: int = 256
    c_out: int = 256
    scales: tuple[int, ...] = (4, 8)
    t_iter: int = 2
    attention_variant: str = "region"
    fusion: str = "mean"
    residual: bool = False
    softmax_axis: str = "sources"
    max_duration: int = 64
    k_bins: int = 16
    head_hidden: int = 128

    def __post_init__(self):
        if min(self.in_channels, self.c_input, self.c_embed, self.c_out) < 1:
            raise ValueError("channel sizes must be positive")
        if not self.scales or min(self.scales) < 1:
            raise ValueError("scales must be a non-empty set of positive ints")
        if self.t_iter < 1 or self.max_duration < 1 or self.k_bins < 1:
            raise ValueError("t_iter, max_duration and k_bins must be >= 1")
        if self.attention_variant not in ("region", "similarity"):
            raise ValueError(f"unknown attention variant {self.attention_variant!r}")
        if self.fusion not in ("mean", "sum"):
            raise ValueError(f"unknown fusion mode {self.fusion!r}")
        if self.softmax_axis not in ("sources", "targets"):
            raise ValueError(f"unknown softmax axis {self.softmax_axis!r}")

    def to_dict(self) -> dict:
        d = dict(self.__dict__)
        d["scales"] = list(self.scales)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        d = dict(d)
        d["scales"] = tuple(d["scales"])
        return cls(**d)


class NetworkOutputs(NamedTuple):
    p_start: Tensor  # (B, L)
    p_end: Tensor  # (B, L)
    m_cls: Tensor  # (B, D, L)
    m_com: Tensor  # (B, D, L)


def position_encoding(length: int, channels: int, device=None, dtype=None) -> Tensor:
    """Fixed sinusoidal positional embedding, (channels, length) layout."""
    position = torch.arange(length, dtype=torch.float64)
    half = (channels + 1) // 2
    freq = torch.exp(-math.log(10000.0) * torch.arange(half, dtype=torch.float64) / half)
    angles = freq[:, None] * position[None, :]
    pe = torch.zeros(channels, length, dtype=torch.float64)
    pe[0::2] = torch.sin(angles)[: (channels + 1) // 2]
    pe[1::2] = torch.cos(angles)[: channels // 2]
    return pe.to(device=device, dtype=dtype if dtype is not None else torch.float32)


def anchor_grid(max_duration: int, length: int, device=None) -> Tensor:
    """(D, L) validity of anchors (d, l) covering snippets [l, l+d).

    Anchor (d, l), d in 1..max_duration, is valid iff l + d <= length.
    """
    if max_duration < 1:
        raise ValueError("max_duration must be >= 1")
    durations = torch.arange(1, max_duration + 1, device=device)
    starts = torch.arange(length, device=device)
    return (starts[None, :] + durations[:, None]) <= length


class InputEmbedding(nn.Module):
    """Channel transform + temporal context conv + positional embedding."""

    def __init__(self, in_channels: int, c_input: int, c_embed: int):
        super().__init__()
        self.channel_proj = nn.Conv1d(in_channels, c_input, kernel_size=1)
        self.temporal = nn.Conv1d(c_input, c_embed, kernel_size=3, stride=1, padding=1)
        self.c_embed = c_embed

    def forward(self, x: Tensor) -> Tensor:
        h = F.relu(self.temporal(self.channel_proj(x)))
        return h + position_encoding(
            x.shape[2], self.c_embed, device=x.device, dtype=x.dtype
        )


class PRSlotIteration(nn.Module):
    """One slot-refinement step: per-scale attention, fusion, update.

    Each configured region scale gets its own score module; the normalized
    per-scale attentions are fused elementwise and applied to a value
    projection of the incoming slots, followed by batch normalization.
    Parameters are not shared across iterations.
    """

    def __init__(self, cfg: ModelConfig):
        super().__init__()
        variant = RegionAttention if cfg.attention_variant == "region" else SimilarityAttention
        self.scorers = nn.ModuleList(
            [variant(cfg.c_embed, cfg.c_out, s) for s in sorted(cfg.scales)]
        )
        self.value = nn.Conv1d(cfg.c_embed, cfg.c_embed, kernel_size=1)
        self.norm = nn.BatchNorm1d(cfg.c_embed)
        self.fusion = cfg.fusion
        self.softmax_axis = cfg.softmax_axis
        self.residual = cfg.residual

    def attention_bands(self, slots: Tensor) -> list[AttentionBand]:
        return [
            normalize_band(scorer(slots), scorer.scale, self.softmax_axis)
            for scorer in self.scorers
        ]

    def fused_band(self, slots: Tensor) -> AttentionBand:
        return fuse_bands(self.attention_bands(slots), self.fusion)

    def attend(self, slots: Tensor) -> Tensor:
        band = self.fused_band(slots)
        return apply_band(band.weights, self.value(slots), band.scale)

    def forward(self, slots: Tensor) -> Tensor:
        updated = self.norm(self.attend(slots))
        if self.residual:
            updated = updated + slots
        return updated


def align_proposal_features(slots: Tensor, max_duration: int, k_bins: int) -> Tensor:
    """Interpolated per-anchor features, (B, D, L, C).

    The anchor (d, l) is summarized by linearly interpolating the slots at
    ``k_bins`` points spread uniformly over [l, l+d-1] and averaging them;
    a single bin samples the midpoint.  Invalid anchors are zeroed.
    """
    if k_bins < 1:
        raise ValueError("k_bins must be >= 1")
    batch, channels, length = slots.shape
    if k_bins == 1:
        grid = torch.tensor([0.5], dtype=slots.dtype, device=slots.device)
    else:
        grid = torch.linspace(0.0, 1.0, k_bins, dtype=slots.dtype, device=slots.device)
    starts = torch.arange(length, dtype=slots.dtype, device=slots.device)
    per_duration = []
    for d in range(1, max_duration + 1):
        points = starts[:, None] + (d - 1) * grid[None, :]  # (L, k)
        points = points.clamp(0.0, length - 1)
        lo = points.floor().long().clamp(0, length - 1)
        hi = (lo + 1).clamp(0, length - 1)
        w_hi = (points - lo.to(points.dtype)).clamp(0.0, 1.0)
        flat_lo = slots.index_select(2, lo.reshape(-1)).view(batch, channels, length, k_bins)
        flat_hi = slots.index_select(2, hi.reshape(-1)).view(batch, channels, length, k_bins)
        sampled = flat_lo * (1.0 - w_hi) + flat_hi * w_hi
        per_duration.append(sampled.mean(dim=3))  # (B, C, L)
    features = torch.stack(per_duration, dim=2)  # (B, C, D, L)
    valid = anchor_grid(max_duration, length, device=slots.device)
    features = features * valid.to(features.dtype)
    return features.permute(0, 2, 3, 1)


class BoundaryHead(nn.Module):
    """Per-snippet start/end probabilities from the final slots."""

    def __init__(self, c_embed: int):
        super().__init__()
        self.proj = nn.Conv1d(c_embed, 2, kernel_size=1)

    def forward(self, slots: Tensor) -> tuple[Tensor, Tensor]:
        logits = torch.sigmoid(self.proj(slots))
        return logits[:, 0], logits[:, 1]


class ConfidenceHead(nn.Module):
    """Two-layer anchor scorer: C -> hidden -> 1 with logistic output."""

    def __init__(self, c_in: int, hidden: int):
        super().__init__()
        self.fc1 = nn.Linear(c_in, hidden)
        self.fc2 = nn.Linear(hidden, 1)

    def forward(self, features: Tensor) -> Tensor:
        return torch.sigmoid(self.fc2(F.relu(self.fc1(features)))).squeeze(-1)


class PRSANet(nn.Module):
    """Full pipeline: embedding, pyramid slot iterations, dual-branch head."""

    def __init__(self, cfg: ModelConfig):
        super().__init__()
        self.cfg = cfg
        self.embedding = InputEmbedding(cfg.in_channels, cfg.c_input, cfg.c_embed)
        self.iterations = nn.ModuleList(
            [PRSlotIteration(cfg) for _ in range(cfg.t_iter)]
        )
        self.boundary = BoundaryHead(cfg.c_embed)
        self.cls_head = ConfidenceHead(cfg.c_embed, cfg.head_hidden)
        self.com_head = ConfidenceHead(cfg.c_embed, cfg.head_hidden)
        self._zero_biases()

    def _zero_biases(self):
        for module in self.modules():
            if isinstance(module, (nn.Conv1d, nn.Linear)) and module.bias is not None:
                nn.init.zeros_(module.bias)

    def slots(self, x: Tensor) -> Tensor:
        """Final slot state after all refinement iterations, (B, C_embed, L)."""
        u = self.embedding(x)
        for iteration in self.iterations:
            u = iteration(u)
        return u

    def forward(self, x: Tensor, valid_mask: Optional[Tensor] = None) -> NetworkOutputs:
        """Score one batch of (B, C, L) snippet features.

        ``valid_mask`` (B, L) marks real snippets in zero-padded windows;
        boundary scores at padded positions and confidences of anchors
        reaching into padding are forced to zero.
        """
        u = self.slots(x)
        p_start, p_end = self.boundary(u)
        features = align_proposal_features(u, self.cfg.max_duration, self.cfg.k_bins)
        m_cls = self.cls_head(features)
        m_com = self.com_head(features)

        length = x.shape[2]
        grid = anchor_grid(self.cfg.max_duration, length, device=x.device)
        anchor_mask = grid[None].to(x.dtype)
        if valid_mask is not None:
            valid = valid_mask.to(x.dtype)
            p_start = p_start * valid
            p_end = p_end * valid
            # padding is a suffix, so anchors are valid up to the occupied span
            valid_len = valid_mask.sum(dim=1)
            durations = torch.arange(1, self.cfg.max_duration + 1, device=x.device)
            starts = torch.arange(length, device=x.device)
            anchor_mask = (
                (starts[None, None, :] + durations[None, :, None])
                <= valid_len[:, None, None]
            ).to(x.dtype)
        m_cls = m_cls * anchor_mask
        m_com = m_com * anchor_mask
        return NetworkOutputs(p_start, p_end, m_cls, m_com)
