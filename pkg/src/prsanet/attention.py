"""Banded attention primitives.

Attention at region scale ``s`` is stored in band form: a (batch, L, 2s+1)
tensor whose entry (j, k) is the weight of source snippet ``j + k - s`` on
target snippet ``j``.  Everything outside the band is structurally zero, so
the dense L x L matrix never needs materializing; ``band_to_dense`` exists
for verification against the literal construction.

Two score producers share this representation: ``RegionAttention`` derives
scores from an encoder-decoder pair of banded convolutions over the slot
features, ``SimilarityAttention`` from scaled query-key dot products.
"""

from __future__ import annotations

from dataclasses import dataclass

import torch
import torch.nn.functional as F
from torch import Tensor, nn


def band_width(scale: int) -> int:
    return 2 * scale + 1


def band_valid_mask(length: int, scale: int, device=None) -> Tensor:
    """(L, 2s+1) mask of band entries whose source index falls in range."""
    k = torch.arange(band_width(scale), device=device)
    j = torch.arange(length, device=device)
    src = j[:, None] + k[None, :] - scale
    return (src >= 0) & (src < length)


@dataclass
class AttentionBand:
    """Column-stochastic banded attention at one region scale."""

    weights: Tensor  # (B, L, 2s+1)
    scale: int

    @property
    def length(self) -> int:
        return self.weights.shape[1]

    def valid_mask(self) -> Tensor:
        return band_valid_mask(self.length, self.scale, self.weights.device)

    def to_dense(self) -> Tensor:
        return band_to_dense(self.weights, self.scale)


def band_to_dense(weights: Tensor, scale: int) -> Tensor:
    """Expand (B, L, 2s+1) band weights into dense (B, L, L) matrices.

    ``dense[b, i, j]`` is the weight of source i on target j; entries with
    |i - j| > s are exactly zero.
    """
    batch, length, width = weights.shape
    dense = weights.new_zeros(batch, length, length)
    for k in range(width):
        offset = k - scale
        lo = max(0, -offset)
        hi = min(length, length - offset)
        if lo >= hi:
            continue
        j = torch.arange(lo, hi, device=weights.device)
        dense[:, j + offset, j] = weights[:, lo:hi, k]
    return dense


def transpose_band(band: Tensor, scale: int, fill: float = 0.0) -> Tensor:
    """Reindex a band so rows enumerate sources instead of targets.

    The map (j, k) -> (i, m) with i = j + k - s, m = j - i + s is an
    involution; out-of-range positions take ``fill``.
    """
    batch, length, width = band.shape
    flipped = band.flip(-1)
    out = band.new_full(band.shape, fill)
    for m in range(width):
        offset = m - scale
        lo = max(0, -offset)
        hi = min(length, length - offset)
        if lo >= hi:
            continue
        out[:, lo:hi, m] = flipped[:, lo + offset:hi + offset, m]
    return out


def normalize_band(raw: Tensor, scale: int, axis: str = "sources") -> AttentionBand:
    """Masked softmax of raw band scores.

    ``sources`` (the default) normalizes each target's incoming weights so
    band rows sum to 1 over their valid entries; ``targets`` normalizes each
    source's outgoing weights instead.
    """
    mask = band_valid_mask(raw.shape[1], scale, raw.device)
    if axis == "sources":
        scores = raw.masked_fill(~mask.unsqueeze(0), float("-inf"))
        return AttentionBand(torch.softmax(scores, dim=2), scale)
    if axis == "targets":
        scores = transpose_band(raw, scale, fill=float("-inf"))
        scores = scores.masked_fill(~mask.unsqueeze(0), float("-inf"))
        weights = torch.softmax(scores, dim=2)
        weights = weights.masked_fill(~mask.unsqueeze(0), 0.0)
        return AttentionBand(transpose_band(weights, scale, fill=0.0), scale)
    raise ValueError(f"unknown softmax axis {axis!r}")


def apply_band(weights: Tensor, values: Tensor, scale: int) -> Tensor:
    """Weighted sum of (B, C, L) values under (B, L, 2s+1) band weights."""
    padded = F.pad(values, (scale, scale))
    windows = padded.unfold(2, band_width(scale), 1)  # (B, C, L, 2s+1)
    return torch.einsum("bjk,bcjk->bcj", weights, windows)


def fuse_bands(bands: list[AttentionBand], mode: str = "mean") -> AttentionBand:
    """Combine per-scale attentions into one band at the widest scale.

    ``mean`` divides the elementwise sum by the number of scales, keeping
    every target's weights summing to 1; ``sum`` leaves the plain sum.
    """
    if not bands:
        raise ValueError("no bands to fuse")
    if mode not in ("mean", "sum"):
        raise ValueError(f"unknown fusion mode {mode!r}")
    if len(bands) == 1 and mode == "mean":
        return bands[0]
    scale_max = max(b.scale for b in bands)
    ref = bands[0].weights
    fused = ref.new_zeros(ref.shape[0], ref.shape[1], band_width(scale_max))
    for band in bands:
        lo = scale_max - band.scale
        fused[:, :, lo:lo + band_width(band.scale)] += band.weights
    if mode == "mean":
        fused = fused / len(bands)
    return AttentionBand(fused, scale_max)


class RegionAttention(nn.Module):
    """Encoder-decoder attention scores over each snippet's local region.

    The encoder is a 1x1 channel transform followed by a (2s+1)-tap temporal
    convolution producing per-row context features; the decoder is a single
    (2s+1)-tap convolution collapsing those features to one score per
    in-band (source, target) pair, honoring the band mask when gathering
    context rows.  Borders are zero-padded throughout.
    """

    def __init__(self, c_embed: int, c_out: int, scale: int):
        super().__init__()
        if scale < 1:
            raise ValueError("scale must be >= 1")
        self.scale = scale
        self.transform = nn.Conv1d(c_embed, c_out, kernel_size=1)
        self.encoder = nn.Conv1d(c_out, c_out, kernel_size=band_width(scale), padding=scale)
        self.decoder_weight = nn.Parameter(torch.empty(band_width(scale), c_out))
        self.decoder_bias = nn.Parameter(torch.zeros(1))
        nn.init.kaiming_uniform_(self.decoder_weight, a=5 ** 0.5)

    def row_context(self, slots: Tensor) -> Tensor:
        """Per-row context features R, (B, C_out, L)."""
        return self.encoder(self.transform(slots))

    def band_scores(self, context: Tensor) -> Tensor:
        """Raw band scores from context features.

        The score of source i on target j sums decoder taps over context
        rows i-s..i+s, dropping rows outside target j's band or outside the
        sequence (the logical zeroing of the masked dense map).
        """
        scale, width = self.scale, band_width(self.scale)
        length = context.shape[2]
        # taps[b, m, k]: decoder tap k applied to context row m
        taps = torch.einsum("bcm,kc->bmk", context, self.decoder_weight)
        padded = F.pad(taps, (0, 0, 2 * scale, 2 * scale))
        columns = []
        for d in range(width):
            acc = None
            for k in range(width):
                offset = (d - scale) + (k - scale)
                if abs(offset) > scale:
                    continue  # context row falls outside the target's band
                term = padded[:, 2 * scale + offset:2 * scale + offset + length, k]
                acc = term if acc is None else acc + term
            columns.append(acc + self.decoder_bias)
        return torch.stack(columns, dim=2)

    def forward(self, slots: Tensor) -> Tensor:
        if slots.shape[2] <= self.scale:
            raise ValueError(
                f"sequence length {slots.shape[2]} must exceed scale {self.scale}"
            )
        return self.band_scores(self.row_context(slots))


class SimilarityAttention(nn.Module):
    """Scaled dot-product scores restricted to the band (ablation baseline)."""

    def __init__(self, c_embed: int, c_out: int, scale: int):
        super().__init__()
        if scale < 1:
            raise ValueError("scale must be >= 1")
        self.scale = scale
        self.query = nn.Conv1d(c_embed, c_embed, kernel_size=1)
        self.key = nn.Conv1d(c_embed, c_embed, kernel_size=1)

    def forward(self, slots: Tensor) -> Tensor:
        if slots.shape[2] <= self.scale:
            raise ValueError(
                f"sequence length {slots.shape[2]} must exceed scale {self.scale}"
            )
        q = self.query(slots)
        k = self.key(slots)
        padded = F.pad(k, (self.scale, self.scale))
        windows = padded.unfold(2, band_width(self.scale), 1)
        return torch.einsum("bcj,bcjk->bjk", q, windows) / (q.shape[1] ** 0.5)
