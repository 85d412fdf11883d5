"""Ground-truth assignment: boundary labels and the dense proposal IoU map.

All label computation happens in seconds so windowed and rescaled feature
modes share one code path; callers pass the sequence's time grid.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .data import GroundTruthInstance


@dataclass(frozen=True)
class BoundaryLabels:
    """Per-snippet start/end boundary strengths in [0, 1]."""

    g_start: np.ndarray
    g_end: np.ndarray


@dataclass(frozen=True)
class ProposalLabelMap:
    """Dense (duration x start) anchor labels.

    ``g_map[d-1, l]`` holds the best ground-truth tIoU of the anchor
    covering snippets [l, l+d); anchors running past the sequence end are
    invalid and zeroed.
    """

    g_map: np.ndarray
    valid_mask: np.ndarray


def _interval_arrays(instances: Sequence[GroundTruthInstance]) -> tuple[np.ndarray, np.ndarray]:
    starts = np.array([inst.t_start for inst in instances], dtype=np.float64)
    ends = np.array([inst.t_end for inst in instances], dtype=np.float64)
    return starts, ends


def boundary_labels(
    instances: Sequence[GroundTruthInstance],
    length: int,
    time_per_snippet: float,
) -> BoundaryLabels:
    """Rate each snippet's overlap with expanded boundary regions.

    For an instance of duration d, the start region is the interval of
    half-width max(d/10, one snippet interval) around its start time (end
    region analogous).  Snippet l covers [l*dt, (l+1)*dt]; its label is the
    max over instances of overlap / snippet length.
    """
    g_start = np.zeros(length, dtype=np.float64)
    g_end = np.zeros(length, dtype=np.float64)
    if not instances:
        return BoundaryLabels(g_start, g_end)

    dt = float(time_per_snippet)
    snip_lo = np.arange(length, dtype=np.float64) * dt
    snip_hi = snip_lo + dt
    starts, ends = _interval_arrays(instances)
    half = np.maximum((ends - starts) / 10.0, dt)

    for center, target in ((starts, g_start), (ends, g_end)):
        lo = center - half
        hi = center + half
        overlap = np.minimum(snip_hi[:, None], hi[None, :]) - np.maximum(
            snip_lo[:, None], lo[None, :]
        )
        ior = np.clip(overlap, 0.0, None) / dt
        np.maximum(target, ior.max(axis=1), out=target)
    return BoundaryLabels(np.clip(g_start, 0.0, 1.0), np.clip(g_end, 0.0, 1.0))


def proposal_label_map(
    instances: Sequence[GroundTruthInstance],
    max_duration: int,
    length: int,
    time_per_snippet: float,
) -> ProposalLabelMap:
    """Best ground-truth tIoU per dense anchor.

    Anchor (d, l) with d in 1..max_duration spans [l*dt, (l+d)*dt] and is
    valid iff l + d <= length.
    """
    if max_duration < 1:
        raise ValueError("max_duration must be >= 1")
    dt = float(time_per_snippet)
    durations = np.arange(1, max_duration + 1)
    starts_idx = np.arange(length)
    valid = (starts_idx[None, :] + durations[:, None]) <= length

    g_map = np.zeros((max_duration, length), dtype=np.float64)
    if instances:
        a_lo = starts_idx[None, :] * dt + np.zeros((max_duration, 1))
        a_hi = (starts_idx[None, :] + durations[:, None]) * dt
        g_lo, g_hi = _interval_arrays(instances)
        inter = np.minimum(a_hi[..., None], g_hi) - np.maximum(a_lo[..., None], g_lo)
        inter = np.clip(inter, 0.0, None)
        union = (a_hi - a_lo)[..., None] + (g_hi - g_lo) - inter
        g_map = np.where(union > 0, inter / np.where(union > 0, union, 1.0), 0.0).max(axis=2)
    g_map = np.where(valid, g_map, 0.0)
    return ProposalLabelMap(g_map, valid)
