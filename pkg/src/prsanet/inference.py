"""Proposal decoding and suppression.

Head outputs become scored proposals by pairing candidate start/end
snippets, reading the anchor confidence maps at (duration-1, start), and
fusing the scores multiplicatively.  Redundancy is removed with hard NMS or
Gaussian soft-NMS.  Snippet indices convert to seconds at the snippet's
left edge.
"""

from __future__ import annotations

import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Callable, Optional, Sequence, Union

import numpy as np
import torch

from .config import RunConfig
from .data import (
    DatasetManifest,
    SnippetFeatureSequence,
    VideoRecord,
    load_feature_sequence,
    rescale_sequence,
    window_sequence,
)
from .metrics import tiou


@dataclass(frozen=True)
class Proposal:
    start_index: int
    end_index: int
    t_start: float
    t_end: float
    score_boundary: float
    score_map: float
    score: float

    def __post_init__(self):
        if not self.t_start < self.t_end:
            raise ValueError(f"degenerate proposal [{self.t_start}, {self.t_end}]")

    @property
    def interval(self) -> tuple[float, float]:
        return (self.t_start, self.t_end)


def boundary_candidates(probs: np.ndarray, rule: str = "or") -> list[int]:
    """Select candidate boundary snippets from a probability sequence.

    A snippet qualifies if it is a strict local peak (endpoints compare
    against their single neighbor) or exceeds half the sequence maximum;
    ``rule`` switches the connective between those two conditions.
    """
    if rule not in ("or", "and"):
        raise ValueError(f"unknown candidate rule {rule!r}")
    p = np.asarray(probs, dtype=np.float64)
    length = len(p)
    if length == 0:
        return []
    above_half_max = p > 0.5 * p.max()
    if length == 1:
        return [0] if above_half_max[0] else []
    peak = np.zeros(length, dtype=bool)
    peak[0] = p[0] > p[1]
    peak[-1] = p[-1] > p[-2]
    if length > 2:
        peak[1:-1] = (p[1:-1] > p[:-2]) & (p[1:-1] > p[2:])
    selected = (peak | above_half_max) if rule == "or" else (peak & above_half_max)
    return [int(i) for i in np.flatnonzero(selected)]


def form_proposals(
    starts: Sequence[int],
    ends: Sequence[int],
    p_start: np.ndarray,
    p_end: np.ndarray,
    m_cls: np.ndarray,
    m_com: np.ndarray,
    max_duration: int,
    time_per_snippet: float = 1.0,
    origin_offset: int = 0,
) -> list[Proposal]:
    """Pair candidate starts with later ends and score the combinations.

    For start snippet i and end snippet j (0 < j - i <= max_duration) the
    boundary score is p_start[i] * p_end[j], the map score is
    m_cls[j-i-1, i] * m_com[j-i-1, i], and the fused score their product.
    """
    proposals = []
    for i in sorted(starts):
        for j in sorted(ends):
            d = j - i
            if d < 1 or d > max_duration:
                continue
            p_w = float(p_start[i] * p_end[j])
            m_w = float(m_cls[d - 1, i] * m_com[d - 1, i])
            proposals.append(
                Proposal(
                    start_index=i,
                    end_index=j,
                    t_start=(origin_offset + i) * time_per_snippet,
                    t_end=(origin_offset + j) * time_per_snippet,
                    score_boundary=p_w,
                    score_map=m_w,
                    score=p_w * m_w,
                )
            )
    return proposals


def _ranked(proposals: Sequence[Proposal]) -> list[Proposal]:
    # stable: score desc, then earlier start, then shorter duration
    return sorted(
        proposals,
        key=lambda p: (-p.score, p.t_start, p.t_end - p.t_start),
    )


def nms(proposals: Sequence[Proposal], thresh: float = 0.65) -> list[Proposal]:
    """Greedy hard NMS: keep the best, drop everything overlapping above
    ``thresh``, repeat."""
    pool = _ranked(proposals)
    kept: list[Proposal] = []
    while pool:
        best = pool.pop(0)
        kept.append(best)
        pool = [p for p in pool if tiou(best.interval, p.interval) <= thresh]
    return kept


def soft_nms(
    proposals: Sequence[Proposal],
    sigma: float = 0.5,
    keep_thresh: float = 1e-3,
    hard_thresh: Optional[float] = None,
    decay: str = "gaussian",
) -> list[Proposal]:
    """Greedy Gaussian (or linear) score decay.

    Each round finalizes the highest-scoring remaining proposal and decays
    the rest according to their overlap with it; proposals whose score falls
    below ``keep_thresh`` are dropped.  ``hard_thresh`` optionally removes
    overlaps above it outright.
    """
    if decay not in ("gaussian", "linear"):
        raise ValueError(f"unknown decay {decay!r}")
    pool = list(proposals)
    emitted: list[Proposal] = []
    while pool:
        pool.sort(key=lambda p: (-p.score, p.t_start, p.t_end - p.t_start))
        best = pool.pop(0)
        if best.score < keep_thresh:
            break
        emitted.append(best)
        survivors = []
        for p in pool:
            iou = tiou(best.interval, p.interval)
            if hard_thresh is not None and iou > hard_thresh:
                continue
            if decay == "gaussian":
                factor = float(np.exp(-(iou * iou) / sigma))
            else:
                factor = 1.0 - iou
            new_score = p.score * factor
            if new_score >= keep_thresh:
                survivors.append(replace(p, score=new_score))
        pool = survivors
    return emitted


def merge_windows(
    proposals_per_window: Sequence[Sequence[Proposal]],
    window_offsets: Sequence[int],
    time_per_snippet: float,
    suppress: Optional[Callable[[Sequence[Proposal]], list[Proposal]]] = None,
) -> list[Proposal]:
    """Shift per-window proposals to absolute video time and pool them.

    Window-local snippet indices are translated by each window's offset;
    the pooled set is then jointly suppressed when ``suppress`` is given.
    """
    if len(proposals_per_window) != len(window_offsets):
        raise ValueError("one offset per window required")
    merged: list[Proposal] = []
    for proposals, offset in zip(proposals_per_window, window_offsets):
        for p in proposals:
            si = p.start_index + offset
            ei = p.end_index + offset
            merged.append(
                replace(
                    p,
                    start_index=si,
                    end_index=ei,
                    t_start=si * time_per_snippet,
                    t_end=ei * time_per_snippet,
                )
            )
    if suppress is not None:
        merged = suppress(merged)
    return merged


def make_suppressor(cfg: RunConfig) -> Optional[Callable[[Sequence[Proposal]], list[Proposal]]]:
    """Suppression stage selected by the run configuration."""
    if cfg.suppress == "none":
        return None
    if cfg.suppress == "nms":
        return lambda props: nms(props, cfg.nms_thresh)
    return lambda props: soft_nms(
        props,
        sigma=cfg.soft_nms_sigma,
        keep_thresh=cfg.soft_nms_keep,
        decay=cfg.soft_nms_decay,
    )


def infer_sequence(
    model,
    windows: Sequence[SnippetFeatureSequence],
    cfg: RunConfig,
) -> list[Proposal]:
    """Score prepared windows of one video and merge into video proposals."""
    per_window = []
    offsets = []
    for win in windows:
        feats = torch.from_numpy(win.features.T.astype(np.float32)).unsqueeze(0)
        mask = torch.from_numpy(win.mask()).unsqueeze(0)
        with torch.no_grad():
            out = model(feats, valid_mask=mask)
        proposals = form_proposals(
            boundary_candidates(out.p_start[0].numpy(), cfg.candidate_rule),
            boundary_candidates(out.p_end[0].numpy(), cfg.candidate_rule),
            out.p_start[0].numpy(),
            out.p_end[0].numpy(),
            out.m_cls[0].numpy(),
            out.m_com[0].numpy(),
            cfg.max_duration,
            time_per_snippet=win.time_per_snippet,
        )
        per_window.append(proposals)
        offsets.append(win.origin_offset)
    return merge_windows(
        per_window, offsets, windows[0].time_per_snippet, make_suppressor(cfg)
    )


def prepare_inference_windows(
    record: VideoRecord, feature_path: Union[str, Path], cfg: RunConfig
) -> list[SnippetFeatureSequence]:
    seq = load_feature_sequence(
        feature_path, snippet_interval=cfg.snippet_interval, fps=record.fps
    )
    if cfg.mode == "rescaled":
        return [rescale_sequence(seq, cfg.sequence_length)]
    return window_sequence(seq, cfg.sequence_length, cfg.window_stride)


def run_inference(
    model,
    manifest: DatasetManifest,
    cfg: RunConfig,
    jobs: int = 1,
) -> dict[str, list[Proposal]]:
    """Full inference over a manifest; deterministic for any worker count."""
    model.eval()

    def one_video(entry):
        record, path = entry
        windows = prepare_inference_windows(record, path, cfg)
        return record.id, infer_sequence(model, windows, cfg)

    if jobs <= 1:
        results = [one_video(entry) for entry in manifest.entries]
    else:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(one_video, manifest.entries))
    return dict(results)


def write_proposals(path: Union[str, Path], by_video: dict[str, Sequence[Proposal]]) -> None:
    """Proposal interchange file: per video, score-descending entries."""
    payload = {}
    for video_id, proposals in by_video.items():
        payload[video_id] = [
            {
                "segment": [p.t_start, p.t_end],
                "score": p.score,
                "p_boundary": p.score_boundary,
                "p_map": p.score_map,
            }
            for p in _ranked(proposals)
        ]
    with open(path, "w") as fp:
        json.dump(payload, fp, indent=2, sort_keys=True)


def load_proposals(path: Union[str, Path]) -> dict[str, list[tuple[float, float, float]]]:
    """Read an interchange file into (t_start, t_end, score) triples."""
    with open(path) as fp:
        raw = json.load(fp)
    result = {}
    for video_id, entries in raw.items():
        result[video_id] = [
            (float(e["segment"][0]), float(e["segment"][1]), float(e["score"]))
            for e in entries
        ]
    return result
