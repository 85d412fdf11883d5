"""Snippet features, annotations and dataset plumbing.

Feature sequences are L x C float32 matrices over a uniform time grid of
``time_per_snippet`` seconds per row.  Long sequences are processed either as
overlapping fixed-length windows (THUMOS style) or rescaled to a fixed length
by linear interpolation (ActivityNet style).
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, replace
from pathlib import Path
from typing import BinaryIO, Optional, Sequence, Union

import numpy as np

from .tensorfile import read_matrix, write_matrix

_TIME_EPS = 1e-6


@dataclass(frozen=True)
class GroundTruthInstance:
    """One annotated action instance, in seconds."""

    t_start: float
    t_end: float
    label: Optional[str] = None

    def __post_init__(self):
        if not (0.0 <= self.t_start < self.t_end):
            raise ValueError(
                f"invalid instance [{self.t_start}, {self.t_end}]"
            )

    @property
    def duration(self) -> float:
        return self.t_end - self.t_start


@dataclass(frozen=True)
class VideoRecord:
    """Untrimmed video metadata plus its ground-truth instances."""

    id: str
    duration: float
    fps: float
    frame_count: int
    instances: tuple[GroundTruthInstance, ...] = ()

    def __post_init__(self):
        if self.duration <= 0 or self.fps <= 0 or self.frame_count < 1:
            raise ValueError(f"bad video metadata for {self.id!r}")
        for inst in self.instances:
            if inst.t_end > self.duration + _TIME_EPS:
                raise ValueError(
                    f"instance [{inst.t_start}, {inst.t_end}] exceeds "
                    f"duration {self.duration} of video {self.id!r}"
                )


@dataclass(frozen=True)
class SnippetFeatureSequence:
    """L x C per-snippet features on a uniform time grid.

    ``origin_offset`` is the snippet index of this sequence's first row in
    the source video (non-zero for windows).  ``valid_mask`` marks rows that
    carry real data; zero-padded rows of short windows are invalid.
    """

    features: np.ndarray
    snippet_interval: int
    origin_offset: int
    time_per_snippet: float
    valid_mask: Optional[np.ndarray] = None

    def __post_init__(self):
        if self.features.ndim != 2 or self.features.shape[0] < 1:
            raise ValueError(f"bad feature shape {self.features.shape}")
        if not np.isfinite(self.features).all():
            raise ValueError("features contain non-finite values")
        if self.snippet_interval < 1 or self.time_per_snippet <= 0:
            raise ValueError("snippet_interval and time_per_snippet must be positive")
        if self.valid_mask is not None and self.valid_mask.shape != (self.length,):
            raise ValueError("valid_mask length does not match features")

    @property
    def length(self) -> int:
        return self.features.shape[0]

    @property
    def channels(self) -> int:
        return self.features.shape[1]

    def mask(self) -> np.ndarray:
        """Validity mask, materialized as all-true when absent."""
        if self.valid_mask is None:
            return np.ones(self.length, dtype=bool)
        return self.valid_mask

    def time_of(self, index: float) -> float:
        """Seconds of a (window-local) snippet index, left-edge convention."""
        return (self.origin_offset + index) * self.time_per_snippet


@dataclass
class DatasetManifest:
    """Videos paired with their feature-file paths; one mode per dataset."""

    entries: list[tuple[VideoRecord, Path]]
    mode: str = "windowed"

    def __post_init__(self):
        if self.mode not in ("windowed", "rescaled"):
            raise ValueError(f"unknown manifest mode {self.mode!r}")


def snippet_count(frame_count: int, snippet_interval: int) -> int:
    """Number of snippets when grouping every ``snippet_interval`` frames."""
    if frame_count < 1 or snippet_interval < 1:
        raise ValueError("frame_count and snippet_interval must be >= 1")
    return -(-frame_count // snippet_interval)


def store_feature_sequence(path: Union[str, Path, BinaryIO], seq: SnippetFeatureSequence) -> None:
    write_matrix(path, seq.features)


def load_feature_sequence(
    path: Union[str, Path, BinaryIO],
    expected_length: int | None = None,
    expected_channels: int | None = None,
    *,
    snippet_interval: int = 1,
    fps: float = 1.0,
) -> SnippetFeatureSequence:
    """Load a feature file and attach time-grid metadata.

    Shape mismatches against the expected header, truncation and non-finite
    payloads all surface as :class:`~prsanet.tensorfile.FormatError`.
    """
    features = read_matrix(path, expected_length, expected_channels)
    return SnippetFeatureSequence(
        features=features,
        snippet_interval=snippet_interval,
        origin_offset=0,
        time_per_snippet=snippet_interval / fps,
    )


def window_sequence(
    seq: SnippetFeatureSequence,
    window_length: int = 250,
    stride: int = 100,
) -> list[SnippetFeatureSequence]:
    """Crop a sequence into overlapping fixed-length windows.

    Windows start at 0, stride, 2*stride, ...; if the last regular window
    does not reach the sequence end, one extra end-aligned window is
    appended so no tail snippet is unreachable.  Sequences shorter than the
    window yield a single zero-padded window with an explicit validity mask.
    """
    if window_length < 1 or stride < 1:
        raise ValueError("window_length and stride must be >= 1")
    length = seq.length
    if length < window_length:
        pad = window_length - length
        features = np.concatenate(
            [seq.features, np.zeros((pad, seq.channels), dtype=seq.features.dtype)]
        )
        mask = np.concatenate([seq.mask(), np.zeros(pad, dtype=bool)])
        return [replace(seq, features=features, valid_mask=mask)]

    offsets = list(range(0, length - window_length + 1, stride))
    if offsets[-1] + window_length < length:
        offsets.append(length - window_length)
    windows = []
    base_mask = seq.valid_mask
    for off in offsets:
        windows.append(
            replace(
                seq,
                features=seq.features[off:off + window_length],
                origin_offset=seq.origin_offset + off,
                valid_mask=None if base_mask is None else base_mask[off:off + window_length],
            )
        )
    return windows


def rescale_sequence(seq: SnippetFeatureSequence, target_length: int = 100) -> SnippetFeatureSequence:
    """Resample to ``target_length`` rows by linear interpolation.

    Sample points are uniformly spaced over the input index range, with the
    first and last input rows mapping exactly to the first and last output
    rows.  A length-1 input broadcasts.
    """
    if target_length < 1:
        raise ValueError("target_length must be >= 1")
    length = seq.length
    if length == 1:
        features = np.repeat(seq.features, target_length, axis=0)
    else:
        positions = np.linspace(0.0, length - 1, target_length)
        lo = np.floor(positions).astype(int)
        hi = np.minimum(lo + 1, length - 1)
        frac = (positions - lo)[:, None]
        features = (1.0 - frac) * seq.features[lo] + frac * seq.features[hi]
    total_time = length * seq.time_per_snippet
    return SnippetFeatureSequence(
        features=features.astype(seq.features.dtype, copy=False),
        snippet_interval=seq.snippet_interval,
        origin_offset=0,
        time_per_snippet=total_time / target_length,
    )


def window_instances(
    instances: Sequence[GroundTruthInstance],
    window_start: float,
    window_end: float,
) -> list[GroundTruthInstance]:
    """Clip instances to a window's time span, shifted to window-local time.

    Straddling instances are truncated at the window edge; instances with no
    positive-length overlap are dropped.
    """
    clipped = []
    for inst in instances:
        s = max(inst.t_start, window_start)
        e = min(inst.t_end, window_end)
        if e - s > _TIME_EPS:
            clipped.append(
                GroundTruthInstance(s - window_start, e - window_start, inst.label)
            )
    return clipped


def load_annotations(path: Union[str, Path]) -> dict[str, VideoRecord]:
    """Load ActivityNet-style annotations.

    Format: ``{video_id: {"duration": float, "fps": float,
    "annotations": [{"segment": [s, e], "label": str}]}}``.
    """
    with open(path) as fp:
        raw = json.load(fp)
    records = {}
    for video_id, entry in raw.items():
        instances = []
        for ann in entry.get("annotations", []):
            s, e = ann["segment"]
            instances.append(GroundTruthInstance(float(s), float(e), ann.get("label")))
        duration = float(entry["duration"])
        fps = float(entry["fps"])
        records[video_id] = VideoRecord(
            id=video_id,
            duration=duration,
            fps=fps,
            frame_count=entry.get("frame_count", max(1, math.ceil(duration * fps))),
            instances=tuple(instances),
        )
    return records


def save_annotations(path: Union[str, Path], records: dict[str, VideoRecord]) -> None:
    payload = {}
    for video_id, rec in records.items():
        payload[video_id] = {
            "duration": rec.duration,
            "fps": rec.fps,
            "frame_count": rec.frame_count,
            "annotations": [
                {"segment": [inst.t_start, inst.t_end], "label": inst.label}
                for inst in rec.instances
            ],
        }
    with open(path, "w") as fp:
        json.dump(payload, fp, indent=2, sort_keys=True)


def load_manifest(
    path: Union[str, Path],
    annotations: dict[str, VideoRecord],
    mode: str = "windowed",
) -> DatasetManifest:
    """Load a manifest (JSON list of {video_id, feature_path}).

    Paths are resolved relative to the manifest's directory; every entry
    must resolve to an existing file and a known video id.
    """
    path = Path(path)
    with open(path) as fp:
        raw = json.load(fp)
    entries = []
    missing = []
    for item in raw:
        video_id = item["video_id"]
        feature_path = Path(item["feature_path"])
        if not feature_path.is_absolute():
            feature_path = path.parent / feature_path
        if video_id not in annotations:
            missing.append(video_id)
            continue
        if not feature_path.exists():
            raise FileNotFoundError(
                f"feature file for {video_id!r} not found: {feature_path}"
            )
        entries.append((annotations[video_id], feature_path))
    if missing:
        raise ValueError(f"manifest ids missing from annotations: {missing}")
    return DatasetManifest(entries=entries, mode=mode)


def save_manifest(path: Union[str, Path], items: list[tuple[str, Union[str, Path]]]) -> None:
    payload = [
        {"video_id": vid, "feature_path": str(fpath)} for vid, fpath in items
    ]
    with open(path, "w") as fp:
        json.dump(payload, fp, indent=2)
