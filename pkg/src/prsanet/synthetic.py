"""Desk-scale synthetic datasets.

Each generated video is a background feature stream with a few
non-overlapping "action" segments whose features come from a per-video
distribution offset from the background, blended over a short linear
cross-fade at every boundary so transitions are progressive rather than
abrupt.  Generation is bit-deterministic under the seed.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Union

import numpy as np

from .data import (
    GroundTruthInstance,
    SnippetFeatureSequence,
    VideoRecord,
    save_annotations,
    save_manifest,
    store_feature_sequence,
)
from .seeding import substream


@dataclass(frozen=True)
class SynthSpec:
    """Knobs for the synthetic generator.

    ``offset`` is the mean feature shift of action snippets relative to the
    background; ``crossfade`` is the per-boundary linear transition length
    in snippets.
    """

    n_videos: int = 20
    length: int = 64
    channels: int = 32
    max_instances: int = 3
    seed: int = 7
    min_duration: int = 4
    max_duration: int = 12
    offset: float = 2.0
    noise: float = 1.0
    crossfade: int = 2

    def __post_init__(self):
        positive = (
            self.n_videos, self.length, self.channels, self.max_instances,
            self.min_duration, self.max_duration, self.crossfade,
        )
        if min(positive) < 1 or self.noise <= 0 or self.offset <= 0:
            raise ValueError("all synthetic spec fields must be positive")
        if self.min_duration > self.max_duration:
            raise ValueError("min_duration exceeds max_duration")


def _place_segments(rng: np.random.Generator, spec: SynthSpec) -> list[tuple[int, int]]:
    """Sample non-overlapping [start, end) snippet segments for one video.

    Segments keep a margin off the video edges and a gap between each other
    wide enough that cross-fades never overlap.  The instance count is
    reduced when the requested number cannot fit; zero fitting instances is
    an error.
    """
    margin = spec.crossfade
    gap = 2 * spec.crossfade
    n_wanted = int(rng.integers(1, spec.max_instances + 1))
    for n in range(n_wanted, 0, -1):
        durations = rng.integers(spec.min_duration, spec.max_duration + 1, size=n)
        slack = spec.length - 2 * margin - int(durations.sum()) - (n - 1) * gap
        if slack < 0:
            continue
        shares = rng.multinomial(slack, np.full(n + 1, 1.0 / (n + 1)))
        segments = []
        cursor = margin + int(shares[0])
        for i, d in enumerate(durations):
            segments.append((cursor, cursor + int(d)))
            cursor += int(d) + gap + int(shares[i + 1])
        return segments
    raise ValueError(
        f"cannot place any instance of duration >= {spec.min_duration} "
        f"in {spec.length} snippets"
    )


def _render_features(
    rng: np.random.Generator, spec: SynthSpec, segments: list[tuple[int, int]]
) -> np.ndarray:
    action_mean = spec.offset * (1.0 + 0.25 * rng.standard_normal(spec.channels))
    background = rng.normal(0.0, spec.noise, size=(spec.length, spec.channels))
    action = action_mean + rng.normal(0.0, spec.noise, size=(spec.length, spec.channels))

    weight = np.zeros(spec.length)
    ramp = (np.arange(1, spec.crossfade + 1)) / (spec.crossfade + 1)
    for start, end in segments:
        weight[start:end] = 1.0
        weight[start - spec.crossfade:start] = ramp  # fade in just before the start
        weight[end:end + spec.crossfade] = ramp[::-1]  # fade out just after the end
    blended = weight[:, None] * action + (1.0 - weight[:, None]) * background
    return blended.astype(np.float32)


def generate_synthetic_dataset(
    spec: SynthSpec, out_dir: Union[str, Path]
) -> tuple[Path, Path]:
    """Write feature files, annotations and a manifest under ``out_dir``.

    Returns (manifest_path, annotations_path).  Snippet interval is 1 frame
    at 1 fps, so snippet indices coincide with seconds.
    """
    out_dir = Path(out_dir)
    feature_dir = out_dir / "features"
    feature_dir.mkdir(parents=True, exist_ok=True)

    records = {}
    manifest_items = []
    for v in range(spec.n_videos):
        video_id = f"synth_{spec.seed:04d}_{v:04d}"
        rng = substream(spec.seed, video_id)
        segments = _place_segments(rng, spec)
        features = _render_features(rng, spec, segments)
        seq = SnippetFeatureSequence(
            features=features,
            snippet_interval=1,
            origin_offset=0,
            time_per_snippet=1.0,
        )
        path = feature_dir / f"{video_id}.prsf"
        store_feature_sequence(path, seq)
        records[video_id] = VideoRecord(
            id=video_id,
            duration=float(spec.length),
            fps=1.0,
            frame_count=spec.length,
            instances=tuple(
                GroundTruthInstance(float(s), float(e), "action") for s, e in segments
            ),
        )
        manifest_items.append((video_id, Path("features") / f"{video_id}.prsf"))

    annotations_path = out_dir / "annotations.json"
    manifest_path = out_dir / "manifest.json"
    save_annotations(annotations_path, records)
    save_manifest(manifest_path, manifest_items)
    return manifest_path, annotations_path
