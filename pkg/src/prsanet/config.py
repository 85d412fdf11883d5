"""Run configuration: one flat namespace of every tunable.

Two named profiles carry the benchmark operating points: ``thumos``
(windowed 250-snippet crops, snippet interval 4, anchors up to 64) and
``anet`` (rescale to 100 snippets, interval 16, anchors up to 100).
Configs load from a flat ``key = value`` text file; unknown keys are
rejected and save/load round-trips exactly.
"""

from __future__ import annotations

from dataclasses import dataclass, fields, replace
from pathlib import Path
from typing import Union

LRSchedule = tuple[tuple[int, float], ...]


@dataclass(frozen=True)
class RunConfig:
    # data preparation
    mode: str = "windowed"  # windowed | rescaled
    snippet_interval: int = 4
    sequence_length: int = 250
    window_stride: int = 100
    max_duration: int = 64
    # model
    c_input: int = 256
    c_embed: int = 256
    c_out: int = 256
    scales: tuple[int, ...] = (4, 8)
    t_iter: int = 2
    attention_variant: str = "region"  # region | similarity
    fusion: str = "mean"  # mean | sum
    residual: bool = False
    softmax_axis: str = "sources"  # sources | targets
    k_bins: int = 16
    head_hidden: int = 128
    # training
    lambda_reg: float = 2e-4
    lambda_com: float = 10.0
    label_binarize_thresh: float = 0.5
    map_binarize_thresh: float = 0.5
    lr_schedule: LRSchedule = ((10, 2e-4),)
    batch_size: int = 8
    seed: int = 1
    # inference
    candidate_rule: str = "or"  # or | and
    suppress: str = "nms"  # none | nms | soft_nms
    nms_thresh: float = 0.65
    soft_nms_sigma: float = 0.5
    soft_nms_keep: float = 1e-3
    soft_nms_decay: str = "gaussian"  # gaussian | linear
    # evaluation
    eval_mode: str = "thumos"  # thumos | anet
    # synthetic data generation
    synth_videos: int = 20
    synth_length: int = 64
    synth_channels: int = 32
    synth_max_instances: int = 3
    synth_min_duration: int = 4
    synth_max_duration: int = 12
    synth_offset: float = 2.0
    synth_noise: float = 1.0

    def __post_init__(self):
        if self.mode not in ("windowed", "rescaled"):
            raise ValueError(f"unknown mode {self.mode!r}")
        if self.eval_mode not in ("thumos", "anet"):
            raise ValueError(f"unknown eval_mode {self.eval_mode!r}")
        if self.suppress not in ("none", "nms", "soft_nms"):
            raise ValueError(f"unknown suppress {self.suppress!r}")
        if self.candidate_rule not in ("or", "and"):
            raise ValueError(f"unknown candidate_rule {self.candidate_rule!r}")
        if min(self.snippet_interval, self.sequence_length, self.window_stride,
               self.max_duration, self.batch_size, self.k_bins) < 1:
            raise ValueError("size parameters must be positive")
        if not self.scales or min(self.scales) < 1:
            raise ValueError("scales must be non-empty positive ints")
        if max(self.scales) >= self.sequence_length:
            raise ValueError("every region scale must be smaller than the sequence length")
        if not (0.0 < self.nms_thresh <= 1.0):
            raise ValueError("nms_thresh must lie in (0, 1]")
        if self.lambda_reg < 0 or self.lambda_com < 0 or self.soft_nms_sigma <= 0:
            raise ValueError("loss/suppression weights must be non-negative")
        if not self.lr_schedule or any(e < 1 or lr <= 0 for e, lr in self.lr_schedule):
            raise ValueError("lr_schedule stages need positive epochs and rates")

    @property
    def epochs(self) -> int:
        return sum(e for e, _ in self.lr_schedule)


PROFILES = {
    "thumos": RunConfig(),
    "anet": RunConfig(
        mode="rescaled",
        snippet_interval=16,
        sequence_length=100,
        max_duration=100,
        nms_thresh=0.45,
        lr_schedule=((7, 1e-3), (3, 1e-4)),
        batch_size=16,
        eval_mode="anet",
    ),
}


def profile_config(name: str) -> RunConfig:
    if name not in PROFILES:
        raise ValueError(f"unknown profile {name!r}; choose from {sorted(PROFILES)}")
    return PROFILES[name]


def _format_value(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, tuple):
        if value and isinstance(value[0], tuple):  # lr schedule
            return ",".join(f"{e}:{lr!r}" for e, lr in value)
        return ",".join(str(v) for v in value)
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _parse_value(field_name: str, field_type: str, text: str):
    text = text.strip()
    if field_type == "int":
        return int(text)
    if field_type == "float":
        return float(text)
    if field_type == "bool":
        if text.lower() in ("true", "1", "yes"):
            return True
        if text.lower() in ("false", "0", "no"):
            return False
        raise ValueError(f"bad boolean for {field_name}: {text!r}")
    if field_type == "str":
        return text
    if field_type == "tuple[int, ...]":
        return tuple(int(v) for v in text.split(",") if v.strip())
    if field_type == "LRSchedule":
        stages = []
        for part in text.split(","):
            epochs, lr = part.split(":")
            stages.append((int(epochs), float(lr)))
        return tuple(stages)
    raise ValueError(f"unhandled config field type {field_type} for {field_name}")


def save_config(path: Union[str, Path], cfg: RunConfig) -> None:
    lines = ["# prsanet run configuration"]
    for f in fields(cfg):
        lines.append(f"{f.name} = {_format_value(getattr(cfg, f.name))}")
    Path(path).write_text("\n".join(lines) + "\n")


def parse_overrides(cfg: RunConfig, overrides: dict[str, str]) -> RunConfig:
    """Apply string-valued key overrides, rejecting unknown keys."""
    known = {f.name: f.type for f in fields(cfg)}
    parsed = {}
    for key, raw in overrides.items():
        if key not in known:
            raise ValueError(f"unknown config key {key!r}")
        parsed[key] = _parse_value(key, known[key], raw)
    return replace(cfg, **parsed)


def load_config(path: Union[str, Path], base: RunConfig | None = None) -> RunConfig:
    """Read a flat key=value config file on top of ``base`` (or defaults)."""
    cfg = base if base is not None else RunConfig()
    overrides = {}
    for lineno, line in enumerate(Path(path).read_text().splitlines(), start=1):
        stripped = line.split("#", 1)[0].strip()
        if not stripped:
            continue
        if "=" not in stripped:
            raise ValueError(f"{path}:{lineno}: expected 'key = value'")
        key, value = stripped.split("=", 1)
        overrides[key.strip()] = value.strip()
    return parse_overrides(cfg, overrides)
