"""Checkpoint archives.

A checkpoint is a zip file holding one binary tensor entry per model
parameter/buffer (and, when training state is included, per optimizer
slot), plus a ``metadata.json`` sidecar recording the architecture config,
true tensor shapes and dtypes, epoch, and seed.  Entries reuse the same
2-D float32 container as feature files; archive timestamps are pinned so
identical state produces identical bytes.
"""

from __future__ import annotations

import io
import json
import zipfile
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Union

import numpy as np
import torch

from .network import ModelConfig, PRSANet
from .tensorfile import read_matrix, write_matrix

_FORMAT_VERSION = 1
_EPOCH_STAMP = (1980, 1, 1, 0, 0, 0)


@dataclass
class Checkpoint:
    config: ModelConfig
    epoch: int
    seed: int
    model_state: dict[str, torch.Tensor]
    optimizer_state: Optional[dict] = None


def _flatten(tensor: torch.Tensor) -> np.ndarray:
    arr = tensor.detach().cpu().numpy()
    if arr.ndim == 0:
        return arr.reshape(1, 1)
    if arr.ndim == 1:
        return arr.reshape(1, -1)
    return arr.reshape(arr.shape[0], -1)


def _write_entry(zf: zipfile.ZipFile, name: str, tensor: torch.Tensor) -> dict:
    buf = io.BytesIO()
    write_matrix(buf, _flatten(tensor).astype(np.float32))
    info = zipfile.ZipInfo(f"tensors/{name}.prsf", date_time=_EPOCH_STAMP)
    zf.writestr(info, buf.getvalue())
    return {"shape": list(tensor.shape), "dtype": str(tensor.dtype).replace("torch.", "")}


def save_checkpoint(
    path: Union[str, Path],
    model: PRSANet,
    *,
    epoch: int = 0,
    seed: int = 0,
    optimizer: Optional[torch.optim.Optimizer] = None,
) -> None:
    meta: dict = {
        "format": _FORMAT_VERSION,
        "epoch": epoch,
        "seed": seed,
        "config": model.cfg.to_dict(),
        "tensors": {},
        "optimizer": None,
    }
    with zipfile.ZipFile(path, "w", zipfile.ZIP_STORED) as zf:
        for name, tensor in model.state_dict().items():
            meta["tensors"][name] = _write_entry(zf, name, tensor)
        if optimizer is not None:
            state = optimizer.state_dict()
            param_names = [n for n, _ in model.named_parameters()]
            optim_meta = {"param_groups": state["param_groups"], "slots": {}}
            for idx, slot_state in state["state"].items():
                pname = param_names[idx]
                slots = {}
                for key, value in slot_state.items():
                    tensor = value if torch.is_tensor(value) else torch.tensor(float(value))
                    entry = _write_entry(zf, f"optim/{pname}/{key}", tensor)
                    slots[key] = entry
                optim_meta["slots"][pname] = slots
            meta["optimizer"] = optim_meta
        info = zipfile.ZipInfo("metadata.json", date_time=_EPOCH_STAMP)
        zf.writestr(info, json.dumps(meta, indent=2, sort_keys=True))


def _read_entry(zf: zipfile.ZipFile, name: str, entry: dict) -> torch.Tensor:
    with zf.open(f"tensors/{name}.prsf") as fp:
        flat = read_matrix(io.BytesIO(fp.read()))
    shape = tuple(entry["shape"])
    dtype = getattr(torch, entry["dtype"])
    return torch.from_numpy(flat.reshape(shape) if shape else flat.reshape(())).to(dtype)


def load_checkpoint(path: Union[str, Path]) -> Checkpoint:
    with zipfile.ZipFile(path, "r") as zf:
        meta = json.loads(zf.read("metadata.json"))
        if meta.get("format") != _FORMAT_VERSION:
            raise ValueError(f"unsupported checkpoint format {meta.get('format')}")
        model_state = {
            name: _read_entry(zf, name, entry)
            for name, entry in meta["tensors"].items()
        }
        optimizer_state = None
        if meta.get("optimizer"):
            optim_meta = meta["optimizer"]
            slots = {}
            for pname, slot_entries in optim_meta["slots"].items():
                slots[pname] = {
                    key: _read_entry(zf, f"optim/{pname}/{key}", entry)
                    for key, entry in slot_entries.items()
                }
            optimizer_state = {
                "param_groups": optim_meta["param_groups"],
                "slots": slots,
            }
    return Checkpoint(
        config=ModelConfig.from_dict(meta["config"]),
        epoch=int(meta["epoch"]),
        seed=int(meta["seed"]),
        model_state=model_state,
        optimizer_state=optimizer_state,
    )


def restore_model(ckpt: Checkpoint) -> PRSANet:
    """Build a model from a checkpoint, validating every tensor shape."""
    model = PRSANet(ckpt.config)
    expected = model.state_dict()
    for name, tensor in expected.items():
        if name not in ckpt.model_state:
            raise ValueError(f"checkpoint is missing parameter {name!r}")
        got = ckpt.model_state[name]
        if tuple(got.shape) != tuple(tensor.shape):
            raise ValueError(
                f"shape mismatch for parameter {name!r}: checkpoint has "
                f"{tuple(got.shape)}, model expects {tuple(tensor.shape)}"
            )
    unknown = set(ckpt.model_state) - set(expected)
    if unknown:
        raise ValueError(f"checkpoint has unknown parameters: {sorted(unknown)[:3]}")
    model.load_state_dict(ckpt.model_state)
    return model


def restore_optimizer(
    ckpt: Checkpoint, model: PRSANet, optimizer: torch.optim.Optimizer
) -> None:
    """Load saved optimizer slots into a freshly constructed optimizer."""
    if ckpt.optimizer_state is None:
        raise ValueError("checkpoint carries no optimizer state")
    param_names = [n for n, _ in model.named_parameters()]
    index_of = {name: i for i, name in enumerate(param_names)}
    state: dict[int, dict] = {}
    for pname, slots in ckpt.optimizer_state["slots"].items():
        if pname not in index_of:
            raise ValueError(f"optimizer state for unknown parameter {pname!r}")
        state[index_of[pname]] = dict(slots)
    groups = []
    for group in ckpt.optimizer_state["param_groups"]:
        group = dict(group)
        group["params"] = list(range(len(param_names)))
        groups.append(group)
    optimizer.load_state_dict({"state": state, "param_groups": groups})
