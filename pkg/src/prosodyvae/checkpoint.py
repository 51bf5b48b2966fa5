"""Checkpoint directories.

Layout::

    ckpt/
      checkpoint.meta  # flat key=value: format_version, stage, step
      config.txt       # resolved config snapshot (flat key=value)
      tensors.index    # name<TAB>dtype<TAB>shape<TAB>offset<TAB>numel per tensor
      tensors.bin      # raw little-endian float32 payload
      metrics.jsonl    # eval-cadence history, one JSON record per line

Tensors are stored by state-dict name so a reload reproduces forward outputs
exactly; everything except the blob is plain text.
"""

import json
from pathlib import Path

import numpy as np
import torch

from .config import Config, load_config, save_config
from .errors import CorruptCheckpoint, StageMismatch
from .models.system import TTSSystem, build_system

FORMAT_VERSION = 1


def save_checkpoint(system: TTSSystem, cfg: Config, path, step=0, history=()):
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    (path / "checkpoint.meta").write_text(
        f"format_version = {FORMAT_VERSION}\nstage = {system.stage}\nstep = {step}\n"
    )
    save_config(cfg, path / "config.txt")

    index_lines = []
    offset = 0
    with open(path / "tensors.bin", "wb") as blob:
        for name, tensor in system.state_dict().items():
            if tensor.dtype != torch.float32:
                raise CorruptCheckpoint(
                    f"cannot serialize {name}: dtype {tensor.dtype}, expected float32"
                )
            array = tensor.detach().cpu().numpy().astype("<f4")
            blob.write(array.tobytes())
            shape = ",".join(str(s) for s in array.shape) or "-"
            index_lines.append(f"{name}\tfloat32\t{shape}\t{offset}\t{array.size}")
            offset += array.size * 4
    (path / "tensors.index").write_text("\n".join(index_lines) + "\n")

    with open(path / "metrics.jsonl", "w") as f:
        for record in history:
            f.write(json.dumps(record) + "\n")
    return path


def _read_meta(path):
    meta_path = path / "checkpoint.meta"
    if not meta_path.exists():
        raise CorruptCheckpoint(f"{path} has no checkpoint.meta")
    meta = {}
    for line in meta_path.read_text().splitlines():
        if "=" in line:
            key, value = line.split("=", 1)
            meta[key.strip()] = value.strip()
    if meta.get("format_version") != str(FORMAT_VERSION):
        raise CorruptCheckpoint(
            f"unsupported checkpoint format version {meta.get('format_version')!r}"
        )
    return meta


def load_checkpoint(path, expect_stage=None):
    """Rebuild the system from a checkpoint directory.

    Returns (system, cfg, meta) where meta has the stage, step and history.
    """
    path = Path(path)
    meta = _read_meta(path)
    stage = meta.get("stage")
    if expect_stage is not None and stage != expect_stage:
        raise StageMismatch(expect_stage, stage)

    cfg = load_config(path / "config.txt", env={})
    system = build_system(cfg.model, stage)

    try:
        payload = (path / "tensors.bin").read_bytes()
        index_lines = (path / "tensors.index").read_text().splitlines()
    except FileNotFoundError as exc:
        raise CorruptCheckpoint(f"{path}: {exc}") from exc

    state = {}
    for line in index_lines:
        if not line.strip():
            continue
        name, dtype, shape_s, offset_s, numel_s = line.split("\t")
        if dtype != "float32":
            raise CorruptCheckpoint(f"{name}: unsupported dtype {dtype}")
        shape = () if shape_s == "-" else tuple(int(s) for s in shape_s.split(","))
        offset, numel = int(offset_s), int(numel_s)
        end = offset + numel * 4
        if end > len(payload):
            raise CorruptCheckpoint(f"{path}: blob truncated at tensor {name}")
        array = np.frombuffer(payload[offset:end], dtype="<f4").reshape(shape)
        state[name] = torch.from_numpy(array.copy())

    expected = set(system.state_dict().keys())
    if set(state.keys()) != expected:
        missing = expected - set(state.keys())
        extra = set(state.keys()) - expected
        raise CorruptCheckpoint(
            f"tensor names do not match the {stage} architecture "
            f"(missing={sorted(missing)[:3]}, extra={sorted(extra)[:3]})"
        )
    try:
        system.load_state_dict(state)
    except RuntimeError as exc:
        raise CorruptCheckpoint(f"{path}: {exc}") from exc
    system.eval()

    history = []
    metrics_path = path / "metrics.jsonl"
    if metrics_path.exists():
        for line in metrics_path.read_text().splitlines():
            if line.strip():
                history.append(json.loads(line))
    meta_out = {"stage": stage, "step": int(meta.get("step", 0)), "history": history}
    return system, cfg, meta_out


def state_hashes(system: TTSSystem, prefix=""):
    """Stable per-tensor content hashes, used to verify frozen weights."""
    import hashlib

    out = {}
    for name, tensor in system.state_dict().items():
        if prefix and not name.startswith(prefix):
            continue
        digest = hashlib.sha256(tensor.detach().cpu().numpy().astype("<f4").tobytes())
        out[name] = digest.hexdigest()
    return out
