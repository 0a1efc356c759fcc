from dataclasses import dataclass
from pathlib import Path
import json
import logging
import struct

import numpy as np

from common.errors import CheckpointError, StorageError
from data.schema import DatasetSchema, schema_fingerprint
from model.cwae import CwaeParams, ModelConfig, init_params
from model.optim import AdamState

logger = logging.getLogger(__name__)

CHECKPOINT_MAGIC = b"CWAECKPT"
CHECKPOINT_VERSION = 1


@dataclass
class Checkpoint:
    """
    Everything needed to resume or score with a trained model.

    fingerprint: str
        schema_fingerprint of the schema the model was trained on
    epoch: int
        epochs completed
    """

    config: ModelConfig
    fingerprint: str
    params: CwaeParams
    optimizer: AdamState
    seed: int
    epoch: int


def _pack_block(payload: bytes) -> bytes:
    return struct.pack("<Q", len(payload)) + payload


def _tensor_record(name: str, value: np.ndarray) -> bytes:
    name_bytes = name.encode("utf-8")
    header = struct.pack("<H", len(name_bytes)) + name_bytes + struct.pack("<B", value.ndim)
    header += struct.pack(f"<{value.ndim}Q", *value.shape)
    return header + np.ascontiguousarray(value, dtype="<f8").tobytes()


def save_checkpoint(path: str | Path, checkpoint: Checkpoint) -> None:
    """
    Writes magic, uint16 version, a uint64-prefixed JSON metadata block, a
    uint32 tensor count and then per tensor: name, ndim, shape and raw
    little-endian float64 values. Optimizer moments are stored as tensors
    named adam.m.<param> and adam.v.<param>.
    """
    path = Path(path)
    state = checkpoint.optimizer
    meta = {
        "model_config": checkpoint.config.to_dict(),
        "schema_fingerprint": checkpoint.fingerprint,
        "seed": checkpoint.seed,
        "epoch": checkpoint.epoch,
        "adam": {**state.hyperparameters(), "step_count": state.step_count},
    }
    tensors = [(p.name, p.value) for p in checkpoint.params.parameters()]
    for p in checkpoint.params.parameters():
        if p.name in state.first_moment:
            tensors.append((f"adam.m.{p.name}", state.first_moment[p.name]))
            tensors.append((f"adam.v.{p.name}", state.second_moment[p.name]))

    payload = bytearray(CHECKPOINT_MAGIC)
    payload += struct.pack("<H", CHECKPOINT_VERSION)
    payload += _pack_block(json.dumps(meta, sort_keys=True, separators=(",", ":")).encode("utf-8"))
    payload += struct.pack("<I", len(tensors))
    for name, value in tensors:
        payload += _tensor_record(name, value)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_bytes(bytes(payload))
    except OSError as e:
        raise StorageError(f"cannot write checkpoint {path}: {e}") from e
    logger.debug("checkpoint with %d tensors written to %s", len(tensors), path)


class _Reader:
    def __init__(self, data: bytes, path: Path):
        self.data, self.offset, self.path = data, 0, path

    def take(self, size: int) -> bytes:
        if self.offset + size > len(self.data):
            raise CheckpointError(f"checkpoint {self.path} is truncated")
        chunk = self.data[self.offset : self.offset + size]
        self.offset += size
        return chunk

    def unpack(self, fmt: str):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))


def load_checkpoint(path: str | Path, schema: DatasetSchema) -> Checkpoint:
    """
    Reads a checkpoint and rebuilds its parameters against `schema`, which
    must have the fingerprint the model was trained with.

    path: str | Path
        checkpoint file
    schema: DatasetSchema
        schema of the data the model will score
    """
    path = Path(path)
    try:
        reader = _Reader(path.read_bytes(), path)
    except OSError as e:
        raise StorageError(f"cannot read checkpoint {path}: {e}") from e

    if reader.take(len(CHECKPOINT_MAGIC)) != CHECKPOINT_MAGIC:
        raise CheckpointError(f"{path} is not a checkpoint")
    (version,) = reader.unpack("<H")
    if version != CHECKPOINT_VERSION:
        raise CheckpointError(f"{path}: checkpoint version {version}, expected {CHECKPOINT_VERSION}")
    (meta_size,) = reader.unpack("<Q")
    try:
        meta = json.loads(reader.take(meta_size).decode("utf-8"))
        config = ModelConfig.from_dict(meta["model_config"])
        fingerprint = meta["schema_fingerprint"]
    except (ValueError, KeyError, TypeError) as e:
        raise CheckpointError(f"{path}: corrupt metadata: {e}") from e

    expected = schema_fingerprint(schema)
    if fingerprint != expected:
        raise CheckpointError(
            f"{path}: schema fingerprint mismatch ({fingerprint[:12]} vs {expected[:12]})",
            hint="the checkpoint was trained on a differently encoded dataset",
        )

    (count,) = reader.unpack("<I")
    tensors = {}
    for _ in range(count):
        (name_size,) = reader.unpack("<H")
        try:
            name = reader.take(name_size).decode("utf-8")
        except UnicodeDecodeError as e:
            raise CheckpointError(f"{path}: tensor name is not valid UTF-8") from e
        (ndim,) = reader.unpack("<B")
        shape = reader.unpack(f"<{ndim}Q")
        size = int(np.prod(shape, dtype=np.int64)) if ndim else 1
        tensors[name] = np.frombuffer(reader.take(8 * size), dtype="<f8").reshape(shape).astype(np.float64)
    if reader.offset != len(reader.data):
        raise CheckpointError(f"{path}: trailing bytes after tensors")

    params = init_params(config, schema)
    for p in params.parameters():
        if p.name not in tensors:
            raise CheckpointError(f"{path}: missing tensor {p.name}")
        if tensors[p.name].shape != p.value.shape:
            raise CheckpointError(f"{path}: tensor {p.name} has shape {tensors[p.name].shape}, expected {p.value.shape}")
        p.value[...] = tensors[p.name]

    try:
        adam = meta["adam"]
        optimizer = AdamState(
            learning_rate=float(adam["learning_rate"]),
            beta1=float(adam["beta1"]),
            beta2=float(adam["beta2"]),
            epsilon=float(adam["epsilon"]),
            step_count=int(adam["step_count"]),
        )
        seed, epoch = int(meta["seed"]), int(meta["epoch"])
    except (ValueError, KeyError, TypeError) as e:
        raise CheckpointError(f"{path}: corrupt metadata: {e!r}") from e

    for p in params.parameters():
        first, second = f"adam.m.{p.name}", f"adam.v.{p.name}"
        if (first in tensors) != (second in tensors):
            raise CheckpointError(f"{path}: optimizer moments of {p.name} are incomplete")
        if first in tensors:
            if tensors[first].shape != p.value.shape or tensors[second].shape != p.value.shape:
                raise CheckpointError(f"{path}: optimizer moments of {p.name} have the wrong shape")
            optimizer.first_moment[p.name] = tensors[first]
            optimizer.second_moment[p.name] = tensors[second]

    return Checkpoint(
        config=config,
        fingerprint=fingerprint,
        params=params,
        optimizer=optimizer,
        seed=seed,
        epoch=epoch,
    )
