"""Checkpoint (AWEC) and embedding-matrix (AWEX) files.

AWEC: ``b"AWEC" | u32 version | u32 n | config JSON (n bytes) | u32 count``
then per tensor ``u16 name_len | name | u8 ndim | ndim x u32 | float64 LE``.
Training history goes to a ``.history.json`` sidecar.

AWEX: ``b"AWEX" | u32 version | u32 D | u32 N`` then length-prefixed (u16)
utf-8 strings for stimuli language, encoder language, objective and each of
the N column ids, then the ``D x N`` float64 LE payload.
"""

import json
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ..errors import FormatError, ShapeError
from ..nncore import Tensor
from .model import EncoderModel, ModelConfig

CKPT_MAGIC = b"AWEC"
CKPT_VERSION = 1
EMB_MAGIC = b"AWEX"
EMB_VERSION = 1


def history_path(path):
    path = Path(path)
    return path.with_name(path.name + ".history.json")


def save_checkpoint(path, model, train_config=None):
    cfg = {"model": model.config.to_dict(), "train": train_config or {}}
    raw = json.dumps(cfg, sort_keys=True).encode()
    parts = [CKPT_MAGIC, struct.pack("<II", CKPT_VERSION, len(raw)), raw,
             struct.pack("<I", len(model.params))]
    for name, t in model.params.items():
        nb = name.encode()
        parts.append(struct.pack("<H", len(nb)) + nb + struct.pack("<B", t.ndim))
        parts.append(struct.pack(f"<{t.ndim}I", *t.shape))
        parts.append(np.ascontiguousarray(t.data, dtype="<f8").tobytes())
    Path(path).write_bytes(b"".join(parts))
    with open(history_path(path), "w") as fh:
        json.dump(model.history, fh, indent=1)


def load_checkpoint(path):
    blob = Path(path).read_bytes()
    if blob[:4] != CKPT_MAGIC:
        raise FormatError(f"{path}: not a checkpoint (magic {blob[:4]!r})")
    try:
        version, n = struct.unpack_from("<II", blob, 4)
        if version != CKPT_VERSION:
            raise FormatError(f"{path}: unsupported checkpoint version {version}")
        pos = 12
        cfg = json.loads(blob[pos : pos + n])
        pos += n
        (count,) = struct.unpack_from("<I", blob, pos)
        pos += 4
        params = {}
        for _ in range(count):
            (ln,) = struct.unpack_from("<H", blob, pos)
            name = blob[pos + 2 : pos + 2 + ln].decode()
            pos += 2 + ln
            (ndim,) = struct.unpack_from("<B", blob, pos)
            pos += 1
            shape = struct.unpack_from(f"<{ndim}I", blob, pos)
            pos += 4 * ndim
            size = int(np.prod(shape)) if shape else 1
            if pos + 8 * size > len(blob):
                raise FormatError(f"{path}: truncated tensor {name}")
            data = np.frombuffer(blob, dtype="<f8", count=size, offset=pos).reshape(shape)
            pos += 8 * size
            params[name] = Tensor(data.astype(np.float64), True, name)
    except struct.error as exc:
        raise FormatError(f"{path}: truncated checkpoint") from exc
    model = EncoderModel(ModelConfig(**cfg["model"]), params)
    hp = history_path(path)
    if hp.exists():
        with open(hp) as fh:
            model.history = json.load(fh)
        if model.history:
            model.best_epoch = int(np.argmax([h["val_map"] for h in model.history])) + 1
    model.train_config = cfg.get("train", {})
    return model


@dataclass
class EmbeddingMatrix:
    """``[D, N]`` embeddings of stimuli (language ``stimuli_language``) by an
    encoder trained on ``encoder_language``."""

    data: np.ndarray
    ids: list
    stimuli_language: str
    encoder_language: str
    objective: str

    def __post_init__(self):
        self.data = np.asarray(self.data, dtype=np.float64)
        self.ids = list(self.ids)
        if self.data.ndim != 2 or self.data.shape[1] != len(self.ids):
            raise ShapeError(f"embedding matrix {self.data.shape} does not match "
                             f"{len(self.ids)} ids")
        if not np.isfinite(self.data).all():
            raise FormatError("embedding matrix has non-finite entries")

    @property
    def shape(self):
        return self.data.shape

    @property
    def tag(self):
        return f"{self.stimuli_language}/{self.encoder_language}"


def _pstr(s):
    b = s.encode()
    return struct.pack("<H", len(b)) + b


def save_embeddings(path, em):
    D, N = em.shape
    parts = [EMB_MAGIC, struct.pack("<III", EMB_VERSION, D, N),
             _pstr(em.stimuli_language), _pstr(em.encoder_language), _pstr(em.objective)]
    parts.extend(_pstr(i) for i in em.ids)
    parts.append(np.ascontiguousarray(em.data, dtype="<f8").tobytes())
    Path(path).write_bytes(b"".join(parts))


def load_embeddings(path):
    blob = Path(path).read_bytes()
    if blob[:4] != EMB_MAGIC:
        raise FormatError(f"{path}: not an embedding matrix (magic {blob[:4]!r})")
    try:
        version, D, N = struct.unpack_from("<III", blob, 4)
        if version != EMB_VERSION:
            raise FormatError(f"{path}: unsupported version {version}")
        pos = 16
        strings = []
        for _ in range(3 + N):
            (ln,) = struct.unpack_from("<H", blob, pos)
            strings.append(blob[pos + 2 : pos + 2 + ln].decode())
            pos += 2 + ln
    except struct.error as exc:
        raise FormatError(f"{path}: truncated header") from exc
    if len(blob) < pos + 8 * D * N:
        raise FormatError(f"{path}: truncated payload")
    data = np.frombuffer(blob, dtype="<f8", count=D * N, offset=pos).reshape(D, N).copy()
    return EmbeddingMatrix(data, strings[3:], strings[0], strings[1], strings[2])
