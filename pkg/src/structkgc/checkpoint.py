"""Versioned binary checkpoints with byte-exact round trips.

Layout: magic ``SKGC``, a u32 format version, fixed-width header fields
(vocabulary sizes, encoder dims, combiner kind, component switches),
then the named parameter blocks as little-endian float64 in the model's
fixed parameter order, and a trailing CRC32 of everything before it.
Loads refuse to proceed on any checksum, version or dimension mismatch.
"""

from __future__ import annotations

import struct
import zlib

import numpy as np

from .model import Model, ModelConfig
from .structural import AseKind

MAGIC = b"SKGC"
VERSION = 1

_ASE_CODES = {AseKind.ADDITIVE: 0, AseKind.HADAMARD: 1, AseKind.ROTATION: 2}
_ASE_FROM_CODE = {v: k for k, v in _ASE_CODES.items()}


class CheckpointError(ValueError):
    pass


def _header_bytes(cfg: ModelConfig) -> bytes:
    return struct.pack(
        "<8I4Bd",
        cfg.num_entities, cfg.num_base_relations, cfg.struct_dim, cfg.layers,
        cfg.hidden_dim, cfg.heads, cfg.max_len, cfg.vocab_size,
        _ASE_CODES[cfg.ase_kind], int(cfg.share_text_encoders),
        int(cfg.use_text), int(cfg.use_ase),
        cfg.tau_init,
    )


def save_checkpoint(path, model: Model):
    payload = bytearray()
    payload += MAGIC
    payload += struct.pack("<I", VERSION)
    payload += _header_bytes(model.config)
    params = model.parameters()
    payload += struct.pack("<I", len(params))
    for name, node in params.items():
        encoded = name.encode("utf-8")
        rows, cols = node.value.shape
        payload += struct.pack("<H", len(encoded))
        payload += encoded
        payload += struct.pack("<II", rows, cols)
        payload += np.ascontiguousarray(node.value, dtype="<f8").tobytes()
    payload += struct.pack("<I", zlib.crc32(bytes(payload)) & 0xFFFFFFFF)
    with open(path, "wb") as f:
        f.write(payload)


def _read(buf: memoryview, offset: int, size: int, path) -> tuple[memoryview, int]:
    if offset + size > len(buf):
        raise CheckpointError(f"{path}: truncated checkpoint")
    return buf[offset:offset + size], offset + size


def load_checkpoint(path) -> tuple[ModelConfig, dict[str, np.ndarray]]:
    with open(path, "rb") as f:
        raw = f.read()
    if len(raw) < 12:
        raise CheckpointError(f"{path}: truncated checkpoint")
    body, tail = raw[:-4], raw[-4:]
    (stored_crc,) = struct.unpack("<I", tail)
    if zlib.crc32(body) & 0xFFFFFFFF != stored_crc:
        raise CheckpointError(f"{path}: checksum mismatch, refusing to load")
    buf = memoryview(body)
    offset = 0
    chunk, offset = _read(buf, offset, 4, path)
    if bytes(chunk) != MAGIC:
        raise CheckpointError(f"{path}: not a checkpoint file (bad magic)")
    chunk, offset = _read(buf, offset, 4, path)
    (version,) = struct.unpack("<I", chunk)
    if version != VERSION:
        raise CheckpointError(
            f"{path}: format version {version} not supported (expected {VERSION})"
        )
    header_size = struct.calcsize("<8I4Bd")
    chunk, offset = _read(buf, offset, header_size, path)
    (n_ent, n_rel, struct_dim, layers, hidden, heads, max_len, vocab,
     ase_code, share, use_text, use_ase, tau_init) = struct.unpack("<8I4Bd", chunk)
    if ase_code not in _ASE_FROM_CODE:
        raise CheckpointError(f"{path}: unknown combiner code {ase_code}")
    cfg = ModelConfig(
        num_entities=n_ent, num_base_relations=n_rel, struct_dim=struct_dim,
        layers=layers, hidden_dim=hidden, heads=heads, max_len=max_len,
        vocab_size=vocab, ase_kind=_ASE_FROM_CODE[ase_code],
        share_text_encoders=bool(share), use_text=bool(use_text),
        use_ase=bool(use_ase), tau_init=tau_init,
    )
    chunk, offset = _read(buf, offset, 4, path)
    (count,) = struct.unpack("<I", chunk)
    params: dict[str, np.ndarray] = {}
    for _ in range(count):
        chunk, offset = _read(buf, offset, 2, path)
        (name_len,) = struct.unpack("<H", chunk)
        chunk, offset = _read(buf, offset, name_len, path)
        name = bytes(chunk).decode("utf-8")
        chunk, offset = _read(buf, offset, 8, path)
        rows, cols = struct.unpack("<II", chunk)
        chunk, offset = _read(buf, offset, rows * cols * 8, path)
        params[name] = np.frombuffer(bytes(chunk), dtype="<f8").reshape(rows, cols).copy()
    if offset != len(buf):
        raise CheckpointError(f"{path}: trailing bytes after parameter blocks")
    return cfg, params


def load_model(path, expected_dims: dict | None = None) -> Model:
    """Rebuild a model from a checkpoint.

    ``expected_dims`` maps ModelConfig field names to required values;
    any mismatch refuses the load and names both values.
    """
    cfg, params = load_checkpoint(path)
    if expected_dims:
        for key, want in expected_dims.items():
            have = getattr(cfg, key)
            if have != want:
                raise CheckpointError(
                    f"{path}: checkpoint {key}={have} does not match "
                    f"requested {key}={want}"
                )
    model = Model(cfg, seed=0)
    own = model.parameters()
    if set(own) != set(params):
        missing = sorted(set(own) ^ set(params))
        raise CheckpointError(f"{path}: parameter name mismatch near {missing[:4]}")
    for name, node in own.items():
        if node.value.shape != params[name].shape:
            raise CheckpointError(
                f"{path}: parameter {name} has shape {params[name].shape}, "
                f"expected {node.value.shape}"
            )
        node.value = params[name]
    return model
