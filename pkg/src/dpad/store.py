"""Binary embedding store (DPDE format).

Layout, all little-endian:

    magic   4 bytes  0x44 0x50 0x44 0x45 ("DPDE")
    version u16      currently 1
    dim     u32
    count   u32
    record  u16 key_len | key UTF-8 "{sample_id}/{role}" | dim * f32

Duplicate keys are a load error. The store is immutable after load;
concurrent read-only lookups are safe.
"""

from __future__ import annotations

import os
import struct

import numpy as np

from .errors import DuplicateKey, MagicMismatch, MissingEmbedding, StoreFormatError
from .fileio import atomic_write_bytes
from .semantics import ROLES, EmbeddingRecord

MAGIC = b"DPDE"
VERSION = 1

_HEADER = struct.Struct("<4sHII")
_KEYLEN = struct.Struct("<H")


class EmbeddingStore:
    """Keyed collection of fixed-dimension embeddings."""

    def __init__(self, dim: int):
        if dim <= 0:
            raise StoreFormatError(f"dim must be positive, got {dim}")
        self.dim = int(dim)
        self._records: dict[str, EmbeddingRecord] = {}

    def __len__(self) -> int:
        return len(self._records)

    def __contains__(self, key: str) -> bool:
        return key in self._records

    def keys(self):
        return self._records.keys()

    def add(self, record: EmbeddingRecord) -> None:
        if record.vector.shape[0] != self.dim:
            raise StoreFormatError(
                f"record {record.key} has dim {record.vector.shape[0]}, store dim is {self.dim}"
            )
        if record.key in self._records:
            raise DuplicateKey(f"duplicate key {record.key!r}")
        self._records[record.key] = record

    def get(self, sample_id: str, role: str) -> EmbeddingRecord | None:
        return self._records.get(f"{sample_id}/{role}")

    def require(self, sample_id: str, role: str) -> EmbeddingRecord:
        rec = self.get(sample_id, role)
        if rec is None:
            raise MissingEmbedding(sample_id, role)
        return rec

    def roles_for(self, sample_id: str) -> set[str]:
        return {role for role in ROLES if f"{sample_id}/{role}" in self._records}

    # --- serialization ---

    def save(self, path: str | os.PathLike) -> None:
        parts = [_HEADER.pack(MAGIC, VERSION, self.dim, len(self._records))]
        for key, rec in self._records.items():
            key_bytes = key.encode("utf-8")
            if len(key_bytes) > 0xFFFF:
                raise StoreFormatError(f"key too long: {key[:40]}...")
            parts.append(_KEYLEN.pack(len(key_bytes)))
            parts.append(key_bytes)
            parts.append(rec.vector.astype("<f4").tobytes())
        atomic_write_bytes(path, b"".join(parts))

    @classmethod
    def load(cls, path: str | os.PathLike) -> "EmbeddingStore":
        with open(path, "rb") as f:
            data = f.read()
        if len(data) < _HEADER.size:
            raise StoreFormatError(f"{path}: file shorter than header")
        magic, version, dim, count = _HEADER.unpack_from(data, 0)
        if magic != MAGIC:
            raise MagicMismatch(f"{path}: bad magic {magic!r}, expected {MAGIC!r}")
        if version != VERSION:
            raise StoreFormatError(f"{path}: unsupported version {version}")
        store = cls(dim)
        offset = _HEADER.size
        vec_bytes = 4 * dim
        for i in range(count):
            if offset + _KEYLEN.size > len(data):
                raise StoreFormatError(f"{path}: truncated at record {i}")
            (key_len,) = _KEYLEN.unpack_from(data, offset)
            offset += _KEYLEN.size
            end = offset + key_len + vec_bytes
            if end > len(data):
                raise StoreFormatError(f"{path}: truncated at record {i}")
            key = data[offset : offset + key_len].decode("utf-8")
            offset += key_len
            vector = np.frombuffer(data[offset : offset + vec_bytes], dtype="<f4")
            offset += vec_bytes
            sample_id, sep, role = key.rpartition("/")
            if not sep or role not in ROLES:
                raise StoreFormatError(f"{path}: key {key!r} is not '<sample_id>/<role>'")
            store.add(EmbeddingRecord(sample_id=sample_id, role=role, vector=vector))
        if offset != len(data):
            raise StoreFormatError(f"{path}: {len(data) - offset} trailing bytes")
        return store
