"""Bit-exact binary container for float64 tensors.

Layout (all integers little-endian)::

    magic   4 bytes  b"FODT"
    version u8       1
    flags   u8       bit 0 set: named-entry table follows, else one bare tensor
    -- bare tensor --
    rank    u8       >= 1
    extents rank x u32, each >= 1
    payload prod(extents) x f64, row-major
    -- named table --
    count   u32
    count x { name_len u16, name utf-8, <bare tensor> }

Reference banks and checkpoints are named tables; see ``save_bank``.
"""

from __future__ import annotations

import struct
from pathlib import Path
from typing import Mapping

import numpy as np

from .banks import BANK_KINDS, ReferenceBank

MAGIC = b"FODT"
VERSION = 1
FLAG_NAMED = 0x01
_F64 = np.dtype("<f8")


class FormatError(ValueError):
    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} at byte offset {offset}")
        self.offset = offset


def _encode_tensor(a: np.ndarray) -> bytes:
    a = np.asarray(a)
    if a.ndim < 1 or a.ndim > 255:
        raise ValueError(f"rank must be in 1..255, got {a.ndim}")
    if 0 in a.shape:
        raise ValueError(f"empty extent in shape {a.shape}")
    if any(n > 0xFFFFFFFF for n in a.shape):
        raise ValueError("extent exceeds 32 bits")
    head = struct.pack("<B", a.ndim) + struct.pack(f"<{a.ndim}I", *a.shape)
    return head + np.ascontiguousarray(a, dtype=_F64).tobytes()


def encode(tensors: np.ndarray | Mapping[str, np.ndarray]) -> bytes:
    if isinstance(tensors, Mapping):
        parts = [MAGIC, struct.pack("<BBI", VERSION, FLAG_NAMED, len(tensors))]
        for name, a in tensors.items():
            raw = name.encode("utf-8")
            if not raw or len(raw) > 0xFFFF:
                raise ValueError(f"bad entry name {name!r}")
            parts += [struct.pack("<H", len(raw)), raw, _encode_tensor(a)]
        return b"".join(parts)
    return MAGIC + struct.pack("<BB", VERSION, 0) + _encode_tensor(tensors)


class _Reader:
    def __init__(self, buf: bytes):
        self.buf = buf
        self.pos = 0

    def take(self, n: int, what: str) -> bytes:
        if self.pos + n > len(self.buf):
            raise FormatError(f"truncated {what}: need {n} bytes, have {len(self.buf) - self.pos}", self.pos)
        out = self.buf[self.pos:self.pos + n]
        self.pos += n
        return out

    def unpack(self, fmt: str, what: str):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt), what))

    def tensor(self) -> np.ndarray:
        start = self.pos
        (rank,) = self.unpack("<B", "rank")
        if rank == 0:
            raise FormatError("rank 0 is not allowed", start)
        ext_at = self.pos
        shape = self.unpack(f"<{rank}I", "extents")
        if 0 in shape:
            raise FormatError(f"empty extent in shape {shape}", ext_at)
        count = int(np.prod(shape, dtype=np.int64))
        data = np.frombuffer(self.take(8 * count, "payload"), dtype=_F64)
        return data.astype(np.float64).reshape(shape)


def decode(buf: bytes) -> np.ndarray | dict[str, np.ndarray]:
    r = _Reader(buf)
    magic = r.take(4, "magic")
    if magic != MAGIC:
        raise FormatError(f"bad magic {magic!r}", 0)
    (version,) = r.unpack("<B", "version")
    if version != VERSION:
        raise FormatError(f"unsupported version {version}", 4)
    (flags,) = r.unpack("<B", "flags")
    if flags & ~FLAG_NAMED:
        raise FormatError(f"unknown flags 0x{flags:02x}", 5)
    if flags & FLAG_NAMED:
        (count,) = r.unpack("<I", "entry count")
        out = {}
        for _ in range(count):
            at = r.pos
            (n,) = r.unpack("<H", "name length")
            try:
                name = r.take(n, "name").decode("utf-8")
            except UnicodeDecodeError:
                raise FormatError("entry name is not utf-8", at + 2) from None
            if name in out:
                raise FormatError(f"duplicate entry {name!r}", at)
            out[name] = r.tensor()
        result = out
    else:
        result = r.tensor()
    if r.pos != len(buf):
        raise FormatError(f"{len(buf) - r.pos} trailing bytes", r.pos)
    return result


def write_tensor(path, tensors) -> None:
    Path(path).write_bytes(encode(tensors))


def read_tensor(path) -> np.ndarray | dict[str, np.ndarray]:
    return decode(Path(path).read_bytes())


def read_named(path) -> dict[str, np.ndarray]:
    out = read_tensor(path)
    if not isinstance(out, dict):
        raise FormatError("expected a named-entry table", 5)
    return out


# ---------------------------------------------------------------------------
# banks


def bank_entries(bank: ReferenceBank, prefix: str = "") -> dict[str, np.ndarray]:
    entries = {
        prefix + "kind": np.array([float(BANK_KINDS.index(bank.kind))]),
        prefix + "features": bank.features,
    }
    if bank.positions is not None:
        entries[prefix + "positions"] = np.asarray(bank.positions, dtype=np.float64)
    return entries


def bank_from_entries(entries: Mapping[str, np.ndarray], prefix: str = "") -> ReferenceBank:
    try:
        code = int(entries[prefix + "kind"][0])
        kind = BANK_KINDS[code]
        features = entries[prefix + "features"]
    except (KeyError, IndexError) as exc:
        raise FormatError(f"bank entry {prefix!r} is incomplete ({exc})", 0) from None
    pos = entries.get(prefix + "positions")
    return ReferenceBank(features, None if pos is None else pos.astype(np.int64), kind)


def save_bank(path, bank: ReferenceBank) -> None:
    write_tensor(path, bank_entries(bank))


def load_bank(path) -> ReferenceBank:
    return bank_from_entries(read_named(path))
