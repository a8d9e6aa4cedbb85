"""``PIWA`` weight archive: a flat little-endian container of named float32 tensors.

Layout::

    b"PIWA"                      magic
    u32 version                  (1)
    u32 n, n bytes               metadata, UTF-8 JSON
    u32 count                    number of tensors
    count x {
        u32 n, n bytes           tensor name, UTF-8
        u32 rank
        rank x u32               dims
        prod(dims) x f32         row-major data
    }
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..errors import IoError, ParseError
from ..fileio import atomic_write_bytes

MAGIC = b"PIWA"
VERSION = 1


@dataclass(eq=False)
class WeightArchive:
    tensors: dict[str, np.ndarray] = field(default_factory=dict)
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        fixed = {}
        for name, t in self.tensors.items():
            arr = np.ascontiguousarray(t, dtype=np.float32)
            arr.flags.writeable = False
            fixed[name] = arr
        self.tensors = fixed

    def __getitem__(self, name: str) -> np.ndarray:
        return self.tensors[name]

    def to_bytes(self) -> bytes:
        out = [MAGIC, struct.pack("<I", VERSION)]
        meta = json.dumps(self.metadata, sort_keys=True, separators=(",", ":")).encode()
        out += [struct.pack("<I", len(meta)), meta, struct.pack("<I", len(self.tensors))]
        for name in sorted(self.tensors):
            t = self.tensors[name]
            raw = name.encode()
            out += [struct.pack("<I", len(raw)), raw, struct.pack("<I", t.ndim)]
            out.append(struct.pack(f"<{t.ndim}I", *t.shape))
            out.append(t.astype("<f4").tobytes())
        return b"".join(out)

    @classmethod
    def from_bytes(cls, buf: bytes, source: str = "<bytes>") -> WeightArchive:
        view = memoryview(buf)
        pos = 0

        def take(n: int) -> memoryview:
            nonlocal pos
            if pos + n > len(view):
                raise ParseError(f"truncated archive at byte {pos}", source)
            chunk = view[pos : pos + n]
            pos += n
            return chunk

        def u32() -> int:
            return struct.unpack("<I", take(4))[0]

        if bytes(take(4)) != MAGIC:
            raise ParseError("bad magic, not a PIWA archive", source)
        version = u32()
        if version != VERSION:
            raise ParseError(f"unsupported archive version {version}", source)
        try:
            metadata = json.loads(bytes(take(u32())).decode())
            tensors = {}
            for _ in range(u32()):
                name = bytes(take(u32())).decode()
                rank = u32()
                dims = struct.unpack(f"<{rank}I", take(4 * rank))
                size = int(np.prod(dims, dtype=np.int64))
                data = np.frombuffer(take(4 * size), dtype="<f4").astype(np.float32)
                tensors[name] = data.reshape(dims)
        except (UnicodeDecodeError, json.JSONDecodeError) as exc:
            raise ParseError(f"corrupt archive: {exc}", source) from None
        if pos != len(view):
            raise ParseError(f"{len(view) - pos} trailing bytes", source)
        return cls(tensors, metadata)


def save_archive(path, archive: WeightArchive) -> None:
    atomic_write_bytes(path, archive.to_bytes())


def load_archive(path) -> WeightArchive:
    path = Path(path)
    try:
        buf = path.read_bytes()
    except OSError as exc:
        raise IoError(f"cannot read archive {path}: {exc}") from exc
    return WeightArchive.from_bytes(buf, str(path))
