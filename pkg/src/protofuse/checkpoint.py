"""FSLC checkpoint format: every parameter, its frozen flag, stage metadata.

Layout (little-endian, values float32):

    magic "FSLC" | u16 version=1
    | u8 stage-tag length | stage-tag UTF-8 | u64 step counter
    | u32 config-echo length | config-echo UTF-8
    | u32 entry count
    then per entry (lexicographic by name):
        u16 name length | name UTF-8 | u8 frozen flag | u8 rank
        | rank * u32 dims | f32 values
    trailing u32 CRC32 of every preceding byte

The stage/step/config block sits between the version and the entry count;
save -> load -> save is byte-identical because entries are ordered and
values are stored exactly as float32.
"""

from __future__ import annotations

import struct
import zlib
from dataclasses import dataclass

import numpy as np

from .errors import FormatError
from .params import ParamStore

MAGIC = b"FSLC"
VERSION = 1


@dataclass
class CheckpointEntry:
    name: str
    frozen: bool
    values: np.ndarray  # float32, original shape


@dataclass
class Checkpoint:
    stage: str
    step: int
    config_text: str
    entries: list[CheckpointEntry]

    @classmethod
    def from_store(cls, store: ParamStore, stage: str, step: int, config_text: str) -> "Checkpoint":
        entries = [
            CheckpointEntry(name, store.is_frozen(name), t.data.astype("<f4"))
            for name, t in store.items()
        ]
        return cls(stage=stage, step=step, config_text=config_text, entries=entries)

    def entry_map(self) -> dict[str, CheckpointEntry]:
        return {e.name: e for e in self.entries}

    def load_into(
        self, store: ParamStore, require_prefixes: tuple[str, ...] | None = None
    ) -> None:
        """Copy matching entries into ``store`` (float32 -> float64).

        With ``require_prefixes=None`` every store parameter must be present.
        Otherwise only names under those prefixes must be present and other
        names load opportunistically, which is how episodic training picks
        up a pre-trained backbone while its semantic branch stays freshly
        initialized. Extra checkpoint entries (e.g. the pre-training head)
        are always skipped; shape mismatches always fail.
        """
        available = self.entry_map()
        for name, tensor in store.items():
            required = require_prefixes is None or any(
                name.startswith(p) for p in require_prefixes
            )
            if name not in available:
                if required:
                    raise FormatError(f"checkpoint is missing parameter {name!r}")
                continue
            values = available[name].values
            if tuple(values.shape) != tensor.data.shape:
                raise FormatError(
                    f"shape mismatch for {name!r}: checkpoint has {tuple(values.shape)}, "
                    f"model expects {tensor.data.shape}"
                )
            tensor.data = values.astype(np.float64)


def save_checkpoint(path: str, ckpt: Checkpoint) -> None:
    stage_bytes = ckpt.stage.encode("utf-8")
    config_bytes = ckpt.config_text.encode("utf-8")
    parts = [
        MAGIC,
        struct.pack("<H", VERSION),
        struct.pack("<B", len(stage_bytes)),
        stage_bytes,
        struct.pack("<Q", ckpt.step),
        struct.pack("<I", len(config_bytes)),
        config_bytes,
        struct.pack("<I", len(ckpt.entries)),
    ]
    for entry in sorted(ckpt.entries, key=lambda e: e.name):
        name_bytes = entry.name.encode("utf-8")
        arr = entry.values.astype("<f4")
        parts.append(struct.pack("<H", len(name_bytes)))
        parts.append(name_bytes)
        parts.append(struct.pack("<BB", int(entry.frozen), arr.ndim))
        parts.append(struct.pack(f"<{arr.ndim}I", *arr.shape))
        parts.append(arr.tobytes())
    payload = b"".join(parts)
    with open(path, "wb") as fh:
        fh.write(payload)
        fh.write(struct.pack("<I", zlib.crc32(payload)))


def load_checkpoint(path: str) -> Checkpoint:
    with open(path, "rb") as fh:
        blob = fh.read()
    if len(blob) < 4 or blob[:4] != MAGIC:
        raise FormatError("not an FSLC file (bad magic)")
    if len(blob) < 12:
        raise FormatError("truncated FSLC file")
    payload, crc_bytes = blob[:-4], blob[-4:]
    if zlib.crc32(payload) != struct.unpack("<I", crc_bytes)[0]:
        raise FormatError("FSLC checksum mismatch")
    offset = 4
    (version,) = struct.unpack_from("<H", payload, offset)
    offset += 2
    if version != VERSION:
        raise FormatError(f"unsupported FSLC version {version}")
    try:
        (stage_len,) = struct.unpack_from("<B", payload, offset)
        offset += 1
        stage = payload[offset : offset + stage_len].decode("utf-8")
        offset += stage_len
        (step,) = struct.unpack_from("<Q", payload, offset)
        offset += 8
        (config_len,) = struct.unpack_from("<I", payload, offset)
        offset += 4
        config_text = payload[offset : offset + config_len].decode("utf-8")
        offset += config_len
        (count,) = struct.unpack_from("<I", payload, offset)
        offset += 4
        entries = []
        for _ in range(count):
            (name_len,) = struct.unpack_from("<H", payload, offset)
            offset += 2
            name = payload[offset : offset + name_len].decode("utf-8")
            offset += name_len
            frozen, rank = struct.unpack_from("<BB", payload, offset)
            offset += 2
            dims = struct.unpack_from(f"<{rank}I", payload, offset)
            offset += 4 * rank
            size = int(np.prod(dims)) if rank else 1
            values = (
                np.frombuffer(payload, dtype="<f4", count=size, offset=offset)
                .reshape(dims)
                .copy()
            )
            offset += 4 * size
            entries.append(CheckpointEntry(name, bool(frozen), values))
    except (struct.error, UnicodeDecodeError, ValueError) as exc:
        raise FormatError(f"malformed FSLC payload: {exc}") from None
    if offset != len(payload):
        raise FormatError("FSLC payload has trailing bytes")
    return Checkpoint(stage=stage, step=step, config_text=config_text, entries=entries)
