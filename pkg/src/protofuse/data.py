"""Synthetic dataset generation, the FSLD on-disk format, split manifests,
and the N-way K-shot episode sampler.

FSLD layout (all little-endian, values float32):

    magic "FSLD" | u16 version=1 | u32 num_classes | u32 d_in
    | u32 attr_dim | u32 samples_per_class
    then per class:
        u32 class_id | u32 token_id | attr_dim * f32 | samples_per_class * d_in * f32
    trailing u32 CRC32 of every preceding byte

The class means mix a projected semantic attribute vector with an
independent Gaussian: mean_c = signal * (M a_c) + (1 - signal) * u_c, and
each class's token id resolves to a frozen token-table row built from the
same a_c, so the semantic branch genuinely carries class information when
signal > 0.
"""

from __future__ import annotations

import struct
import zlib
from dataclasses import dataclass

import numpy as np

from .encoders import FIRST_CLASS_TOKEN, token_attribute
from .errors import CapacityError, FormatError, InvalidArgumentError
from .fsl import Episode
from .seeding import STREAM_DATA_CLASS, STREAM_DATA_PROJ, rng_for

MAGIC = b"FSLD"
VERSION = 1


@dataclass(frozen=True)
class SyntheticSpec:
    num_classes: int = 100
    samples_per_class: int = 250
    d_in: int = 32
    attr_dim: int = 16
    visual_cluster_sigma: float = 1.0
    semantic_signal: float = 0.8
    master_seed: int = 0
    semantic_seed: int = 777

    def validate(self) -> None:
        if min(self.num_classes, self.samples_per_class, self.d_in, self.attr_dim) <= 0:
            raise InvalidArgumentError("all synthetic-spec counts must be positive")
        if not 0.0 <= self.semantic_signal <= 1.0:
            raise InvalidArgumentError("semantic_signal must lie in [0, 1]")
        if self.visual_cluster_sigma <= 0.0:
            raise InvalidArgumentError("visual_cluster_sigma must be positive")


@dataclass
class ClassRecord:
    class_id: int
    token_id: int
    attributes: np.ndarray  # (attr_dim,) float32
    features: np.ndarray  # (samples_per_class, d_in) float32


@dataclass
class DatasetFile:
    classes: list[ClassRecord]

    @property
    def num_classes(self) -> int:
        return len(self.classes)

    @property
    def d_in(self) -> int:
        return self.classes[0].features.shape[1]

    @property
    def attr_dim(self) -> int:
        return self.classes[0].attributes.shape[0]

    @property
    def samples_per_class(self) -> int:
        return self.classes[0].features.shape[0]

    def by_id(self, class_id: int) -> ClassRecord:
        for rec in self.classes:
            if rec.class_id == class_id:
                return rec
        raise InvalidArgumentError(f"no class with id {class_id}")


@dataclass
class SplitManifest:
    base: list[int]
    val: list[int]
    novel: list[int]

    def split(self, name: str) -> list[int]:
        if name not in ("base", "val", "novel"):
            raise InvalidArgumentError(f"unknown split {name!r}")
        return getattr(self, name)

    def validate(self) -> None:
        sets = [set(self.base), set(self.val), set(self.novel)]
        total = sum(len(s) for s in sets)
        if len(sets[0] | sets[1] | sets[2]) != total:
            raise InvalidArgumentError("split class sets overlap")


def generate_synthetic(spec: SyntheticSpec) -> tuple[DatasetFile, SplitManifest]:
    """Deterministic dataset + 64/16/20 split from a SyntheticSpec."""
    spec.validate()
    proj = rng_for(spec.master_seed, STREAM_DATA_PROJ).standard_normal(
        (spec.attr_dim, spec.d_in)
    ) / np.sqrt(spec.attr_dim)
    classes = []
    for c in range(spec.num_classes):
        token_id = FIRST_CLASS_TOKEN + c
        attrs = token_attribute(spec.semantic_seed, token_id, spec.attr_dim)
        crng = rng_for(spec.master_seed, STREAM_DATA_CLASS, c)
        independent = crng.standard_normal(spec.d_in)
        mean = spec.semantic_signal * (attrs @ proj) + (1.0 - spec.semantic_signal) * independent
        samples = mean + spec.visual_cluster_sigma * crng.standard_normal(
            (spec.samples_per_class, spec.d_in)
        )
        classes.append(
            ClassRecord(
                class_id=c,
                token_id=token_id,
                attributes=attrs.astype("<f4"),
                features=samples.astype("<f4"),
            )
        )
    n_base = int(spec.num_classes * 0.64 + 0.5)
    n_val = int(spec.num_classes * 0.16 + 0.5)
    ids = list(range(spec.num_classes))
    manifest = SplitManifest(
        base=ids[:n_base], val=ids[n_base : n_base + n_val], novel=ids[n_base + n_val :]
    )
    return DatasetFile(classes), manifest


# -- FSLD serialization --------------------------------------------------------


def write_dataset(path: str, ds: DatasetFile) -> None:
    parts = [MAGIC, struct.pack("<H", VERSION)]
    parts.append(
        struct.pack(
            "<IIII", ds.num_classes, ds.d_in, ds.attr_dim, ds.samples_per_class
        )
    )
    for rec in ds.classes:
        parts.append(struct.pack("<II", rec.class_id, rec.token_id))
        parts.append(rec.attributes.astype("<f4").tobytes())
        parts.append(rec.features.astype("<f4").tobytes())
    payload = b"".join(parts)
    with open(path, "wb") as fh:
        fh.write(payload)
        fh.write(struct.pack("<I", zlib.crc32(payload)))


def read_dataset(path: str) -> DatasetFile:
    with open(path, "rb") as fh:
        blob = fh.read()
    if len(blob) < 4 or blob[:4] != MAGIC:
        raise FormatError("not an FSLD file (bad magic)")
    if len(blob) < 22:
        raise FormatError("truncated FSLD file")
    payload, crc_bytes = blob[:-4], blob[-4:]
    if zlib.crc32(payload) != struct.unpack("<I", crc_bytes)[0]:
        raise FormatError("FSLD checksum mismatch")
    (version,) = struct.unpack_from("<H", payload, 4)
    if version != VERSION:
        raise FormatError(f"unsupported FSLD version {version}")
    num_classes, d_in, attr_dim, samples = struct.unpack_from("<IIII", payload, 6)
    offset = 22
    class_bytes = 8 + 4 * attr_dim + 4 * samples * d_in
    if len(payload) != offset + num_classes * class_bytes:
        raise FormatError("FSLD payload length does not match header")
    classes = []
    for _ in range(num_classes):
        class_id, token_id = struct.unpack_from("<II", payload, offset)
        offset += 8
        attrs = np.frombuffer(payload, dtype="<f4", count=attr_dim, offset=offset).copy()
        offset += 4 * attr_dim
        feats = (
            np.frombuffer(payload, dtype="<f4", count=samples * d_in, offset=offset)
            .reshape(samples, d_in)
            .copy()
        )
        offset += 4 * samples * d_in
        classes.append(ClassRecord(class_id, token_id, attrs, feats))
    ids = [rec.class_id for rec in classes]
    if len(set(ids)) != len(ids):
        raise FormatError("FSLD file contains duplicate class ids")
    return DatasetFile(classes)


def write_manifest(path: str, manifest: SplitManifest) -> None:
    manifest.validate()
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for name in ("base", "val", "novel"):
            ids = ",".join(str(i) for i in manifest.split(name))
            fh.write(f"{name}: {ids}\n")


def read_manifest(path: str) -> SplitManifest:
    values: dict[str, list[int]] = {}
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            if ":" not in line:
                raise FormatError("manifest line is not 'split: ids'")
            name, ids = line.split(":", 1)
            name = name.strip()
            if name not in ("base", "val", "novel"):
                raise FormatError(f"unknown split name {name!r} in manifest")
            values[name] = [int(tok) for tok in ids.split(",") if tok.strip() != ""]
    if set(values) != {"base", "val", "novel"}:
        raise FormatError("manifest must define base, val and novel splits")
    manifest = SplitManifest(values["base"], values["val"], values["novel"])
    manifest.validate()
    return manifest


# -- episode sampling ----------------------------------------------------------


def sample_episode(
    ds: DatasetFile,
    class_ids: list[int],
    n_way: int,
    k_shot: int,
    q_query: int,
    seed: tuple[int, ...] | int,
) -> Episode:
    """N distinct classes, then K support + Q query per class, all without
    replacement, deterministic in ``seed``. K may be 0 (zero-shot protocol)."""
    if n_way <= 0 or k_shot < 0 or q_query < 0:
        raise InvalidArgumentError("episode sizes must be non-negative (N positive)")
    if len(class_ids) < n_way:
        raise CapacityError(
            f"split has {len(class_ids)} classes, episode needs {n_way}"
        )
    per_class = ds.samples_per_class
    if per_class < k_shot + q_query:
        raise CapacityError(
            f"classes hold {per_class} samples, episode needs {k_shot + q_query}"
        )
    rng = rng_for(*seed) if isinstance(seed, tuple) else rng_for(seed)
    chosen = rng.choice(np.asarray(sorted(class_ids)), size=n_way, replace=False)
    sup_x, sup_ids, qry_x, qry_y, qry_ids, toks = [], [], [], [], [], []
    for label, class_id in enumerate(chosen):
        rec = ds.by_id(int(class_id))
        order = rng.permutation(per_class)
        sup_idx = order[:k_shot]
        qry_idx = order[k_shot : k_shot + q_query]
        sup_x.append(rec.features[sup_idx].astype(np.float64))
        sup_ids.append(rec.class_id * per_class + sup_idx)
        qry_x.append(rec.features[qry_idx].astype(np.float64))
        qry_ids.append(rec.class_id * per_class + qry_idx)
        qry_y.append(np.full(q_query, label, dtype=np.int64))
        toks.append(rec.token_id)
    episode = Episode(
        n_way=n_way,
        k_shot=k_shot,
        q_query=q_query,
        class_ids=np.asarray(chosen, dtype=np.int64),
        token_ids=np.asarray(toks, dtype=np.int64),
        support_x=np.stack(sup_x) if k_shot else np.zeros((n_way, 0, ds.d_in)),
        support_ids=np.stack(sup_ids) if k_shot else np.zeros((n_way, 0), dtype=np.int64),
        query_x=np.concatenate(qry_x) if q_query else np.zeros((0, ds.d_in)),
        query_y=np.concatenate(qry_y) if q_query else np.zeros(0, dtype=np.int64),
        query_ids=np.concatenate(qry_ids) if q_query else np.zeros(0, dtype=np.int64),
    )
    episode.validate()
    return episode


def base_training_arrays(
    ds: DatasetFile, class_ids: list[int]
) -> tuple[np.ndarray, np.ndarray, dict[int, int]]:
    """Flattened (features, labels) over a split, with class-id -> label map
    ordered by class id. Used by pre-training."""
    label_of = {cid: i for i, cid in enumerate(sorted(class_ids))}
    xs, ys = [], []
    for cid in sorted(class_ids):
        rec = ds.by_id(cid)
        xs.append(rec.features.astype(np.float64))
        ys.append(np.full(rec.features.shape[0], label_of[cid], dtype=np.int64))
    return np.concatenate(xs), np.concatenate(ys), label_of
