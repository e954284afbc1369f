"""Embedding spaces and the MFV1 vector file format.

MFV1 binary layout: magic "MFV1", u32 little-endian dim, then repeated
records [u16 id-length, UTF-8 entry_id, u16 cui-length, UTF-8 cui,
dim x f32 little-endian].  A TSV mirror (entry_id, cui, space-separated
floats) is accepted as well.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from .errors import DataError, ParseError

MAGIC = b"MFV1"


@dataclass(frozen=True)
class EmbeddingSpace:
    dim: int
    entry_ids: tuple[str, ...]
    cuis: tuple[str, ...]
    vectors: np.ndarray  # shape (n, dim), float32

    def __post_init__(self):
        if self.dim <= 0:
            raise DataError("embedding dim must be > 0")
        if self.vectors.shape != (len(self.entry_ids), self.dim):
            raise DataError(
                f"vector matrix shape {self.vectors.shape} does not match "
                f"{len(self.entry_ids)} entries x dim {self.dim}"
            )
        if len(set(self.entry_ids)) != len(self.entry_ids):
            raise DataError("duplicate entry_id in embedding space")
        if not np.all(np.isfinite(self.vectors)):
            bad = int(np.argwhere(~np.all(np.isfinite(self.vectors), axis=1))[0][0])
            raise DataError(
                f"non-finite vector component in entry {self.entry_ids[bad]!r}"
            )

    def __len__(self):
        return len(self.entry_ids)


def build_space(dim: int, entries: list[tuple[str, str, list[float]]]) -> EmbeddingSpace:
    ids = []
    cuis = []
    rows = []
    for entry_id, cui, vec in entries:
        if len(vec) != dim:
            raise DataError(
                f"entry {entry_id!r} has {len(vec)} components, expected {dim}"
            )
        ids.append(entry_id)
        cuis.append(cui)
        rows.append(vec)
    mat = (
        np.asarray(rows, dtype=np.float32)
        if rows
        else np.zeros((0, dim), dtype=np.float32)
    )
    return EmbeddingSpace(dim=dim, entry_ids=tuple(ids), cuis=tuple(cuis), vectors=mat)


def write_mfv1(space: EmbeddingSpace, path) -> None:
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<I", space.dim))
        for entry_id, cui, vec in zip(space.entry_ids, space.cuis, space.vectors):
            id_b = entry_id.encode("utf-8")
            cui_b = cui.encode("utf-8")
            fh.write(struct.pack("<H", len(id_b)))
            fh.write(id_b)
            fh.write(struct.pack("<H", len(cui_b)))
            fh.write(cui_b)
            fh.write(np.asarray(vec, dtype="<f4").tobytes())


def read_mfv1(path) -> EmbeddingSpace:
    with open(path, "rb") as fh:
        data = fh.read()
    if data[:4] != MAGIC:
        raise ParseError("not an MFV1 file (bad magic)", path=path)
    if len(data) < 8:
        raise ParseError("truncated MFV1 header", path=path)
    (dim,) = struct.unpack_from("<I", data, 4)
    if dim == 0:
        raise ParseError("MFV1 dim must be > 0", path=path)
    pos = 8
    entries = []
    vec_bytes = 4 * dim
    while pos < len(data):
        try:
            (id_len,) = struct.unpack_from("<H", data, pos)
            pos += 2
            entry_id = data[pos : pos + id_len].decode("utf-8")
            pos += id_len
            (cui_len,) = struct.unpack_from("<H", data, pos)
            pos += 2
            cui = data[pos : pos + cui_len].decode("utf-8")
            pos += cui_len
            if pos + vec_bytes > len(data):
                raise ParseError(
                    f"truncated vector for entry {entry_id!r}", path=path
                )
            vec = np.frombuffer(data, dtype="<f4", count=dim, offset=pos)
            pos += vec_bytes
        except struct.error:
            raise ParseError("truncated MFV1 record", path=path)
        if not np.all(np.isfinite(vec)):
            raise DataError(f"non-finite component in entry {entry_id!r} ({path})")
        entries.append((entry_id, cui, vec))
    ids = tuple(e[0] for e in entries)
    cuis = tuple(e[1] for e in entries)
    mat = (
        np.vstack([e[2] for e in entries]).astype(np.float32)
        if entries
        else np.zeros((0, dim), dtype=np.float32)
    )
    return EmbeddingSpace(dim=dim, entry_ids=ids, cuis=cuis, vectors=mat)


def read_text_vectors(path) -> EmbeddingSpace:
    """TSV mirror of MFV1: entry_id, cui, space-separated floats."""
    entries = []
    dim = None
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\n")
            if not line:
                continue
            cols = line.split("\t")
            if len(cols) != 3:
                raise ParseError(
                    f"vector row needs 3 tab-separated fields, got {len(cols)}",
                    path=path,
                    line=lineno,
                )
            entry_id, cui, floats = cols
            try:
                vec = [float(x) for x in floats.split()]
            except ValueError as exc:
                raise ParseError(f"bad float: {exc}", path=path, line=lineno)
            if dim is None:
                dim = len(vec)
            elif len(vec) != dim:
                raise ParseError(
                    f"entry {entry_id!r} has {len(vec)} components, expected {dim}",
                    path=path,
                    line=lineno,
                )
            if not all(np.isfinite(vec)):
                raise DataError(f"non-finite component in entry {entry_id!r} ({path})")
            entries.append((entry_id, cui, vec))
    if dim is None:
        raise ParseError("empty vector file", path=path)
    return build_space(dim, entries)


def embed_corpus_ingest(path, text_format: bool = False) -> EmbeddingSpace:
    """Load a vector file (binary MFV1, or the TSV mirror with
    text_format=True), validating dims and finiteness."""
    return read_text_vectors(path) if text_format else read_mfv1(path)
