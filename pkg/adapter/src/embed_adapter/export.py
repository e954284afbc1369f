"""Mention-file parsing, MFV1 serialization, and the export pipeline.

The mention corpus is line-delimited JSON: document records carry
``text``, mention records carry ``start``/``end``/``surface``.  Entry
ids follow the ``doc_id:start-end`` convention so the emitted vectors
key directly against the consumer's mention ids.
"""

from __future__ import annotations

import hashlib
import json
import struct
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from .encoders import load_encoder

MAGIC = b"MFV1"
BATCH_SIZE = 64


class ExportError(Exception):
    pass


@dataclass(frozen=True)
class MentionEntry:
    entry_id: str
    cui: str
    surface: str
    context: str


@dataclass(frozen=True)
class AdapterManifest:
    model: str
    pooling: str
    input: str
    dim: int
    entries: int
    mentions_sha256: str


def _sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(65536), b""):
            h.update(chunk)
    return h.hexdigest()


def read_mentions(path, context_chars: int = 256) -> list[MentionEntry]:
    texts: dict[str, str] = {}
    raw_mentions = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ExportError(f"{path}:{lineno}: bad JSON: {exc}")
            if "text" in rec:
                texts[rec["doc_id"]] = rec["text"]
            elif "start" in rec:
                raw_mentions.append(rec)
    entries = []
    for rec in raw_mentions:
        doc_id, start, end = rec["doc_id"], rec["start"], rec["end"]
        text = texts.get(doc_id, "")
        lo = max(0, start - context_chars)
        hi = min(len(text), end + context_chars)
        entries.append(
            MentionEntry(
                entry_id=f"{doc_id}:{start}-{end}",
                cui=rec["cui"],
                surface=rec["surface"],
                context=text[lo:hi] if text else rec["surface"],
            )
        )
    if not entries:
        raise ExportError(f"{path}: no mentions found")
    return sorted(entries, key=lambda e: e.entry_id)


def write_mfv1(path, dim: int, records: list[tuple[str, str, np.ndarray]]) -> None:
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<I", dim))
        for entry_id, cui, vec in records:
            eid = entry_id.encode("utf-8")
            cid = cui.encode("utf-8")
            fh.write(struct.pack("<H", len(eid)))
            fh.write(eid)
            fh.write(struct.pack("<H", len(cid)))
            fh.write(cid)
            fh.write(np.asarray(vec, dtype="<f4").tobytes())


def read_mfv1(path) -> tuple[int, list[tuple[str, str, np.ndarray]]]:
    """Independent reader, used to verify our own output."""
    data = Path(path).read_bytes()
    if data[:4] != MAGIC:
        raise ExportError(f"{path}: bad magic {data[:4]!r}")
    (dim,) = struct.unpack_from("<I", data, 4)
    pos = 8
    records = []
    while pos < len(data):
        (n,) = struct.unpack_from("<H", data, pos)
        pos += 2
        entry_id = data[pos : pos + n].decode("utf-8")
        pos += n
        (n,) = struct.unpack_from("<H", data, pos)
        pos += 2
        cui = data[pos : pos + n].decode("utf-8")
        pos += n
        vec = np.frombuffer(data, dtype="<f4", count=dim, offset=pos)
        pos += 4 * dim
        records.append((entry_id, cui, vec))
    return dim, records


def export_vectors(
    mentions_path,
    model_id: str,
    pooling: str,
    input_kind: str,
    out_path,
    context_chars: int = 256,
) -> AdapterManifest:
    entries = read_mentions(mentions_path, context_chars=context_chars)
    encoder = load_encoder(model_id)

    inputs = [
        e.surface if input_kind == "surface" else e.context for e in entries
    ]
    chunks = []
    for i in range(0, len(inputs), BATCH_SIZE):
        chunks.append(encoder.encode(inputs[i : i + BATCH_SIZE], pooling))
    vectors = np.concatenate(chunks)
    norms = np.linalg.norm(vectors, axis=1, keepdims=True)
    norms[norms == 0] = 1.0
    vectors = vectors / norms

    records = [
        (e.entry_id, e.cui, vectors[i]) for i, e in enumerate(entries)
    ]
    write_mfv1(out_path, vectors.shape[1], records)

    manifest = AdapterManifest(
        model=model_id,
        pooling=pooling,
        input=input_kind,
        dim=int(vectors.shape[1]),
        entries=len(records),
        mentions_sha256=_sha256(mentions_path),
    )
    with open(str(out_path) + ".manifest.json", "w", encoding="utf-8") as fh:
        json.dump(asdict(manifest), fh, indent=2, sort_keys=True)
        fh.write("\n")
    return manifest
