"""Text encoders.

Two families: the built-in deterministic ``hash://<dim>`` encoder (no
model weights, used for fixtures and plumbing tests) and HuggingFace
transformer encoders loaded by model id.
"""

from __future__ import annotations

import hashlib
import struct

import numpy as np


class EncoderError(Exception):
    pass


def _hash_token_vector(token: str, dim: int) -> np.ndarray:
    """Pseudo-embedding from sha256 of the token, components in [-0.5, 0.5)."""
    out = []
    counter = 0
    while len(out) < dim:
        digest = hashlib.sha256(f"{token}\x00{counter}".encode()).digest()
        for i in range(0, len(digest) - 3, 4):
            (u,) = struct.unpack_from("<I", digest, i)
            out.append(u / 2**32 - 0.5)
        counter += 1
    return np.array(out[:dim], dtype=np.float64)


class HashEncoder:
    """Deterministic stand-in encoder: one pseudo-embedding per whitespace
    token, pooled like a real model would be (cls pools a synthetic [CLS]
    vector derived from the full text; mean averages the token vectors)."""

    def __init__(self, dim: int):
        if dim < 1:
            raise EncoderError(f"hash encoder dim must be >= 1, got {dim}")
        self.dim = dim

    def encode(self, texts: list[str], pooling: str) -> np.ndarray:
        rows = []
        for text in texts:
            if pooling == "cls":
                vec = _hash_token_vector(f"[CLS]{text}", self.dim)
            else:
                tokens = text.split() or [""]
                vec = np.mean(
                    [_hash_token_vector(t, self.dim) for t in tokens], axis=0
                )
            rows.append(vec)
        return np.stack(rows)


class TransformerEncoder:
    """HuggingFace encoder in eval mode; cls pooling takes the first
    hidden state, mean pooling averages over the attention mask."""

    def __init__(self, model_id: str):
        try:
            import torch
            from transformers import AutoModel, AutoTokenizer
        except ImportError as exc:
            raise EncoderError(
                f"cannot load encoder {model_id!r}: transformers/torch not installed ({exc})"
            )
        try:
            self.tokenizer = AutoTokenizer.from_pretrained(model_id)
            self.model = AutoModel.from_pretrained(model_id)
        except Exception as exc:
            raise EncoderError(f"cannot load encoder {model_id!r}: {exc}")
        self.model.eval()
        self._torch = torch
        self.dim = self.model.config.hidden_size

    def encode(self, texts: list[str], pooling: str) -> np.ndarray:
        torch = self._torch
        batch = self.tokenizer(
            texts, padding=True, truncation=True, return_tensors="pt"
        )
        with torch.no_grad():
            hidden = self.model(**batch).last_hidden_state
        if pooling == "cls":
            pooled = hidden[:, 0]
        else:
            mask = batch["attention_mask"].unsqueeze(-1)
            pooled = (hidden * mask).sum(1) / mask.sum(1).clamp(min=1)
        return pooled.double().numpy()


def load_encoder(model_id: str):
    if model_id.startswith("hash://"):
        try:
            dim = int(model_id[len("hash://") :])
        except ValueError:
            raise EncoderError(f"bad hash encoder spec {model_id!r}; expected hash://<dim>")
        return HashEncoder(dim)
    return TransformerEncoder(model_id)
