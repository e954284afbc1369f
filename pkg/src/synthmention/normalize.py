"""Normalization engines: exact dictionary, token overlap, character
3-gram TF-IDF, and exact-kNN over embedding vectors (nearest and
majority-vote modes).

All engines are exact and deterministic: identical inputs produce
identical ranked output regardless of thread count.
"""

from __future__ import annotations

import math
import re
from collections import Counter
from dataclasses import dataclass

import numpy as np

from .corpus import ConceptTable, CorpusSplit
from .errors import DataError
from .vectors import EmbeddingSpace

MODES = ("exact", "token_overlap", "char3gram", "knn_nearest", "knn_vote")

_TOKEN_RE = re.compile(r"[^\W_]+", re.UNICODE)


@dataclass(frozen=True)
class NormalizerConfig:
    mode: str = "exact"
    jaccard_threshold: float = 0.7
    vote_k: int = 5
    k_max: int = 50

    def __post_init__(self):
        if self.mode not in MODES:
            raise DataError(f"unknown mode {self.mode!r}; expected one of {MODES}")
        if not (0.0 <= self.jaccard_threshold <= 1.0):
            raise DataError("jaccard_threshold must lie in [0, 1]")
        if self.vote_k < 1:
            raise DataError("vote_k must be >= 1")
        if self.vote_k > self.k_max:
            raise DataError("vote_k must not exceed k_max")


@dataclass(frozen=True)
class CandidateList:
    query_id: str
    ranked: tuple[tuple[str, float], ...]

    def __post_init__(self):
        cuis = [c for c, _ in self.ranked]
        if len(set(cuis)) != len(cuis):
            raise DataError(f"duplicate cui in candidate list for {self.query_id!r}")
        scores = [s for _, s in self.ranked]
        if any(a < b for a, b in zip(scores, scores[1:])):
            raise DataError(f"scores not non-increasing for {self.query_id!r}")

    def cuis(self) -> list[str]:
        return [c for c, _ in self.ranked]


def _norm_text(s: str) -> str:
    return "".join(c.lower() if len(c.lower()) == 1 else c for c in s)


def _tokens(s: str) -> frozenset[str]:
    return frozenset(_TOKEN_RE.findall(_norm_text(s)))


def _trigrams(s: str) -> Counter:
    s = _norm_text(s)
    if len(s) < 3:
        s = s + "#" * (3 - len(s))  # boundary padding keeps abbreviations matchable
    return Counter(s[i : i + 3] for i in range(len(s) - 2))


class StringIndex:
    """Index over (name -> cui) pairs from a concept table plus optional
    synthetic mention surfaces; supports exact, token-set, and character
    3-gram TF-IDF lookups."""

    def __init__(self, table: ConceptTable, synth: CorpusSplit | None = None):
        if len(table) == 0:
            raise DataError("cannot build a string index over an empty concept table")
        pairs: list[tuple[str, str]] = []
        seen: set[tuple[str, str]] = set()

        def add(name: str, cui: str):
            key = (_norm_text(name), cui)
            if name and key not in seen:
                seen.add(key)
                pairs.append((name, cui))

        for cui in sorted(table.concepts):
            concept = table[cui]
            for name in concept.all_names:
                add(name, cui)
        if synth is not None:
            for m in synth.mentions:
                add(m.surface, m.cui)

        self.names: list[str] = [p[0] for p in pairs]
        self.cuis: list[str] = [p[1] for p in pairs]
        self._exact: dict[str, set[str]] = {}
        self._token_sets: list[frozenset[str]] = []
        for name, cui in pairs:
            self._exact.setdefault(_norm_text(name), set()).add(cui)
            self._token_sets.append(_tokens(name))

        # TF-IDF over character trigrams, one "document" per indexed name.
        counts = [_trigrams(name) for name in self.names]
        df = Counter()
        for c in counts:
            df.update(c.keys())
        n_docs = len(counts)
        self._idf = {
            g: math.log((1 + n_docs) / (1 + d)) + 1.0 for g, d in df.items()
        }
        self._default_idf = math.log(1 + n_docs) + 1.0
        self._tfidf: list[dict[str, float]] = []
        for c in counts:
            vec = {g: tf * self._idf[g] for g, tf in c.items()}
            norm = math.sqrt(sum(w * w for w in vec.values()))
            if norm > 0:
                vec = {g: w / norm for g, w in vec.items()}
            self._tfidf.append(vec)

    def query_tfidf(self, query: str) -> dict[str, float]:
        c = _trigrams(query)
        vec = {g: tf * self._idf.get(g, self._default_idf) for g, tf in c.items()}
        norm = math.sqrt(sum(w * w for w in vec.values()))
        if norm > 0:
            vec = {g: w / norm for g, w in vec.items()}
        return vec

    def exact_lookup(self, query: str) -> set[str]:
        return self._exact.get(_norm_text(query), set())

    def token_set(self, i: int) -> frozenset[str]:
        return self._token_sets[i]

    def tfidf(self, i: int) -> dict[str, float]:
        return self._tfidf[i]


def build_string_index(table: ConceptTable, synth: CorpusSplit | None = None) -> StringIndex:
    return StringIndex(table, synth)


def _rank_per_cui(
    scored: list[tuple[str, float]], k_max: int
) -> tuple[tuple[str, float], ...]:
    """Deduplicate to best score per cui, rank by (score desc, cui asc),
    truncate to k_max."""
    best: dict[str, float] = {}
    for cui, score in scored:
        if cui not in best or score > best[cui]:
            best[cui] = score
    ranked = sorted(best.items(), key=lambda kv: (-kv[1], kv[0]))
    return tuple(ranked[:k_max])


def normalize_exact(
    query: str, query_id: str, index: StringIndex, cfg: NormalizerConfig
) -> CandidateList:
    if not query.strip():
        return CandidateList(query_id=query_id, ranked=())
    hits = sorted(index.exact_lookup(query))
    return CandidateList(
        query_id=query_id, ranked=tuple((cui, 1.0) for cui in hits[: cfg.k_max])
    )


def normalize_token_overlap(
    query: str, query_id: str, index: StringIndex, cfg: NormalizerConfig
) -> CandidateList:
    q = _tokens(query)
    if not q:
        return CandidateList(query_id=query_id, ranked=())
    scored = []
    for i, cui in enumerate(index.cuis):
        name_tokens = index.token_set(i)
        union = len(q | name_tokens)
        score = len(q & name_tokens) / union if union else 0.0
        if score >= cfg.jaccard_threshold:
            scored.append((cui, score))
    return CandidateList(query_id=query_id, ranked=_rank_per_cui(scored, cfg.k_max))


def normalize_char3gram(
    query: str, query_id: str, index: StringIndex, cfg: NormalizerConfig
) -> CandidateList:
    if not query.strip():
        return CandidateList(query_id=query_id, ranked=())
    qvec = index.query_tfidf(query)
    scored = []
    for i, cui in enumerate(index.cuis):
        nvec = index.tfidf(i)
        small, large = (qvec, nvec) if len(qvec) <= len(nvec) else (nvec, qvec)
        score = sum(w * large.get(g, 0.0) for g, w in small.items())
        if score > 0.0:
            scored.append((cui, score))
    return CandidateList(query_id=query_id, ranked=_rank_per_cui(scored, cfg.k_max))


class VectorIndex:
    """Exact nearest-neighbor index: results always equal an exhaustive
    scan.  Similarity is cosine over L2-normalized vectors, rescaled to
    [0, 1] via (1 + cos) / 2."""

    def __init__(self, space: EmbeddingSpace):
        self.dim = space.dim
        self.entry_ids = space.entry_ids
        self.cuis = space.cuis
        vecs = np.asarray(space.vectors, dtype=np.float64)
        norms = np.linalg.norm(vecs, axis=1, keepdims=True)
        norms[norms == 0] = 1.0
        self.matrix = vecs / norms

    def similarities(self, query_vec) -> np.ndarray:
        q = np.asarray(query_vec, dtype=np.float64)
        if q.shape != (self.dim,):
            raise DataError(
                f"query vector has shape {q.shape}, index dim is {self.dim}"
            )
        norm = np.linalg.norm(q)
        if norm > 0:
            q = q / norm
        cos = self.matrix @ q
        return (1.0 + cos) / 2.0

    def scan(self, query_vec) -> list[tuple[float, str, str]]:
        """All entries as (similarity, cui, entry_id), best first; ties by
        cui then entry_id ascending."""
        sims = self.similarities(query_vec)
        order = sorted(
            range(len(sims)), key=lambda i: (-sims[i], self.cuis[i], self.entry_ids[i])
        )
        return [(float(sims[i]), self.cuis[i], self.entry_ids[i]) for i in order]


def build_vector_index(space: EmbeddingSpace) -> VectorIndex:
    return VectorIndex(space)


def normalize_knn(
    query_vec, query_id: str, index: VectorIndex, cfg: NormalizerConfig
) -> CandidateList:
    """Nearest mode ranks cuis by best similarity; vote mode ranks the
    cuis of the vote_k nearest entries by (vote count, max similarity,
    cui) and fills remaining positions by similarity order."""
    entries = index.scan(query_vec)
    dedup = _rank_per_cui([(cui, sim) for sim, cui, _ in entries], len(entries) or 1)

    if cfg.mode != "knn_vote":
        return CandidateList(query_id=query_id, ranked=tuple(dedup[: cfg.k_max]))

    neighbors = entries[: cfg.vote_k]
    votes: dict[str, int] = {}
    best_sim: dict[str, float] = {}
    for sim, cui, _ in neighbors:
        votes[cui] = votes.get(cui, 0) + 1
        if cui not in best_sim or sim > best_sim[cui]:
            best_sim[cui] = sim
    voted = sorted(votes, key=lambda c: (-votes[c], -best_sim[c], c))
    ranked = [(cui, votes[cui] + best_sim[cui]) for cui in voted]
    for cui, sim in dedup:
        if len(ranked) >= cfg.k_max:
            break
        if cui not in votes:
            ranked.append((cui, sim))
    return CandidateList(query_id=query_id, ranked=tuple(ranked[: cfg.k_max]))
