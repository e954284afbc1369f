import hashlib
import struct

import numpy as np
import pytest

from synthmention.corpus import CorpusSplit, Document, Mention
from synthmention.vectors import EmbeddingSpace, build_space


def make_split(name, mention_specs, source="gold"):
    """One document per mention: mention_specs is a list of (cui, surface)."""
    documents = []
    mentions = []
    for i, (cui, surface) in enumerate(mention_specs):
        doc_id = f"{name}-doc{i}"
        text = f"note: {surface} observed"
        start = text.index(surface)
        documents.append(Document(doc_id=doc_id, text=text, source=source))
        mentions.append(
            Mention(
                doc_id=doc_id,
                start=start,
                end=start + len(surface),
                surface=surface,
                cui=cui,
            )
        )
    return CorpusSplit(name=name, documents=tuple(documents), mentions=tuple(mentions))


def hash_vector(entry_id, dim):
    """Deterministic pseudo-vector derived from sha256 of the entry id."""
    out = []
    counter = 0
    while len(out) < dim:
        digest = hashlib.sha256(f"{entry_id}:{counter}".encode()).digest()
        for i in range(0, len(digest) - 3, 4):
            (u,) = struct.unpack_from("<I", digest, i)
            out.append(u / 2**32 - 0.5)

        counter += 1
    return out[:dim]


def hash_space(mentions, dim=16):
    entries = [(m.mention_id, m.cui, hash_vector(m.mention_id, dim)) for m in mentions]
    return build_space(dim, entries)


# -- independent oracles -----------------------------------------------------

def ref_levenshtein(a, b):
    """Textbook full-matrix DP, independent of the package implementation."""
    n, m = len(a), len(b)
    d = [[0] * (m + 1) for _ in range(n + 1)]
    for i in range(n + 1):
        d[i][0] = i
    for j in range(m + 1):
        d[0][j] = j
    for i in range(1, n + 1):
        for j in range(1, m + 1):
            cost = 0 if a[i - 1] == b[j - 1] else 1
            d[i][j] = min(d[i - 1][j] + 1, d[i][j - 1] + 1, d[i - 1][j - 1] + cost)
    return d[n][m]


def brute_force_fuzzy(haystack, needle, budget):
    """Enumerate every non-empty window; same tie rules as fuzzy_locate."""
    h = haystack.lower()
    n = needle.lower()
    best = None
    for s in range(len(h)):
        for e in range(s + 1, len(h) + 1):
            d = ref_levenshtein(h[s:e], n)
            key = (d, s, e - s)
            if best is None or key < best:
                best = key
    if best is None or best[0] > budget:
        return None
    return (best[1], best[1] + best[2], best[0])


def exhaustive_knn(space: EmbeddingSpace, query, rescale=True):
    """Cosine scan over all entries, sorted by (-sim, cui, entry_id)."""
    mat = np.asarray(space.vectors, dtype=np.float64)
    norms = np.linalg.norm(mat, axis=1)
    norms[norms == 0] = 1.0
    q = np.asarray(query, dtype=np.float64)
    qn = np.linalg.norm(q)
    if qn > 0:
        q = q / qn
    sims = (mat / norms[:, None]) @ q
    if rescale:
        sims = (1.0 + sims) / 2.0
    order = sorted(
        range(len(sims)),
        key=lambda i: (-sims[i], space.cuis[i], space.entry_ids[i]),
    )
    return [(float(sims[i]), space.cuis[i], space.entry_ids[i]) for i in order]


@pytest.fixture
def rng():
    return np.random.default_rng(20240817)


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    """One pass/fail line per acceptance criterion."""
    lines = []
    for status, word in (("passed", "PASS"), ("failed", "FAIL"), ("error", "FAIL")):
        for rep in terminalreporter.stats.get(status, []):
            nodeid = getattr(rep, "nodeid", "")
            if nodeid.startswith("tests/test_acceptance.py::") and getattr(rep, "when", "call") == "call":
                lines.append((nodeid.split("::")[-1], word))
    if lines:
        terminalreporter.write_line("")
        terminalreporter.write_line("acceptance criteria:")
        for name, word in sorted(lines):
            terminalreporter.write_line(f"  {word}  {name}")
