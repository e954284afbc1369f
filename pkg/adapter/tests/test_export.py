import json
import subprocess

import numpy as np
import pytest

from embed_adapter.cli import main
from embed_adapter.export import (
    ExportError,
    export_vectors,
    read_mentions,
    read_mfv1,
)


def write_corpus(path, specs):
    """specs: list of (cui, surface).  One document per mention."""
    with open(path, "w", encoding="utf-8") as fh:
        for i, (cui, surface) in enumerate(specs):
            doc_id = f"doc{i}"
            text = f"history of {surface} in the chart"
            start = text.index(surface)
            fh.write(json.dumps({"doc_id": doc_id, "text": text, "source": "gold"}) + "\n")
            fh.write(
                json.dumps(
                    {
                        "doc_id": doc_id,
                        "start": start,
                        "end": start + len(surface),
                        "surface": surface,
                        "cui": cui,
                    }
                )
                + "\n"
            )


@pytest.fixture
def corpus(tmp_path):
    path = tmp_path / "mentions.jsonl"
    write_corpus(path, [(f"C{i}", f"condition {i}") for i in range(10)])
    return path


class TestReadMentions:
    def test_sorted_by_entry_id(self, corpus):
        entries = read_mentions(corpus)
        ids = [e.entry_id for e in entries]
        assert ids == sorted(ids)
        assert len(entries) == 10

    def test_context_window(self, tmp_path):
        path = tmp_path / "m.jsonl"
        write_corpus(path, [("C1", "angina")])
        (entry,) = read_mentions(path, context_chars=3)
        assert entry.surface == "angina"
        assert entry.context == "of angina in"

    def test_empty_file_rejected(self, tmp_path):
        path = tmp_path / "empty.jsonl"
        path.write_text("")
        with pytest.raises(ExportError):
            read_mentions(path)


class TestExport:
    def test_counts_dims_and_norms(self, corpus, tmp_path):
        out = tmp_path / "v.mfv1"
        manifest = export_vectors(corpus, "hash://32", "mean", "surface", out)
        assert manifest.dim == 32 and manifest.entries == 10
        dim, records = read_mfv1(out)
        assert dim == 32 and len(records) == 10
        assert manifest.entries == len(records)
        for _, _, vec in records:
            assert abs(float(np.linalg.norm(vec)) - 1.0) < 1e-4

    def test_rerun_byte_identical(self, corpus, tmp_path):
        out = tmp_path / "v.mfv1"
        export_vectors(corpus, "hash://16", "cls", "surface", out)
        first = out.read_bytes()
        export_vectors(corpus, "hash://16", "cls", "surface", out)
        assert out.read_bytes() == first

    def test_duplicate_surfaces_identical_vectors(self, tmp_path):
        path = tmp_path / "dup.jsonl"
        write_corpus(path, [("C1", "berylliosis"), ("C2", "berylliosis")])
        out = tmp_path / "v.mfv1"
        export_vectors(path, "hash://16", "mean", "surface", out)
        _, records = read_mfv1(out)
        assert len(records) == 2
        assert records[0][0] != records[1][0]
        assert np.array_equal(records[0][2], records[1][2])

    def test_contextual_distinguishes_duplicates(self, tmp_path):
        path = tmp_path / "dup.jsonl"
        write_corpus(path, [("C1", "berylliosis"), ("C2", "berylliosis")])
        # same surface but different surrounding text
        lines = path.read_text().splitlines()
        rec = json.loads(lines[2])
        text = "new complaint of berylliosis after exposure"
        start = text.index("berylliosis")
        lines[2] = json.dumps({"doc_id": rec["doc_id"], "text": text, "source": "gold"})
        mention = json.loads(lines[3])
        mention["start"], mention["end"] = start, start + len("berylliosis")
        lines[3] = json.dumps(mention)
        path.write_text("\n".join(lines) + "\n")
        out = tmp_path / "v.mfv1"
        export_vectors(path, "hash://16", "mean", "contextual", out)
        _, records = read_mfv1(out)
        assert not np.array_equal(records[0][2], records[1][2])

    def test_pooling_modes_differ(self, corpus, tmp_path):
        a, b = tmp_path / "a.mfv1", tmp_path / "b.mfv1"
        export_vectors(corpus, "hash://16", "cls", "surface", a)
        export_vectors(corpus, "hash://16", "mean", "surface", b)
        assert a.read_bytes() != b.read_bytes()

    def test_manifest_file(self, corpus, tmp_path):
        out = tmp_path / "v.mfv1"
        export_vectors(corpus, "hash://8", "mean", "surface", out)
        manifest = json.loads((tmp_path / "v.mfv1.manifest.json").read_text())
        assert manifest["dim"] == 8
        assert manifest["entries"] == 10
        assert manifest["model"] == "hash://8"
        assert len(manifest["mentions_sha256"]) == 64


class TestCli:
    def args(self, corpus, out, model="hash://24"):
        return [
            "--mentions", str(corpus),
            "--model", model,
            "--pooling", "mean",
            "--input", "surface",
            "--out", str(out),
        ]

    def test_success(self, corpus, tmp_path, capsys):
        rc = main(self.args(corpus, tmp_path / "v.mfv1"))
        assert rc == 0
        assert "10 vectors, dim 24" in capsys.readouterr().out

    def test_bad_model_spec_names_model(self, corpus, tmp_path, capsys):
        rc = main(self.args(corpus, tmp_path / "v.mfv1", model="hash://zero"))
        assert rc == 2
        assert "hash://zero" in capsys.readouterr().err

    def test_missing_option_is_usage_error(self):
        assert main(["--model", "hash://8"]) == 1


class TestConsumerInterface:
    def test_primary_cli_ingests_export(self, corpus, tmp_path):
        """The downstream toolkit's ingest command accepts our output."""
        out = tmp_path / "v.mfv1"
        rc = main(
            [
                "--mentions", str(corpus),
                "--model", "hash://32",
                "--pooling", "mean",
                "--input", "surface",
                "--out", str(out),
            ]
        )
        assert rc == 0
        proc = subprocess.run(
            ["synthmention", "ingest", "--vectors", str(out)],
            capture_output=True,
            text=True,
        )
        assert proc.returncode == 0, proc.stderr
        assert "10 entries, dim 32" in proc.stdout
