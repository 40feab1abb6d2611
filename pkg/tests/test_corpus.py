import logging

import pytest
from hypothesis import given, settings, strategies as st

from parloop import corpus
from parloop.corpus import LoopSample, assemble, ingest_real, load, loads, save
from parloop.errors import EmptyClassError, MalformedAnnotationError, MissingAnnotationError, SchemaVersionError


def syn(k: int, label: int) -> LoopSample:
    return LoopSample.make(f"loop {k} class {label}\n", label, "synthetic", f"ga:{k}")


def real(k: int, label: int) -> LoopSample:
    return LoopSample.make(f"real {k} class {label}\n", label, "real", f"file:{k}.c")


def test_sample_id_is_content_hash():
    a = LoopSample.make("x\n", 1, "synthetic")
    b = LoopSample.make("x\n", 0, "real")
    assert a.id == b.id and len(a.id) == 16


def test_sample_validation():
    with pytest.raises(ValueError):
        LoopSample.make("", 1, "synthetic")
    with pytest.raises(ValueError):
        LoopSample.make("x", 2, "synthetic")


class TestAssemble:
    def test_full_scale_sizes(self):
        synthetic = [syn(k, 1) for k in range(4000)] + [syn(k, 0) for k in range(4000)]
        reals = [real(k, 1) for k in range(170)] + [real(k, 0) for k in range(170)]
        c = assemble(synthetic, reals)
        assert len(c) == 8340 and c.counts == {"0": 4170, "1": 4170}

    def test_truncates_synthetic_tail_first(self):
        synthetic = [syn(k, 1) for k in range(10)] + [syn(k, 0) for k in range(4)]
        reals = [real(k, 1) for k in range(2)]
        c = assemble(synthetic, reals)
        ones = [s for s in c.samples if s.label == 1]
        assert c.counts == {"0": 4, "1": 4}
        assert {s.origin for s in ones} == {"real", "synthetic"}
        assert [s.provenance for s in ones if s.origin == "synthetic"] == ["ga:0", "ga:1"]

    def test_per_class_cap(self):
        c = assemble([syn(k, 1) for k in range(10)] + [syn(k, 0) for k in range(20)], per_class_cap=5)
        assert c.counts == {"0": 5, "1": 5}

    def test_unbalanced_keeps_all(self):
        c = assemble([syn(k, 1) for k in range(3)] + [syn(k, 0) for k in range(5)], balance=False)
        assert c.counts == {"0": 5, "1": 3}

    def test_dedup_across_origins(self):
        s = syn(1, 1)
        twin = LoopSample.make(s.source_text, 1, "real", "file:x.c")
        c = assemble([s, syn(2, 0)], [twin])
        assert len(c) == 2
        assert any("cross-origin" in d for d in c.manifest["decisions"])

    def test_empty_class(self):
        with pytest.raises(EmptyClassError):
            assemble([syn(k, 1) for k in range(3)])

    def test_deterministic_digest(self):
        items = [syn(k, k % 2) for k in range(20)]
        assert assemble(items).digest() == assemble(list(items)).digest()

    @settings(max_examples=50, deadline=None)
    @given(st.lists(st.tuples(st.integers(0, 40), st.integers(0, 1), st.booleans()), min_size=2))
    def test_balance_invariant(self, entries):
        items = [(real if is_real else syn)(k, lab) for k, lab, is_real in entries]
        labels = {s.label for s in items}
        if labels != {0, 1}:
            with pytest.raises(EmptyClassError):
                assemble([s for s in items if s.origin == "synthetic"], [s for s in items if s.origin == "real"])
            return
        c = assemble([s for s in items if s.origin == "synthetic"], [s for s in items if s.origin == "real"])
        assert c.counts["0"] == c.counts["1"]
        assert len({s.id for s in c.samples}) == len(c)


class TestStorage:
    def test_round_trip(self, tmp_path):
        c = assemble([syn(k, k % 2) for k in range(30)], [real(1, 0)], config_hash="abc")
        save(c, tmp_path / "c.jsonl")
        assert load(tmp_path / "c.jsonl") == c

    def test_unicode_round_trip(self, tmp_path):
        s = LoopSample.make("// café → x\n", 1, "real")
        c = assemble([syn(1, 0)], [s])
        save(c, tmp_path / "u.jsonl")
        assert load(tmp_path / "u.jsonl") == c

    def test_truncated_file(self):
        text = corpus.dumps(assemble([syn(k, k % 2) for k in range(10)]))
        with pytest.raises(SchemaVersionError):
            loads(text[:-1])
        lines = text.splitlines(keepends=True)
        with pytest.raises(SchemaVersionError):
            loads("".join(lines[:-2]))

    def test_unknown_schema(self):
        with pytest.raises(SchemaVersionError):
            loads('{"schema": 99}\n')

    def test_tampered_sample(self):
        text = corpus.dumps(assemble([syn(1, 0), syn(2, 1)]))
        with pytest.raises(SchemaVersionError):
            loads(text.replace("loop 1", "loop 9"))

    def test_manifest_fields(self, monkeypatch):
        monkeypatch.setenv("SOURCE_DATE_EPOCH", "86400")
        c = assemble([syn(1, 0), syn(2, 1)], config_hash="h")
        assert c.manifest["schema"] == 1 and c.manifest["config_hash"] == "h"
        assert c.manifest["created"].startswith("1970-01-02")


class TestIngest:
    def write(self, d, files, annotations):
        for name, text in files.items():
            (d / name).write_text(text)
        (d / "annotations.csv").write_text(annotations)

    def test_labels_verbatim(self, tmp_path):
        self.write(tmp_path, {"a.c": "int a;\n", "b.c": "int b;\n"}, "filename,label\na.c,1\nb.c,0\n")
        out = ingest_real(tmp_path)
        assert [(s.provenance, s.label, s.origin) for s in out] == [("file:a.c", 1, "real"), ("file:b.c", 0, "real")]

    def test_missing_annotation(self, tmp_path, caplog):
        self.write(tmp_path, {"a.c": "int a;\n", "b.c": "int b;\n"}, "a.c,1\n")
        errors = []
        with caplog.at_level(logging.WARNING):
            out = ingest_real(tmp_path, errors)
        assert len(out) == 1
        assert isinstance(errors[0], MissingAnnotationError)
        assert "b.c" in caplog.text

    def test_bad_label(self, tmp_path):
        self.write(tmp_path, {"a.c": "x\n"}, "a.c,2\n")
        with pytest.raises(MalformedAnnotationError):
            ingest_real(tmp_path)

    def test_duplicate_row(self, tmp_path):
        self.write(tmp_path, {"a.c": "x\n"}, "a.c,1\na.c,0\n")
        with pytest.raises(MalformedAnnotationError):
            ingest_real(tmp_path)

    def test_oracle_disagreement_is_only_logged(self, tmp_path, caplog):
        src = "void kernel(int n, int a[n]) {\n    for (int i = 1; i < n; i++) {\n        a[i] = a[i - 1];\n    }\n}\n"
        self.write(tmp_path, {"k.c": src}, "k.c,1\n")
        with caplog.at_level(logging.WARNING):
            out = ingest_real(tmp_path)
        assert out[0].label == 1
        assert "disagrees" in caplog.text
