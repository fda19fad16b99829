from __future__ import annotations

import json
import logging
import unicodedata

import pytest

from tfweval.corpus import (
    CorpusError,
    CorpusFormatError,
    LabelSpanPair,
    MixedSample,
    SampleValidationError,
    TaskSchema,
    fixture_text_label,
    gen_fixtures,
    get_task_schema,
    load_corpus,
    load_schema_registry,
    save_corpus,
)


def write_jsonl(path, records):
    path.write_text(
        "".join(json.dumps(r, ensure_ascii=False) + "\n" for r in records),
        encoding="utf-8",
    )


def record(sample_id="s1", text="the soup was delicious", text_label="positive",
           pairs=None):
    return {
        "id": sample_id,
        "text": text,
        "text_label": text_label,
        "pairs": pairs if pairs is not None else [{"label": "positive", "span": "delicious"}],
    }


class TestLabelSpanPair:
    def test_rejects_delimiters(self):
        with pytest.raises(CorpusError):
            LabelSpanPair("pos:itive", "x")
        with pytest.raises(CorpusError):
            LabelSpanPair("positive", "a;b")
        with pytest.raises(CorpusError):
            LabelSpanPair("positive", "a\nb")

    def test_rejects_empty(self):
        with pytest.raises(CorpusError):
            LabelSpanPair("", "x")
        with pytest.raises(CorpusError):
            LabelSpanPair("positive", "")


class TestTaskSchema:
    def test_registry_matches_task_inventories(self):
        registry = load_schema_registry()
        assert set(registry) == {
            "SCNM", "SCPOS_RW", "SCPOS_N", "SCPOS_ADJ", "SCPOS_N_ADJ", "TCREE",
        }
        assert registry["SCPOS_ADJ"].text_labels == ("positive", "negative")
        assert registry["SCPOS_ADJ"].word_labels == ("positive", "negative")
        assert registry["SCPOS_RW"].word_labels == ("positive", "neutral", "negative")
        assert registry["SCNM"].text_labels[0] == "Society"
        assert "political organizations" in registry["SCNM"].word_labels
        assert len(registry["TCREE"].word_labels) == 13

    def test_shot_counts(self):
        registry = load_schema_registry()
        for task_id, schema in registry.items():
            assert schema.icl_shots == (2 if task_id == "TCREE" else 1)

    def test_duplicate_labels_rejected(self):
        with pytest.raises(CorpusError):
            TaskSchema("X", "X", ("a", "a"), ("b",))

    def test_canonical_lookup_folds_ascii_case_only(self):
        schema = get_task_schema("TCREE")
        assert schema.canonical_text_label("it") == "IT"
        assert schema.canonical_text_label(" Sports ") == "sports"
        assert schema.canonical_text_label("unknown") is None


class TestLoadCorpus:
    def test_single_record(self, tmp_path, scpos_adj_schema):
        path = tmp_path / "c.jsonl"
        write_jsonl(path, [record()])
        samples = load_corpus(path, scpos_adj_schema)
        assert len(samples) == 1
        sample = samples[0]
        assert sample.sample_id == "s1"
        assert sample.text_label == "positive"
        assert sample.gold_pairs == (LabelSpanPair("positive", "delicious"),)
        assert sample.task_id == "SCPOS_ADJ"

    def test_empty_file(self, tmp_path, scpos_adj_schema):
        path = tmp_path / "c.jsonl"
        path.write_text("", encoding="utf-8")
        assert load_corpus(path, scpos_adj_schema) == []

    def test_text_label_outside_schema(self, tmp_path, scpos_adj_schema):
        path = tmp_path / "c.jsonl"
        write_jsonl(path, [record(text_label="neutral")])
        with pytest.raises(SampleValidationError) as excinfo:
            load_corpus(path, scpos_adj_schema)
        assert "s1" in str(excinfo.value)

    def test_pair_label_outside_schema(self, tmp_path, scpos_adj_schema):
        path = tmp_path / "c.jsonl"
        write_jsonl(path, [record(pairs=[{"label": "neutral", "span": "x"}])])
        with pytest.raises(SampleValidationError):
            load_corpus(path, scpos_adj_schema)

    def test_malformed_line_reports_line_number(self, tmp_path, scpos_adj_schema):
        path = tmp_path / "c.jsonl"
        path.write_text(
            json.dumps(record()) + "\n" + "{not json\n", encoding="utf-8"
        )
        with pytest.raises(CorpusFormatError) as excinfo:
            load_corpus(path, scpos_adj_schema)
        assert excinfo.value.line_no == 2

    def test_missing_field_reports_line_number(self, tmp_path, scpos_adj_schema):
        path = tmp_path / "c.jsonl"
        bad = record()
        del bad["text_label"]
        write_jsonl(path, [bad])
        with pytest.raises(CorpusFormatError):
            load_corpus(path, scpos_adj_schema)

    def test_unknown_fields_warn_once(self, tmp_path, scpos_adj_schema, caplog):
        path = tmp_path / "c.jsonl"
        write_jsonl(path, [
            dict(record(sample_id="a"), extra=1),
            dict(record(sample_id="b"), extra=2),
        ])
        with caplog.at_level(logging.WARNING):
            samples = load_corpus(path, scpos_adj_schema)
        assert len(samples) == 2
        warnings = [r for r in caplog.records if "extra" in r.getMessage()]
        assert len(warnings) == 1

    def test_duplicate_ids_rejected(self, tmp_path, scpos_adj_schema):
        path = tmp_path / "c.jsonl"
        write_jsonl(path, [record(), record()])
        with pytest.raises(SampleValidationError):
            load_corpus(path, scpos_adj_schema)

    def test_nfc_applied_at_load(self, tmp_path, scpos_adj_schema):
        decomposed = unicodedata.normalize("NFD", "ポジティブが美味しい")
        assert decomposed != unicodedata.normalize("NFC", decomposed)
        path = tmp_path / "c.jsonl"
        write_jsonl(path, [record(text=decomposed)])
        (sample,) = load_corpus(path, scpos_adj_schema)
        assert sample.text == unicodedata.normalize("NFC", decomposed)

    def test_round_trip(self, tmp_path, scpos_adj_schema):
        path = tmp_path / "c.jsonl"
        samples = gen_fixtures(scpos_adj_schema, 25, seed=11)
        save_corpus(samples, path)
        assert load_corpus(path, scpos_adj_schema) == samples


class TestFixtures:
    def test_size_contract(self, scpos_adj_schema):
        assert len(gen_fixtures(scpos_adj_schema, 1, seed=1)) == 1
        with pytest.raises(CorpusError):
            gen_fixtures(scpos_adj_schema, 0, seed=1)

    def test_deterministic(self, scnm_schema):
        assert gen_fixtures(scnm_schema, 40, seed=3) == gen_fixtures(scnm_schema, 40, seed=3)
        assert gen_fixtures(scnm_schema, 40, seed=3) != gen_fixtures(scnm_schema, 40, seed=4)

    def test_spans_occur_verbatim_in_text(self):
        for task in ("SCNM", "SCPOS_RW", "TCREE"):
            schema = get_task_schema(task)
            for sample in gen_fixtures(schema, 60, seed=5):
                for pair in sample.gold_pairs:
                    assert pair.span in sample.text

    def test_majority_rule(self, scpos_adj_schema):
        assert fixture_text_label(
            scpos_adj_schema, ["positive", "positive", "negative"]
        ) == "positive"
        assert fixture_text_label(
            scpos_adj_schema, ["negative", "negative", "positive"]
        ) == "negative"
        # Ties, including the no-votes case, resolve to the first text label.
        assert fixture_text_label(scpos_adj_schema, ["positive", "negative"]) == "positive"
        assert fixture_text_label(get_task_schema("SCNM"), ["people"]) == "Society"

    def test_text_label_follows_majority_rule(self, scpos_adj_schema):
        for sample in gen_fixtures(scpos_adj_schema, 80, seed=9):
            expected = fixture_text_label(
                scpos_adj_schema, [p.label for p in sample.gold_pairs]
            )
            assert sample.text_label == expected

    def test_fixture_set_survives_validation_round_trip(self, tmp_path, tcree_schema):
        path = tmp_path / "fixtures.jsonl"
        samples = gen_fixtures(tcree_schema, 50, seed=13)
        save_corpus(samples, path)
        reloaded = load_corpus(path, tcree_schema)
        assert reloaded == samples


def test_sample_as_dict_round_trip(scpos_adj_schema):
    sample = MixedSample(
        "s9", "text body", "negative",
        (LabelSpanPair("negative", "awful"),), "SCPOS_ADJ",
    )
    data = sample.as_dict()
    assert data["id"] == "s9"
    assert data["pairs"] == [{"label": "negative", "span": "awful"}]
