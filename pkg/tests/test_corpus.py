import io

import pytest
from hypothesis import given, strategies as st

from adeqa.corpus import (
    CorpusStats,
    InvalidRecord,
    MalformedRecord,
    NonNumericOffset,
    OffsetStatus,
    RawRecord,
    SplitSpec,
    TrainSizeTooLarge,
    bundled_excerpt_path,
    group_examples,
    normalize_text,
    parse_corpus,
    parse_corpus_file,
    read_examples_jsonl,
    split,
    stats,
    text_id,
    validate_offsets,
    write_examples_jsonl,
)
from conftest import SAMPLE_ROW, SAMPLE_TEXT, make_synthetic_examples


class TestParseCorpus:
    def test_sample_row_fields(self, sample_record):
        assert sample_record.pmid == "10030778"
        assert sample_record.text == SAMPLE_TEXT
        assert sample_record.ade_surface == "ototoxicity"
        assert sample_record.ade_begin == 43
        assert sample_record.ade_end == 54
        assert sample_record.drug_surface == "azithromycin"
        assert sample_record.drug_begin == 22
        assert sample_record.drug_end == 34

    def test_empty_stream(self):
        assert parse_corpus([]) == []

    def test_blank_lines_skipped(self):
        records = parse_corpus(["", "   ", SAMPLE_ROW, "\n"])
        assert len(records) == 1

    def test_seven_fields(self):
        with pytest.raises(MalformedRecord) as exc_info:
            parse_corpus(["a|b|c|1|2|d|3"])
        assert exc_info.value.line_no == 1
        assert exc_info.value.field_count == 7

    def test_nine_fields(self):
        with pytest.raises(MalformedRecord) as exc_info:
            parse_corpus([SAMPLE_ROW, SAMPLE_ROW + "|extra"])
        assert exc_info.value.line_no == 2
        assert exc_info.value.field_count == 9

    def test_non_numeric_offset(self):
        with pytest.raises(NonNumericOffset) as exc_info:
            parse_corpus(["pmid|text here|ade|x|2|drug|3|4"])
        assert exc_info.value.line_no == 1

    def test_empty_surface_rejected(self):
        with pytest.raises(InvalidRecord):
            parse_corpus(["pmid|text here| |1|2|drug|3|4"])

    def test_inverted_span_rejected(self):
        with pytest.raises(InvalidRecord):
            parse_corpus(["pmid|text here|ade|5|2|drug|3|4"])

    def test_crlf_tolerated(self):
        records = parse_corpus(io.StringIO(SAMPLE_ROW + "\r\n"))
        assert records[0].drug_end == 34

    def test_bundled_excerpt_parses_clean(self):
        records = parse_corpus_file(bundled_excerpt_path())
        assert len(records) == 50
        assert records[0].pmid == "10030778"


class TestValidateOffsets:
    def test_sample_row_recovered(self, sample_record):
        # Independent check by direct character indexing: the annotated
        # slices do not reproduce the surfaces, but both surfaces occur.
        assert SAMPLE_TEXT[43:54] != "ototoxicity"
        assert SAMPLE_TEXT[22:34] != "azithromycin"
        assert "ototoxicity" in SAMPLE_TEXT and "azithromycin" in SAMPLE_TEXT
        assert validate_offsets(sample_record) == OffsetStatus.RECOVERED_BY_SEARCH

    def test_exact_slices_valid(self):
        text = "metformin induced fever."
        record = RawRecord("1", text, "fever", 18, 23, "metformin", 0, 9)
        assert text[18:23] == "fever" and text[0:9] == "metformin"
        assert validate_offsets(record) == OffsetStatus.VALID

    def test_absent_surface_failed(self):
        record = RawRecord("1", "metformin induced fever.", "rash", 0, 4, "metformin", 0, 9)
        assert validate_offsets(record) == OffsetStatus.FAILED


class TestGroupExamples:
    def test_sample_row_alone(self, sample_example):
        assert sample_example.pairs == (("ototoxicity", "azithromycin"),)
        assert sample_example.ades == ("ototoxicity",)
        assert sample_example.suspects == ("azithromycin",)
        assert sample_example.pmids == ("10030778",)

    def test_same_text_merges_pairs(self):
        lines = [
            "1|drug a and drug b caused fever.|fever|0|5|a|0|1",
            "2|drug a and drug b caused fever.|rash|0|4|a|0|1",
        ]
        examples = group_examples(parse_corpus(lines))
        assert len(examples) == 1
        example = examples[0]
        assert example.pairs == (("fever", "a"), ("rash", "a"))
        assert example.ades == ("fever", "rash")
        assert example.suspects == ("a",)
        assert example.pmids == ("1", "2")

    def test_duplicate_rows_single_pair(self):
        records = parse_corpus([SAMPLE_ROW, SAMPLE_ROW])
        examples = group_examples(records)
        assert len(examples) == 1
        assert examples[0].pairs == (("ototoxicity", "azithromycin"),)

    def test_whitespace_variant_texts_group_together(self):
        lines = [
            "1|metformin  caused fever.|fever|0|5|metformin|0|9",
            "2|metformin caused  fever. |fever|0|5|metformin|0|9",
        ]
        assert len(group_examples(parse_corpus(lines))) == 1

    def test_idempotent_under_duplication(self):
        records = parse_corpus_file(bundled_excerpt_path())
        assert group_examples(records) == group_examples(list(records) + list(records))

    def test_order_by_first_appearance(self):
        lines = [
            "1|text one has fever.|fever|0|5|a|0|1",
            "2|text two has rash.|rash|0|4|b|0|1",
            "3|text one has fever.|chills|0|6|a|0|1",
        ]
        examples = group_examples(parse_corpus(lines))
        assert [e.text for e in examples] == ["text one has fever.", "text two has rash."]

    def test_projection_sizes(self):
        for example in group_examples(parse_corpus_file(bundled_excerpt_path())):
            assert len(example.ades) <= len(example.pairs)
            assert len(example.suspects) <= len(example.pairs)


pipe_free = st.text(
    alphabet=st.characters(blacklist_characters="|\r\n", blacklist_categories=("Cs",)),
    min_size=1,
    max_size=20,
).filter(lambda s: s.strip())


class TestSerializationRoundTrip:
    @given(pmid=pipe_free, text=pipe_free, ade=pipe_free, drug=pipe_free,
           spans=st.tuples(st.integers(0, 50), st.integers(1, 50), st.integers(0, 50), st.integers(1, 50)))
    def test_parse_serialize_identity(self, pmid, text, ade, drug, spans):
        record = RawRecord(
            pmid, text, ade, spans[0], spans[0] + spans[1], drug, spans[2], spans[2] + spans[3]
        )
        assert parse_corpus([record.to_line()]) == [record]

    def test_examples_jsonl_round_trip(self):
        examples = make_synthetic_examples(10, seed=3)
        buffer = io.StringIO()
        write_examples_jsonl(buffer, examples)
        buffer.seek(0)
        assert read_examples_jsonl(buffer) == examples


class TestSplit:
    def test_sizes_disjoint_exhaustive(self):
        examples = make_synthetic_examples(100, seed=1)
        train, evalset = split(examples, SplitSpec(train_size=75, seed=5))
        assert len(train) == 75 and len(evalset) == 25
        train_ids = {e.id for e in train}
        eval_ids = {e.id for e in evalset}
        assert not train_ids & eval_ids
        assert train_ids | eval_ids == {e.id for e in examples}

    def test_deterministic(self):
        examples = make_synthetic_examples(50, seed=1)
        first = split(examples, SplitSpec(train_size=30, seed=9))
        second = split(examples, SplitSpec(train_size=30, seed=9))
        assert first == second

    def test_seed_changes_partition(self):
        examples = make_synthetic_examples(50, seed=1)
        a = split(examples, SplitSpec(train_size=30, seed=1))
        b = split(examples, SplitSpec(train_size=30, seed=2))
        assert a != b

    def test_train_size_equal_total_rejected(self):
        examples = make_synthetic_examples(10, seed=1)
        with pytest.raises(TrainSizeTooLarge):
            split(examples, SplitSpec(train_size=10, seed=1))

    def test_train_size_zero_rejected(self):
        examples = make_synthetic_examples(10, seed=1)
        with pytest.raises(TrainSizeTooLarge):
            split(examples, SplitSpec(train_size=0, seed=1))


class TestStats:
    def test_single_example_single_pair(self, sample_record, sample_example):
        st_ = stats([sample_example], [sample_record])
        assert st_.num_texts == 1 and st_.num_records == 1
        assert st_.ades_per_text_hist == {1: 1}
        assert st_.suspects_per_text_hist == {1: 1}
        assert st_.pairs_per_text_hist == {1: 1}
        assert st_.pct_multi_entity == 0.0
        assert st_.offset_recovered == 1

    def test_empty_input(self):
        st_ = stats([], [])
        assert st_ == CorpusStats(0, 0, {}, {}, {}, 0, 0, 0.0, 0, 0, 0)

    def test_histograms_sum_to_num_texts(self):
        records = parse_corpus_file(bundled_excerpt_path())
        examples = group_examples(records)
        st_ = stats(examples, records)
        for hist in (st_.ades_per_text_hist, st_.suspects_per_text_hist, st_.pairs_per_text_hist):
            assert sum(hist.values()) == st_.num_texts
        assert st_.offset_valid + st_.offset_recovered + st_.offset_failed == st_.num_records

    def test_multi_entity_fraction(self):
        lines = [
            "1|single pair text with fever.|fever|0|5|a|0|1",
            "2|multi text with fever and rash.|fever|0|5|b|0|1",
            "3|multi text with fever and rash.|rash|0|4|b|0|1",
        ]
        examples = group_examples(parse_corpus(lines))
        st_ = stats(examples, parse_corpus(lines))
        assert st_.num_texts == 2
        assert st_.pct_multi_entity == pytest.approx(0.5)

    def test_unique_entities_normalized(self):
        lines = [
            "1|first text mentions Fever.|Fever|0|5|DrugA|0|5",
            "2|second text mentions fever.|fever|0|5|druga|0|5",
        ]
        records = parse_corpus(lines)
        st_ = stats(group_examples(records), records)
        assert st_.num_unique_ades == 1
        assert st_.num_unique_suspects == 1


class TestTextNormalization:
    def test_normalize_text_preserves_case(self):
        assert normalize_text("  A  B\tc ") == "A B c"

    def test_text_id_stable(self):
        assert text_id("a  b") == text_id(" a b ")
        assert text_id("a b") != text_id("a c")
