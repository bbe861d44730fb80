import json
import math
import random

import pytest
from hypothesis import given, strategies as st

from actionitems.corpus import (
    CandidateLexicons,
    CorpusSplit,
    Meeting,
    SentenceRecord,
    cohen_kappa,
    corpus_stats,
    default_lexicons,
    ingest_transcripts,
    load_lexicon,
    load_split_manifest,
    meeting_from_obj,
    pairwise_kappa,
    render_stats,
    select_candidates,
    split_corpus,
    split_from_manifest,
    write_split_manifest,
    write_transcripts,
)
from actionitems.errors import SchemaValidationError, TranscriptParseError

# Hand-derived kappa fixture: 10 items, 7 positives per annotator, 8 agreements
# -> p_o = 0.8, p_e = 0.7*0.7 + 0.3*0.3 = 0.58, kappa = 0.22/0.42 = 11/21.
KAPPA_A = [1, 1, 1, 1, 1, 1, 1, 0, 0, 0]
KAPPA_B = [1, 1, 1, 1, 1, 1, 0, 1, 0, 0]
KAPPA_EXPECTED = 11 / 21  # 0.5238...


def sent(mid, sid, text="hello there", label=0, speaker="a", ann=None):
    return SentenceRecord(mid, sid, speaker, text, label, ann)


def meeting_of(texts_labels, mid="m0"):
    return Meeting(
        mid,
        tuple(sent(mid, i, t, l) for i, (t, l) in enumerate(texts_labels)),
    )


# ---------------------------------------------------------------------------
# Data model validation
# ---------------------------------------------------------------------------

class TestDataModel:
    def test_empty_text_rejected(self):
        with pytest.raises(SchemaValidationError):
            sent("m0", 0, text="   ")

    def test_bad_label_rejected(self):
        with pytest.raises(SchemaValidationError):
            sent("m0", 0, label=2)

    def test_bad_annotator_label_rejected(self):
        with pytest.raises(SchemaValidationError):
            sent("m0", 0, ann=(0, 2))

    def test_sentence_ids_must_be_consecutive(self):
        with pytest.raises(SchemaValidationError):
            Meeting("m0", (sent("m0", 0), sent("m0", 2)))

    def test_sentence_meeting_id_must_match(self):
        with pytest.raises(SchemaValidationError):
            Meeting("m0", (sent("other", 0),))

    def test_num_positives(self):
        m = meeting_of([("a b", 0), ("c d", 1), ("e f", 1)])
        assert m.num_positives() == 2
        assert len(m) == 3

    def test_sentence_lookup_range(self):
        m = meeting_of([("a b", 0)])
        assert m.sentence(0).text == "a b"
        with pytest.raises(SchemaValidationError):
            m.sentence(1)

    def test_split_overlap_rejected(self):
        with pytest.raises(SchemaValidationError):
            CorpusSplit(frozenset({"a"}), frozenset({"a"}), frozenset())


# ---------------------------------------------------------------------------
# Ingestion
# ---------------------------------------------------------------------------

class TestIngestion:
    def test_round_trip(self, tmp_path):
        meetings = [
            meeting_of([("we start now", 0), ("finish the report", 1)], "m1"),
            Meeting("m2", (sent("m2", 0, "结束 报告", 1, ann=(1, 0)),)),
        ]
        path = tmp_path / "corpus.jsonl"
        write_transcripts(meetings, path)
        assert ingest_transcripts(path) == meetings

    def test_parse_error_carries_line_number(self, tmp_path):
        path = tmp_path / "bad.jsonl"
        path.write_text('{"meeting_id": "m1", "sentences": []}\nnot json\n')
        with pytest.raises(TranscriptParseError) as exc:
            ingest_transcripts(path)
        assert exc.value.line_no == 2

    def test_duplicate_meeting_id_rejected(self, tmp_path):
        path = tmp_path / "dup.jsonl"
        line = json.dumps(
            {"meeting_id": "m1", "sentences": [
                {"id": 0, "speaker": "a", "text": "hi all", "label": 0}]}
        )
        path.write_text(line + "\n" + line + "\n")
        with pytest.raises(SchemaValidationError):
            ingest_transcripts(path)

    def test_missing_sentence_key_rejected(self):
        with pytest.raises(SchemaValidationError):
            meeting_from_obj(
                {"meeting_id": "m1", "sentences": [{"id": 0, "text": "hi", "label": 0}]}
            )

    def test_blank_lines_skipped(self, tmp_path):
        path = tmp_path / "blank.jsonl"
        path.write_text(
            '\n{"meeting_id": "m1", "sentences": []}\n\n'
        )
        assert [m.meeting_id for m in ingest_transcripts(path)] == ["m1"]

    def test_unsupported_format(self, tmp_path):
        with pytest.raises(ValueError):
            ingest_transcripts(tmp_path / "x.csv", format="csv")


# ---------------------------------------------------------------------------
# Splitting
# ---------------------------------------------------------------------------

def make_corpus_ids(n):
    return [meeting_of([("hello there", 0)], f"m{i:03d}") for i in range(n)]


class TestSplit:
    def test_floor_floor_remainder(self):
        # 10 meetings at 70:15:15 -> floor(7.0)=7 train, floor(1.5)=1 dev, 2 test
        split = split_corpus(make_corpus_ids(10), ratio=(70, 15, 15), seed=0)
        assert split.sizes() == (7, 1, 2)

    def test_partition_is_exact(self):
        meetings = make_corpus_ids(23)
        split = split_corpus(meetings, seed=5)
        assert split.all_ids() == {m.meeting_id for m in meetings}
        assert sum(split.sizes()) == 23

    def test_seed_determinism(self):
        meetings = make_corpus_ids(20)
        a = split_corpus(meetings, seed=3)
        b = split_corpus(meetings, seed=3)
        c = split_corpus(meetings, seed=4)
        assert a == b
        assert a != c

    def test_ratio_must_sum_to_100(self):
        with pytest.raises(ValueError):
            split_corpus(make_corpus_ids(10), ratio=(80, 15, 15))

    def test_too_few_meetings(self):
        with pytest.raises(ValueError):
            split_corpus(make_corpus_ids(2))

    def test_manifest_round_trip(self, tmp_path):
        meetings = make_corpus_ids(9)
        split = split_corpus(meetings, seed=1)
        path = tmp_path / "split.tsv"
        write_split_manifest(split, path)
        again = split_from_manifest(meetings, path)
        assert again.assignment() == split.assignment()

    def test_manifest_missing_meeting(self, tmp_path):
        meetings = make_corpus_ids(4)
        manifest = {m.meeting_id: "train" for m in meetings[:-1]}
        with pytest.raises(SchemaValidationError):
            split_from_manifest(meetings, manifest)

    def test_manifest_unknown_meeting(self):
        meetings = make_corpus_ids(3)
        manifest = {m.meeting_id: "train" for m in meetings}
        manifest["ghost"] = "dev"
        with pytest.raises(SchemaValidationError):
            split_from_manifest(meetings, manifest)

    def test_manifest_bad_split_name(self, tmp_path):
        path = tmp_path / "bad.tsv"
        path.write_text("m1\tvalidation\n")
        with pytest.raises(TranscriptParseError):
            load_split_manifest(path)

    def test_manifest_comments_and_blanks(self, tmp_path):
        path = tmp_path / "ok.tsv"
        path.write_text("# comment\n\nm1\ttrain\n")
        assert load_split_manifest(path) == {"m1": "train"}


# ---------------------------------------------------------------------------
# Candidate pre-selection
# ---------------------------------------------------------------------------

LEX = CandidateLexicons(
    temporal_expressions=frozenset({"tomorrow", "明天"}),
    action_verbs=frozenset({"finish", "结束"}),
)


class TestCandidates:
    def test_requires_both_signals(self):
        m = meeting_of(
            [
                ("we will finish the report tomorrow", 1),  # both -> candidate
                ("we will finish the report", 1),           # verb only
                ("see you tomorrow", 0),                    # temporal only
                ("nothing relevant", 0),
            ]
        )
        assert select_candidates(m, LEX) == {0}

    def test_case_insensitive(self):
        m = meeting_of([("We FINISH Tomorrow", 1)])
        assert select_candidates(m, LEX) == {0}

    def test_english_word_boundary(self):
        # "tomorrows" and "unfinished" must not match whole-word terms
        m = meeting_of([("unfinished tomorrows remain", 0)])
        assert select_candidates(m, LEX) == set()

    def test_cjk_substring_match(self):
        m = Meeting("z", (sent("z", 0, "我们明天结束会议", 1),))
        assert select_candidates(m, LEX) == {0}

    def test_monotone_in_lexicons(self):
        m = meeting_of(
            [("finish it tomorrow", 1), ("send it next week", 1), ("hello", 0)]
        )
        before = select_candidates(m, LEX)
        bigger = CandidateLexicons(
            LEX.temporal_expressions | {"next week"},
            LEX.action_verbs | {"send"},
        )
        after = select_candidates(m, bigger)
        assert before <= after
        assert 1 in after

    def test_default_lexicons_load(self):
        lex = default_lexicons()
        assert "tomorrow" in lex.temporal_expressions
        assert any(t == t.lower() for t in lex.action_verbs)

    def test_load_lexicon_skips_comments(self, tmp_path):
        path = tmp_path / "lex.txt"
        path.write_text("# header\nTomorrow\n\nnext week\n")
        assert load_lexicon(path) == {"tomorrow", "next week"}

    def test_empty_lexicon_rejected(self):
        with pytest.raises(SchemaValidationError):
            CandidateLexicons(frozenset(), frozenset({"x"}))


# ---------------------------------------------------------------------------
# Cohen's kappa
# ---------------------------------------------------------------------------

class TestKappa:
    def test_hand_fixture(self):
        value = cohen_kappa(KAPPA_A, KAPPA_B)
        assert value == pytest.approx(KAPPA_EXPECTED, abs=1e-9)

    def test_perfect_agreement(self):
        assert cohen_kappa([0, 1, 0, 1], [0, 1, 0, 1]) == pytest.approx(1.0)

    def test_degenerate_chance_agreement_is_none(self):
        assert cohen_kappa([0, 0, 0], [0, 0, 0]) is None

    def test_length_mismatch(self):
        with pytest.raises(ValueError):
            cohen_kappa([0, 1], [0])

    def test_empty(self):
        with pytest.raises(ValueError):
            cohen_kappa([], [])

    @given(
        st.lists(
            st.tuples(st.integers(0, 1), st.integers(0, 1)), min_size=1, max_size=40
        )
    )
    def test_symmetry_and_label_swap(self, pairs):
        a = [p[0] for p in pairs]
        b = [p[1] for p in pairs]
        k_ab = cohen_kappa(a, b)
        k_ba = cohen_kappa(b, a)
        assert k_ab == k_ba
        swapped = cohen_kappa([1 - x for x in a], [1 - x for x in b])
        if k_ab is None:
            assert swapped is None
        else:
            assert swapped == pytest.approx(k_ab, abs=1e-12)

    def test_pairwise_report(self):
        records = [
            sent("m0", i, f"utterance {i} text", a, ann=(a, b))
            for i, (a, b) in enumerate(zip(KAPPA_A, KAPPA_B))
        ]
        report = pairwise_kappa(records)
        assert set(report.per_pair) == {(0, 1)}
        assert report.per_pair[(0, 1)] == pytest.approx(KAPPA_EXPECTED, abs=1e-9)
        assert report.mean == pytest.approx(KAPPA_EXPECTED, abs=1e-9)

    def test_pairwise_three_annotators_mean_skips_undefined(self):
        # annotator 2 labels everything 0, as does annotator 1 on these items
        records = [
            sent("m0", i, f"utt {i}", 0, ann=labels)
            for i, labels in enumerate([(1, 0, 0), (0, 0, 0), (1, 0, 0), (0, 0, 0)])
        ]
        report = pairwise_kappa(records)
        assert report.per_pair[(1, 2)] is None  # both all-zero
        defined = [v for v in report.per_pair.values() if v is not None]
        assert report.mean == pytest.approx(sum(defined) / len(defined))

    def test_pairwise_requires_uniform_annotators(self):
        records = [sent("m0", 0, "a b", 0, ann=(0, 1)), sent("m0", 1, "c d", 0, ann=(0,))]
        with pytest.raises(ValueError):
            pairwise_kappa(records)


# ---------------------------------------------------------------------------
# Corpus statistics
# ---------------------------------------------------------------------------

class TestStats:
    def test_hand_arithmetic(self):
        # 2 meetings with 1 and 3 positives: avg 2.0, population std 1.0
        m1 = meeting_of([("x y", 1), ("z w", 0)], "m1")
        m2 = meeting_of([("a b", 1), ("c d", 1), ("e f", 1)], "m2")
        stats = corpus_stats([m1, m2])
        assert stats.overall.num_meetings == 2
        assert stats.overall.num_utterances == 5
        assert stats.overall.num_actions == 4
        assert stats.overall.avg_actions_per_meeting == pytest.approx(2.0)
        assert stats.overall.std_actions_per_meeting == pytest.approx(1.0)

    def test_empty_corpus(self):
        stats = corpus_stats([])
        assert stats.overall.num_meetings == 0
        assert stats.overall.std_actions_per_meeting == 0.0

    def test_recount_matches_labels(self):
        rng = random.Random(0)
        meetings = [
            meeting_of([(f"t {i} {j}", rng.randint(0, 1)) for j in range(6)], f"m{i}")
            for i in range(8)
        ]
        total = sum(s.label for m in meetings for s in m.sentences)
        assert corpus_stats(meetings).overall.num_actions == total

    def test_per_split_sections(self):
        meetings = [
            meeting_of([("one two", 1)], "m1"),
            meeting_of([("three four", 0)], "m2"),
            meeting_of([("five six", 1)], "m3"),
        ]
        split = CorpusSplit(frozenset({"m1"}), frozenset({"m2"}), frozenset({"m3"}))
        stats = corpus_stats(meetings, split)
        assert stats.per_split["train"].num_actions == 1
        assert stats.per_split["dev"].num_actions == 0
        assert stats.per_split["test"].num_meetings == 1

    def test_render_mentions_std_choice(self):
        stats = corpus_stats([meeting_of([("a b", 1)], "m1")])
        text = render_stats(stats)
        assert "population std" in text
        assert "Total # Action" in text
