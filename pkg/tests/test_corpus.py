"""Windowing, vocabulary, and batching tests."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mirror.corpus import (
    BOS, EOS, PAD, SEP, UNK,
    Dialogue, Triple, Vocabulary, WindowReport,
    build_vocabulary, encode_batch, import_dailydialog, import_tsv_triples,
    load_jsonl_corpus, save_jsonl_corpus, tokenize, window_dialogues,
)


def _dialogue(*turns):
    return Dialogue([t.split() for t in turns])


class TestTokenize:
    def test_lowercases_and_splits_punctuation(self):
        assert tokenize("Hello, World!") == ["hello", ",", "world", "!"]

    def test_splits_contractions(self):
        assert tokenize("don't") == ["don", "'", "t"]

    def test_pretokenized_text_roundtrips(self):
        assert tokenize("i ' m fine .") == ["i", "'", "m", "fine", "."]


class TestWindowing:
    def test_five_turn_dialogue_gives_three_triples(self):
        d = _dialogue("t1", "t2", "t3", "t4", "t5")
        triples = window_dialogues([d], window=3, stride=1)
        assert len(triples) == 3
        assert triples[0].context == [["t1"]]
        assert triples[0].query == ["t2"]
        assert triples[0].response == ["t3"]
        assert triples[2].context == [["t3"]]
        assert triples[2].query == ["t4"]
        assert triples[2].response == ["t5"]

    def test_three_turn_dialogue_maps_context_query_response(self):
        d = _dialogue("first turn", "second turn", "third turn")
        (triple,) = window_dialogues([d])
        assert triple.context == [["first", "turn"]]
        assert triple.query == ["second", "turn"]
        assert triple.response == ["third", "turn"]

    def test_short_dialogue_skipped_and_counted(self):
        report = WindowReport()
        triples = window_dialogues([_dialogue("a", "b")], report=report)
        assert triples == []
        assert report.skipped_short == 1

    def test_window_below_three_rejected(self):
        with pytest.raises(ValueError):
            window_dialogues([_dialogue("a", "b", "c")], window=2)

    def test_wide_window_splits_context(self):
        d = _dialogue("t1", "t2", "t3", "t4")
        (triple,) = window_dialogues([d], window=4)
        assert triple.context == [["t1"], ["t2"]]
        assert triple.query == ["t3"]
        assert triple.c_all == [["t1"], ["t2"], ["t3"]]

    @settings(max_examples=30, deadline=None)
    @given(n_dialogues=st.integers(1, 6), n_turns=st.integers(3, 9))
    def test_stride_one_count_property(self, n_dialogues, n_turns):
        dialogues = [
            Dialogue([[f"d{d}t{t}"] for t in range(n_turns)])
            for d in range(n_dialogues)
        ]
        triples = window_dialogues(dialogues, window=3, stride=1)
        assert len(triples) == n_dialogues * (n_turns - 2)


class TestVocabulary:
    def test_reserved_ids_fixed(self):
        vocab = Vocabulary(["hello"])
        assert (PAD, UNK, BOS, EOS, SEP) == (0, 1, 2, 3, 4)
        assert vocab.token_to_id["<pad>"] == 0
        assert vocab.token_to_id["<sep>"] == 4
        assert vocab.token_to_id["hello"] == 5

    def test_cutoff_keeps_most_frequent(self):
        triples = [Triple([["common"] * 3], ["common"], ["rare"])]
        vocab = build_vocabulary(triples, max_size=1)
        assert "common" in vocab.token_to_id
        assert "rare" not in vocab.token_to_id

    def test_frequency_tie_broken_lexicographically(self):
        triples = [Triple([["zeta"]], ["alpha"], ["top", "top"])]
        vocab = build_vocabulary(triples, max_size=2)
        assert "top" in vocab.token_to_id
        assert "alpha" in vocab.token_to_id  # beats 'zeta' on the tie
        assert "zeta" not in vocab.token_to_id

    def test_small_corpus_keeps_everything(self):
        triples = [Triple([["a", "b"]], ["c"], ["d", "e"])]
        vocab = build_vocabulary(triples, max_size=20000)
        assert len(vocab) == 5 + 5

    def test_empty_corpus_rejected(self):
        with pytest.raises(ValueError):
            build_vocabulary([])

    def test_deterministic_assignment(self):
        triples = [Triple([["b", "a"]], ["c", "a"], ["b", "d"])]
        v1 = build_vocabulary(triples)
        v2 = build_vocabulary(triples)
        assert v1.id_to_token == v2.id_to_token

    def test_save_load_roundtrip(self, tmp_path):
        vocab = build_vocabulary([Triple([["x", "y"]], ["z"], ["w"])])
        path = tmp_path / "vocab.txt"
        vocab.save(path)
        loaded = Vocabulary.load(path)
        assert loaded.id_to_token == vocab.id_to_token
        # line number = id - 5
        lines = path.read_text().splitlines()
        assert vocab.token_to_id[lines[0]] == 5


class TestEncodeBatch:
    def _vocab(self):
        return Vocabulary(["a", "b", "c", "d"])

    def test_padding_and_masks(self):
        vocab = self._vocab()
        triples = [
            Triple([["a"]], ["a", "b", "c"], ["a"]),
            Triple([["b"]], ["a", "b", "c", "d", "a"], ["b"]),
        ]
        batch = encode_batch(triples, vocab)
        assert batch.x.shape == (2, 5)
        np.testing.assert_array_equal(batch.x_mask.sum(axis=1), [3, 5])
        assert batch.x[0, 3] == PAD
        assert batch.x[0, 4] == PAD

    def test_oov_maps_to_unk(self):
        batch = encode_batch([Triple([["a"]], ["mystery"], ["b"])], self._vocab())
        assert batch.x[0, 0] == UNK

    def test_context_turns_joined_with_sep(self):
        vocab = self._vocab()
        batch = encode_batch([Triple([["a", "b"], ["c"]], ["d"], ["a"])], vocab)
        expected = [vocab.token_to_id["a"], vocab.token_to_id["b"], SEP, vocab.token_to_id["c"]]
        np.testing.assert_array_equal(batch.c[0], expected)

    def test_target_view_framed_bos_eos(self):
        vocab = self._vocab()
        batch = encode_batch([Triple([["a"]], ["b"], ["c", "d"])], vocab)
        assert batch.y_tgt[0, 0] == BOS
        assert batch.y_tgt[0, -1] == EOS
        assert batch.x_tgt[0, 0] == BOS
        assert batch.x_tgt[0, -1] == EOS

    def test_truncation_to_max_len(self):
        vocab = self._vocab()
        batch = encode_batch([Triple([["a"]], ["a", "b", "c", "d"], ["b"])], vocab, max_len=2)
        np.testing.assert_array_equal(batch.x_mask.sum(axis=1), [2])

    def test_max_len_below_two_rejected(self):
        with pytest.raises(ValueError):
            encode_batch([Triple([["a"]], ["b"], ["c"])], self._vocab(), max_len=1)

    @settings(max_examples=30, deadline=None)
    @given(st.lists(st.sampled_from(["a", "b", "c", "d", "zzz"]), min_size=1, max_size=8))
    def test_roundtrip_decode(self, tokens):
        vocab = self._vocab()
        batch = encode_batch([Triple([["a"]], tokens, ["b"])], vocab, max_len=5)
        decoded = vocab.decode(batch.x[0])
        expected = ["<unk>" if t not in vocab.token_to_id else t for t in tokens[:5]]
        assert decoded == expected


class TestImporters:
    def test_dailydialog_importer(self, tmp_path):
        path = tmp_path / "dd.txt"
        path.write_text("Hi there ! __eou__ How are you ? __eou__ Fine . __eou__\n")
        (dialogue,) = import_dailydialog(path)
        assert dialogue.turns == [["hi", "there", "!"], ["how", "are", "you", "?"], ["fine", "."]]

    def test_tsv_importer(self, tmp_path):
        path = tmp_path / "mt.tsv"
        path.write_text("first turn\tsecond one\tthird reply\n")
        (dialogue,) = import_tsv_triples(path)
        assert len(dialogue.turns) == 3
        assert dialogue.turns[1] == ["second", "one"]

    def test_tsv_importer_rejects_bad_columns(self, tmp_path):
        path = tmp_path / "bad.tsv"
        path.write_text("one\ttwo\n")
        with pytest.raises(ValueError):
            import_tsv_triples(path)

    def test_jsonl_roundtrip(self, tmp_path):
        dialogues = [_dialogue("hello there", "general kenobi", "you are bold")]
        path = tmp_path / "c.jsonl"
        save_jsonl_corpus(dialogues, path)
        loaded = load_jsonl_corpus(path)
        assert loaded[0].turns == dialogues[0].turns
