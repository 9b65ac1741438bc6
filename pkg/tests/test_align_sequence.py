"""Tokenizer, vocabulary, and sequence assembly layout/mask contracts."""

import numpy as np
import pytest

from scenefusion.align.sequence import VISUAL_SLOT, TokenSequence, assemble_sequence
from scenefusion.align.vocab import (
    BOS,
    EOS,
    PAD,
    VIS_CLOSE,
    VIS_OPEN,
    build_vocab,
)
from scenefusion.errors import ConfigError, TokenizationError


@pytest.fixture
def vocab():
    return build_vocab(["a red mug on the table", "how many mugs", "yes no 3"])


class TestVocab:
    def test_specials_first(self, vocab):
        assert vocab.words[:5] == (PAD, BOS, EOS, VIS_OPEN, VIS_CLOSE)
        assert vocab.pad_id == 0

    def test_round_trip(self, vocab):
        ids = vocab.encode("red mug on the table")
        assert vocab.decode(ids) == "red mug on the table"

    def test_lowercasing(self, vocab):
        assert vocab.encode("Red MUG") == vocab.encode("red mug")

    def test_oov_names_the_word(self, vocab):
        with pytest.raises(TokenizationError, match="zebra") as exc:
            vocab.encode("a zebra appears")
        assert exc.value.word == "zebra"

    def test_deterministic_ids(self):
        v1 = build_vocab(["b a c"])
        v2 = build_vocab(["c b a"])
        assert v1.words == v2.words

    def test_frame_prefix_words_always_present(self):
        v = build_vocab([])
        v.encode("i saw")  # must not raise


class TestAssembleSequence:
    def _visual(self, n, d=7):
        return np.arange(n * d, dtype=float).reshape(n, d)

    def test_layout_frame_kind(self, vocab):
        seq = assemble_sequence("frame", self._visual(2), "how many mugs", "3", vocab)
        toks = seq.tokens.tolist()
        assert toks[0] == vocab.bos_id
        assert toks[1] == vocab.vis_open_id
        assert toks[2] == toks[3] == VISUAL_SLOT
        assert toks[4] == vocab.vis_close_id
        assert toks[5] == vocab.encode_word("i")
        assert toks[6] == vocab.encode_word("saw")
        assert toks[-1] == vocab.eos_id

    def test_scene_kind_has_no_identifier(self, vocab):
        seq = assemble_sequence("scene", self._visual(2), "how many mugs", "3", vocab)
        i_id = vocab.encode_word("i")
        assert i_id not in seq.tokens.tolist()

    def test_hand_layout_lengths_and_mask(self, vocab):
        # 5 visual tokens, 3-word instruction, 2-word answer, by hand:
        # frame: bos [3d] v*5 [/3d] i saw w w w a a eos = 1+1+5+1+2+3+2+1 = 16
        seq = assemble_sequence("frame", self._visual(5), "how many mugs", "yes no", vocab)
        assert len(seq) == 16
        mask = seq.loss_mask
        assert mask.sum() == 3  # two answer words + eos
        assert mask[-3:].all() and not mask[:-3].any()
        # scene: two fewer tokens
        seq2 = assemble_sequence("scene", self._visual(5), "how many mugs", "yes no", vocab)
        assert len(seq2) == 14

    def test_empty_answer_masks_only_eos(self, vocab):
        seq = assemble_sequence("scene", self._visual(1), "how many mugs", "", vocab)
        assert seq.loss_mask.sum() == 1
        assert seq.loss_mask[-1]

    def test_oov_answer_raises(self, vocab):
        with pytest.raises(TokenizationError, match="zebra"):
            assemble_sequence("scene", self._visual(1), "how many", "zebra", vocab)

    def test_bad_kind_raises(self, vocab):
        with pytest.raises(ConfigError):
            assemble_sequence("video", self._visual(1), "a", "b", vocab)

    def test_no_visual_tokens_ok(self, vocab):
        seq = assemble_sequence("scene", np.zeros((0, 7)), "how many mugs", "3", vocab)
        assert seq.n_visual == 0
        assert (seq.tokens != VISUAL_SLOT).all()

    def test_prefix_before_answer(self, vocab):
        seq = assemble_sequence("frame", self._visual(2), "how many mugs", "3", vocab)
        prefix = seq.prefix_before_answer()
        assert len(prefix) == len(seq) - 2  # strips answer word + eos
        assert not prefix.loss_mask.any()
        assert prefix.n_visual == 2


class TestTokenSequenceInvariants:
    def test_mask_on_visual_rejected(self, vocab):
        tokens = np.array([vocab.bos_id, VISUAL_SLOT, vocab.eos_id])
        mask = np.array([False, True, True])
        with pytest.raises(ConfigError):
            TokenSequence(tokens, np.ones((1, 4)), mask)

    def test_visual_count_mismatch_rejected(self, vocab):
        tokens = np.array([vocab.bos_id, VISUAL_SLOT, vocab.eos_id])
        with pytest.raises(ConfigError):
            TokenSequence(tokens, np.ones((2, 4)), np.zeros(3, dtype=bool))

    def test_mask_at_position_zero_rejected(self, vocab):
        tokens = np.array([vocab.bos_id, vocab.eos_id])
        with pytest.raises(ConfigError):
            TokenSequence(tokens, np.zeros((0, 1)), np.array([True, False]))
