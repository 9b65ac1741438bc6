"""Whitespace word-level tokenizer over a frozen vocabulary.

The simulator's language is closed, so a word-level vocabulary sidesteps
subword machinery entirely. Text is lowercased and split on whitespace;
anything outside the vocabulary is an error that names the word.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from ..errors import ConfigError, TokenizationError

PAD = "<pad>"
BOS = "<bos>"
EOS = "<eos>"
VIS_OPEN = "[3d]"
VIS_CLOSE = "[/3d]"

SPECIAL_TOKENS = (PAD, BOS, EOS, VIS_OPEN, VIS_CLOSE)

# Identifier words prefixed to every frame-kind sequence.
FRAME_PREFIX_WORDS = ("i", "saw")


def tokenize_words(text: str) -> list[str]:
    return text.lower().split()


@dataclass(frozen=True)
class Vocabulary:
    words: tuple[str, ...]
    index: dict[str, int] = field(default=None, repr=False)  # type: ignore[assignment]

    def __post_init__(self):
        if tuple(self.words[: len(SPECIAL_TOKENS)]) != SPECIAL_TOKENS:
            raise ConfigError("vocabulary must start with the special tokens")
        idx = {w: i for i, w in enumerate(self.words)}
        if len(idx) != len(self.words):
            raise ConfigError("vocabulary contains duplicate words")
        object.__setattr__(self, "index", idx)

    def __len__(self) -> int:
        return len(self.words)

    @property
    def pad_id(self) -> int:
        return self.index[PAD]

    @property
    def bos_id(self) -> int:
        return self.index[BOS]

    @property
    def eos_id(self) -> int:
        return self.index[EOS]

    @property
    def vis_open_id(self) -> int:
        return self.index[VIS_OPEN]

    @property
    def vis_close_id(self) -> int:
        return self.index[VIS_CLOSE]

    def encode_word(self, word: str) -> int:
        try:
            return self.index[word]
        except KeyError:
            raise TokenizationError(f"word not in vocabulary: {word!r}", word=word) from None

    def encode(self, text: str) -> list[int]:
        return [self.encode_word(w) for w in tokenize_words(text)]

    def decode(self, ids, skip_special: bool = True) -> str:
        words = []
        for i in ids:
            w = self.words[int(i)]
            if skip_special and w in SPECIAL_TOKENS:
                continue
            words.append(w)
        return " ".join(words)


def build_vocab(texts, extra_words=()) -> Vocabulary:
    """Freeze a vocabulary from a text corpus plus any guaranteed extra words.

    Word ids are deterministic: specials first, then sorted unique words.
    """
    seen: set[str] = set()
    for t in texts:
        seen.update(tokenize_words(t))
    seen.update(w.lower() for w in extra_words)
    seen.update(FRAME_PREFIX_WORDS)
    seen.difference_update(SPECIAL_TOKENS)
    return Vocabulary(SPECIAL_TOKENS + tuple(sorted(seen)))
