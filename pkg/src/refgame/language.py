"""Vocabulary, utterance grammar, and truth-conditional evaluation.

The vocabulary has 11 words: six color words, four shape words, and the bare
noun "shape". A valid utterance is either a single noun (a shape word or
"shape") or a color word followed by a noun; bare color words are not valid
utterances. That yields 5 one-token and 30 two-token utterances, 35 total.
"""

from __future__ import annotations

from .scenes import Color, SceneSpec, Shape

COLOR_WORDS: tuple[str, ...] = tuple(c.name.lower() for c in Color)
SHAPE_WORDS: tuple[str, ...] = tuple(s.name.lower() for s in Shape)
NOUN = "shape"
VOCAB: tuple[str, ...] = COLOR_WORDS + SHAPE_WORDS + (NOUN,)

WORD_TO_ID = {w: i for i, w in enumerate(VOCAB)}
COLOR_IDS = tuple(WORD_TO_ID[w] for w in COLOR_WORDS)
SHAPE_IDS = tuple(WORD_TO_ID[w] for w in SHAPE_WORDS)
NOUN_ID = WORD_TO_ID[NOUN]

# Decoder-only symbols. EOS lives in the output space (VOCAB + EOS = 12
# symbols a speaker can emit); BOS only ever appears as a decoder input.
EOS_ID = len(VOCAB)
BOS_ID = len(VOCAB) + 1
N_DECODER_OUTPUTS = len(VOCAB) + 1
N_DECODER_SYMBOLS = len(VOCAB) + 2

Utterance = tuple[int, ...]


def words(utterance: Utterance) -> tuple[str, ...]:
    return tuple(VOCAB[t] for t in utterance)


def from_words(*names: str) -> Utterance:
    return tuple(WORD_TO_ID[n] for n in names)


def is_valid_utterance(utterance: Utterance) -> bool:
    if len(utterance) == 1:
        return utterance[0] in SHAPE_IDS or utterance[0] == NOUN_ID
    if len(utterance) == 2:
        first, second = utterance
        return first in COLOR_IDS and (second in SHAPE_IDS or second == NOUN_ID)
    return False


def utterance_space() -> tuple[Utterance, ...]:
    """The 35 valid utterances in canonical enumeration order: one-token
    first (shape words, then "shape"), then two-token (colors crossed with
    nouns, both in vocabulary order). This order also breaks speaker ties."""
    nouns = SHAPE_IDS + (NOUN_ID,)
    single = [(t,) for t in nouns]
    double = [(c, n) for c in COLOR_IDS for n in nouns]
    return tuple(single + double)


UTTERANCE_SPACE = utterance_space()


def contains_color_word(utterance: Utterance) -> bool:
    return any(t in COLOR_IDS for t in utterance)


def word_true_of(token: int, color: Color, shape: Shape) -> bool:
    if token == NOUN_ID:
        return True
    if token in COLOR_IDS:
        return VOCAB[token] == color.name.lower()
    if token in SHAPE_IDS:
        return VOCAB[token] == shape.name.lower()
    raise ValueError(f"unknown token id {token}")


def utterance_true_of(utterance: Utterance, referent: SceneSpec) -> bool:
    """Truth-conditional semantics: every word must apply to the referent."""
    return all(word_true_of(t, referent.color, referent.shape) for t in utterance)


def uniquely_identifies(utterance: Utterance, referents: list[SceneSpec],
                        target_index: int) -> bool:
    truths = [utterance_true_of(utterance, r) for r in referents]
    return truths[target_index] and sum(truths) == 1
