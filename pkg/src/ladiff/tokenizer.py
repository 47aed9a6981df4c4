"""Whitespace tokenization of preprocessed text and a frequency-ranked vocabulary."""
from __future__ import annotations

from collections import Counter
from dataclasses import dataclass

UNK, PAD, BOS = "xxunk", "xxpad", "xxbos"
SPECIALS = (UNK, PAD, BOS)
UNK_ID, PAD_ID, BOS_ID = 0, 1, 2


class VocabError(ValueError):
    pass


@dataclass
class TokenSequence:
    tokens: list
    ids: list | None = None


class Vocab:
    def __init__(self, id_to_token, min_freq=1, max_size=None):
        id_to_token = list(id_to_token)
        if tuple(id_to_token[:3]) != SPECIALS:
            raise VocabError(f"first three vocabulary entries must be {SPECIALS}")
        self.id_to_token = id_to_token
        self.token_to_id = {tok: i for i, tok in enumerate(id_to_token)}
        if len(self.token_to_id) != len(id_to_token):
            raise VocabError("duplicate token in vocabulary")
        self.min_freq = min_freq
        self.max_size = max_size if max_size is not None else len(id_to_token)

    def __len__(self):
        return len(self.id_to_token)

    def __eq__(self, other):
        return isinstance(other, Vocab) and self.id_to_token == other.id_to_token

    def save(self, path):
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(self.dumps())

    def dumps(self):
        return "".join(tok + "\n" for tok in self.id_to_token)

    @classmethod
    def load(cls, path):
        with open(path, encoding="utf-8") as fh:
            tokens = [line.rstrip("\n") for line in fh]
        return cls(tokens)


def tokenize(text):
    return TokenSequence([BOS] + text.split())


def build_vocab(corpus, min_freq=2, max_size=30000):
    """Rank tokens by frequency (desc), ties by first occurrence in scan order."""
    if max_size < 3:
        raise VocabError("max_size must be >= 3 to hold the special tokens")
    if min_freq < 1:
        raise VocabError("min_freq must be >= 1")
    if not corpus:
        raise VocabError("cannot build a vocabulary from an empty corpus")
    counts = Counter()
    first_seen = {}
    for seq in corpus:
        tokens = seq.tokens if isinstance(seq, TokenSequence) else seq
        for tok in tokens:
            if tok in SPECIALS:
                continue
            counts[tok] += 1
            first_seen.setdefault(tok, len(first_seen))
    ranked = sorted((t for t, c in counts.items() if c >= min_freq),
                    key=lambda t: (-counts[t], first_seen[t]))
    return Vocab(list(SPECIALS) + ranked[:max_size - 3], min_freq=min_freq, max_size=max_size)


def numericalize(seq, vocab):
    tokens = seq.tokens if isinstance(seq, TokenSequence) else list(seq)
    lookup = vocab.token_to_id
    return TokenSequence(tokens, [lookup.get(tok, UNK_ID) for tok in tokens])


def denumericalize(ids, vocab):
    size = len(vocab)
    out = []
    for i in ids:
        if not 0 <= i < size:
            raise VocabError(f"id {i} out of range for vocabulary of size {size}")
        out.append(vocab.id_to_token[i])
    return out


def encode_text(text, vocab):
    """Preprocessed text -> list of ids, with the leading BOS."""
    return numericalize(tokenize(text), vocab).ids
