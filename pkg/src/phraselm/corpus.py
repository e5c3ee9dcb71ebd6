"""Corpus ingestion: tokenization, length filtering and statistics."""

import logging
from dataclasses import dataclass, field

from .errors import EmptyCorpus, EmptyLine

log = logging.getLogger(__name__)


class Sentence(tuple):
    """An immutable sequence of word tokens."""

    __slots__ = ()

    @property
    def length(self):
        return len(self)

    def __str__(self):
        return " ".join(self)


def tokenize(line):
    """Split ``line`` on runs of whitespace.

    Raises EmptyLine when the line holds no token at all.
    """
    tokens = line.split()
    if not tokens:
        raise EmptyLine(f"no tokens in line {line!r}")
    return Sentence(tokens)


@dataclass(frozen=True)
class Corpus:
    sentences: tuple
    filtered: int = 0
    skipped_empty: int = 0
    vocabulary: frozenset = field(init=False)

    def __post_init__(self):
        vocab = set()
        for s in self.sentences:
            vocab.update(s)
        object.__setattr__(self, "vocabulary", frozenset(vocab))

    @classmethod
    def from_lines(cls, lines, max_len=None):
        sentences = []
        filtered = empty = 0
        for line in lines:
            try:
                sentence = tokenize(line)
            except EmptyLine:
                empty += 1
                continue
            if max_len is not None and len(sentence) > max_len:
                filtered += 1
                continue
            sentences.append(sentence)
        return cls(tuple(sentences), filtered, empty)

    @property
    def S(self):
        return len(self.sentences)

    def __len__(self):
        return len(self.sentences)

    def __iter__(self):
        return iter(self.sentences)

    def __getitem__(self, i):
        return self.sentences[i]

    def split(self, train_fraction):
        """Contiguous train/held-out split; the first part gets ``train_fraction``."""
        cut = int(round(len(self.sentences) * train_fraction))
        return Corpus(self.sentences[:cut]), Corpus(self.sentences[cut:])


def load_corpus(path, max_len=None):
    """Read one pre-tokenized sentence per line.

    Sentences longer than ``max_len`` tokens are dropped and counted in
    ``Corpus.filtered``; blank lines are skipped with a warning.
    """
    if max_len is not None and max_len < 1:
        raise ValueError(f"max_len must be positive, got {max_len}")
    with open(path, encoding="utf-8") as f:
        corpus = Corpus.from_lines(f, max_len)
    if corpus.skipped_empty:
        log.warning("%s: skipped %d blank line(s)", path, corpus.skipped_empty)
    if not corpus.sentences:
        raise EmptyCorpus(f"{path}: no sentences left after filtering")
    return corpus


def corpus_stats(corpus):
    return {
        "sentences": len(corpus.sentences),
        "words": sum(len(s) for s in corpus.sentences),
        "vocabulary": len(corpus.vocabulary),
    }
