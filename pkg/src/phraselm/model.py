"""Phrase and word n-gram probabilities estimated from count tables.

Conditional probabilities are relative frequencies of full n-grams over
their context counts.  Smoothing discounts the counts with Good-Turing
(below a cutoff ``gt_max_r``) and interpolates the result with the product
of the word unigram probabilities of the phrase, normalized by the
unigram mass raised to the phrase length.
"""

import math
import os
from dataclasses import asdict, dataclass

from .counting import accumulate_counts, load_counts, save_counts
from .errors import FormatError, UnseenContext, ZeroProbability

PRIOR_MODES = ("exact", "paper2I", "none")
BOS, EOS = "<s>", "</s>"

PHRASE_COUNTS = "phrase.counts"
WORD_COUNTS = "word.counts"
META = "meta"
_META_HEADER = "phraselm-model v1"


@dataclass(frozen=True)
class ModelConfig:
    N: int = 3
    L: int | None = None
    lam: float = 0.4
    gt_max_r: int = 5
    prior_mode: str = "exact"
    bos_eos: bool = False
    word_order: int | None = None

    def __post_init__(self):
        if self.N < 1:
            raise ValueError(f"N must be >= 1, got {self.N}")
        if self.L is not None and self.L < 1:
            raise ValueError(f"L must be >= 1, got {self.L}")
        if not 0.0 <= self.lam <= 1.0:
            raise ValueError(f"lambda must lie in [0, 1], got {self.lam}")
        if self.gt_max_r < 1:
            raise ValueError(f"gt_max_r must be >= 1, got {self.gt_max_r}")
        if self.prior_mode not in PRIOR_MODES:
            raise ValueError(f"prior_mode must be one of {PRIOR_MODES}")
        if self.word_order is None:
            object.__setattr__(self, "word_order", max(self.N, 4))
        elif self.word_order < 1:
            raise ValueError(f"word_order must be >= 1, got {self.word_order}")


class Estimator:
    """Conditional probabilities over one count table.

    Rows are the table's internal ids, so the scoring loops can walk
    contexts without rebuilding tuples.
    """

    def __init__(self, table, lam, gt_max_r, word_term):
        self.table = table
        self.lam = lam
        self.gt_max_r = gt_max_r
        self.word_term = word_term

    def adjusted_count(self, n, r):
        """Good-Turing r* = (r+1) N_{r+1} / N_r for 1 <= r < gt_max_r, else r."""
        if not 1 <= r < self.gt_max_r:
            return r
        coc = self.table.count_of_counts(n)
        above, at = coc.get(r + 1, 0), coc.get(r, 0)
        if above == 0 or at == 0:
            return r
        return (r + 1) * above / at

    def context_count(self, m, row):
        if m == 0:
            return self.table.total
        return self.table.row_count(m, row)

    def cond(self, m, ctx_row, pid, word_term, smoothed):
        """P(phrase | context of m phrases); unseen contexts give 0 for the count term."""
        denom = self.context_count(m, ctx_row)
        if denom > 0:
            joint = pid if m == 0 else self.table.child(m + 1, ctx_row, pid)
            r = self.table.row_count(m + 1, joint)
            first = (self.adjusted_count(m + 1, r) if smoothed else r) / denom
        else:
            first = 0.0
        if not smoothed:
            return first
        return self.lam * first + (1.0 - self.lam) * word_term

    def rows(self, context):
        """Table row of every prefix-closed context; -1 once a prefix is unseen."""
        row = -1
        for n, phrase in enumerate(context, 1):
            row = self.table.child(n, row, self.table.phrase_id(phrase))
            if row < 0:
                return -1
        return row


class TrainedModel:
    """Phrase counts, word counts and the smoothing configuration.

    ``phrase_counts`` holds phrase n-grams up to ``config.N`` with phrases of
    at most ``config.L`` words; ``word_counts`` holds plain word n-grams up
    to ``config.word_order`` and supplies the unigram distribution.
    """

    def __init__(self, phrase_counts, word_counts, config):
        self.phrase_counts = phrase_counts
        self.word_counts = word_counts
        self.config = config
        self._unigram_mass = (
            sum(c for _, c in word_counts.items(1)) / word_counts.total)
        self.phrase = Estimator(phrase_counts, config.lam, config.gt_max_r, self._word_term)
        self.word = Estimator(word_counts, config.lam, config.gt_max_r, self._word_term)

    @property
    def N(self):
        return self.config.N

    @classmethod
    def train(cls, corpus, config=None, threads=1, max_keys=None):
        config = config or ModelConfig()
        sentences = [cls._wrap(config, s) for s in corpus]
        phrase = accumulate_counts(sentences, config.N, config.L, threads, max_keys)
        word = accumulate_counts(sentences, config.word_order, 1, threads, max_keys)
        return cls(phrase, word, config)

    # -- persistence ------------------------------------------------------

    def save(self, directory):
        os.makedirs(directory, exist_ok=True)
        save_counts(self.phrase_counts, os.path.join(directory, PHRASE_COUNTS))
        save_counts(self.word_counts, os.path.join(directory, WORD_COUNTS))
        cfg = asdict(self.config)
        with open(os.path.join(directory, META), "w", encoding="utf-8", newline="\n") as f:
            f.write(_META_HEADER + "\n")
            for key in sorted(cfg):
                value = cfg[key]
                if value is None:
                    value = "none"
                elif isinstance(value, bool):
                    value = int(value)
                f.write(f"{key}={value}\n")

    @classmethod
    def load(cls, directory):
        path = os.path.join(directory, META)
        with open(path, encoding="utf-8") as f:
            lines = f.read().splitlines()
        if not lines or lines[0] != _META_HEADER:
            raise FormatError("bad header", 1, path)
        raw = {}
        for lineno, line in enumerate(lines[1:], 2):
            key, sep, value = line.partition("=")
            if not sep:
                raise FormatError("expected key=value", lineno, path)
            raw[key] = value
        try:
            config = ModelConfig(
                N=int(raw["N"]),
                L=None if raw["L"] == "none" else int(raw["L"]),
                lam=float(raw["lam"]),
                gt_max_r=int(raw["gt_max_r"]),
                prior_mode=raw["prior_mode"],
                bos_eos=bool(int(raw["bos_eos"])),
                word_order=int(raw["word_order"]),
            )
        except (KeyError, ValueError) as e:
            raise FormatError(f"invalid model metadata: {e}", path=path) from None
        phrase = load_counts(os.path.join(directory, PHRASE_COUNTS))
        word = load_counts(os.path.join(directory, WORD_COUNTS))
        if phrase.order != config.N or word.order != config.word_order:
            raise FormatError("count file order disagrees with metadata", path=path)
        return cls(phrase, word, config)

    # -- probabilities ----------------------------------------------------

    @staticmethod
    def _wrap(config, sentence):
        tokens = tuple(sentence)
        return (BOS,) + tokens + (EOS,) if config.bos_eos else tokens

    def wrap(self, sentence):
        """Tokens as scored: with sentence markers when the model uses them."""
        return self._wrap(self.config, sentence)

    def word_unigram_prob(self, word):
        return self.word_counts[((word,),)] / self.word_counts.total

    def _word_term(self, words):
        p = 1.0
        for w in words:
            p *= self.word_unigram_prob(w)
        return p / self._unigram_mass ** len(words)

    def good_turing_adjusted_count(self, n, r, table="phrase"):
        est = self.phrase if table == "phrase" else self.word
        return est.adjusted_count(n, r)

    def _check_context(self, context, limit):
        context = tuple(tuple(p) for p in context)
        if len(context) > limit - 1:
            raise ValueError(f"context of {len(context)} phrase(s) exceeds order {limit}")
        return context

    def mle_prob(self, phrase, context=()):
        """Relative frequency C(context + phrase) / C(context).

        Raises UnseenContext when the context was never counted.
        """
        context = self._check_context(context, self.N)
        phrase = tuple(phrase)
        m = len(context)
        row = self.phrase.rows(context)
        if m and row < 0:
            raise UnseenContext(f"context {context} never observed")
        return self.phrase.cond(m, row, self.phrase_counts.phrase_id(phrase), 0.0, False)

    def smoothed_prob(self, phrase, context=()):
        return self.prob(phrase, context, smoothed=True)

    def prob(self, phrase, context=(), smoothed=True):
        """P(phrase | context); an unseen context contributes 0 to the count term."""
        context = self._check_context(context, self.N)
        phrase = tuple(phrase)
        row = self.phrase.rows(context)
        pid = self.phrase_counts.phrase_id(phrase)
        wt = self._word_term(phrase) if smoothed else 0.0
        return self.phrase.cond(len(context), row, pid, wt, smoothed)

    def word_lm_prob(self, sentence, n=None, smoothed=True):
        """Natural-log probability of ``sentence`` under the word n-gram baseline.

        Contexts are truncated at the sentence start.  Raises ZeroProbability
        naming the first word whose probability is zero.
        """
        n = n or self.N
        if not 1 <= n <= self.config.word_order:
            raise ValueError(f"order {n} outside 1..{self.config.word_order}")
        tokens = self.wrap(sentence)
        start = 1 if self.config.bos_eos else 0
        table, est = self.word_counts, self.word
        ids = [table.phrase_id((w,)) for w in tokens]
        total = 0.0
        for i in range(start, len(tokens)):
            lo = max(0, i - n + 1)
            row = -1
            for k, j in enumerate(range(lo, i), 1):
                row = table.child(k, row, ids[j])
            wt = self._word_term((tokens[i],)) if smoothed else 0.0
            p = est.cond(i - lo, row, ids[i], wt, smoothed)
            if p <= 0.0:
                raise ZeroProbability(f"word {i} ({tokens[i]!r}) has probability 0", i)
            total += math.log(p)
        return total
