"""Sentence probabilities with the phrase segmentation as a hidden variable.

Sum model: prior-weighted sum over all segmentations of the product of
phrase n-gram probabilities (forward algorithm).  Max model: the single
segmentation with the best per-phrase log-probability (Viterbi, run once
per phrase count J so the length normalization stays exact).

Both dynamic programs share one state: the end position of the last phrase
together with the boundaries of the last ``order - 1`` phrases, which is
all the n-gram factor of the next phrase depends on.
"""

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from functools import lru_cache
from itertools import pairwise

from .errors import TooLong, UnscorableCorpus, ZeroProbability

MODES = ("sum", "max", "word")
BRUTE_FORCE_MAX_LEN = 14
EXACT_SEARCH_MAX_LEN = 64
NEG_INF = -math.inf


def _tied(a, b):
    return math.isclose(a, b, rel_tol=1e-12, abs_tol=1e-12)


@dataclass(frozen=True)
class Segmentation:
    """Phrase boundaries k_1 < ... < k_J = I; boundary k follows word k."""

    boundaries: tuple

    def __post_init__(self):
        b = tuple(int(k) for k in self.boundaries)
        if not b or b[0] < 1 or any(x >= y for x, y in pairwise(b)):
            raise ValueError(f"boundaries must be strictly increasing and positive: {b}")
        object.__setattr__(self, "boundaries", b)

    @property
    def J(self):
        return len(self.boundaries)

    @property
    def I(self):
        return self.boundaries[-1]

    def spans(self):
        return list(pairwise((0,) + self.boundaries))

    def phrases(self, tokens):
        tokens = tuple(tokens)
        if len(tokens) != self.I:
            raise ValueError(f"segmentation covers {self.I} words, sentence has {len(tokens)}")
        return [tokens[a:b] for a, b in self.spans()]

    def format(self, tokens):
        return " | ".join(" ".join(p) for p in self.phrases(tokens))


def enumerate_segmentations(I, L=None):
    """Yield every segmentation of ``I`` words in lexicographic boundary order."""
    if I < 1:
        raise ValueError(f"I must be >= 1, got {I}")
    step = I if L is None else L

    def extend(prefix, last):
        if last == I:
            yield Segmentation(prefix)
            return
        for e in range(last + 1, min(I, last + step) + 1):
            yield from extend(prefix + (e,), e)

    yield from extend((), 0)


@lru_cache(maxsize=None)
def count_segmentations(I, L=None):
    """Number of segmentations of ``I`` words with phrases of at most ``L`` words."""
    if L is None or L >= I:
        return 2 ** (I - 1)
    ways = [1] + [0] * I
    for t in range(1, I + 1):
        ways[t] = sum(ways[t - k] for k in range(1, min(L, t) + 1))
    return ways[I]


def log_prior(prior_mode, I, L=None):
    """Log of the uniform segmentation prior; independent of J."""
    if prior_mode == "exact":
        return -math.log(count_segmentations(I, L))
    if prior_mode == "paper2I":
        return -I * math.log(2.0)
    if prior_mode == "none":
        return 0.0
    raise ValueError(f"unknown prior mode {prior_mode!r}")


def segmentation_prior(model, I, J=None):
    return math.exp(log_prior(model.config.prior_mode, I, model.config.L))


class _Lattice:
    """Memoized phrase n-gram log-probabilities over the spans of one sentence."""

    def __init__(self, model, sentence, order, smoothed):
        self.model = model
        self.tokens = model.wrap(sentence)
        self.start = 1 if model.config.bos_eos else 0
        self.I = len(self.tokens)
        self.n = order
        self.smoothed = smoothed
        self.L = model.config.L
        self.est = model.phrase
        self.table = model.phrase_counts
        self._pid = {}
        self._ctx = {}
        self._lp = {}

    @property
    def initial(self):
        # markers: "<s>" is a given context phrase, never predicted
        return (0, 1)[-self.n:] if self.start else (0,)

    def ends(self, d):
        stop = self.I if self.L is None else min(self.I, d + self.L)
        return range(d + 1, stop + 1)

    def pid(self, b, e):
        key = (b, e)
        if key not in self._pid:
            self._pid[key] = self.table.phrase_id(self.tokens[b:e])
        return self._pid[key]

    def context_row(self, hist):
        row = self._ctx.get(hist)
        if row is None:
            row = -1
            for k, (a, b) in enumerate(pairwise(hist), 1):
                row = self.table.child(k, row, self.pid(a, b))
                if row < 0:
                    break
            self._ctx[hist] = row
        return row

    def logp(self, hist, e):
        key = (hist, e)
        lp = self._lp.get(key)
        if lp is None:
            b = hist[-1]
            wt = self.model._word_term(self.tokens[b:e]) if self.smoothed else 0.0
            p = self.est.cond(len(hist) - 1, self.context_row(hist), self.pid(b, e),
                              wt, self.smoothed)
            lp = math.log(p) if p > 0.0 else NEG_INF
            self._lp[key] = lp
        return lp


def _resolve_order(model, order):
    order = order or model.N
    if not 1 <= order <= model.N:
        raise ValueError(f"order {order} outside 1..{model.N}")
    return order


def _logaddexp(a, b):
    if a == NEG_INF:
        return b
    if b == NEG_INF:
        return a
    hi, lo = (a, b) if a >= b else (b, a)
    return hi + math.log1p(math.exp(lo - hi))


def sum_prob(model, sentence, order=None, smoothed=True):
    """Natural-log Sum-model probability of ``sentence`` (prior included)."""
    lat = _Lattice(model, sentence, _resolve_order(model, order), smoothed)
    n = lat.n
    alpha = [dict() for _ in range(lat.I + 1)]
    alpha[lat.start][lat.initial] = 0.0
    for d in range(lat.start, lat.I):
        for hist, a in alpha[d].items():
            for e in lat.ends(d):
                lp = lat.logp(hist, e)
                if lp == NEG_INF:
                    continue
                nxt = (hist + (e,))[-n:]
                col = alpha[e]
                col[nxt] = _logaddexp(col.get(nxt, NEG_INF), a + lp)
    total = NEG_INF
    for v in alpha[lat.I].values():
        total = _logaddexp(total, v)
    if total == NEG_INF:
        raise ZeroProbability("every segmentation has probability 0")
    return total + log_prior(model.config.prior_mode, lat.I - lat.start, lat.L)


def _better(score, path, incumbent):
    if incumbent is None:
        return True
    best, best_path = incumbent
    if _tied(score, best):
        return path < best_path
    return score > best


def max_prob(model, sentence, order=None, smoothed=True, max_len=EXACT_SEARCH_MAX_LEN):
    """Max-model (log-probability, Segmentation) of ``sentence``.

    Picks the segmentation with the highest mean log-probability per phrase
    (the prior is a constant factor and does not enter the choice); ties go
    to fewer phrases, then to the lexicographically smallest boundaries.
    The returned log-probability is that segmentation's joint probability
    including the prior.
    """
    lat = _Lattice(model, sentence, _resolve_order(model, order), smoothed)
    if lat.I - lat.start > max_len:
        raise TooLong(f"{lat.I - lat.start} words exceed the exact-search bound {max_len}")
    n, start = lat.n, lat.start
    # delta[d][(hist, j)] = (best score over j phrases ending at d, phrase ends)
    delta = [dict() for _ in range(lat.I + 1)]
    delta[start][(lat.initial, 0)] = (0.0, ())
    for d in range(start, lat.I):
        for (hist, j), (score, path) in delta[d].items():
            for e in lat.ends(d):
                lp = lat.logp(hist, e)
                if lp == NEG_INF:
                    continue
                key = ((hist + (e,))[-n:], j + 1)
                cand = (score + lp, path + (e,))
                col = delta[e]
                if _better(cand[0], cand[1], col.get(key)):
                    col[key] = cand

    per_j = {}
    for (_, j), (score, path) in delta[lat.I].items():
        if _better(score, path, per_j.get(j)):
            per_j[j] = (score, path)
    if not per_j:
        raise ZeroProbability("every segmentation has probability 0")
    top = max(score / j for j, (score, _) in per_j.items())
    J = min(j for j, (score, _) in per_j.items() if _tied(score / j, top))
    score, path = per_j[J]
    seg = Segmentation(tuple(e - start for e in path))
    return score + log_prior(model.config.prior_mode, lat.I - start, lat.L), seg


def brute_force_prob(model, sentence, mode, order=None, smoothed=True):
    """Reference scorer that enumerates every segmentation explicitly.

    Same contract as :func:`sum_prob` (mode ``"sum"``) and :func:`max_prob`
    (mode ``"max"``); limited to sentences of at most 14 words.
    """
    if mode not in ("sum", "max"):
        raise ValueError(f"mode must be 'sum' or 'max', got {mode!r}")
    n = _resolve_order(model, order)
    tokens = model.wrap(sentence)
    start = 1 if model.config.bos_eos else 0
    left = [tokens[:start]] if start else []
    I = len(tokens) - start
    if I > BRUTE_FORCE_MAX_LEN:
        raise TooLong(f"{I} words exceed the brute-force bound {BRUTE_FORCE_MAX_LEN}")
    body = tokens[start:]

    scored = []
    for seg in enumerate_segmentations(I, model.config.L):
        phrases = left + seg.phrases(body)
        s = 0.0
        for j in range(len(left), len(phrases)):
            p = model.prob(phrases[j], phrases[max(0, j - n + 1):j], smoothed)
            if p <= 0.0:
                s = NEG_INF
                break
            s += math.log(p)
        if s > NEG_INF:
            scored.append((s, seg))
    if not scored:
        raise ZeroProbability("every segmentation has probability 0")

    prior = log_prior(model.config.prior_mode, I, model.config.L)
    if mode == "sum":
        hi = max(s for s, _ in scored)
        return hi + math.log(math.fsum(math.exp(s - hi) for s, _ in scored)) + prior
    top = max(s / seg.J for s, seg in scored)
    s, seg = min(((s, seg) for s, seg in scored if _tied(s / seg.J, top)),
                 key=lambda x: (x[1].J, x[1].boundaries))
    return s + prior, seg


@dataclass(frozen=True)
class ScoredSentence:
    """Log-probability and perplexity of one sentence.

    ``units`` normalizes the perplexity: words for the sum and word models,
    phrases of the chosen segmentation for the max model.
    """

    log_prob: float
    units: int
    segmentation: Segmentation | None = None

    @property
    def ppl(self):
        return math.exp(-self.log_prob / self.units)


def score_sentence(model, sentence, mode, order=None, smoothed=True):
    """Score ``sentence``; raises ZeroProbability when it is unscorable."""
    words = len(model.wrap(sentence)) - (1 if model.config.bos_eos else 0)
    if mode == "sum":
        return ScoredSentence(sum_prob(model, sentence, order, smoothed), words)
    if mode == "max":
        lp, seg = max_prob(model, sentence, order, smoothed)
        return ScoredSentence(lp, seg.J, seg)
    if mode in ("word", "base"):
        return ScoredSentence(model.word_lm_prob(sentence, order, smoothed), words)
    raise ValueError(f"unknown mode {mode!r}")


def sentence_ppl(model, sentence, mode, order=None, smoothed=True):
    return score_sentence(model, sentence, mode, order, smoothed).ppl


@dataclass(frozen=True)
class CorpusScore:
    ppl: float
    scores: tuple  # ScoredSentence, or None for a skipped sentence
    skipped: tuple

    @property
    def log_prob(self):
        return math.fsum(s.log_prob for s in self.scores if s is not None)

    @property
    def units(self):
        return sum(s.units for s in self.scores if s is not None)


def _try_score(args):
    model, sentence, mode, order, smoothed = args
    try:
        return score_sentence(model, sentence, mode, order, smoothed)
    except ZeroProbability:
        return None


def corpus_ppl(model, sentences, mode, order=None, smoothed=True,
               skip_unscorable=False, threads=1):
    """Perplexity over a corpus: exp(-sum of log-probs / sum of units).

    Unscorable sentences raise UnscorableCorpus listing them, unless
    ``skip_unscorable`` is set, in which case they are left out and listed
    in ``CorpusScore.skipped``.
    """
    jobs = [(model, s, mode, order, smoothed) for s in sentences]
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            scores = tuple(pool.map(_try_score, jobs))
    else:
        scores = tuple(map(_try_score, jobs))
    skipped = tuple(i for i, s in enumerate(scores) if s is None)
    if skipped and (not skip_unscorable or len(skipped) == len(scores)):
        raise UnscorableCorpus(skipped)
    if not scores:
        raise ValueError("empty corpus")
    lp = math.fsum(s.log_prob for s in scores if s is not None)
    units = sum(s.units for s in scores if s is not None)
    return CorpusScore(math.exp(-lp / units), scores, skipped)
