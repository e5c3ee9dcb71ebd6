"""N-best reranking by language-model perplexity and corpus BLEU."""

import logging
import math
from collections import Counter
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

from .corpus import Sentence, tokenize
from .errors import EmptyInput, EmptyLine, FormatError, ZeroProbability
from .segmentation import score_sentence

log = logging.getLogger(__name__)

SEPARATOR = " ||| "


@dataclass(frozen=True)
class NBestEntry:
    source_id: int
    hypothesis: Sentence
    external_score: float | None = None


@dataclass(frozen=True)
class Selection:
    source_id: int
    index: int  # position of the chosen candidate within its list
    hypothesis: Sentence
    ppl: float  # math.inf when no candidate of the list was scorable


def parse_nbest_line(line, lineno=None, path=None):
    fields = line.rstrip("\n").split(SEPARATOR)
    if len(fields) not in (2, 3):
        raise FormatError("expected '<id> ||| <hypothesis> [||| <score>]'", lineno, path)
    sid = fields[0].strip()
    if not sid.isdigit():
        raise FormatError(f"source id {sid!r} is not a non-negative integer", lineno, path)
    try:
        hyp = tokenize(fields[1])
    except EmptyLine:
        raise FormatError("empty hypothesis", lineno, path) from None
    score = None
    if len(fields) == 3 and fields[2].strip():
        try:
            score = float(fields[2])
        except ValueError:
            raise FormatError(f"bad score {fields[2]!r}", lineno, path) from None
    return NBestEntry(int(sid), hyp, score)


def load_nbest(path):
    """Read an N-best file into candidate lists, one per source id.

    Lists keep file order.  A source id that reappears after another id
    is appended to its earlier list with a warning.
    """
    groups = {}
    last = None
    with open(path, encoding="utf-8") as f:
        for lineno, line in enumerate(f, 1):
            if not line.strip():
                continue
            entry = parse_nbest_line(line, lineno, path)
            if entry.source_id in groups and entry.source_id != last:
                log.warning("%s:%d: source %d is not contiguous", path, lineno, entry.source_id)
            groups.setdefault(entry.source_id, []).append(entry)
            last = entry.source_id
    if not groups:
        log.warning("%s: no candidates", path)
    return list(groups.values())


def _select(model, group, mode, order, smoothed):
    best = None
    for i, entry in enumerate(group):
        try:
            ppl = score_sentence(model, entry.hypothesis, mode, order, smoothed).ppl
        except ZeroProbability:
            continue
        if best is None or ppl < best[1]:
            best = (i, ppl)
    if best is None:
        log.warning("source %d: no scorable candidate, keeping the first", group[0].source_id)
        best = (0, math.inf)
    i, ppl = best
    return Selection(group[0].source_id, i, group[i].hypothesis, ppl)


def rerank(model, groups, mode="sum", order=None, smoothed=True,
           passthrough_first=False, threads=1):
    """Choose the lowest-perplexity candidate of every list.

    Ties keep the earlier candidate; unscorable candidates rank last.
    ``passthrough_first`` skips scoring and returns each list's first entry.
    Results are ordered by source id.
    """
    groups = sorted((g for g in groups if g), key=lambda g: g[0].source_id)
    if passthrough_first:
        return [Selection(g[0].source_id, 0, g[0].hypothesis, math.nan) for g in groups]

    def pick(group):
        return _select(model, group, mode, order, smoothed)

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            return list(pool.map(pick, groups))
    return [pick(g) for g in groups]


@dataclass(frozen=True)
class BleuReport:
    bleu: float
    precisions: tuple
    brevity_penalty: float
    hyp_length: int
    ref_length: int

    def __str__(self):
        ps = "/".join(f"{100 * p:.1f}" for p in self.precisions)
        return (f"BLEU = {100 * self.bleu:.2f}, {ps} (BP={self.brevity_penalty:.3f}, "
                f"hyp_len={self.hyp_length}, ref_len={self.ref_length})")


def _ngrams(tokens, n):
    return Counter(tuple(tokens[i:i + n]) for i in range(len(tokens) - n + 1))


def bleu(hypotheses, references, max_n=4):
    """Corpus BLEU with one reference per hypothesis and clipped n-gram counts.

    Orders for which neither side has any n-gram (every sentence shorter
    than n) count as perfectly matched, so identical inputs always score 1.
    """
    hypotheses, references = list(hypotheses), list(references)
    if not hypotheses:
        raise EmptyInput("no hypotheses")
    if len(hypotheses) != len(references):
        raise ValueError(f"{len(hypotheses)} hypotheses but {len(references)} references")
    matched = [0] * max_n
    total = [0] * max_n
    possible = [0] * max_n  # reference n-grams, to tell vacuous orders apart
    hyp_len = ref_len = 0
    for hyp, ref in zip(hypotheses, references):
        hyp, ref = tuple(hyp), tuple(ref)
        hyp_len += len(hyp)
        ref_len += len(ref)
        for n in range(1, max_n + 1):
            h, r = _ngrams(hyp, n), _ngrams(ref, n)
            matched[n - 1] += sum(min(c, r[g]) for g, c in h.items())
            total[n - 1] += max(len(hyp) - n + 1, 0)
            possible[n - 1] += max(len(ref) - n + 1, 0)
    if hyp_len == 0 and ref_len == 0:
        raise EmptyInput("no tokens in hypotheses or references")
    # an order with no n-gram on either side cannot be wrong
    precisions = tuple(m / t if t else float(r == 0)
                       for m, t, r in zip(matched, total, possible))
    if hyp_len == 0:
        bp = 0.0
    elif hyp_len > ref_len:
        bp = 1.0
    else:
        bp = math.exp(1.0 - ref_len / hyp_len)
    if min(precisions) <= 0.0 or bp == 0.0:
        score = 0.0
    else:
        score = bp * math.exp(sum(math.log(p) for p in precisions) / max_n)
    return BleuReport(score, precisions, bp, hyp_len, ref_len)
