"""Phrase n-gram enumeration and mergeable count tables.

A phrase is a contiguous span of words and a phrase n-gram is a tuple of n
adjacent phrases.  A sentence of I words holds binomial(I+1, n+1) phrase
n-grams (one per placement of n+1 increasing boundaries), so per-sentence
counts grow quickly with N; the corpus counter therefore works on integer
ids with numpy instead of Python tuples.

Storage layout of :class:`CountTable`: phrases are numbered in sorted order.
Order-1 entry ``i`` is phrase ``i``.  An order-n entry is encoded as
``parent * P + pid`` where ``parent`` is the row of its (n-1)-gram prefix in
the order n-1 array and ``P`` the number of phrases.  Each order's keys are
kept sorted, which makes the row order equal to the lexicographic order of
the phrase tuples and gives lookups by binary search.
"""

import logging
import re
from collections import Counter, defaultdict
from concurrent.futures import ThreadPoolExecutor
from functools import lru_cache
from itertools import repeat
from math import comb

import numpy as np

from .errors import CapacityError, FormatError

log = logging.getLogger(__name__)

HEADER = "phraselm-counts v1"
_HEADER_RE = re.compile(r"^phraselm-counts v1 N=(\d+) C=(\d+)$")
_INT64_MAX = np.iinfo(np.int64).max
_WRITE_CHUNK = 1 << 18


def _span_fits(length, L):
    return L is None or length <= L


def enumerate_phrase_ngrams(sentence, N, L=None):
    """Return the multiset of phrase n-grams (1 <= n <= N) of ``sentence``.

    Follows the end-position recursion: the n-grams whose last phrase is
    w_b..w_d are the (n-1)-grams ending at word b-1, each extended by that
    phrase.  Phrases longer than ``L`` words are skipped when ``L`` is set.
    """
    if N < 1:
        raise ValueError(f"N must be >= 1, got {N}")
    tokens = tuple(sentence)
    I = len(tokens)
    if I == 0:
        raise ValueError("empty sentence")

    # ending[n][d]: n-grams whose last phrase ends at word d (1-based)
    ending = [[[] for _ in range(I + 1)] for _ in range(N + 1)]
    grams = Counter()
    for d in range(1, I + 1):
        for b in range(1, d + 1):
            if not _span_fits(d - b + 1, L):
                continue
            phrase = tokens[b - 1:d]
            ending[1][d].append((phrase,))
            for n in range(2, min(N, b) + 1):
                ending[n][d].extend(g + (phrase,) for g in ending[n - 1][b - 1])
        for n in range(1, N + 1):
            grams.update(ending[n][d])
    return grams


@lru_cache(maxsize=None)
def count_boundary_tuples(I, n, L=None):
    """Number of order-n phrase n-grams in a sentence of ``I`` words."""
    if L is None or L >= I:
        return comb(I + 1, n + 1)
    # place n phrases of length 1..L; count by total covered length t
    ways = [1] + [0] * I  # compositions of t into the phrases placed so far
    for _ in range(n):
        nxt = [0] * (I + 1)
        for t, w in enumerate(ways):
            if w:
                for step in range(1, min(L, I - t) + 1):
                    nxt[t + step] += w
        ways = nxt
    return sum(w * (I - t + 1) for t, w in enumerate(ways))


class _Layout:
    """Index arrays describing every boundary tuple of one sentence length."""

    def __init__(self, I, N, L):
        self.spans = [(b, d) for b in range(I)
                      for d in range(b + 1, (I if L is None else min(I, b + L)) + 1)]
        column = {s: i for i, s in enumerate(self.spans)}
        # per order >= 2: column of the last phrase and row of the prefix tuple
        self.last = []
        self.parent = []
        prev = list(self.spans)
        for _ in range(2, N + 1):
            cur, last, parent = [], [], []
            for row, t in enumerate(prev):
                stop = I if L is None else min(I, t[-1] + L)
                for e in range(t[-1] + 1, stop + 1):
                    cur.append(t + (e,))
                    last.append(column[(t[-1], e)])
                    parent.append(row)
            self.last.append(np.asarray(last, dtype=np.int64))
            self.parent.append(np.asarray(parent, dtype=np.int64))
            prev = cur
        self.emitted = len(self.spans) + sum(len(x) for x in self.last)


@lru_cache(maxsize=None)
def _layout(I, N, L):
    return _Layout(I, N, L)


def _reduce(keys, counts):
    """Sum ``counts`` per distinct key; returns (sorted keys, sums, inverse)."""
    if len(keys) == 0:
        empty = np.zeros(0, dtype=np.int64)
        return empty, empty.copy(), empty.copy()
    order = np.argsort(keys, kind="stable")
    sk = keys[order]
    starts = np.flatnonzero(np.r_[True, sk[1:] != sk[:-1]])
    sums = np.add.reduceat(counts[order], starts)
    inverse = np.empty(len(keys), dtype=np.int64)
    inverse[order] = np.cumsum(np.r_[True, sk[1:] != sk[:-1]]) - 1
    return sk[starts], sums.astype(np.int64, copy=False), inverse


def _run_lengths(keys):
    """Sort ``keys`` in place and return (distinct keys, multiplicities)."""
    keys.sort()
    starts = np.flatnonzero(np.r_[True, keys[1:] != keys[:-1]])
    sizes = np.diff(np.r_[starts, len(keys)])
    return keys[starts], sizes.astype(np.int64)


def _check_encodable(parents, P):
    if parents and P and parents > _INT64_MAX // P:
        raise OverflowError(
            f"{parents} prefixes x {P} phrases do not fit a 64-bit key")


class CountTable:
    """Counts of phrase n-grams up to ``order``, immutable once built.

    Keys are tuples of phrases, each phrase a tuple of words.  Use
    ``table[key]`` for a count (0 when unseen), ``total`` for the number of
    phrase occurrences C, and ``count_of_counts(n)`` for N_r.
    """

    def __init__(self, order, phrases, keys, counts):
        if len(keys) != order or len(counts) != order:
            raise ValueError("need one key and count array per order")
        self.order = order
        self.phrases = list(phrases)
        self._keys = [np.asarray(k, dtype=np.int64) for k in keys]
        self._counts = [np.asarray(c, dtype=np.int64) for c in counts]
        self._index = None
        self._coc = {}
        self._total = int(self._counts[0].sum()) if order else 0

    # -- construction -----------------------------------------------------

    @classmethod
    def from_counter(cls, counts, order):
        """Build a table from a mapping ``{phrase n-gram: count}``."""
        by_order = [[] for _ in range(order)]
        for key, c in counts.items():
            key = tuple(tuple(p) for p in key)
            if not 1 <= len(key) <= order:
                raise ValueError(f"key {key} outside orders 1..{order}")
            by_order[len(key) - 1].append((key, c))
        phrases = sorted(k[0] for k, _ in by_order[0])
        index = {p: i for i, p in enumerate(phrases)}
        cols, cnts = [], []
        for n, recs in enumerate(by_order, 1):
            try:
                cols.append(np.array([[index[p] for p in k] for k, _ in recs],
                                     dtype=np.int64).reshape(len(recs), n))
            except KeyError as e:
                raise ValueError(f"phrase {e.args[0]} has no unigram entry") from None
            cnts.append(np.array([c for _, c in recs], dtype=np.int64))
        return cls._build(order, phrases, cols, cnts)

    @classmethod
    def _build(cls, order, phrases, cols, counts, lines=None, path=None):
        """Assemble a table from per-order (rows, n) phrase-id arrays.

        ``phrases`` must be sorted and exactly the order-1 phrases.  Errors
        name the offending record through ``lines`` when given.
        """
        def fail(message, n, i):
            line = lines[n - 1][i] if lines is not None else None
            raise FormatError(message, line, path)

        P = len(phrases)
        for n, c in enumerate(counts, 1):
            neg = np.flatnonzero(c < 0)
            if len(neg):
                fail(f"negative count {c[neg[0]]}", n, neg[0])
        if len(cols[0]) != P:
            first = cols[0][:, 0]
            _, at = np.unique(first, return_index=True)
            dup = np.setdiff1d(np.arange(len(first)), at)
            fail(f"duplicate record for {phrases[first[dup[0]]]}", 1, dup[0])
        keys = [np.arange(P, dtype=np.int64)]
        c1 = np.zeros(P, dtype=np.int64)
        c1[cols[0][:, 0]] = counts[0]
        sums = [c1]
        for n in range(2, order + 1):
            _check_encodable(len(keys[-1]), P)
            c = cols[n - 1]
            node = c[:, 0]
            for k in range(2, n):
                enc = node * P + c[:, k - 1]
                node = np.searchsorted(keys[k - 1], enc)
                found = node < len(keys[k - 1])
                found[found] = keys[k - 1][node[found]] == enc[found]
                if not found.all():
                    fail("prefix n-gram has no record", n, np.flatnonzero(~found)[0])
            enc = node * P + c[:, n - 1]
            perm = np.argsort(enc, kind="stable")
            enc = enc[perm]
            dup = np.flatnonzero(enc[1:] == enc[:-1])
            if len(dup):
                fail("duplicate record", n, perm[dup[0] + 1])
            keys.append(enc)
            sums.append(counts[n - 1][perm])
        return cls(order, phrases, keys, sums)

    # -- queries ----------------------------------------------------------

    @property
    def total(self):
        """C: the number of phrase occurrences (sum of order-1 counts)."""
        return self._total

    @property
    def num_phrases(self):
        return len(self.phrases)

    def num_keys(self, n):
        return len(self._keys[n - 1])

    def __len__(self):
        return sum(len(k) for k in self._keys)

    def phrase_id(self, phrase):
        """Row of ``phrase`` among the order-1 entries, or -1."""
        if self._index is None:
            self._index = {p: i for i, p in enumerate(self.phrases)}
        return self._index.get(tuple(phrase), -1)

    def child(self, n, parent, pid):
        """Row of the order-n entry extending row ``parent`` of order n-1 by ``pid``.

        Returns -1 when absent.  For n == 1 ``parent`` is ignored.
        """
        if pid < 0:
            return -1
        if n == 1:
            return pid
        if parent < 0 or n > self.order:
            return -1
        keys = self._keys[n - 1]
        enc = parent * len(self.phrases) + pid
        i = int(keys.searchsorted(enc))
        if i < len(keys) and keys[i] == enc:
            return i
        return -1

    def row_count(self, n, row):
        return int(self._counts[n - 1][row]) if row >= 0 else 0

    def find(self, key):
        """Row of ``key`` within its order, or -1."""
        row = -1
        for n, phrase in enumerate(key, 1):
            row = self.child(n, row, self.phrase_id(phrase))
            if row < 0:
                return -1
        return row

    def __getitem__(self, key):
        key = tuple(tuple(p) for p in key)
        if not 1 <= len(key) <= self.order:
            return 0
        return self.row_count(len(key), self.find(key))

    def count_of_counts(self, n):
        """``{r: N_r}``: how many distinct order-n keys were seen exactly r times."""
        if n not in self._coc:
            if 1 <= n <= self.order:
                r, nr = np.unique(self._counts[n - 1], return_counts=True)
                self._coc[n] = {int(a): int(b) for a, b in zip(r, nr)}
            else:
                self._coc[n] = {}
        return self._coc[n]

    def _columns(self, n, start=0, stop=None):
        """Phrase ids of order-n rows ``start:stop`` as an (rows, n) array."""
        P = len(self.phrases)
        enc = self._keys[n - 1][start:stop]
        cols = np.empty((len(enc), n), dtype=np.int64)
        for level in range(n, 1, -1):
            cols[:, level - 1] = enc % P
            enc = self._keys[level - 2][enc // P]
        cols[:, 0] = enc
        return cols

    def items(self, n=None):
        """Yield ``(key, count)`` sorted by order, then lexicographically."""
        for m in ([n] if n else range(1, self.order + 1)):
            counts = self._counts[m - 1]
            for start in range(0, len(counts), _WRITE_CHUNK):
                cols = self._columns(m, start, start + _WRITE_CHUNK).tolist()
                for row, c in zip(cols, counts[start:start + _WRITE_CHUNK].tolist()):
                    yield tuple(self.phrases[i] for i in row), c

    def to_dict(self):
        return dict(self.items())

    def __eq__(self, other):
        if not isinstance(other, CountTable):
            return NotImplemented
        return (self.order == other.order and self.phrases == other.phrases
                and all(np.array_equal(a, b) for a, b in zip(self._keys, other._keys))
                and all(np.array_equal(a, b) for a, b in zip(self._counts, other._counts)))

    def __add__(self, other):
        return merge_tables([self, other])

    def __repr__(self):
        sizes = ", ".join(str(len(k)) for k in self._keys)
        return f"CountTable(order={self.order}, C={self.total}, keys=[{sizes}])"


def merge_tables(tables):
    """Key-wise sum of count tables of the same order."""
    tables = list(tables)
    if not tables:
        raise ValueError("nothing to merge")
    order = tables[0].order
    if any(t.order != order for t in tables):
        raise ValueError("cannot merge tables of different order")
    if len(tables) == 1:
        return tables[0]

    phrases = sorted(set().union(*(t.phrases for t in tables)))
    index = {p: i for i, p in enumerate(phrases)}
    P = len(phrases)
    pid_maps = [np.array([index[p] for p in t.phrases], dtype=np.int64) for t in tables]
    row_maps = [None] * len(tables)
    keys, counts = [], []
    for n in range(1, order + 1):
        if n > 1:
            _check_encodable(len(keys[-1]), P)
        parts = []
        for i, t in enumerate(tables):
            k = t._keys[n - 1]
            if n == 1:
                parts.append(pid_maps[i][k])
            else:
                tp = len(t.phrases)
                parts.append(row_maps[i][k // tp] * P + pid_maps[i][k % tp])
        merged, sums, inverse = _reduce(np.concatenate(parts),
                                        np.concatenate([t._counts[n - 1] for t in tables]))
        keys.append(merged)
        counts.append(sums)
        offset = 0
        for i, part in enumerate(parts):
            row_maps[i] = inverse[offset:offset + len(part)]
            offset += len(part)
    return CountTable(order, phrases, keys, counts)


def _count_shard(sentences, N, L):
    index = {}
    rows_by_len = defaultdict(list)
    for s in sentences:
        s = tuple(s)
        spans = _layout(len(s), N, L).spans
        rows_by_len[len(s)].append([index.setdefault(s[b:d], len(index)) for b, d in spans])

    phrases = list(index)
    P = len(phrases)
    perm = sorted(range(P), key=phrases.__getitem__)
    rank = np.empty(P, dtype=np.int64)
    rank[perm] = np.arange(P, dtype=np.int64)
    phrases = [phrases[i] for i in perm]
    groups = {I: rank[np.asarray(rows, dtype=np.int64)] for I, rows in rows_by_len.items()}
    del rows_by_len

    keys = [np.arange(P, dtype=np.int64)]
    counts = [np.bincount(np.concatenate([g.ravel() for g in groups.values()]),
                          minlength=P).astype(np.int64)]
    rows = groups  # order-1 row of every span is its phrase id
    for n in range(2, N + 1):
        _check_encodable(len(keys[-1]), P)
        encs = {}
        for I, S in groups.items():
            lay = _layout(I, N, L)
            last, parent = lay.last[n - 2], lay.parent[n - 2]
            if len(last):
                encs[I] = rows[I][:, parent] * P + S[:, last]
        if encs:
            flat = np.concatenate([e.ravel() for e in encs.values()])
            if n == N:
                encs.clear()
            k, c = _run_lengths(flat)
            del flat
        else:
            k = c = np.zeros(0, dtype=np.int64)
        keys.append(k)
        counts.append(c)
        rows = {I: np.searchsorted(k, enc) for I, enc in encs.items()}
        encs = None
    return CountTable(N, phrases, keys, counts)


def accumulate_counts(corpus, N, L=None, threads=1, max_keys=None):
    """Count every phrase n-gram (n <= N) over all sentences of ``corpus``.

    ``max_keys`` bounds the number of emitted n-gram occurrences held in
    memory; exceeding it raises CapacityError naming the sentence.  With
    ``threads > 1`` the corpus is split into contiguous shards counted
    independently and merged; the result is identical either way.
    """
    if N < 1:
        raise ValueError(f"N must be >= 1, got {N}")
    if L is not None and L < 1:
        raise ValueError(f"L must be >= 1, got {L}")
    sentences = [tuple(s) for s in corpus]
    if not sentences:
        raise ValueError("cannot count an empty corpus")
    if max_keys is not None:
        emitted = 0
        for i, s in enumerate(sentences):
            emitted += _layout(len(s), N, L).emitted
            if emitted > max_keys:
                raise CapacityError(i, max_keys)

    threads = max(1, min(threads, len(sentences)))
    if threads == 1:
        return _count_shard(sentences, N, L)
    bounds = np.linspace(0, len(sentences), threads + 1).astype(int)
    shards = [sentences[a:b] for a, b in zip(bounds, bounds[1:]) if b > a]
    log.debug("counting %d shard(s)", len(shards))
    with ThreadPoolExecutor(max_workers=threads) as pool:
        tables = list(pool.map(lambda s: _count_shard(s, N, L), shards))
    return merge_tables(tables)


class _ByteTokens:
    """Byte buffer of every string a count file needs, addressed by token id."""

    def __init__(self, pieces):
        encoded = [x.encode("utf-8") for x in pieces]
        self.length = np.fromiter((len(e) for e in encoded), dtype=np.int64, count=len(encoded))
        self.offset = np.zeros(len(encoded), dtype=np.int64)
        np.cumsum(self.length[:-1], out=self.offset[1:])
        self.buffer = np.frombuffer(b"".join(encoded), dtype=np.uint8)

    def render(self, tokens):
        """Concatenate the token ids of the (rows, k) array row by row."""
        flat = tokens.ravel()
        lengths = self.length[flat]
        total = int(lengths.sum())
        shift = np.repeat(self.offset[flat] - (np.cumsum(lengths) - lengths), lengths)
        return self.buffer[shift + np.arange(total, dtype=np.int64)].tobytes()


def save_counts(table, path):
    """Write ``table`` in the sorted text format (header plus one record per line)."""
    order = table.order
    distinct = np.unique(np.concatenate([c for c in table._counts])) if order else []
    # token ids: TAB, LF, "<n>\t" for each order, each distinct count, each phrase
    statics = ["\t", "\n"] + [f"{n}\t" for n in range(1, order + 1)]
    count_base = len(statics)
    phrase_base = count_base + len(distinct)
    tokens = _ByteTokens(statics + [str(int(c)) for c in distinct]
                         + [" ".join(p) for p in table.phrases])
    with open(path, "wb") as f:
        f.write(f"{HEADER} N={order} C={table.total}\n".encode("utf-8"))
        for n in range(1, order + 1):
            counts = table._counts[n - 1]
            for start in range(0, len(counts), _WRITE_CHUNK):
                cols = table._columns(n, start, start + _WRITE_CHUNK)
                rows = len(cols)
                ids = np.empty((rows, 3 + 2 * n), dtype=np.int64)
                ids[:, 0] = 1 + n
                ids[:, 1] = count_base + np.searchsorted(
                    distinct, counts[start:start + _WRITE_CHUNK])
                ids[:, 2:-1:2] = 0
                ids[:, 3:-1:2] = phrase_base + cols
                ids[:, -1] = 1
                f.write(tokens.render(ids))


def _unigram_index(strings, lines, path):
    """Sorted phrase list and ``{phrase string: id}`` from the order-1 records."""
    phrases = [tuple(s.split(" ")) for s in strings]
    for i, p in enumerate(phrases):
        if "" in p:
            raise FormatError("empty word in phrase", lines[i], path)
    perm = sorted(range(len(phrases)), key=phrases.__getitem__)
    for a, b in zip(perm, perm[1:]):
        if phrases[a] == phrases[b]:
            raise FormatError(f"duplicate record for {phrases[a]}", lines[max(a, b)], path)
    return [phrases[i] for i in perm], {strings[i]: rank for rank, i in enumerate(perm)}


class _Irregular(Exception):
    """The bulk parser met something it cannot vouch for."""


def _parse_bulk(body, order, path):
    """Parse the record lines of a count file in bulk.

    Field boundaries come from the positions of TAB and LF bytes, so the
    per-line work is reduced to a few list and dict lookups.
    """
    if body and not body.endswith(b"\n"):
        body += b"\n"
    raw = np.frombuffer(body, dtype=np.uint8)
    sep = np.flatnonzero((raw == 9) | (raw == 10))
    last = np.flatnonzero(raw[sep] == 10)  # field index of each line's last field
    starts = np.r_[0, last[:-1] + 1].astype(np.int64)
    width = last - starts + 1
    fields = body.decode("utf-8").replace("\n", "\t").split("\t")
    try:
        ns = np.array(list(map(int, [fields[i] for i in starts.tolist()])), dtype=np.int64)
        counts = np.array(list(map(int, [fields[i] for i in (starts + 1).tolist()])),
                          dtype=np.int64)
    except (ValueError, OverflowError, IndexError):
        raise _Irregular from None
    if len(ns) and ((ns < 1).any() or (ns > order).any() or (width != ns + 2).any()):
        raise _Irregular
    rows = [np.flatnonzero(ns == n) for n in range(1, order + 1)]
    lines = [r + 2 for r in rows]  # the header is line 1
    phrases, index = _unigram_index([fields[i] for i in (starts[rows[0]] + 2).tolist()],
                                    lines[0], path)
    get = index.get
    cols = []
    for n, r in enumerate(rows, 1):
        at = (starts[r][:, None] + 2 + np.arange(n)).ravel().tolist()
        picked = [fields[i] for i in at]
        ids = np.fromiter(map(get, picked, repeat(-1, len(at))), dtype=np.int64, count=len(at))
        if (ids < 0).any():
            raise _Irregular
        cols.append(ids.reshape(len(r), n))
    del fields
    return CountTable._build(order, phrases, cols, [counts[r] for r in rows], lines, path)


def load_counts(path):
    """Read a count file written by :func:`save_counts`."""
    with open(path, "rb") as f:
        head = f.readline()
        body = f.read()
    try:
        m = _HEADER_RE.match(head.decode("utf-8").rstrip("\n"))
    except UnicodeDecodeError:
        m = None
    if not m:
        raise FormatError("bad header", 1, path)
    order, total = int(m.group(1)), int(m.group(2))
    if order < 1:
        raise FormatError("order must be >= 1", 1, path)
    try:
        table = _parse_bulk(body, order, path)
    except (_Irregular, UnicodeDecodeError):
        table = _load_counts_checked(path)
    if table.total != total:
        raise FormatError(f"header C={total} but unigram counts sum to {table.total}", 1, path)
    return table


def _load_counts_checked(path):
    """Line-by-line parser; slow, but names the line of any malformed record."""
    with open(path, encoding="utf-8", newline="\n") as f:
        m = _HEADER_RE.match(f.readline().rstrip("\n"))
        if not m:
            raise FormatError("bad header", 1, path)
        order, total = int(m.group(1)), int(m.group(2))
        if order < 1:
            raise FormatError("order must be >= 1", 1, path)
        fields = [[] for _ in range(order)]
        counts = [[] for _ in range(order)]
        lines = [[] for _ in range(order)]
        for lineno, line in enumerate(f, 2):
            parts = line.rstrip("\n").split("\t")
            try:
                n, count = int(parts[0]), int(parts[1])
            except (ValueError, IndexError):
                raise FormatError("expected <n> TAB <count> TAB <phrases...>",
                                  lineno, path) from None
            if not 1 <= n <= order:
                raise FormatError(f"order {n} outside 1..{order}", lineno, path)
            if len(parts) != n + 2:
                raise FormatError(f"order {n} but {len(parts) - 2} phrase(s)", lineno, path)
            fields[n - 1].append(parts[2:])
            counts[n - 1].append(count)
            lines[n - 1].append(lineno)

    phrases, index = _unigram_index([p[0] for p in fields[0]], lines[0], path)
    cols = []
    for n in range(1, order + 1):
        try:
            ids = [index[p] for row in fields[n - 1] for p in row]
        except KeyError as e:
            bad = next(i for i, row in enumerate(fields[n - 1]) if e.args[0] in row)
            raise FormatError(f"phrase {e.args[0]!r} has no unigram record",
                              lines[n - 1][bad], path) from None
        cols.append(np.array(ids, dtype=np.int64).reshape(len(fields[n - 1]), n))
        fields[n - 1] = None
    table = CountTable._build(order, phrases, cols,
                              [np.array(c, dtype=np.int64) for c in counts], lines, path)
    if table.total != total:
        raise FormatError(f"header C={total} but unigram counts sum to {table.total}", 1, path)
    return table
