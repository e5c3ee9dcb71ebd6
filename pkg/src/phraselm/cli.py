"""Command-line interface: ``phraselm {train,ppl,rerank,bleu}``."""

import argparse
import logging
import math
import os
import sys

from .corpus import corpus_stats, load_corpus
from .counting import HEADER
from .errors import (CapacityError, EmptyCorpus, EmptyInput, FormatError, PhraseLMError,
                     TooLong, UnscorableCorpus, ZeroProbability)
from .model import PRIOR_MODES, ModelConfig, TrainedModel
from .rerank import bleu, load_nbest, rerank
from .segmentation import corpus_ppl

log = logging.getLogger("phraselm")

EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 1, 2, 3

CORPUS_GRAMMAR = "corpus file: one sentence per line, tokens separated by spaces (UTF-8)"
COUNTS_GRAMMAR = (f"count file: '{HEADER} N=<N> C=<C>' then "
                  "'<n> TAB <count> TAB <phrase_1> ... TAB <phrase_n>' per line")
SCORES_GRAMMAR = ("scores: '<index> TAB <log10_prob> TAB <ppl> TAB <J or I> TAB <a | b c>' "
                  "per sentence, then '# corpus ...' summary")
NBEST_GRAMMAR = "n-best file: '<source_id> ||| <hypothesis tokens> [||| <score>]' per line"
RERANK_GRAMMAR = "output: '<source_id> TAB <ppl> TAB <hypothesis>' per source"
TABLE_COLUMNS = (("Base", "word", False), ("Sum", "sum", False), ("Sum+S.", "sum", True),
                 ("Max", "max", False), ("Max+S.", "max", True))


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _on_off(value):
    if value not in ("on", "off"):
        raise argparse.ArgumentTypeError("expected 'on' or 'off'")
    return value == "on"


def _positive(value):
    n = int(value)
    if n < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {value}")
    return n


def _default_threads():
    try:
        return max(1, int(os.environ.get("PHRASELM_THREADS", "1")))
    except ValueError:
        return 1


def _print_config(args):
    items = {k: v for k, v in sorted(vars(args).items()) if k != "func"}
    print("config: " + " ".join(f"{k}={v}" for k, v in items.items()), file=sys.stderr)


def cmd_train(args):
    corpus = load_corpus(args.corpus, args.max_train_len)
    stats = corpus_stats(corpus)
    print(f"sentences={stats['sentences']} words={stats['words']} "
          f"vocabulary={stats['vocabulary']} filtered={corpus.filtered}")
    config = ModelConfig(N=args.N, L=args.L, lam=args.lam, gt_max_r=args.gt_max_r,
                         prior_mode=args.prior, bos_eos=args.bos_eos,
                         word_order=args.word_order)
    model = TrainedModel.train(corpus, config, threads=args.threads, max_keys=args.max_keys)
    model.save(args.out_dir)
    print(f"phrase_keys={len(model.phrase_counts)} C={model.phrase_counts.total} "
          f"word_keys={len(model.word_counts)}")
    return 0


def _format_score(i, sentence, score, model):
    if score is None:
        return f"{i}\t-inf\tinf\t{len(sentence)}\t{sentence}"
    text = (score.segmentation.format(model.wrap(sentence)[1 if model.config.bos_eos else 0:])
            if score.segmentation else str(sentence))
    return (f"{i}\t{score.log_prob / math.log(10):.6f}\t{score.ppl:.6f}\t"
            f"{score.units}\t{text}")


def ppl_table(model, sentences, max_order, base_smoothing=False, threads=1):
    """Perplexity report: one row per order, one column per model variant."""
    columns = [(name, mode, base_smoothing if mode == "word" else s)
               for name, mode, s in TABLE_COLUMNS]
    header = "n\t" + "\t".join(name for name, _, _ in columns)
    rows, used = [header], [header]
    for n in range(1, max_order + 1):
        cells, counts = [], []
        for _, mode, smoothed in columns:
            try:
                res = corpus_ppl(model, sentences, mode, n, smoothed,
                                 skip_unscorable=True, threads=threads)
                cells.append(f"{res.ppl:.1f}")
                counts.append(str(len(sentences) - len(res.skipped)))
            except ZeroProbability:
                cells.append("inf")
                counts.append("0")
        rows.append(f"{n}\t" + "\t".join(cells))
        used.append(f"{n}\t" + "\t".join(counts))
    return "\n".join(rows) + "\n\n# scored sentences\n" + "\n".join(used) + "\n"


def cmd_ppl(args):
    model = TrainedModel.load(args.model_dir)
    corpus = load_corpus(args.corpus, args.max_test_len)
    sentences = list(corpus)
    if args.mode == "table":
        order = args.order or min(model.N, model.config.word_order)
        if order > min(model.N, model.config.word_order):
            raise ValueError(f"order {order} exceeds the model orders")
        sys.stdout.write(ppl_table(model, sentences, order, args.base_smoothing, args.threads))
        return 0
    mode = "word" if args.mode == "base" else args.mode
    res = corpus_ppl(model, sentences, mode, args.order, args.smoothing,
                     skip_unscorable=args.skip_oov_sentences, threads=args.threads)
    out = [_format_score(i, s, sc, model) for i, (s, sc) in enumerate(zip(sentences, res.scores))]
    out.append(f"# corpus ppl={res.ppl:.6f} sentences={len(sentences)} "
               f"scored={len(sentences) - len(res.skipped)} units={res.units} "
               f"skipped={len(res.skipped)}")
    sys.stdout.write("\n".join(out) + "\n")
    return 0


def cmd_rerank(args):
    model = TrainedModel.load(args.model_dir)
    groups = load_nbest(args.nbest)
    mode = "word" if args.mode == "base" else args.mode
    picks = rerank(model, groups, mode, args.order, args.smoothing,
                   passthrough_first=args.passthrough_first, threads=args.threads)
    sys.stdout.write("".join(f"{p.source_id}\t{p.ppl:.6f}\t{p.hypothesis}\n" for p in picks))
    return 0


def _read_lines(path):
    with open(path, encoding="utf-8") as f:
        return [line.split() for line in f]


def cmd_bleu(args):
    report = bleu(_read_lines(args.hyp), _read_lines(args.ref))
    print(report)
    return 0


def build_parser():
    threads = _default_threads()
    ap = _Parser(prog="phraselm", description="Phrase-based n-gram language models.")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("train", help="count phrase and word n-grams into a model directory",
                       epilog=CORPUS_GRAMMAR + "; " + COUNTS_GRAMMAR)
    p.add_argument("corpus")
    p.add_argument("out_dir")
    p.add_argument("-N", type=_positive, default=3, help="phrase-level n-gram order")
    p.add_argument("-L", type=_positive, default=None, help="maximum phrase length in words")
    p.add_argument("--max-train-len", type=_positive, default=15,
                   help="drop training sentences longer than this")
    p.add_argument("--lambda", dest="lam", type=float, default=0.4,
                   help="interpolation weight of the phrase estimate")
    p.add_argument("--gt-max-r", type=_positive, default=5, help="Good-Turing count cutoff")
    p.add_argument("--prior", choices=PRIOR_MODES, default="exact",
                   help="segmentation prior: 1/#segmentations, 2^-I, or none")
    p.add_argument("--bos-eos", action="store_true", help="add <s> and </s> markers")
    p.add_argument("--word-order", type=_positive, default=None,
                   help="order of the word baseline counts (default max(N, 4))")
    p.add_argument("--max-keys", type=_positive, default=None,
                   help="abort when more n-gram occurrences than this would be held")
    p.add_argument("--threads", type=_positive, default=threads)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("ppl", help="perplexity of a test corpus",
                       epilog=CORPUS_GRAMMAR + "; " + SCORES_GRAMMAR)
    p.add_argument("model_dir")
    p.add_argument("corpus")
    p.add_argument("--mode", choices=("base", "word", "sum", "max", "table"), default="sum",
                   help="'table' prints Base/Sum/Sum+S./Max/Max+S. for orders 1..order")
    p.add_argument("--order", type=_positive, default=None)
    p.add_argument("--smoothing", type=_on_off, default=True, metavar="{on,off}")
    p.add_argument("--base-smoothing", type=_on_off, default=False, metavar="{on,off}",
                   help="smoothing of the Base column in table mode")
    p.add_argument("--max-test-len", type=_positive, default=10,
                   help="drop test sentences longer than this")
    p.add_argument("--skip-oov-sentences", action="store_true",
                   help="leave zero-probability sentences out instead of failing")
    p.add_argument("--threads", type=_positive, default=threads)
    p.set_defaults(func=cmd_ppl)

    p = sub.add_parser("rerank", help="pick the lowest-perplexity candidate per source",
                       epilog=NBEST_GRAMMAR + "; " + RERANK_GRAMMAR)
    p.add_argument("model_dir")
    p.add_argument("nbest")
    p.add_argument("--mode", choices=("base", "word", "sum", "max"), default="max")
    p.add_argument("--order", type=_positive, default=None)
    p.add_argument("--smoothing", type=_on_off, default=True, metavar="{on,off}")
    p.add_argument("--passthrough-first", action="store_true",
                   help="select the first candidate of every list (decoder 1-best)")
    p.add_argument("--threads", type=_positive, default=threads)
    p.set_defaults(func=cmd_rerank)

    p = sub.add_parser("bleu", help="corpus BLEU-4 of hypotheses against references",
                       epilog="hypothesis and reference files: one tokenized sentence per "
                              "line, aligned by line number")
    p.add_argument("hyp")
    p.add_argument("ref")
    p.set_defaults(func=cmd_bleu)
    return ap


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    _print_config(args)
    try:
        return args.func(args)
    except UnscorableCorpus as e:
        print(f"phraselm: {e}", file=sys.stderr)
        return EXIT_NUMERIC
    except ZeroProbability as e:
        print(f"phraselm: {e}", file=sys.stderr)
        return EXIT_NUMERIC
    except (FormatError, EmptyCorpus, EmptyInput, CapacityError, TooLong, PhraseLMError,
            OSError, ValueError) as e:
        print(f"phraselm: {e}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
