"""Phrase-based n-gram language models.

Sentences are scored either by summing over every phrase segmentation
(Sum model) or by the best length-normalized segmentation (Max model);
a plain word n-gram model serves as the baseline.
"""

from .corpus import Corpus, Sentence, corpus_stats, load_corpus, tokenize
from .counting import (CountTable, accumulate_counts, enumerate_phrase_ngrams, load_counts,
                       merge_tables, save_counts)
from .model import ModelConfig, TrainedModel
from .rerank import bleu, load_nbest, rerank
from .segmentation import (Segmentation, brute_force_prob, corpus_ppl, enumerate_segmentations,
                           max_prob, segmentation_prior, sentence_ppl, sum_prob)

__version__ = "0.1.0"


def bundled_corpus_path():
    """Path of the bundled public-domain corpus (King James Bible, Genesis onward)."""
    from importlib.resources import files
    return str(files(__package__) / "data" / "kjv.txt")
