import os
import random
import sys

import pytest

sys.path.insert(0, os.path.dirname(__file__))

from phraselm import ModelConfig, TrainedModel  # noqa: E402

# Filled by test_acceptance; echoed in the terminal summary.
ACCEPTANCE_LINES = {}


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for key in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(ACCEPTANCE_LINES[key])


def random_corpus(rng, size, vocab="abcde", max_len=8, min_len=1):
    return [tuple(rng.choice(vocab) for _ in range(rng.randint(min_len, max_len)))
            for _ in range(size)]


def train(sentences, **config):
    return TrainedModel.train(sentences, ModelConfig(**config))


@pytest.fixture
def rng():
    return random.Random(1234)


@pytest.fixture
def toy():
    return train([("a", "b")], N=2)


@pytest.fixture
def small_corpus_file(tmp_path):
    path = tmp_path / "train.txt"
    path.write_text("the cat sat\nthe dog sat\na cat ran\nthe cat ran fast\n", encoding="utf-8")
    return path
