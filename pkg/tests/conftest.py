import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from synth import planted_corpus_records, planted_qa_records, write_jsonl

from haybench.corpus import load_corpus, load_qa_samples
from haybench.tokenizers import ReferenceTokenizer


@pytest.fixture(scope="session")
def planted_paths(tmp_path_factory):
    root = tmp_path_factory.mktemp("planted")
    corpus_path = write_jsonl(root / "corpus.jsonl", planted_corpus_records())
    qa_path = write_jsonl(root / "qa.jsonl", planted_qa_records())
    return corpus_path, qa_path


@pytest.fixture(scope="session")
def planted_corpus(planted_paths):
    corpus_path, qa_path = planted_paths
    corpus = load_corpus(corpus_path, ReferenceTokenizer())
    samples = load_qa_samples(qa_path, corpus)
    return corpus, samples
