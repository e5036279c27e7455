import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from simpctl.conllu import DepSentence, DepToken
from simpctl.control_tokens import FrequencyTable
from simpctl.corpus import Corpus, SentencePair


def make_sentence(heads, sent_id=None, forms=None):
    """Build a DepSentence from a head list (index i -> token i+1's head)."""
    tokens = tuple(
        DepToken(id=i + 1, form=(forms[i] if forms else f"w{i + 1}"), head=h)
        for i, h in enumerate(heads)
    )
    return DepSentence(tokens=tokens, sent_id=sent_id)


def make_pair(source, refs, doc_id="d0", sent_index=0):
    return SentencePair(doc_id=doc_id, sent_index=sent_index, source=source, references=tuple(refs))


def make_corpus(*pairs):
    return Corpus(pairs=tuple(pairs), provenance="test")


@pytest.fixture
def small_freq_table():
    return FrequencyTable({"the": 1, "cat": 10, "sat": 50, "on": 3, "mat": 1000})
