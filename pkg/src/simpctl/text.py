"""Whitespace normalization and the shared tokenizers.

Every length- or n-gram-based computation in the package goes through
these helpers so the ratios and metrics stay mutually comparable.
"""

from __future__ import annotations

import re
import string

_WS_RUN = re.compile(r"\s+")
_PUNCT = set(string.punctuation)


def normalize_whitespace(text: str) -> str:
    """Trim both ends and collapse internal whitespace runs to one space."""
    return _WS_RUN.sub(" ", text.strip())


def metric_tokens(text: str) -> list[str]:
    """Lowercased tokens with edge punctuation split off as its own tokens.

    "About 5 students." -> ["about", "5", "students", "."]
    """
    tokens: list[str] = []
    for chunk in normalize_whitespace(text.lower()).split(" "):
        if not chunk:
            continue
        lead: list[str] = []
        while chunk and chunk[0] in _PUNCT:
            lead.append(chunk[0])
            chunk = chunk[1:]
        trail: list[str] = []
        while chunk and chunk[-1] in _PUNCT:
            trail.append(chunk[-1])
            chunk = chunk[:-1]
        tokens.extend(lead)
        if chunk:
            tokens.append(chunk)
        tokens.extend(reversed(trail))
    return tokens


def content_words(text: str) -> list[str]:
    """Lowercased words with edge punctuation stripped and discarded.

    Used for frequency-rank lookups, where "(Aspirin)" and "aspirin"
    must hit the same table entry.
    """
    words: list[str] = []
    for chunk in normalize_whitespace(text.lower()).split(" "):
        word = chunk.strip(string.punctuation)
        if word:
            words.append(word)
    return words
