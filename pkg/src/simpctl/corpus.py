"""Parallel simplification corpora: loading, filtering, and splitting.

Two on-disk formats are supported:

* ``plaba-json`` -- one JSON object per file:
  ``{doc_id: {"source": [s0, s1, ...], "refs": [[r00, r01, ...], [r10, ...]]}}``
  where ``refs[i]`` lists the reference simplifications of ``source[i]``.
* ``tsv`` -- one pair per line, ``source<TAB>ref1<TAB>ref2...``.

All strings are whitespace-normalized at load time (trimmed, internal runs
collapsed) so downstream length ratios and metrics are stable.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from fractions import Fraction
from pathlib import Path
from typing import Iterable, Iterator, Sequence

from ._rng import SplitMix64
from .errors import ConfigError, IntegrityError, ParseError
from .text import normalize_whitespace

CORPUS_FORMATS = ("plaba-json", "tsv")


@dataclass(frozen=True)
class SentencePair:
    """One source sentence with its aligned reference simplifications."""

    doc_id: str
    sent_index: int
    source: str
    references: tuple[str, ...]

    def __post_init__(self):
        if self.sent_index < 0:
            raise IntegrityError(f"sent_index must be >= 0, got {self.sent_index}")
        if not self.source.strip():
            raise IntegrityError(
                f"empty source sentence at ({self.doc_id!r}, {self.sent_index})"
            )

    @property
    def key(self) -> tuple[str, int]:
        return (self.doc_id, self.sent_index)

    @property
    def is_multi_reference(self) -> bool:
        return len(self.references) >= 2


@dataclass(frozen=True)
class Corpus:
    """Ordered, key-unique collection of sentence pairs."""

    pairs: tuple[SentencePair, ...]
    provenance: str = ""

    def __post_init__(self):
        seen: set[tuple[str, int]] = set()
        for pair in self.pairs:
            if pair.key in seen:
                raise IntegrityError(f"duplicate pair key {pair.key}")
            seen.add(pair.key)

    def __len__(self) -> int:
        return len(self.pairs)

    def __iter__(self) -> Iterator[SentencePair]:
        return iter(self.pairs)


@dataclass(frozen=True)
class SplitResult:
    """Deterministic partition of a filtered corpus.

    ``shortfall`` counts validation/test slots that could not be filled
    because the multi-reference pool was too small.
    """

    train: tuple[SentencePair, ...]
    validation: tuple[SentencePair, ...]
    test: tuple[SentencePair, ...]
    seed: int
    ratios: tuple[Fraction, Fraction, Fraction]
    shortfall: int = 0

    @property
    def counts(self) -> tuple[int, int, int]:
        return (len(self.train), len(self.validation), len(self.test))


def load_corpus(path: str | Path, format: str) -> Corpus:
    """Read a parallel corpus from ``path`` in the given format."""
    path = Path(path)
    if format not in CORPUS_FORMATS:
        raise ConfigError(f"unknown corpus format {format!r}; expected one of {CORPUS_FORMATS}")
    try:
        text = path.read_text(encoding="utf-8")
    except UnicodeDecodeError as exc:
        raise ParseError(f"{path}: not valid UTF-8 ({exc})") from exc
    if format == "plaba-json":
        pairs = _parse_plaba_json(text, path)
    else:
        pairs = _parse_tsv(text, path)
    return Corpus(pairs=tuple(pairs), provenance=f"{path} ({format})")


def _parse_plaba_json(text: str, path: Path) -> list[SentencePair]:
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}:{exc.lineno}:{exc.colno}: {exc.msg}") from exc
    if not isinstance(data, dict):
        raise ParseError(f"{path}: top level must be an object keyed by doc_id")
    pairs: list[SentencePair] = []
    for doc_id, doc in data.items():
        if not isinstance(doc, dict) or "source" not in doc or "refs" not in doc:
            raise ParseError(f"{path}: document {doc_id!r} must have 'source' and 'refs'")
        sources, refs = doc["source"], doc["refs"]
        if not isinstance(sources, list) or not isinstance(refs, list):
            raise ParseError(f"{path}: document {doc_id!r}: 'source' and 'refs' must be lists")
        if len(sources) != len(refs):
            raise ParseError(
                f"{path}: document {doc_id!r}: {len(sources)} sources but "
                f"{len(refs)} reference lists"
            )
        for i, (src, ref_list) in enumerate(zip(sources, refs)):
            if not isinstance(ref_list, list):
                raise ParseError(f"{path}: document {doc_id!r} sentence {i}: refs entry must be a list")
            try:
                pairs.append(
                    SentencePair(
                        doc_id=str(doc_id),
                        sent_index=i,
                        source=normalize_whitespace(str(src)),
                        references=tuple(normalize_whitespace(str(r)) for r in ref_list),
                    )
                )
            except IntegrityError as exc:
                raise ParseError(f"{path}: document {doc_id!r} sentence {i}: {exc}") from exc
    return pairs


def _parse_tsv(text: str, path: Path) -> list[SentencePair]:
    pairs: list[SentencePair] = []
    doc_id = path.stem
    index = 0
    for lineno, line in enumerate(text.split("\n"), start=1):
        if not line.strip():
            continue
        cells = line.split("\t")
        try:
            pairs.append(
                SentencePair(
                    doc_id=doc_id,
                    sent_index=index,
                    source=normalize_whitespace(cells[0]),
                    references=tuple(normalize_whitespace(c) for c in cells[1:]),
                )
            )
        except IntegrityError as exc:
            raise ParseError(f"{path}:{lineno}: {exc}") from exc
        index += 1
    return pairs


def filter_one_to_zero(corpus: Corpus) -> Corpus:
    """Drop pairs whose references are all empty; drop empty references.

    A pair with zero non-empty references is a source sentence the
    annotators chose not to simplify, which is useless for training.
    Idempotent; relative order preserved.
    """
    kept: list[SentencePair] = []
    for pair in corpus:
        refs = tuple(r for r in pair.references if r.strip())
        if refs:
            kept.append(
                SentencePair(pair.doc_id, pair.sent_index, pair.source, refs)
            )
    return Corpus(pairs=tuple(kept), provenance=corpus.provenance)


def _as_fraction(value) -> Fraction:
    if isinstance(value, Fraction):
        return value
    if isinstance(value, int):
        return Fraction(value)
    if isinstance(value, float):
        # str() round-trips "0.8" to 4/5 instead of the binary expansion.
        return Fraction(str(value))
    raise ConfigError(f"ratio must be a number, got {value!r}")


def split(
    corpus: Corpus,
    ratios: Sequence,
    seed: int,
) -> SplitResult:
    """Partition ``corpus`` into train/validation/test.

    Validation and test are drawn exclusively from the multi-reference
    (>= 2 refs) pool, shuffled by a Fisher-Yates pass driven by SplitMix64
    under ``seed``: test slots are filled first, then validation; every
    remaining pair lands in train. Target sizes are floor(ratio * N) for
    validation and test. If the pool is too small, as many slots as
    possible are filled and the shortfall is reported.
    """
    if len(ratios) != 3:
        raise ConfigError(f"expected 3 ratios, got {len(ratios)}")
    fracs = tuple(_as_fraction(r) for r in ratios)
    if any(f <= 0 for f in fracs):
        raise ConfigError(f"ratios must be positive, got {ratios}")
    if sum(fracs) != 1:
        raise ConfigError(f"ratios must sum to 1, got {ratios} (sum {float(sum(fracs)):g})")

    n = len(corpus)
    n_val = int(fracs[1] * n)
    n_test = int(fracs[2] * n)

    multi = [p for p in corpus if p.is_multi_reference]
    rng = SplitMix64(seed)
    rng.shuffle(multi)

    take_test = min(n_test, len(multi))
    take_val = min(n_val, len(multi) - take_test)
    shortfall = (n_test - take_test) + (n_val - take_val)

    test_keys = {p.key for p in multi[:take_test]}
    val_keys = {p.key for p in multi[take_test : take_test + take_val]}

    train: list[SentencePair] = []
    validation: list[SentencePair] = []
    test: list[SentencePair] = []
    for pair in corpus:
        if pair.key in test_keys:
            test.append(pair)
        elif pair.key in val_keys:
            validation.append(pair)
        else:
            train.append(pair)
    return SplitResult(
        train=tuple(train),
        validation=tuple(validation),
        test=tuple(test),
        seed=seed,
        ratios=fracs,
        shortfall=shortfall,
    )


def write_pairs_tsv(pairs: Iterable[SentencePair], path: str | Path) -> None:
    """Write pairs as ``source<TAB>ref1<TAB>ref2...`` lines."""
    lines = ["\t".join((p.source, *p.references)) for p in pairs]
    Path(path).write_text("\n".join(lines) + ("\n" if lines else ""), encoding="utf-8")


def write_split(result: SplitResult, out_dir: str | Path) -> dict:
    """Serialize a split to three TSV files plus ``split-manifest.json``."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    for name, pairs in (
        ("train", result.train),
        ("validation", result.validation),
        ("test", result.test),
    ):
        write_pairs_tsv(pairs, out_dir / f"{name}.tsv")
    manifest = {
        "seed": result.seed,
        "ratios": [str(f) for f in result.ratios],
        "counts": {
            "train": len(result.train),
            "validation": len(result.validation),
            "test": len(result.test),
        },
        "shortfall": result.shortfall,
        "rng": "splitmix64-fisher-yates",
    }
    (out_dir / "split-manifest.json").write_text(
        json.dumps(manifest, indent=2) + "\n", encoding="utf-8"
    )
    return manifest
