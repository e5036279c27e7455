"""The four control ratios, their discretization, and corpus tagging.

A tagged training line looks like::

    <DEPENDENCYTREEDEPTH_0.65> <WORDRANK_0.80> <REPLACEONLYLEVENSHTEIN_0.75> <LENGTHRATIO_0.50> the source sentence

The four ratios capture, in order: syntactic complexity (dependency-tree
depth of the output over the source), lexical complexity (word-frequency
rank statistic of the output over the source), letter-level rewrite
similarity (1 minus the substitution share of one optimal character
alignment), and output/source character length.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Protocol, Sequence

import numpy as np

from .conllu import DepSentence, tree_depth
from .corpus import Corpus, SentencePair
from .errors import ConfigError, DataError, DomainError, IntegrityError, ParseError
from .text import content_words, normalize_whitespace

CONTROL_TOKEN_NAMES = (
    "DEPENDENCYTREEDEPTH",
    "WORDRANK",
    "REPLACEONLYLEVENSHTEIN",
    "LENGTHRATIO",
)
STAGES = ("stage1", "stage2")

_GRID_EPS = 1e-9


@dataclass(frozen=True)
class BucketSpec:
    """Discrete grid the ratios are rounded onto.

    The defaults (step 0.05 over [0.20, 1.50]) give 27 values per
    dimension. ``min`` and ``max`` must themselves sit on the step grid,
    otherwise clamping would produce off-grid values.
    """

    step: float = 0.05
    min: float = 0.20
    max: float = 1.50

    def __post_init__(self):
        if self.step <= 0:
            raise ConfigError(f"bucket step must be positive, got {self.step}")
        if not self.min < self.max:
            raise ConfigError(f"bucket range invalid: min {self.min} >= max {self.max}")
        for name, value in (("min", self.min), ("max", self.max)):
            k = value / self.step
            if abs(k - round(k)) > _GRID_EPS:
                raise ConfigError(
                    f"bucket {name} {value} is not a multiple of step {self.step}"
                )

    def grid(self) -> tuple[float, ...]:
        n = round((self.max - self.min) / self.step)
        return tuple(round(self.min + i * self.step, 9) for i in range(n + 1))

    def contains(self, value: float) -> bool:
        if not (self.min - _GRID_EPS <= value <= self.max + _GRID_EPS):
            return False
        k = value / self.step
        return abs(k - round(k)) <= _GRID_EPS


DEFAULT_BUCKET_SPEC = BucketSpec()


def bucketize(raw: float, spec: BucketSpec = DEFAULT_BUCKET_SPEC) -> float:
    """Round to the nearest grid multiple (ties up), then clamp to the range."""
    k = math.floor(raw / spec.step + 0.5 + _GRID_EPS)
    value = round(k * spec.step, 9)
    if value < spec.min:
        return spec.min
    if value > spec.max:
        return spec.max
    return value


@dataclass(frozen=True)
class CtVector:
    """Bucketed control ratios in token order: DTD, WR, LV, LR."""

    dtd: float
    wr: float
    lv: float
    lr: float

    def as_tuple(self) -> tuple[float, float, float, float]:
        return (self.dtd, self.wr, self.lv, self.lr)

    def on_grid(self, spec: BucketSpec) -> bool:
        return all(spec.contains(v) for v in self.as_tuple())


def render_control_prefix(vector: CtVector) -> str:
    """Render the four tokens (two-decimal values) plus a trailing space."""
    return (
        " ".join(
            f"<{name}_{value:.2f}>"
            for name, value in zip(CONTROL_TOKEN_NAMES, vector.as_tuple())
        )
        + " "
    )


class FrequencyTable:
    """Word -> frequency rank (1 = most frequent); OOV words take max_rank."""

    def __init__(self, rank_of: Mapping[str, int], max_rank: int | None = None):
        if not rank_of:
            raise ConfigError("frequency table is empty")
        for word, rank in rank_of.items():
            if rank < 1:
                raise IntegrityError(f"rank for {word!r} must be >= 1, got {rank}")
        highest = max(rank_of.values())
        self.rank_of = dict(rank_of)
        self.max_rank = highest if max_rank is None else max_rank
        if self.max_rank < highest:
            raise IntegrityError(
                f"max_rank {self.max_rank} below stored rank {highest}"
            )

    @classmethod
    def from_file(cls, path: str | Path) -> "FrequencyTable":
        """Load either one word per line (line number = rank) or
        two-column ``word<TAB>rank`` lines."""
        path = Path(path)
        rank_of: dict[str, int] = {}
        for lineno, line in enumerate(path.read_text(encoding="utf-8").split("\n"), start=1):
            line = line.strip()
            if not line:
                continue
            if "\t" in line:
                cells = line.split("\t")
                if len(cells) != 2:
                    raise ParseError(f"{path}:{lineno}: expected 'word<TAB>rank'")
                word = cells[0].strip().lower()
                try:
                    rank = int(cells[1])
                except ValueError as exc:
                    raise ParseError(f"{path}:{lineno}: bad rank {cells[1]!r}") from exc
            else:
                word, rank = line.lower(), len(rank_of) + 1
            if word in rank_of:
                raise ParseError(f"{path}:{lineno}: duplicate word {word!r}")
            if rank < 1:
                raise ParseError(f"{path}:{lineno}: rank must be >= 1, got {rank}")
            rank_of[word] = rank
        if not rank_of:
            raise ParseError(f"{path}: no entries")
        return cls(rank_of)

    def log_rank(self, word: str) -> float:
        return math.log1p(self.rank_of.get(word, self.max_rank))

    def checksum(self) -> str:
        canon = "\n".join(
            f"{word}\t{rank}" for word, rank in sorted(self.rank_of.items(), key=lambda kv: (kv[1], kv[0]))
        )
        return hashlib.sha256(canon.encode("utf-8")).hexdigest()


def length_ratio(source: str, output: str) -> float:
    """Character-length ratio |output| / |source| on normalized strings."""
    s = normalize_whitespace(source)
    o = normalize_whitespace(output)
    if not s:
        raise DomainError("source is empty after whitespace normalization")
    return len(o) / len(s)


def replace_only_levenshtein_sim(source: str, output: str) -> float:
    """1 - R / max(|s|, |o|), R = substitutions along one optimal alignment.

    R is the maximum substitution count over all minimum-cost alignments,
    i.e. substitution is preferred over an insert+delete pair whenever the
    total cost ties. That makes R deterministic and symmetric, and keeps
    the score decoupled from pure length changes: appending text costs
    insertions, not substitutions, so it never lowers this score.
    """
    s = normalize_whitespace(source)
    o = normalize_whitespace(output)
    if not s:
        raise DomainError("source is empty after whitespace normalization")
    n, m = len(s), len(o)
    prev_cost = list(range(m + 1))
    prev_sub = [0] * (m + 1)
    for i in range(1, n + 1):
        cur_cost = [i] + [0] * m
        cur_sub = [0] * (m + 1)
        si = s[i - 1]
        for j in range(1, m + 1):
            mismatch = si != o[j - 1]
            diag = prev_cost[j - 1] + mismatch
            up = prev_cost[j] + 1
            left = cur_cost[j - 1] + 1
            best = min(diag, up, left)
            subs = -1
            if diag == best:
                subs = prev_sub[j - 1] + mismatch
            if up == best and prev_sub[j] > subs:
                subs = prev_sub[j]
            if left == best and cur_sub[j - 1] > subs:
                subs = cur_sub[j - 1]
            cur_cost[j] = best
            cur_sub[j] = subs
        prev_cost, prev_sub = cur_cost, cur_sub
    return 1.0 - prev_sub[m] / max(n, m)


def _log_rank_q3(words: Sequence[str], table: FrequencyTable) -> float:
    values = [table.log_rank(w) for w in words]
    return float(np.percentile(values, 75))


def word_rank_ratio(source: str, output: str, table: FrequencyTable) -> float:
    """Third quartile of log(1 + rank) over output words, divided by the
    same statistic over source words.

    The 75th percentile (linear interpolation) is robust to sentences made
    mostly of easy words while still reacting to remaining jargon.
    """
    source_words = content_words(source)
    output_words = content_words(output)
    if not source_words:
        raise DomainError("source has no rankable words")
    if not output_words:
        raise DomainError("output has no rankable words")
    return _log_rank_q3(output_words, table) / _log_rank_q3(source_words, table)


def dtd_ratio(source_tree: DepSentence, output_tree: DepSentence) -> float:
    """Dependency-tree depth of the output over the source."""
    return tree_depth(output_tree) / tree_depth(source_tree)


class TreeProvider(Protocol):
    def tree_for(self, doc_id: str, sent_index: int, role: str) -> DepSentence: ...


def annotate_pair(
    pair: SentencePair,
    ref_index: int,
    trees: tuple[DepSentence, DepSentence],
    table: FrequencyTable,
    spec: BucketSpec = DEFAULT_BUCKET_SPEC,
) -> tuple[str, CtVector]:
    """Compute the four bucketed ratios of reference ``ref_index`` against
    the source and return (tagged source line, vector)."""
    if not 0 <= ref_index < len(pair.references):
        raise DomainError(
            f"ref_index {ref_index} out of range for pair {pair.key} "
            f"({len(pair.references)} references)"
        )
    reference = pair.references[ref_index]
    source_tree, ref_tree = trees
    vector = CtVector(
        dtd=bucketize(dtd_ratio(source_tree, ref_tree), spec),
        wr=bucketize(word_rank_ratio(pair.source, reference, table), spec),
        lv=bucketize(replace_only_levenshtein_sim(pair.source, reference), spec),
        lr=bucketize(length_ratio(pair.source, reference), spec),
    )
    tagged = render_control_prefix(vector) + normalize_whitespace(pair.source)
    return tagged, vector


@dataclass(frozen=True)
class TaggedLine:
    doc_id: str
    sent_index: int
    ref_index: int
    tagged_source: str
    reference: str
    vector: CtVector


@dataclass(frozen=True)
class LineError:
    doc_id: str
    sent_index: int
    ref_index: int
    message: str


@dataclass(frozen=True)
class AnnotationResult:
    lines: tuple[TaggedLine, ...]
    errors: tuple[LineError, ...]
    stage: str
    spec: BucketSpec
    table_checksum: str

    @property
    def error_rate(self) -> float:
        total = len(self.lines) + len(self.errors)
        return len(self.errors) / total if total else 0.0


def annotate_corpus(
    corpus: Corpus,
    trees: TreeProvider,
    table: FrequencyTable,
    spec: BucketSpec = DEFAULT_BUCKET_SPEC,
    stage: str = "stage1",
    error_threshold: float = 0.0,
) -> AnnotationResult:
    """Tag every (source, reference) combination of the corpus.

    Per-line failures (missing trees, degenerate text) are collected; the
    run only fails if the error rate exceeds ``error_threshold``.
    """
    if stage not in STAGES:
        raise ConfigError(f"stage must be one of {STAGES}, got {stage!r}")
    lines: list[TaggedLine] = []
    errors: list[LineError] = []
    for pair in corpus:
        for ref_index in range(len(pair.references)):
            try:
                source_tree = trees.tree_for(pair.doc_id, pair.sent_index, "source")
                ref_tree = trees.tree_for(pair.doc_id, pair.sent_index, f"ref-{ref_index}")
                tagged, vector = annotate_pair(pair, ref_index, (source_tree, ref_tree), table, spec)
            except (DataError, DomainError) as exc:
                errors.append(LineError(pair.doc_id, pair.sent_index, ref_index, str(exc)))
                continue
            lines.append(
                TaggedLine(
                    doc_id=pair.doc_id,
                    sent_index=pair.sent_index,
                    ref_index=ref_index,
                    tagged_source=tagged,
                    reference=pair.references[ref_index],
                    vector=vector,
                )
            )
    result = AnnotationResult(
        lines=tuple(lines),
        errors=tuple(errors),
        stage=stage,
        spec=spec,
        table_checksum=table.checksum(),
    )
    if result.error_rate > error_threshold:
        preview = "; ".join(
            f"({e.doc_id},{e.sent_index},ref {e.ref_index}): {e.message}" for e in errors[:3]
        )
        raise DataError(
            f"annotation error rate {result.error_rate:.2%} exceeds threshold "
            f"{error_threshold:.2%} ({len(errors)} errors; first: {preview})"
        )
    return result


def write_annotation(result: AnnotationResult, out_prefix: str | Path) -> None:
    """Write ``<prefix>.tsv`` (tagged_source<TAB>reference) and ``<prefix>-manifest.json``."""
    import json

    out_prefix = Path(out_prefix)
    out_prefix.parent.mkdir(parents=True, exist_ok=True)
    rows = [f"{line.tagged_source}\t{line.reference}" for line in result.lines]
    out_prefix.with_suffix(".tsv").write_text(
        "\n".join(rows) + ("\n" if rows else ""), encoding="utf-8"
    )
    manifest = {
        "stage": result.stage,
        "bucket_spec": {"step": result.spec.step, "min": result.spec.min, "max": result.spec.max},
        "frequency_table_sha256": result.table_checksum,
        "lines": len(result.lines),
        "errors": [
            {"doc_id": e.doc_id, "sent_index": e.sent_index, "ref_index": e.ref_index, "message": e.message}
            for e in result.errors
        ],
    }
    Path(f"{out_prefix}-manifest.json").write_text(
        json.dumps(manifest, indent=2) + "\n", encoding="utf-8"
    )
