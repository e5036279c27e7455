"""Automatic evaluation: SARI, BLEU, ROUGE-1/2/L, and semantic F1.

All lexical metrics share one tokenizer (lowercase, edge punctuation split
into its own tokens) so the scores stay mutually comparable. SARI and the
ROUGE family are macro-averaged over sentences by ``evaluate_system``;
BLEU is corpus-level.

Zero-denominator conventions, frozen here and by the golden tests because
public implementations disagree: a SARI component whose candidate set and
target set are both empty scores 1, a component where exactly one side is
empty scores 0. ROUGE follows the same rule per reference when a sentence
has no n-grams of the requested order.
"""

from __future__ import annotations

import json
import math
from collections import Counter
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .corpus import SentencePair
from .errors import DomainError, ParseError
from .text import metric_tokens

SARI_MAX_ORDER = 4
BLEU_MAX_ORDER = 4


@dataclass(frozen=True)
class NGramMultiset:
    """Counted n-grams of one order for one token sequence."""

    n: int
    counts: Mapping[tuple[str, ...], int]

    @classmethod
    def from_tokens(cls, tokens: Sequence[str], n: int) -> "NGramMultiset":
        return cls(n=n, counts=Counter(ngrams(tokens, n)))

    def total(self) -> int:
        return sum(self.counts.values())


def ngrams(tokens: Sequence[str], n: int) -> list[tuple[str, ...]]:
    return [tuple(tokens[i : i + n]) for i in range(len(tokens) - n + 1)]


def _f1(precision: float, recall: float) -> float:
    if precision + recall <= 0:
        return 0.0
    return 2 * precision * recall / (precision + recall)


def _sari_order(
    s: Counter, c: Counter, r_frac: dict[tuple[str, ...], float]
) -> tuple[float, float, float]:
    """(keep F1, delete precision, add F1) for one n-gram order."""
    # keep: n-grams of the source retained by the candidate
    kept = {g: min(count, c[g]) for g, count in s.items() if c.get(g, 0) > 0}
    keep_target = {g: min(count, r_frac[g]) for g, count in s.items() if r_frac.get(g, 0.0) > 0}
    if not kept and not keep_target:
        keep = 1.0
    elif not kept or not keep_target:
        keep = 0.0
    else:
        keep_p = sum(min(k, r_frac.get(g, 0.0)) / k for g, k in kept.items()) / len(kept)
        keep_r = sum(min(kept.get(g, 0), t) / t for g, t in keep_target.items()) / len(keep_target)
        keep = _f1(keep_p, keep_r)

    # delete: source n-grams the candidate dropped (precision only)
    deleted = {g: count - c.get(g, 0) for g, count in s.items() if count > c.get(g, 0)}
    delete_target = {g for g, count in s.items() if count > r_frac.get(g, 0.0)}
    if not deleted and not delete_target:
        delete = 1.0
    elif not deleted or not delete_target:
        delete = 0.0
    else:
        delete = sum(
            max(d - r_frac.get(g, 0.0), 0.0) / d for g, d in deleted.items()
        ) / len(deleted)

    # add: n-grams the candidate introduced beyond the source
    added = {g for g in c if g not in s}
    add_target = {g for g in r_frac if g not in s}
    if not added and not add_target:
        add = 1.0
    elif not added or not add_target:
        add = 0.0
    else:
        good = len(added & add_target)
        add = _f1(good / len(added), good / len(add_target))

    return keep, delete, add


def sari(source: str, output: str, references: Sequence[str]) -> float:
    """Sentence SARI in [0, 100].

    Per order n in 1..4, keep and add are F1 scores and delete is a
    precision, computed over source/candidate/reference n-gram multisets;
    a reference n-gram occurring in r of R references carries weight r/R.
    The final score averages (keep + add + delete) / 3 over the orders.
    """
    if not references:
        raise DomainError("sari requires at least one reference")
    s_tokens = metric_tokens(source)
    c_tokens = metric_tokens(output)
    r_tokens = [metric_tokens(r) for r in references]
    n_refs = len(references)
    total = 0.0
    for n in range(1, SARI_MAX_ORDER + 1):
        s = Counter(ngrams(s_tokens, n))
        c = Counter(ngrams(c_tokens, n))
        pooled: Counter = Counter()
        for toks in r_tokens:
            pooled.update(ngrams(toks, n))
        r_frac = {g: count / n_refs for g, count in pooled.items()}
        keep, delete, add = _sari_order(s, c, r_frac)
        total += (keep + delete + add) / 3
    return 100.0 * total / SARI_MAX_ORDER


def _closest_ref_length(cand_len: int, ref_lens: Sequence[int]) -> int:
    return min(ref_lens, key=lambda r: (abs(r - cand_len), r))


def bleu(outputs: Sequence[str], references: Sequence[Sequence[str]]) -> float:
    """Corpus BLEU-4 in [0, 100]: clipped modified precisions, geometric
    mean, brevity penalty exp(min(0, 1 - r/c)); no smoothing.

    The maximum order is truncated to the longest candidate n-gram present
    anywhere in the corpus, so tiny fixtures do not hit an undefined
    geometric mean; a zero precision at a represented order still zeroes
    the score.
    """
    if len(outputs) != len(references):
        raise DomainError(
            f"got {len(outputs)} outputs but {len(references)} reference lists"
        )
    if not outputs:
        raise DomainError("bleu requires at least one sentence")
    tokenized_out = [metric_tokens(o) for o in outputs]
    tokenized_refs = [[metric_tokens(r) for r in refs] for refs in references]
    for i, refs in enumerate(tokenized_refs):
        if not refs:
            raise DomainError(f"sentence {i} has no references")

    max_order = min(BLEU_MAX_ORDER, max(len(t) for t in tokenized_out))
    if max_order == 0:
        return 0.0
    numer = [0] * (max_order + 1)
    denom = [0] * (max_order + 1)
    cand_total = 0
    ref_total = 0
    for c_tokens, r_tokens in zip(tokenized_out, tokenized_refs):
        cand_total += len(c_tokens)
        ref_total += _closest_ref_length(len(c_tokens), [len(r) for r in r_tokens])
        for n in range(1, max_order + 1):
            cand_counts = Counter(ngrams(c_tokens, n))
            if not cand_counts:
                continue
            max_ref: Counter = Counter()
            for r in r_tokens:
                for g, count in Counter(ngrams(r, n)).items():
                    if count > max_ref[g]:
                        max_ref[g] = count
            denom[n] += sum(cand_counts.values())
            numer[n] += sum(min(count, max_ref[g]) for g, count in cand_counts.items())
    log_sum = 0.0
    for n in range(1, max_order + 1):
        if numer[n] == 0:
            return 0.0
        log_sum += math.log(numer[n] / denom[n])
    brevity = math.exp(min(0.0, 1.0 - ref_total / cand_total))
    return 100.0 * brevity * math.exp(log_sum / max_order)


def lcs_length(a: Sequence[str], b: Sequence[str]) -> int:
    """Longest-common-subsequence length (rolling-row DP)."""
    if not a or not b:
        return 0
    prev = [0] * (len(b) + 1)
    for x in a:
        cur = [0] * (len(b) + 1)
        for j, y in enumerate(b, start=1):
            cur[j] = prev[j - 1] + 1 if x == y else max(prev[j], cur[j - 1])
        prev = cur
    return prev[-1]


def _rouge_best(
    output: str, references: Sequence[str], overlap_fn
) -> float:
    """Shared ROUGE shell: max over references of the overlap F1."""
    c_tokens = metric_tokens(output)
    best = None
    for ref in references:
        r_tokens = metric_tokens(ref)
        if not r_tokens:
            continue  # empty-after-tokenization references are skipped
        score = overlap_fn(c_tokens, r_tokens)
        if best is None or score > best:
            best = score
    if best is None:
        raise DomainError("all references are empty after tokenization")
    return 100.0 * best


def rouge_n(output: str, references: Sequence[str], n: int) -> float:
    """Sentence ROUGE-N F1 (clipped multiset overlap), max over references."""
    if n not in (1, 2):
        raise DomainError(f"rouge_n supports n in {{1, 2}}, got {n}")

    def overlap_f1(c_tokens, r_tokens):
        c = Counter(ngrams(c_tokens, n))
        r = Counter(ngrams(r_tokens, n))
        if not c and not r:
            return 1.0
        if not c or not r:
            return 0.0
        overlap = sum(min(count, r[g]) for g, count in c.items())
        return _f1(overlap / sum(c.values()), overlap / sum(r.values()))

    return _rouge_best(output, references, overlap_f1)


def rouge_l(output: str, references: Sequence[str]) -> float:
    """Sentence ROUGE-L F1 (LCS-based), max over references."""

    def lcs_f1(c_tokens, r_tokens):
        if not c_tokens:
            return 0.0
        lcs = lcs_length(c_tokens, r_tokens)
        return _f1(lcs / len(c_tokens), lcs / len(r_tokens))

    return _rouge_best(output, references, lcs_f1)


def semantic_f1(
    output_vectors: Sequence[Sequence[float]],
    reference_vectors: Sequence[Sequence[float]],
) -> tuple[float, float, float]:
    """Greedy token-embedding matching: (precision, recall, F1), each in [-1, 1].

    Recall is the mean over reference tokens of the best cosine against any
    output token; precision is the symmetric quantity; F1 is their harmonic
    mean (0 when P + R <= 0).
    """
    if not len(output_vectors) or not len(reference_vectors):
        raise DomainError("semantic_f1 requires non-empty vector lists")
    out = np.asarray(output_vectors, dtype=float)
    ref = np.asarray(reference_vectors, dtype=float)
    if out.ndim != 2 or ref.ndim != 2 or out.shape[1] != ref.shape[1]:
        raise DomainError(
            f"vector shape mismatch: outputs {out.shape}, references {ref.shape}"
        )
    out_norms = np.linalg.norm(out, axis=1)
    ref_norms = np.linalg.norm(ref, axis=1)
    if np.any(out_norms < 1e-12) or np.any(ref_norms < 1e-12):
        raise DomainError("zero vector in embeddings")
    sims = (out / out_norms[:, None]) @ (ref / ref_norms[:, None]).T
    precision = float(sims.max(axis=1).mean())
    recall = float(sims.max(axis=0).mean())
    f1 = 0.0 if precision + recall <= 0 else 2 * precision * recall / (precision + recall)
    return precision, recall, f1


@dataclass(frozen=True)
class MetricReport:
    """The six-score report; lexical scores in [0, 100], semantic in [-1, 1]."""

    bleu: float
    rouge1: float
    rouge2: float
    rougeL: float
    sari: float
    semantic_f1: float | None = None
    per_sentence: tuple[dict, ...] | None = None

    def __post_init__(self):
        for name in ("bleu", "rouge1", "rouge2", "rougeL", "sari"):
            value = getattr(self, name)
            if not -1e-9 <= value <= 100 + 1e-9:
                raise DomainError(f"{name} out of range: {value}")
        if self.semantic_f1 is not None and not -1 - 1e-9 <= self.semantic_f1 <= 1 + 1e-9:
            raise DomainError(f"semantic_f1 out of range: {self.semantic_f1}")

    def to_dict(self, decimals: int | None = 2) -> dict:
        def fmt(x):
            return x if decimals is None or x is None else round(x, decimals)

        report = {
            "bleu": fmt(self.bleu),
            "rouge1": fmt(self.rouge1),
            "rouge2": fmt(self.rouge2),
            "rougeL": fmt(self.rougeL),
            "sari": fmt(self.sari),
            "semantic_f1": fmt(self.semantic_f1),
        }
        if self.per_sentence is not None:
            report["per_sentence"] = list(self.per_sentence)
        return report


def evaluate_system(
    pairs: Sequence[SentencePair],
    outputs: Sequence[str],
    per_sentence: bool = False,
    output_embeddings: Sequence[Sequence[Sequence[float]]] | None = None,
    reference_embeddings: Sequence[Sequence[Sequence[float]]] | None = None,
) -> MetricReport:
    """Score one system's outputs against a split.

    SARI and ROUGE are macro-averaged over sentences, BLEU is corpus-level,
    and semantic F1 (mean per-sentence greedy-matching F1) is included only
    when both embedding sequences are supplied.
    """
    if not outputs:
        raise DomainError("no outputs to evaluate")
    if len(outputs) != len(pairs):
        raise DomainError(f"got {len(outputs)} outputs for {len(pairs)} pairs")
    want_semantic = output_embeddings is not None and reference_embeddings is not None
    if want_semantic and (
        len(output_embeddings) != len(pairs) or len(reference_embeddings) != len(pairs)
    ):
        raise DomainError("embedding lists must align with the sentence pairs")

    records: list[dict] = []
    sari_sum = r1_sum = r2_sum = rl_sum = sem_sum = 0.0
    for i, (pair, output) in enumerate(zip(pairs, outputs)):
        refs = list(pair.references)
        record = {
            "doc_id": pair.doc_id,
            "sent_index": pair.sent_index,
            "sari": sari(pair.source, output, refs),
            "rouge1": rouge_n(output, refs, 1),
            "rouge2": rouge_n(output, refs, 2),
            "rougeL": rouge_l(output, refs),
        }
        if want_semantic:
            _, _, f1 = semantic_f1(output_embeddings[i], reference_embeddings[i])
            record["semantic_f1"] = f1
            sem_sum += f1
        sari_sum += record["sari"]
        r1_sum += record["rouge1"]
        r2_sum += record["rouge2"]
        rl_sum += record["rougeL"]
        records.append(record)

    n = len(pairs)
    return MetricReport(
        bleu=bleu(outputs, [p.references for p in pairs]),
        rouge1=r1_sum / n,
        rouge2=r2_sum / n,
        rougeL=rl_sum / n,
        sari=sari_sum / n,
        semantic_f1=(sem_sum / n) if want_semantic else None,
        per_sentence=tuple(records) if per_sentence else None,
    )


def load_embeddings_jsonl(path: str | Path) -> list[list[list[float]]]:
    """Load per-sentence token embeddings: one JSON record per line with
    ``{"tokens": [...], "vectors": [[...], ...]}``; only vectors are used."""
    path = Path(path)
    sentences: list[list[list[float]]] = []
    for lineno, line in enumerate(path.read_text(encoding="utf-8").splitlines(), start=1):
        if not line.strip():
            continue
        try:
            record = json.loads(line)
            sentences.append([list(map(float, v)) for v in record["vectors"]])
        except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
            raise ParseError(f"{path}:{lineno}: bad embeddings record ({exc})") from exc
    return sentences
