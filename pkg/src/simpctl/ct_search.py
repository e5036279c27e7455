"""Black-box search for control-token values and the LR predictor.

The search drives an external simplifier through the bridge: each
candidate assigns DTD/WR/LV (plus a fixed or predicted LENGTHRATIO) to
every validation source, collects the simplifier's outputs, and scores
them with macro SARI. Two strategies are provided: exhaustive grid search
and a (1+lambda) evolution strategy on the discrete grid.

The LENGTHRATIO predictor is a closed-form ridge regression over cheap
source features, standardized internally; the intercept is never
penalized.
"""

from __future__ import annotations

import json
import threading
import time
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Callable, Mapping, Sequence

import numpy as np

from ._rng import SplitMix64
from .bridge import SimplifierSpec, run_simplifier
from .control_tokens import (
    BucketSpec,
    CtVector,
    DEFAULT_BUCKET_SPEC,
    FrequencyTable,
    bucketize,
    length_ratio,
    render_control_prefix,
)
from .conllu import DepSentence, tree_depth
from .corpus import Corpus, SentencePair
from .errors import BridgeError, ConfigError, DomainError
from .metrics import sari
from .text import content_words, normalize_whitespace

DEFAULT_GRID_BUDGET_CAP = 1000
LR_FEATURE_NAMES = ("char_len", "token_count", "mean_log_rank", "tree_depth")


@dataclass(frozen=True)
class LrMode:
    """LENGTHRATIO handling during search: fixed grid values or predicted
    per sentence by a trained model."""

    kind: str  # "fixed" | "predicted"
    values: tuple[float, ...] = ()

    def __post_init__(self):
        if self.kind not in ("fixed", "predicted"):
            raise ConfigError(f"lr mode must be 'fixed' or 'predicted', got {self.kind!r}")
        if self.kind == "fixed" and not self.values:
            raise ConfigError("fixed lr mode needs at least one value")
        if self.kind == "predicted" and self.values:
            raise ConfigError("predicted lr mode takes no fixed values")

    @classmethod
    def fixed(cls, *values: float) -> "LrMode":
        return cls(kind="fixed", values=tuple(values))

    @classmethod
    def predicted(cls) -> "LrMode":
        return cls(kind="predicted")


@dataclass(frozen=True)
class SearchSpace:
    dtd_values: tuple[float, ...]
    wr_values: tuple[float, ...]
    lv_values: tuple[float, ...]
    lr_mode: LrMode

    def __post_init__(self):
        for name, values in (
            ("dtd_values", self.dtd_values),
            ("wr_values", self.wr_values),
            ("lv_values", self.lv_values),
        ):
            if not values:
                raise ConfigError(f"{name} must be non-empty")

    def validate_on_grid(self, spec: BucketSpec) -> None:
        for name, values in (
            ("dtd", self.dtd_values),
            ("wr", self.wr_values),
            ("lv", self.lv_values),
            ("lr", self.lr_mode.values),
        ):
            for v in values:
                if not spec.contains(v):
                    raise ConfigError(f"{name} value {v} is not on the bucket grid")

    @property
    def lr_values(self) -> tuple[float | None, ...]:
        if self.lr_mode.kind == "predicted":
            return (None,)
        return self.lr_mode.values

    def size(self) -> int:
        return (
            len(self.dtd_values)
            * len(self.wr_values)
            * len(self.lv_values)
            * len(self.lr_values)
        )

    def candidates(self) -> list["Candidate"]:
        """All candidates in lexicographic (dtd, wr, lv, lr) order."""
        out = []
        for dtd in self.dtd_values:
            for wr in self.wr_values:
                for lv in self.lv_values:
                    for lr in self.lr_values:
                        out.append(Candidate(dtd=dtd, wr=wr, lv=lv, lr=lr))
        return out


@dataclass(frozen=True)
class Candidate:
    """One point of the search space; ``lr`` is None in predicted mode."""

    dtd: float
    wr: float
    lv: float
    lr: float | None = None
    score: float | None = None

    @property
    def key(self) -> tuple:
        return (self.dtd, self.wr, self.lv, self.lr)

    def to_dict(self) -> dict:
        return {"dtd": self.dtd, "wr": self.wr, "lv": self.lv, "lr": self.lr, "score": self.score}


@dataclass(frozen=True)
class PredictorModel:
    """Ridge regression in standardized feature space (intercept = mean target)."""

    feature_names: tuple[str, ...]
    weights: tuple[float, ...]
    intercept: float
    means: tuple[float, ...]
    scales: tuple[float, ...]
    ridge_lambda: float

    def __post_init__(self):
        if not (
            len(self.weights) == len(self.feature_names) == len(self.means) == len(self.scales)
        ):
            raise ConfigError("predictor weights/means/scales must match feature_names")

    def feature_vector(self, features: Mapping[str, float]) -> np.ndarray:
        missing = [n for n in self.feature_names if n not in features]
        if missing:
            raise DomainError(f"missing features: {missing}")
        return np.array([float(features[n]) for n in self.feature_names])

    def predict_value(self, features: Mapping[str, float]) -> float:
        x = self.feature_vector(features)
        z = (x - np.array(self.means)) / np.array(self.scales)
        return float(self.intercept + z @ np.array(self.weights))

    def raw_coefficients(self) -> tuple[tuple[float, ...], float]:
        """Equivalent weights and intercept in the original feature space."""
        w = np.array(self.weights) / np.array(self.scales)
        b = self.intercept - float(np.array(self.means) @ w) if len(w) else self.intercept
        return tuple(float(v) for v in w), b

    def to_json(self) -> dict:
        return {
            "feature_names": list(self.feature_names),
            "weights": list(self.weights),
            "intercept": self.intercept,
            "means": list(self.means),
            "scales": list(self.scales),
            "ridge_lambda": self.ridge_lambda,
        }

    @classmethod
    def from_json(cls, data: Mapping) -> "PredictorModel":
        return cls(
            feature_names=tuple(data["feature_names"]),
            weights=tuple(float(w) for w in data["weights"]),
            intercept=float(data["intercept"]),
            means=tuple(float(m) for m in data["means"]),
            scales=tuple(float(s) for s in data["scales"]),
            ridge_lambda=float(data["ridge_lambda"]),
        )

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_json(), indent=2) + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path: str | Path) -> "PredictorModel":
        return cls.from_json(json.loads(Path(path).read_text(encoding="utf-8")))


def lr_features(
    source: str,
    table: FrequencyTable | None = None,
    tree: DepSentence | None = None,
) -> dict[str, float]:
    """Cheap source-side features for the LENGTHRATIO predictor.

    ``mean_log_rank`` and ``tree_depth`` are zero-filled when the table or
    tree is unavailable.
    """
    normalized = normalize_whitespace(source)
    words = content_words(source)
    mean_log_rank = 0.0
    if table is not None and words:
        mean_log_rank = sum(table.log_rank(w) for w in words) / len(words)
    return {
        "char_len": float(len(normalized)),
        "token_count": float(len(words)),
        "mean_log_rank": mean_log_rank,
        "tree_depth": float(tree_depth(tree)) if tree is not None else 0.0,
    }


def build_lr_training_pairs(
    corpus: Corpus,
    table: FrequencyTable | None = None,
    trees: Mapping[tuple[str, int], DepSentence] | None = None,
) -> list[tuple[dict[str, float], float]]:
    """(features, target) pairs; the target is the mean raw length ratio
    over a pair's references."""
    out = []
    for pair in corpus:
        if not pair.references:
            continue
        target = sum(length_ratio(pair.source, r) for r in pair.references) / len(pair.references)
        tree = trees.get(pair.key) if trees else None
        out.append((lr_features(pair.source, table, tree), target))
    return out


def fit_lr_predictor(
    pairs: Sequence[tuple[Mapping[str, float], float]],
    ridge_lambda: float = 0.0,
) -> PredictorModel:
    """Closed-form ridge fit of target = w . z(features) + intercept.

    Features are standardized internally (population std; constant columns
    get scale 1); the intercept is the target mean and is not penalized.
    """
    if ridge_lambda < 0:
        raise ConfigError(f"ridge_lambda must be >= 0, got {ridge_lambda}")
    if not pairs:
        raise DomainError("no training pairs")
    feature_names = tuple(pairs[0][0].keys())
    for features, _ in pairs:
        if tuple(features.keys()) != feature_names and set(features) != set(feature_names):
            raise DomainError(
                f"inconsistent feature names: {sorted(features)} vs {sorted(feature_names)}"
            )
    d = len(feature_names)
    if len(pairs) < d + 1:
        raise DomainError(
            f"need at least {d + 1} examples for {d} features, got {len(pairs)}"
        )
    X = np.array([[float(f[n]) for n in feature_names] for f, _ in pairs], dtype=float)
    y = np.array([t for _, t in pairs], dtype=float)
    intercept = float(y.mean())
    if d == 0:
        return PredictorModel((), (), intercept, (), (), ridge_lambda)
    means = X.mean(axis=0)
    scales = X.std(axis=0)
    scales[scales == 0] = 1.0
    Z = (X - means) / scales
    if ridge_lambda == 0 and np.linalg.matrix_rank(Z) < d:
        raise DomainError(
            "feature matrix is singular at ridge_lambda = 0; "
            "set ridge_lambda > 0 to regularize"
        )
    A = Z.T @ Z + ridge_lambda * np.eye(d)
    w = np.linalg.solve(A, Z.T @ y)
    return PredictorModel(
        feature_names=feature_names,
        weights=tuple(float(v) for v in w),
        intercept=intercept,
        means=tuple(float(v) for v in means),
        scales=tuple(float(v) for v in scales),
        ridge_lambda=ridge_lambda,
    )


def predict_lr(
    model: PredictorModel,
    source_features: Mapping[str, float],
    spec: BucketSpec = DEFAULT_BUCKET_SPEC,
) -> float:
    """Linear prediction snapped onto the shared bucket grid."""
    return bucketize(model.predict_value(source_features), spec)


Simplifier = SimplifierSpec | Callable[[list[str]], list[str]]


def objective(
    candidate: Candidate,
    validation: Sequence[SentencePair],
    simplifier: Simplifier,
    predictor: PredictorModel | None = None,
    spec: BucketSpec = DEFAULT_BUCKET_SPEC,
    feature_fn: Callable[[str], Mapping[str, float]] | None = None,
) -> float:
    """Tag the validation sources with the candidate's values, run the
    simplifier once over the batch, and return macro SARI."""
    if not validation:
        raise DomainError("validation set is empty")
    predicted = candidate.lr is None
    if predicted and predictor is None:
        raise ConfigError("candidate has predicted LR but no predictor was given")
    if not predicted and predictor is not None:
        raise ConfigError("predictor supplied but candidate carries a fixed LR")
    if predicted:
        features = feature_fn or lr_features
        lrs = [predict_lr(predictor, features(p.source), spec) for p in validation]
    else:
        lrs = [candidate.lr] * len(validation)
    tagged = [
        render_control_prefix(CtVector(candidate.dtd, candidate.wr, candidate.lv, lr))
        + normalize_whitespace(p.source)
        for p, lr in zip(validation, lrs)
    ]
    try:
        outputs = run_simplifier(simplifier, tagged)
    except BridgeError as exc:
        raise type(exc)(f"candidate {candidate.key}: {exc}") from exc
    scores = [
        sari(p.source, out, list(p.references)) for p, out in zip(validation, outputs)
    ]
    return sum(scores) / len(scores)


class Objective:
    """Caching wrapper around :func:`objective` for one search run.

    Scores are cached by (candidate values, LR-assignment hash) so
    duplicate candidates never re-drive the external simplifier; the cache
    is lock-protected for concurrent evaluation. ``log`` receives one
    record per fresh evaluation.
    """

    def __init__(
        self,
        validation: Sequence[SentencePair],
        simplifier: Simplifier,
        predictor: PredictorModel | None = None,
        spec: BucketSpec = DEFAULT_BUCKET_SPEC,
        feature_fn: Callable[[str], Mapping[str, float]] | None = None,
        log: Callable[[Candidate, float, float], None] | None = None,
    ):
        if not validation:
            raise DomainError("validation set is empty")
        self._validation = list(validation)
        self._simplifier = simplifier
        self._predictor = predictor
        self._spec = spec
        self._feature_fn = feature_fn
        self._log = log
        self._cache: dict[tuple, float] = {}
        self._lock = threading.Lock()
        self.evaluations = 0
        if predictor is not None:
            features = feature_fn or lr_features
            assignment = tuple(
                predict_lr(predictor, features(p.source), spec) for p in self._validation
            )
            self._lr_assignment_hash = hash(assignment)
        else:
            self._lr_assignment_hash = None

    def __call__(self, candidate: Candidate) -> float:
        key = (candidate.dtd, candidate.wr, candidate.lv, candidate.lr, self._lr_assignment_hash)
        with self._lock:
            if key in self._cache:
                return self._cache[key]
        started = time.perf_counter()
        score = objective(
            candidate,
            self._validation,
            self._simplifier,
            predictor=self._predictor,
            spec=self._spec,
            feature_fn=self._feature_fn,
        )
        elapsed = time.perf_counter() - started
        with self._lock:
            self._cache[key] = score
            self.evaluations += 1
        if self._log is not None:
            self._log(candidate, score, elapsed)
        return score


def grid_search(
    space: SearchSpace,
    objective_fn: Callable[[Candidate], float],
    budget_cap: int = DEFAULT_GRID_BUDGET_CAP,
) -> tuple[Candidate, list[tuple[Candidate, float]]]:
    """Evaluate every candidate; ties resolve to the lexicographically
    smallest (dtd, wr, lv, lr)."""
    size = space.size()
    if size > budget_cap:
        raise ConfigError(
            f"grid has {size} candidates, above the budget cap {budget_cap}; "
            f"raise the cap to at least {size} or shrink the space"
        )
    table: list[tuple[Candidate, float]] = []
    best: Candidate | None = None
    for candidate in space.candidates():
        score = objective_fn(candidate)
        table.append((candidate, score))
        if best is None or score > best.score:
            best = replace(candidate, score=score)
    return best, table


def _mutate(
    parent_idx: list[int], dims: list[int], rng: SplitMix64, rate: float = 1.0 / 3.0
) -> list[int]:
    """Per-coordinate adjacent step with probability ``rate``; a child that
    comes out identical gets one forced move so every offspring differs."""
    child = list(parent_idx)
    mutable = [k for k, size in enumerate(dims) if size > 1]
    for k in mutable:
        if rng.random() < rate:
            child[k] = _adjacent(child[k], dims[k], rng)
    if child == parent_idx and mutable:
        k = mutable[rng.randrange(len(mutable))]
        child[k] = _adjacent(child[k], dims[k], rng)
    return child


def _adjacent(i: int, size: int, rng: SplitMix64) -> int:
    if i == 0:
        return 1
    if i == size - 1:
        return size - 2
    return i + 1 if rng.randrange(2) else i - 1


def one_plus_lambda_es(
    space: SearchSpace,
    objective_fn: Callable[[Candidate], float],
    budget: int,
    lam: int = 5,
    seed: int = 0,
    max_generations: int = 10_000,
) -> Candidate:
    """(1+lambda) evolution strategy on the discrete grid.

    The parent is drawn uniformly under ``seed``; each generation samples
    ``lam`` offspring by adjacent-bucket mutation and replaces the parent
    when the best offspring scores >= it. Previously scored candidates are
    served from a cache and do not consume budget. Deterministic under
    ``seed``.
    """
    if lam < 1:
        raise ConfigError(f"lambda must be >= 1, got {lam}")
    if budget < 1 + lam:
        raise ConfigError(f"budget must be >= 1 + lambda = {1 + lam}, got {budget}")
    rng = SplitMix64(seed)
    axes: list[tuple] = [space.dtd_values, space.wr_values, space.lv_values, space.lr_values]
    dims = [len(a) for a in axes]

    cache: dict[tuple, float] = {}
    spent = 0

    def evaluate(idx: list[int]) -> float:
        nonlocal spent
        key = tuple(idx)
        if key not in cache:
            cand = Candidate(
                dtd=axes[0][idx[0]], wr=axes[1][idx[1]], lv=axes[2][idx[2]], lr=axes[3][idx[3]]
            )
            cache[key] = objective_fn(cand)
            spent += 1
        return cache[key]

    parent = [rng.randrange(d) for d in dims]
    parent_score = evaluate(parent)
    if all(d == 1 for d in dims):
        return Candidate(
            dtd=axes[0][parent[0]], wr=axes[1][parent[1]], lv=axes[2][parent[2]],
            lr=axes[3][parent[3]], score=parent_score,
        )
    for _ in range(max_generations):
        if spent >= budget:
            break
        best_child: list[int] | None = None
        best_child_score = float("-inf")
        for _ in range(lam):
            child = _mutate(parent, dims, rng)
            if tuple(child) not in cache and spent >= budget:
                continue  # budget exhausted; only cached offspring may still compete
            score = evaluate(child)
            if score > best_child_score:
                best_child, best_child_score = child, score
        if best_child is not None and best_child_score >= parent_score:
            parent, parent_score = best_child, best_child_score
    return Candidate(
        dtd=axes[0][parent[0]],
        wr=axes[1][parent[1]],
        lv=axes[2][parent[2]],
        lr=axes[3][parent[3]],
        score=parent_score,
    )


def write_search_outputs(
    best: Candidate,
    log_records: Sequence[dict],
    out_dir: str | Path,
) -> None:
    """Persist ``search-log.jsonl`` (one record per evaluation) and ``best.json``."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    with (out_dir / "search-log.jsonl").open("w", encoding="utf-8") as fh:
        for record in log_records:
            fh.write(json.dumps(record) + "\n")
    (out_dir / "best.json").write_text(
        json.dumps(best.to_dict(), indent=2) + "\n", encoding="utf-8"
    )
