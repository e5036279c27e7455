"""Likert-rating aggregation, inter-annotator agreement, and task planning.

Ratings are 5-point Likert values (strongly disagree = 1 ... strongly
agree = 5) over two criteria per (item, system). Agreement is measured
two ways: Cohen's kappa over per-item win/lose/tie outcomes between two
systems, and Krippendorff's alpha (ordinal by default) over the raw
Likert values, via the coincidence-matrix formulation so missing ratings
are handled naturally.
"""

from __future__ import annotations

import csv
import json
from collections import Counter, defaultdict
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Mapping, Sequence

from ._rng import SplitMix64
from .errors import ConfigError, DomainError, IntegrityError, ParseError

CRITERIA = ("meaning_preservation", "simplicity")
CRITERION_PROMPTS = {
    "meaning_preservation": (
        "To what extent do you agree the simplified sentence keeps the major information"
    ),
    "simplicity": "To what extent do you agree the simplified sentence is well simplified",
}
LIKERT_SCALE = (
    "Strongly Disagree",
    "Disagree",
    "Neutral",
    "Agree",
    "Strongly Agree",
)
OUTCOMES = ("win", "lose", "tie")

Item = tuple[str, int]


@dataclass(frozen=True)
class Rating:
    annotator: str
    item: Item
    system: str
    criterion: str
    value: int

    def __post_init__(self):
        if self.criterion not in CRITERIA:
            raise IntegrityError(
                f"criterion must be one of {CRITERIA}, got {self.criterion!r}"
            )
        if not 1 <= self.value <= 5:
            raise IntegrityError(f"value must be in 1..5, got {self.value}")

    @property
    def key(self) -> tuple:
        return (self.annotator, self.item, self.system, self.criterion)


class RatingTable:
    """Duplicate-free collection of ratings; ``systems`` is derived."""

    def __init__(self, ratings: Iterable[Rating]):
        self.ratings: tuple[Rating, ...] = tuple(ratings)
        seen: set[tuple] = set()
        for rating in self.ratings:
            if rating.key in seen:
                raise IntegrityError(f"duplicate rating {rating.key}")
            seen.add(rating.key)
        self.systems: frozenset[str] = frozenset(r.system for r in self.ratings)

    def __len__(self) -> int:
        return len(self.ratings)

    @property
    def annotators(self) -> tuple[str, ...]:
        return tuple(sorted({r.annotator for r in self.ratings}))

    def filtered(
        self,
        criterion: str | None = None,
        system: str | None = None,
        annotators: Sequence[str] | None = None,
    ) -> "RatingTable":
        keep = [
            r
            for r in self.ratings
            if (criterion is None or r.criterion == criterion)
            and (system is None or r.system == system)
            and (annotators is None or r.annotator in annotators)
        ]
        return RatingTable(keep)

    def value_of(self, annotator: str, item: Item, system: str, criterion: str) -> int | None:
        for r in self.ratings:
            if r.key == (annotator, item, system, criterion):
                return r.value
        return None


def likert_means(table: RatingTable) -> dict[tuple[str, str], float]:
    """Mean rating per (system, criterion); empty cells are simply absent."""
    sums: dict[tuple[str, str], list[int]] = defaultdict(list)
    for r in table.ratings:
        sums[(r.system, r.criterion)].append(r.value)
    return {cell: sum(vals) / len(vals) for cell, vals in sums.items()}


@dataclass(frozen=True)
class Outcomes:
    """Per-item win/lose/tie comparison of two systems by one annotator."""

    pairs: tuple[tuple[Item, str], ...]
    skipped: int

    def labels(self) -> list[str]:
        return [outcome for _, outcome in self.pairs]

    def by_item(self) -> dict[Item, str]:
        return dict(self.pairs)


def to_outcomes(
    table: RatingTable,
    annotator: str,
    criterion: str,
    system_a: str,
    system_b: str,
) -> Outcomes:
    """win when the annotator rated system_a above system_b, lose below,
    tie on equality; items missing either rating are excluded and counted."""
    values: dict[Item, dict[str, int]] = defaultdict(dict)
    for r in table.ratings:
        if r.annotator == annotator and r.criterion == criterion and r.system in (system_a, system_b):
            values[r.item][r.system] = r.value
    pairs: list[tuple[Item, str]] = []
    skipped = 0
    for item in sorted(values):
        both = values[item]
        if system_a not in both or system_b not in both:
            skipped += 1
            continue
        a, b = both[system_a], both[system_b]
        outcome = "win" if a > b else "lose" if a < b else "tie"
        pairs.append((item, outcome))
    return Outcomes(pairs=tuple(pairs), skipped=skipped)


def cohen_kappa(labels_a: Sequence, labels_b: Sequence) -> float:
    """Cohen's kappa; expected agreement from marginal products.

    With both raters constant and identical the chance term degenerates to
    1; kappa is then defined as 1 when observed agreement is perfect and 0
    otherwise.
    """
    if len(labels_a) != len(labels_b):
        raise DomainError(
            f"label lists differ in length: {len(labels_a)} vs {len(labels_b)}"
        )
    if not labels_a:
        raise DomainError("cannot compute kappa on empty label lists")
    n = len(labels_a)
    observed = sum(a == b for a, b in zip(labels_a, labels_b)) / n
    count_a = Counter(labels_a)
    count_b = Counter(labels_b)
    expected = sum(
        (count_a[c] / n) * (count_b[c] / n) for c in set(count_a) | set(count_b)
    )
    if abs(1.0 - expected) < 1e-12:
        return 1.0 if abs(1.0 - observed) < 1e-12 else 0.0
    return (observed - expected) / (1.0 - expected)


def _ordinal_delta_sq(margins: Mapping[int, float], values: Sequence[int]) -> dict[tuple[int, int], float]:
    """delta^2(c, k) = (sum of margins from c to k - (n_c + n_k) / 2)^2."""
    deltas: dict[tuple[int, int], float] = {}
    for i, c in enumerate(values):
        for k in values[i:]:
            between = sum(margins[g] for g in values if c <= g <= k)
            d = (between - (margins[c] + margins[k]) / 2.0) ** 2
            deltas[(c, k)] = deltas[(k, c)] = d
    return deltas


def krippendorff_alpha(
    table: RatingTable,
    criterion: str,
    system: str | None = None,
    metric: str = "ordinal",
) -> float:
    """Krippendorff's alpha over Likert values, coincidence-matrix form.

    Units are (item, system) cells; units with fewer than two ratings
    cannot produce coincidences and are dropped. ``metric`` is ``ordinal``
    (cumulative-margin distance) or ``nominal``.
    """
    if metric not in ("ordinal", "nominal"):
        raise DomainError(f"metric must be 'ordinal' or 'nominal', got {metric!r}")
    filtered = table.filtered(criterion=criterion, system=system)
    units: dict[tuple[Item, str], list[int]] = defaultdict(list)
    for r in filtered.ratings:
        units[(r.item, r.system)].append(r.value)
    pairable = {u: vals for u, vals in units.items() if len(vals) >= 2}
    if len(pairable) < 2:
        raise DomainError(
            f"need >= 2 units with >= 2 ratings each, found {len(pairable)} "
            f"(criterion {criterion!r}, system {system!r})"
        )

    values = sorted({v for vals in pairable.values() for v in vals})
    coincidence: dict[tuple[int, int], float] = defaultdict(float)
    for vals in pairable.values():
        m = len(vals)
        for i, vi in enumerate(vals):
            for j, vj in enumerate(vals):
                if i != j:
                    coincidence[(vi, vj)] += 1.0 / (m - 1)
    margins: dict[int, float] = {
        c: sum(coincidence[(c, k)] for k in values) for c in values
    }
    total = sum(margins.values())

    if metric == "ordinal":
        deltas = _ordinal_delta_sq(margins, values)
    else:
        deltas = {(c, k): float(c != k) for c in values for k in values}

    observed = sum(
        coincidence[(c, k)] * deltas[(c, k)] for c in values for k in values if c != k
    ) / total
    expected = sum(
        margins[c] * margins[k] * deltas[(c, k)] for c in values for k in values if c != k
    ) / (total * (total - 1))
    if expected == 0:
        raise DomainError("no variation in ratings; alpha is undefined")
    return 1.0 - observed / expected


@dataclass(frozen=True)
class AssignmentPlan:
    """Who rates what, with per-(annotator, item) blind display order.

    Construction scheme (recorded in serialized plans): annotators are
    arranged in a random cycle; each consecutive pair shares a block of
    load/2 items, so every item is rated exactly twice and non-adjacent
    annotators share nothing.
    """

    tasks: Mapping[str, tuple[Item, ...]]
    display_order: Mapping[tuple[str, Item], tuple[str, str]]
    seed: int
    systems: tuple[str, str]
    cycle: tuple[str, ...]
    scheme: str = "cycle-overlap-v1"

    def __post_init__(self):
        coverage: Counter = Counter()
        for items in self.tasks.values():
            coverage.update(items)
        bad = {item: c for item, c in coverage.items() if c != 2}
        if bad:
            raise IntegrityError(f"items not covered exactly twice: {bad}")

    def overlap(self, annotator_a: str, annotator_b: str) -> tuple[Item, ...]:
        shared = set(self.tasks[annotator_a]) & set(self.tasks[annotator_b])
        return tuple(sorted(shared))

    def to_json(self) -> dict:
        return {
            "scheme": self.scheme,
            "seed": self.seed,
            "systems": list(self.systems),
            "cycle": list(self.cycle),
            "tasks": {a: [list(i) for i in items] for a, items in self.tasks.items()},
            "display_order": [
                {
                    "annotator": a,
                    "doc_id": item[0],
                    "sent_index": item[1],
                    "order": list(order),
                }
                for (a, item), order in self.display_order.items()
            ],
        }

    @classmethod
    def from_json(cls, data: Mapping) -> "AssignmentPlan":
        tasks = {
            a: tuple((str(d), int(i)) for d, i in items) for a, items in data["tasks"].items()
        }
        display = {
            (rec["annotator"], (str(rec["doc_id"]), int(rec["sent_index"]))): tuple(rec["order"])
            for rec in data["display_order"]
        }
        return cls(
            tasks=tasks,
            display_order=display,
            seed=int(data["seed"]),
            systems=tuple(data["systems"]),
            cycle=tuple(data["cycle"]),
            scheme=str(data.get("scheme", "cycle-overlap-v1")),
        )


def assign_annotation(
    items: Sequence[Item],
    annotators: Sequence[str],
    load: int,
    seed: int,
    systems: tuple[str, str] = ("system-a", "system-b"),
) -> AssignmentPlan:
    """Plan double-rated annotation with 50% pairwise overlaps.

    Requires 2 * |items| == |annotators| * load and an even load. The two
    systems' display order is randomized per (annotator, item).
    """
    if len(set(items)) != len(items):
        raise ConfigError("duplicate items in assignment input")
    if len(set(annotators)) != len(annotators) or len(annotators) < 2:
        raise ConfigError("need at least 2 distinct annotators")
    if load % 2 != 0:
        raise ConfigError(f"load must be even (two half-blocks per annotator), got {load}")
    if 2 * len(items) != len(annotators) * load:
        raise ConfigError(
            f"infeasible plan: 2 * |items| ({2 * len(items)}) != "
            f"|annotators| * load ({len(annotators)} * {load} = {len(annotators) * load})"
        )
    rng = SplitMix64(seed)
    cycle = list(annotators)
    rng.shuffle(cycle)
    shuffled = list(items)
    rng.shuffle(shuffled)

    block = load // 2
    n = len(cycle)
    edge_items = [shuffled[i * block : (i + 1) * block] for i in range(n)]
    tasks: dict[str, list[Item]] = {a: [] for a in cycle}
    for i in range(n):
        left, right = cycle[i], cycle[(i + 1) % n]
        tasks[left].extend(edge_items[i])
        tasks[right].extend(edge_items[i])
    for a in cycle:
        rng.shuffle(tasks[a])

    display: dict[tuple[str, Item], tuple[str, str]] = {}
    for a in cycle:
        for item in tasks[a]:
            flipped = rng.randrange(2) == 1
            display[(a, item)] = (systems[1], systems[0]) if flipped else systems
    return AssignmentPlan(
        tasks={a: tuple(items_) for a, items_ in tasks.items()},
        display_order=display,
        seed=seed,
        systems=systems,
        cycle=tuple(cycle),
    )


RATING_FIELDS = ("annotator", "doc_id", "sent_index", "system", "criterion", "value")


def _rating_from_record(record: Mapping, locator: str) -> Rating:
    try:
        return Rating(
            annotator=str(record["annotator"]),
            item=(str(record["doc_id"]), int(record["sent_index"])),
            system=str(record["system"]),
            criterion=str(record["criterion"]),
            value=int(record["value"]),
        )
    except (KeyError, TypeError, ValueError, IntegrityError) as exc:
        raise ParseError(f"{locator}: bad rating record ({exc})") from exc


def load_ratings(path: str | Path) -> RatingTable:
    """Load ratings from ``.csv`` (header row), ``.json`` (array), or
    ``.jsonl`` (one record per line)."""
    path = Path(path)
    suffix = path.suffix.lower()
    records: list[Rating] = []
    if suffix == ".csv":
        with path.open(encoding="utf-8", newline="") as fh:
            reader = csv.DictReader(fh)
            if reader.fieldnames is None or set(RATING_FIELDS) - set(reader.fieldnames):
                raise ParseError(f"{path}: expected CSV header {','.join(RATING_FIELDS)}")
            for i, row in enumerate(reader, start=2):
                records.append(_rating_from_record(row, f"{path}:{i}"))
    elif suffix == ".json":
        data = json.loads(path.read_text(encoding="utf-8"))
        if not isinstance(data, list):
            raise ParseError(f"{path}: expected a JSON array of rating records")
        for i, row in enumerate(data):
            records.append(_rating_from_record(row, f"{path}[{i}]"))
    elif suffix == ".jsonl":
        for i, line in enumerate(path.read_text(encoding="utf-8").splitlines(), start=1):
            if not line.strip():
                continue
            try:
                row = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ParseError(f"{path}:{i}: {exc.msg}") from exc
            records.append(_rating_from_record(row, f"{path}:{i}"))
    else:
        raise ConfigError(f"unsupported ratings format {suffix!r} (use .csv/.json/.jsonl)")
    return RatingTable(records)


def write_ratings_csv(table: RatingTable, path: str | Path) -> None:
    with Path(path).open("w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(RATING_FIELDS)
        for r in table.ratings:
            writer.writerow((r.annotator, r.item[0], r.item[1], r.system, r.criterion, r.value))
