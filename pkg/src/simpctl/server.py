"""HTTP API and static hosting for the annotation UI.

The data directory must contain ``plan.json`` as written by the ``assign``
CLI command (assignment plan plus item payloads); ratings are appended to
``ratings.jsonl`` in the same directory.

Blindness: plan payloads never contain system ids. The UI refers to the
two shown outputs by display position (``output_index`` 0 or 1) and the
server maps positions back to systems when a rating is stored.
"""

from __future__ import annotations

import json
import threading
from pathlib import Path
from typing import Mapping

from fastapi import FastAPI, HTTPException
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import HTMLResponse
from fastapi.staticfiles import StaticFiles
from pydantic import BaseModel, Field

from .agreement import CRITERIA, CRITERION_PROMPTS, LIKERT_SCALE, AssignmentPlan, Item
from .errors import ConfigError, ParseError

RATINGS_FILENAME = "ratings.jsonl"
PLAN_FILENAME = "plan.json"
_RATINGS_PER_ITEM = 2 * len(CRITERIA)


def item_id(item: Item) -> str:
    return f"{item[0]}:{item[1]}"


class RatingSubmission(BaseModel):
    annotator: str
    item_id: str
    output_index: int = Field(ge=0, le=1)
    criterion: str
    value: int = Field(ge=1, le=5)


class RatingsStore:
    """Append-only JSONL store with duplicate rejection.

    Writes are serialized through a lock (single-writer discipline); the
    in-memory key set makes duplicate checks O(1).
    """

    def __init__(self, path: Path):
        self.path = path
        self._lock = threading.Lock()
        self._keys: set[tuple] = set()
        self.records: list[dict] = []
        if path.exists():
            for lineno, line in enumerate(path.read_text(encoding="utf-8").splitlines(), start=1):
                if not line.strip():
                    continue
                try:
                    record = json.loads(line)
                except json.JSONDecodeError as exc:
                    raise ParseError(f"{path}:{lineno}: {exc.msg}") from exc
                self._remember(record)

    @staticmethod
    def key_of(record: Mapping) -> tuple:
        return (
            record["annotator"],
            record["doc_id"],
            record["sent_index"],
            record["system"],
            record["criterion"],
        )

    def _remember(self, record: dict) -> None:
        self._keys.add(self.key_of(record))
        self.records.append(record)

    def append(self, record: dict) -> None:
        with self._lock:
            key = self.key_of(record)
            if key in self._keys:
                raise KeyError(key)
            with self.path.open("a", encoding="utf-8") as fh:
                fh.write(json.dumps(record) + "\n")
            self._remember(record)

    def count_for(self, annotator: str, item: Item, systems: tuple[str, str]) -> int:
        return sum(
            1
            for record in self.records
            if record["annotator"] == annotator
            and (record["doc_id"], record["sent_index"]) == item
            and record["system"] in systems
        )


def load_plan_file(path: Path) -> tuple[AssignmentPlan, dict[str, dict]]:
    """Read the combined plan + item-payload file written by ``assign``."""
    try:
        data = json.loads(path.read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise ConfigError(f"plan file not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}:{exc.lineno}: {exc.msg}") from exc
    plan = AssignmentPlan.from_json(data["plan"])
    items = {str(k): dict(v) for k, v in data["items"].items()}
    missing = [
        item_id(item)
        for tasks in plan.tasks.values()
        for item in tasks
        if item_id(item) not in items
    ]
    if missing:
        raise ConfigError(f"plan references items without payloads: {sorted(set(missing))[:5]}")
    return plan, items


def create_app(
    data_dir: str | Path,
    ui_dir: str | Path | None = None,
    cors_origins: tuple[str, ...] = ("*",),
) -> FastAPI:
    data_dir = Path(data_dir)
    plan, items = load_plan_file(data_dir / PLAN_FILENAME)
    store = RatingsStore(data_dir / RATINGS_FILENAME)

    app = FastAPI(title="simpctl annotation API")
    app.add_middleware(
        CORSMiddleware,
        allow_origins=list(cors_origins),
        allow_methods=["*"],
        allow_headers=["*"],
    )

    def tasks_for(annotator: str) -> tuple[Item, ...]:
        try:
            return plan.tasks[annotator]
        except KeyError:
            raise HTTPException(status_code=404, detail=f"unknown annotator {annotator!r}")

    @app.get("/api/plan/{annotator}")
    def get_plan(annotator: str) -> dict:
        task_items = []
        for item in tasks_for(annotator):
            payload = items[item_id(item)]
            order = plan.display_order[(annotator, item)]
            task_items.append(
                {
                    "item_id": item_id(item),
                    "doc_id": item[0],
                    "sent_index": item[1],
                    "source": payload["source"],
                    "outputs": [payload["outputs"][order[0]], payload["outputs"][order[1]]],
                    "labels": ["Output 1", "Output 2"],
                }
            )
        return {
            "annotator": annotator,
            "criteria": [
                {"key": key, "prompt": CRITERION_PROMPTS[key]} for key in CRITERIA
            ],
            "scale": list(LIKERT_SCALE),
            "items": task_items,
        }

    @app.post("/api/ratings", status_code=201)
    def post_ratings(submissions: list[RatingSubmission] | RatingSubmission) -> dict:
        batch = submissions if isinstance(submissions, list) else [submissions]
        accepted = 0
        for sub in batch:
            task_items = tasks_for(sub.annotator)
            matching = [item for item in task_items if item_id(item) == sub.item_id]
            if not matching:
                raise HTTPException(
                    status_code=422,
                    detail=f"item {sub.item_id!r} is not assigned to {sub.annotator!r}",
                )
            if sub.criterion not in CRITERIA:
                raise HTTPException(
                    status_code=422, detail=f"unknown criterion {sub.criterion!r}"
                )
            item = matching[0]
            system = plan.display_order[(sub.annotator, item)][sub.output_index]
            record = {
                "annotator": sub.annotator,
                "doc_id": item[0],
                "sent_index": item[1],
                "system": system,
                "criterion": sub.criterion,
                "value": sub.value,
            }
            try:
                store.append(record)
            except KeyError:
                raise HTTPException(
                    status_code=409,
                    detail=f"rating already recorded for {sub.item_id} "
                    f"output {sub.output_index} criterion {sub.criterion}",
                )
            accepted += 1
        return {"accepted": accepted}

    @app.get("/api/progress/{annotator}")
    def get_progress(annotator: str) -> dict:
        task_items = tasks_for(annotator)
        statuses = []
        completed = 0
        for item in task_items:
            answered = store.count_for(annotator, item, plan.systems)
            done = answered >= _RATINGS_PER_ITEM
            completed += done
            statuses.append(
                {"item_id": item_id(item), "answered": answered, "complete": done}
            )
        return {
            "annotator": annotator,
            "total": len(task_items),
            "completed": completed,
            "complete": completed == len(task_items),
            "items": statuses,
        }

    ui_path = Path(ui_dir) if ui_dir else None
    if ui_path and ui_path.is_dir():
        app.mount("/", StaticFiles(directory=str(ui_path), html=True), name="ui")
    else:

        @app.get("/", response_class=HTMLResponse)
        def placeholder() -> str:
            return (
                "<html><body><h1>simpctl annotation server</h1>"
                "<p>The UI bundle is not built; the JSON API under /api is live.</p>"
                "</body></html>"
            )

    return app


def compact_ratings(data_dir: str | Path) -> dict:
    """Rewrite ratings.jsonl keeping the first record per key, dropping
    malformed lines; returns kept/dropped counts."""
    path = Path(data_dir) / RATINGS_FILENAME
    kept: list[dict] = []
    seen: set[tuple] = set()
    dropped = 0
    if path.exists():
        for line in path.read_text(encoding="utf-8").splitlines():
            if not line.strip():
                continue
            try:
                record = json.loads(line)
                key = RatingsStore.key_of(record)
            except (json.JSONDecodeError, KeyError, TypeError):
                dropped += 1
                continue
            if key in seen:
                dropped += 1
                continue
            seen.add(key)
            kept.append(record)
    path.write_text(
        "".join(json.dumps(r) + "\n" for r in kept), encoding="utf-8"
    )
    return {"kept": len(kept), "dropped": dropped}
