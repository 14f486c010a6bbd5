"""Experience corpus: standardized boxes with priority sampling and an
append-only newline-JSON log for persistence."""

from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass

from ..errors import ValidationError
from .missions import Mission

OUTCOMES = ("success", "failure", "neutral")
OUTCOME_WEIGHT = {"success": 1.0, "neutral": 0.5, "failure": 0.8}

RECENCY_HALF_LIFE_TICKS = 500.0

W_RELEVANCE = 0.5
W_RECENCY = 0.3
W_OUTCOME = 0.2


@dataclass(frozen=True)
class CorpusBox:
    box_id: str
    mission: Mission
    summary_text: str
    relevance_tags: tuple[str, ...]
    created_tick: int
    outcome: str
    payload_ref: str = ""

    def __post_init__(self):
        if not self.summary_text:
            raise ValidationError("box summary must be non-empty")
        if self.outcome not in OUTCOMES:
            raise ValidationError(f"outcome '{self.outcome}' not one of {OUTCOMES}")

    def to_record(self) -> dict:
        return {
            "box_id": self.box_id,
            "mission": self.mission.value,
            "summary_text": self.summary_text,
            "tags": list(self.relevance_tags),
            "created_tick": self.created_tick,
            "outcome": self.outcome,
            "payload_ref": self.payload_ref,
        }

    @staticmethod
    def from_record(rec: dict) -> "CorpusBox":
        return CorpusBox(
            box_id=rec["box_id"],
            mission=Mission(rec["mission"]),
            summary_text=rec["summary_text"],
            relevance_tags=tuple(rec["tags"]),
            created_tick=rec["created_tick"],
            outcome=rec["outcome"],
            payload_ref=rec.get("payload_ref", ""),
        )


class CorpusStore:
    """Ordered box collection, optionally mirrored to an append-only log."""

    def __init__(self, path: str | None = None):
        self.path = path
        self._boxes: list[CorpusBox] = []
        self._ids: set[str] = set()
        if path and os.path.exists(path):
            with open(path, encoding="utf-8") as f:
                for line in f:
                    line = line.strip()
                    if line:
                        self._append(CorpusBox.from_record(json.loads(line)), persist=False)

    def _append(self, box: CorpusBox, persist: bool):
        if box.box_id in self._ids:
            raise ValidationError(f"duplicate box id '{box.box_id}'")
        self._boxes.append(box)
        self._ids.add(box.box_id)
        if persist and self.path:
            with open(self.path, "a", encoding="utf-8") as f:
                f.write(json.dumps(box.to_record(), sort_keys=True) + "\n")

    def add(self, box: CorpusBox):
        self._append(box, persist=True)

    @property
    def boxes(self) -> tuple[CorpusBox, ...]:
        return tuple(self._boxes)

    def __len__(self) -> int:
        return len(self._boxes)


def _jaccard(a: tuple[str, ...], b: tuple[str, ...]) -> float:
    sa, sb = set(a), set(b)
    if not sa and not sb:
        return 0.0
    return len(sa & sb) / len(sa | sb)


def score_box(box: CorpusBox, job_tags: tuple[str, ...], now_tick: int) -> float:
    """0.5*tag-overlap + 0.3*recency (half-life 500 ticks) + 0.2*outcome weight."""
    relevance = _jaccard(box.relevance_tags, job_tags)
    age = max(0, now_tick - box.created_tick)
    recency = math.exp(-math.log(2.0) * age / RECENCY_HALF_LIFE_TICKS)
    return (
        W_RELEVANCE * relevance
        + W_RECENCY * recency
        + W_OUTCOME * OUTCOME_WEIGHT[box.outcome]
    )


def sample_corpus(store: CorpusStore, job_tags: tuple[str, ...], now_tick: int,
                  k: int = 5) -> list[CorpusBox]:
    """Top-k boxes by priority, ties to the newer box then ascending box_id."""
    if k <= 0:
        return []
    scored = [
        (score_box(b, job_tags, now_tick), b.created_tick, b)
        for b in store.boxes
    ]
    scored.sort(key=lambda s: (-s[0], -s[1], s[2].box_id))
    return [b for _, _, b in scored[:k]]
