"""The eight reasoning missions and the keyword rubric for active queries."""

from __future__ import annotations

import json
from enum import Enum
from importlib import resources

from ..errors import SchemaError


class Mission(str, Enum):
    SAFETY_EVALUATION = "safety_evaluation"
    DRIVING_CONDITION = "driving_condition"
    TRAFFIC_CONDITION = "traffic_condition"
    TRAFFIC_VIOLATION = "traffic_violation"
    ACCIDENT_PREDICTION = "accident_prediction"
    ACCIDENT_RESPONSIBILITY = "accident_responsibility"
    CAUSATION_ANALYSIS = "causation_analysis"
    TRAFFIC_SITUATION = "traffic_situation"

    @property
    def label(self) -> str:
        return self.value.replace("_", " ").capitalize()


# canonical row order for report tables
MISSION_ORDER = tuple(Mission)


def load_rubric(path: str | None = None) -> dict:
    """Load the keyword rubric table (bundled file unless a path is given)."""
    if path is None:
        text = (resources.files("sentinel") / "data" / "mission_rubric.json").read_text("utf-8")
    else:
        with open(path, encoding="utf-8") as f:
            text = f.read()
    doc = json.loads(text)
    if doc.get("version") != 1:
        raise SchemaError(f"unsupported rubric version {doc.get('version')!r}")
    rules = doc.get("rules")
    if not isinstance(rules, list):
        raise SchemaError("rubric: 'rules' must be a list")
    for rule in rules:
        Mission(rule["mission"])  # raises ValueError on an unknown mission
        if not isinstance(rule.get("keywords"), list):
            raise SchemaError("rubric rule needs a 'keywords' list")
    Mission(doc.get("default", Mission.TRAFFIC_SITUATION.value))
    return doc


def classify_mission(text: str, rubric: dict | None = None) -> Mission:
    """Best keyword-hit mission; ties go to the earlier rule, no hits to the default."""
    rubric = rubric or load_rubric()
    lowered = text.lower()
    best: Mission | None = None
    best_hits = 0
    for rule in rubric["rules"]:
        hits = sum(1 for kw in rule["keywords"] if kw in lowered)
        if hits > best_hits:
            best_hits = hits
            best = Mission(rule["mission"])
    if best is None:
        return Mission(rubric.get("default", Mission.TRAFFIC_SITUATION.value))
    return best
