"""Prompt assembly: fixed section order, hard character budget."""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, replace

from ..errors import MissingPerception
from ..fusion import PerceptionProduct
from .corpus import CorpusBox
from .missions import Mission
from .risk import RiskScore

DIALOGUE_TAIL_N = 10
DEFAULT_BUDGET_CHARS = 16000

SYSTEM_PREAMBLE = (
    "You are an in-vehicle traffic-safety copilot. You receive fused roadside "
    "and vehicle perception plus prior-case notes. Reason in numbered steps, "
    "one per line as 'STEP n: ...', then give exactly one 'FINAL: [Severity] ...' "
    "line with Severity one of Info, Caution, Warning, Critical."
)

EMPTY_RAW = "[no raw records]"
EMPTY_CACHE = "[no temporal cache]"
EMPTY_BOXES = "[no corpus samples]"


@dataclass(frozen=True)
class InputBundle:
    episode_id: str
    tick: int
    perception: PerceptionProduct
    dialogue_tail: tuple[str, ...]
    label_refs: tuple[str, ...]
    digest: str


def build_input_bundle(
    perception: PerceptionProduct | None,
    dialogue: list[str],
    label_refs: list[str],
    episode_id: str,
) -> InputBundle:
    if perception is None:
        raise MissingPerception("input bundle needs a perception product")
    digest = hashlib.sha256(f"{episode_id}:{perception.tick}".encode()).hexdigest()[:16]
    return InputBundle(
        episode_id=episode_id,
        tick=perception.tick,
        perception=perception,
        dialogue_tail=tuple(dialogue[-DIALOGUE_TAIL_N:]),
        label_refs=tuple(label_refs),
        digest=digest,
    )


def render_box(box: CorpusBox) -> str:
    return (
        f"box {box.box_id} mission={box.mission.value} outcome={box.outcome} "
        f"tags={','.join(box.relevance_tags)} :: {box.summary_text}"
    )


def render_task(mission: Mission, risk: RiskScore, evidence: tuple[str, ...],
                utterance: str, mode: str) -> str:
    lines = [
        f"mission: {mission.value}",
        f"mode: {mode}",
        f"risk_value: {risk.value:.4f}",
        (
            f"risk_components: ttc={risk.ttc_term:.4f} "
            f"proximity={risk.proximity_term:.4f} violation={risk.violation_term:.4f}"
        ),
        f"evidence: {' '.join(evidence) if evidence else 'none'}",
    ]
    if utterance:
        lines.append(f"question: {utterance}")
    lines.append("Answer for this mission using STEP/FINAL lines.")
    return "\n".join(lines)


@dataclass(frozen=True)
class PromptBundle:
    system: str
    raw_backup: tuple[str, ...]
    temporal_cache: tuple[str, ...]
    sampled_boxes: tuple[CorpusBox, ...]
    task_instruction: str
    budget: int = DEFAULT_BUDGET_CHARS

    def rendered(self) -> str:
        parts = [
            "## system", self.system,
            "## raw backup",
            "\n".join(self.raw_backup) if self.raw_backup else EMPTY_RAW,
            "## temporal cache",
            "\n".join(self.temporal_cache) if self.temporal_cache else EMPTY_CACHE,
            "## corpus samples",
            "\n".join(render_box(b) for b in self.sampled_boxes) if self.sampled_boxes else EMPTY_BOXES,
            "## task", self.task_instruction,
        ]
        return "\n".join(parts)


def generate_prompt(
    mission: Mission,
    risk: RiskScore,
    evidence: tuple[str, ...],
    sampled: list[CorpusBox],
    cache: list[str],
    raw: list[str],
    utterance: str = "",
    mode: str = "passive",
    budget: int = DEFAULT_BUDGET_CHARS,
) -> PromptBundle:
    """Assemble a prompt that always renders within the character budget.

    `sampled` must arrive highest-priority first: over budget we drop boxes
    from the tail, then the oldest raw records, then the oldest cache entries.
    """
    task = render_task(mission, risk, evidence, utterance, mode)
    bundle = PromptBundle(
        system=SYSTEM_PREAMBLE,
        raw_backup=tuple(raw),
        temporal_cache=tuple(cache),
        sampled_boxes=tuple(sampled),
        task_instruction=task,
        budget=budget,
    )
    while len(bundle.rendered()) > budget and bundle.sampled_boxes:
        bundle = replace(bundle, sampled_boxes=bundle.sampled_boxes[:-1])
    while len(bundle.rendered()) > budget and bundle.raw_backup:
        bundle = replace(bundle, raw_backup=bundle.raw_backup[1:])
    while len(bundle.rendered()) > budget and bundle.temporal_cache:
        bundle = replace(bundle, temporal_cache=bundle.temporal_cache[1:])
    if len(bundle.rendered()) > budget:
        # degenerate budgets: keep the head of the task line itself
        overflow = len(bundle.rendered()) - budget
        bundle = replace(
            bundle,
            task_instruction=bundle.task_instruction[: max(0, len(bundle.task_instruction) - overflow)],
        )
    if len(bundle.rendered()) > budget:
        bundle = replace(bundle, system=bundle.system[: max(0, budget - (len(bundle.rendered()) - len(bundle.system)))])
    return bundle
