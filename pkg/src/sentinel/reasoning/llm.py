"""LLM client contract, the deterministic mock, and the step/final protocol.

Response protocol: ordered "STEP n: ..." lines followed by one
"FINAL: [Severity] ..." line. The mock reads the structured fields the prompt
generator embeds in the task section, so the whole reasoning loop runs with
no network and no model.
"""

from __future__ import annotations

import re
import socket
import urllib.error
import urllib.request
from dataclasses import dataclass

from ..errors import LlmTimeout, ParseError, TransportError
from .missions import Mission
from .prompts import PromptBundle

SEVERITIES = ("Info", "Caution", "Warning", "Critical")

# risk bands: [0, .15) Info, [.15, .45) Caution, [.45, .8) Warning, [.8, 1] Critical
SEVERITY_BANDS = ((0.15, "Info"), (0.45, "Caution"), (0.8, "Warning"))

# sampled boxes needed before the mock cites tracks / anticipates collisions
CITE_TRACKS_MIN_BOXES = 1
CITE_COLLISIONS_MIN_BOXES = 3

_STEP_RE = re.compile(r"^STEP (\d+): (.*)$")
_FINAL_RE = re.compile(r"^FINAL: (?:\[(\w+)\] )?(.*)$")


def severity_for_risk(value: float) -> str:
    for bound, name in SEVERITY_BANDS:
        if value < bound:
            return name
    return "Critical"


@dataclass(frozen=True)
class Decision:
    steps: tuple[str, ...]
    final: str
    severity: str


def parse_decision(text: str) -> Decision:
    steps = []
    final = None
    severity = "Info"
    for line in text.splitlines():
        line = line.strip()
        if not line:
            continue
        m = _STEP_RE.match(line)
        if m:
            if final is not None:
                raise ParseError("step line after the final line")
            n = int(m.group(1))
            if n != len(steps) + 1:
                raise ParseError(f"step {n} out of order (expected {len(steps) + 1})")
            steps.append(m.group(2))
            continue
        m = _FINAL_RE.match(line)
        if m:
            if final is not None:
                raise ParseError("multiple final lines")
            tag, final = m.group(1), m.group(2)
            if tag:
                if tag not in SEVERITIES:
                    raise ParseError(f"unknown severity tag '{tag}'")
                severity = tag
    if final is None:
        raise ParseError("response has no FINAL line")
    return Decision(steps=tuple(steps), final=final, severity=severity)


# ---------------------------------------------------------------------------
# clients

_FIELD_RES = {
    "mission": re.compile(r"^mission: (\S+)$", re.M),
    "risk": re.compile(r"^risk_value: ([0-9.]+)$", re.M),
    "evidence": re.compile(r"^evidence: (.*)$", re.M),
    "question": re.compile(r"^question: (.*)$", re.M),
}

_FINAL_TEMPLATES = {
    Mission.SAFETY_EVALUATION: "scene safety is {band}; closest concern {focus}",
    Mission.DRIVING_CONDITION: "current driving margin is {band} given {focus}",
    Mission.TRAFFIC_CONDITION: "traffic around the ego is {band}; watching {focus}",
    Mission.TRAFFIC_VIOLATION: "violation posture is {band}; flagged {focus}",
    Mission.ACCIDENT_PREDICTION: "collision outlook is {band}; projected contact {focus}",
    Mission.ACCIDENT_RESPONSIBILITY: "responsibility assessment is {band} based on {focus}",
    Mission.CAUSATION_ANALYSIS: "causal picture is {band}; contributing factor {focus}",
    Mission.TRAFFIC_SITUATION: "overall situation is {band}; notable object {focus}",
}


class MockLlmClient:
    """Deterministic rule table over the structured fields in the prompt.

    Citation richness scales with how many corpus boxes actually made it into
    the prompt: with none the answer stays generic, with a few it names
    tracks, with more it also cites the predicted collisions it is warning
    about.
    """

    def __init__(self, delay_s: float = 0.0):
        self.delay_s = delay_s
        self.calls = 0

    def complete(self, prompt_text: str, timeout_s: float) -> str:
        self.calls += 1
        if self.delay_s > timeout_s:
            raise LlmTimeout(f"mock delay {self.delay_s}s exceeds timeout {timeout_s}s")

        mission = Mission.TRAFFIC_SITUATION
        m = _FIELD_RES["mission"].search(prompt_text)
        if m:
            try:
                mission = Mission(m.group(1))
            except ValueError:
                pass
        risk = 0.0
        m = _FIELD_RES["risk"].search(prompt_text)
        if m:
            risk = float(m.group(1))
        evidence: list[str] = []
        m = _FIELD_RES["evidence"].search(prompt_text)
        if m and m.group(1) != "none":
            evidence = m.group(1).split()
        boxes = sum(1 for line in prompt_text.splitlines() if line.startswith("box "))

        tracks = [e for e in evidence if e.startswith("track:")]
        collisions = [e for e in evidence if e.startswith("collision:")]
        severity = severity_for_risk(risk)

        steps = [f"mission {mission.value} at risk intensity {risk:.2f}"]
        cites: list[str] = []
        if boxes >= CITE_TRACKS_MIN_BOXES and tracks:
            cites.extend(tracks[:2])
            steps.append(
                f"{len(tracks)} tracked object(s) in play; key {' '.join(tracks[:2])}"
            )
        else:
            steps.append("no prior cases sampled; keeping the assessment generic")
        if boxes >= CITE_COLLISIONS_MIN_BOXES and collisions:
            cites.extend(collisions[:2])
            steps.append(
                f"prior cases support anticipation: projected {' '.join(collisions[:2])}"
            )

        focus = " ".join(cites) if cites else "none identified"
        final = _FINAL_TEMPLATES[mission].format(band=severity.lower(), focus=focus)
        lines = [f"STEP {i + 1}: {s}" for i, s in enumerate(steps)]
        lines.append(f"FINAL: [{severity}] {final}")
        return "\n".join(lines)


class HttpLlmClient:
    """POSTs the rendered prompt as text/plain and expects protocol text back."""

    def __init__(self, endpoint: str):
        self.endpoint = endpoint

    def complete(self, prompt_text: str, timeout_s: float) -> str:
        req = urllib.request.Request(
            self.endpoint,
            data=prompt_text.encode("utf-8"),
            headers={"Content-Type": "text/plain; charset=utf-8"},
            method="POST",
        )
        try:
            with urllib.request.urlopen(req, timeout=timeout_s) as resp:
                return resp.read().decode("utf-8")
        except socket.timeout as e:
            raise LlmTimeout(f"no answer from {self.endpoint} within {timeout_s}s") from e
        except urllib.error.URLError as e:
            if isinstance(e.reason, socket.timeout):
                raise LlmTimeout(f"no answer from {self.endpoint} within {timeout_s}s") from e
            raise TransportError(f"cannot reach {self.endpoint}: {e}") from e


def invoke_llm(client, prompt: PromptBundle, cot: bool = True, timeout_s: float = 10.0) -> Decision:
    """One completion round-trip parsed against the step/final protocol."""
    text = client.complete(prompt.rendered(), timeout_s)
    decision = parse_decision(text)
    if cot and not decision.steps:
        raise ParseError("chain-of-thought enabled but the response has no steps")
    return decision
