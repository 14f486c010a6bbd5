"""Sweep harnesses: prompt renewal rate and prompt intensity level.

Perception does not depend on the reasoning configuration, so each scenario
is simulated once and the reasoning pass is replayed per sweep setting.
"""

from __future__ import annotations

from dataclasses import replace

from .episode import (
    PROMPT_LEVELS,
    PerceptionTrace,
    RunConfig,
    run_reasoning,
    simulate_perception,
)
from .metrics import RATING_BUCKETS, RatingHistogram, rate_alerts
from .reasoning.corpus import CorpusStore
from .reasoning.missions import MISSION_ORDER, Mission
from .world import bundled_scenario

RENEWAL_RATES = (0.1, 0.3, 0.5, 0.7, 0.9)
INTENSITY_LEVELS = ("Mini", "Middle", "High")

# one active query per mission; wording chosen to hit its rubric row
ACTIVE_QUERY_TEXTS = {
    Mission.SAFETY_EVALUATION: "how safe is the scene right now",
    Mission.DRIVING_CONDITION: "how am i driving at the moment",
    Mission.TRAFFIC_CONDITION: "how heavy is the traffic around here",
    Mission.TRAFFIC_VIOLATION: "is anyone violating the rules here",
    Mission.ACCIDENT_PREDICTION: "are we about to crash into anything",
    Mission.ACCIDENT_RESPONSIBILITY: "who would be at fault if they collide",
    Mission.CAUSATION_ANALYSIS: "what caused the situation to become risky",
    Mission.TRAFFIC_SITUATION: "describe the scene around us",
}

DEFAULT_SUITE = tuple(f"occlusion_suite_{i:02d}" for i in range(10))


def build_suite_traces(names: list[str] | None = None, seed: int | None = None,
                       collect_agent_frames: bool = False) -> list[PerceptionTrace]:
    traces = []
    for name in names or DEFAULT_SUITE:
        scenario = bundled_scenario(name)
        traces.append(simulate_perception(
            scenario, seed, collect_agent_frames=collect_agent_frames
        ))
    return traces


def active_schedule_for(trace: PerceptionTrace, episode_index: int) -> list[tuple[int, str]]:
    """Eight queries, one per mission, spread over the episode; the mission
    assignment rotates with the episode index."""
    n = len(trace.ticks)
    missions = list(MISSION_ORDER)
    rot = episode_index % len(missions)
    missions = missions[rot:] + missions[:rot]
    schedule = []
    for i, mission in enumerate(missions):
        tick = max(1, min(n - 1, round(n * (0.15 + 0.7 * i / 7))))
        schedule.append((tick, ACTIVE_QUERY_TEXTS[mission]))
    return schedule


def _run_suite(traces: list[PerceptionTrace], cfg: RunConfig) -> RatingHistogram:
    """One full pass over the suite with a fresh store; alerts rated against
    the per-tick perception truth."""
    store = CorpusStore()
    client = cfg.make_client()
    hist = RatingHistogram()
    tick_base = 0
    for idx, trace in enumerate(traces):
        result = run_reasoning(
            trace, replace(cfg, scenario=trace.scenario_id), store,
            client=client,
            active_schedule=active_schedule_for(trace, idx),
            tick_base=tick_base,
        )
        tick_base += len(trace.ticks)
        hist = hist.merged(rate_alerts(result.alerts, result.truth_by_tick))
    return hist


def run_renewal_sweep(
    suite: list[str] | None = None,
    rates: tuple[float, ...] = RENEWAL_RATES,
    seed: int | None = None,
    threshold: float = 0.4,
    level: str = "Middle",
    traces: list[PerceptionTrace] | None = None,
) -> dict[str, dict[str, dict[str, float]]]:
    """Bucket percentages per (renewal rate, mission): 8 rows x 4 buckets per rate."""
    traces = traces if traces is not None else build_suite_traces(suite, seed)
    tables = {}
    for rate in rates:
        cfg = RunConfig(scenario="-", threshold=threshold, level=level,
                        renewal_rate=rate)
        hist = _run_suite(traces, cfg)
        tables[f"{round(rate * 100)}% renewal"] = hist.table()
    return tables


def run_intensity_sweep(
    suite: list[str] | None = None,
    levels: tuple[str, ...] = INTENSITY_LEVELS,
    seed: int | None = None,
    threshold: float = 0.4,
    renewal_rate: float = 0.9,
    traces: list[PerceptionTrace] | None = None,
) -> dict[str, dict[str, dict[str, float]]]:
    """Bucket percentages per (prompt level, mission), same shape as the
    renewal sweep."""
    for level in levels:
        if level not in PROMPT_LEVELS:
            raise ValueError(f"unknown prompt level '{level}'")
    traces = traces if traces is not None else build_suite_traces(suite, seed)
    tables = {}
    for level in levels:
        cfg = RunConfig(scenario="-", threshold=threshold, level=level,
                        renewal_rate=renewal_rate)
        hist = _run_suite(traces, cfg)
        tables[level] = hist.table()
    return tables


def mean_good_pct(table: dict[str, dict[str, float]]) -> float:
    rows = [table[m.value]["Good"] for m in MISSION_ORDER]
    return sum(rows) / len(rows)


def sweep_shape_ok(tables: dict[str, dict[str, dict[str, float]]],
                   expected_settings: int) -> bool:
    if len(tables) != expected_settings:
        return False
    for rows in tables.values():
        if set(rows) != {m.value for m in MISSION_ORDER}:
            return False
        for row in rows.values():
            if not all(b in row for b in RATING_BUCKETS):
                return False
    return True
