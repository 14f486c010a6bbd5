from .missions import Mission, classify_mission, load_rubric
from .risk import RiskConfig, RiskScore, compute_risk_intensity
from .corpus import CorpusBox, CorpusStore, sample_corpus, score_box
from .prompts import InputBundle, PromptBundle, build_input_bundle, generate_prompt
from .llm import (
    Decision,
    HttpLlmClient,
    MockLlmClient,
    invoke_llm,
    parse_decision,
    severity_for_risk,
)
from .loop import (
    DecisionFrame,
    PassiveMonitor,
    QueryJob,
    SafetyAlert,
    build_evidence,
    emit_alert,
    finalize_episode,
    submit_active_query,
)

__all__ = [
    "Mission", "classify_mission", "load_rubric",
    "RiskConfig", "RiskScore", "compute_risk_intensity",
    "CorpusBox", "CorpusStore", "sample_corpus", "score_box",
    "InputBundle", "PromptBundle", "build_input_bundle", "generate_prompt",
    "Decision", "HttpLlmClient", "MockLlmClient", "invoke_llm",
    "parse_decision", "severity_for_risk",
    "DecisionFrame", "PassiveMonitor", "QueryJob", "SafetyAlert",
    "build_evidence", "emit_alert", "finalize_episode", "submit_active_query",
]
