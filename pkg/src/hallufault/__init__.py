"""Deterministic hallucination-injection test bench for an intersection-crossing AV."""
from .engine import Outcome, RunLog, RunResult, mix_seed, run
from .experiments import Condition, RunRecord, condition_matrix, consolidate, run_batch
from .hallucination import HIConfig
from .world import ScenarioConfig

__version__ = "0.1.0"

__all__ = [
    "Outcome", "RunLog", "RunResult", "mix_seed", "run",
    "Condition", "RunRecord", "condition_matrix", "consolidate", "run_batch",
    "HIConfig", "ScenarioConfig",
]
