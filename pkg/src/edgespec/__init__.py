"""Cloud-edge speculative decoding scheduling laboratory."""
from .core import (
    BatchingStrategy,
    PipelineParams,
    RunMetrics,
    ScenarioConfig,
    TriggerThresholds,
    ValidationError,
    VerificationResult,
    load_scenario,
)

__version__ = "0.1.0"

__all__ = [
    "BatchingStrategy",
    "PipelineParams",
    "RunMetrics",
    "ScenarioConfig",
    "TriggerThresholds",
    "ValidationError",
    "VerificationResult",
    "load_scenario",
]
