"""Pipeline timing model, optimal token batching and baseline policies."""
from ._backend import BACKEND
from .batching import (
    BatchRecord,
    BatchTimeline,
    DpResult,
    brute_force_batching,
    dp_optimal_batching,
    evaluate_timeline,
    greedy_timeline,
    immediate_send_timeline,
    no_early_upload_timeline,
    window_cut_points,
)

__all__ = [
    "BACKEND",
    "BatchRecord",
    "BatchTimeline",
    "DpResult",
    "brute_force_batching",
    "dp_optimal_batching",
    "evaluate_timeline",
    "greedy_timeline",
    "immediate_send_timeline",
    "no_early_upload_timeline",
    "window_cut_points",
]
