"""Deterministic discrete-event simulation of speculative sessions."""
from .engine import EventKind, EventQueue
from .links import BandwidthSchedule, bandwidth_schedule_step, transfer_time
from .methods import ABLATION, METHODS, COMPARISON, Method, get_method
from .session import (
    ClientResult,
    SimOptions,
    SimulationError,
    SpecRoundTranscript,
    ecs_from_transcripts,
    power_trace,
    read_transcripts,
    run_multi_client,
    run_session,
    write_transcripts,
)

__all__ = [
    "ABLATION", "METHODS", "COMPARISON", "BandwidthSchedule", "ClientResult", "EventKind", "EventQueue",
    "Method", "SimOptions", "SimulationError", "SpecRoundTranscript", "bandwidth_schedule_step",
    "ecs_from_transcripts", "get_method", "power_trace", "read_transcripts", "run_multi_client",
    "run_session", "transfer_time", "write_transcripts",
]
