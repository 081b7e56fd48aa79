"""Policy bundles compared in the experiments."""
from __future__ import annotations

from dataclasses import dataclass, replace

from ..core import ValidationError

TRIGGERS = ("dual", "token", "sequence", "fixed", "edgellm")
BATCHING = ("dp", "flush", "greedy", "immediate")


@dataclass(frozen=True)
class Method:
    """How one edge drafts, batches and decides when to verify.

    ``proactive`` keeps drafting while a verification is outstanding;
    ``proactive_send`` uploads that work in period-N̂ batches instead of
    holding it until the next trigger. ``adaptive`` turns on the
    environment monitor (probing, N̂ adaptation, DP refresh).
    """

    name: str
    trigger: str
    batching: str
    r1: float = 0.3
    r2: float = 0.3
    n_fixed: int = 6
    proactive: bool = False
    proactive_send: bool = True
    tune: str = "none"
    adaptive: bool = False
    bo_budget: int = 16

    def __post_init__(self):
        if self.trigger not in TRIGGERS:
            raise ValidationError(f"unknown trigger {self.trigger!r}")
        if self.batching not in BATCHING:
            raise ValidationError(f"unknown batching {self.batching!r}")
        if self.tune not in ("none", "bo"):
            raise ValidationError(f"unknown tuning mode {self.tune!r}")
        if self.n_fixed < 1:
            raise ValidationError("n_fixed must be >= 1")
        if not (0 < self.r1 < 1 and 0 < self.r2 < 1):
            raise ValidationError("thresholds must lie in (0, 1)")

    @property
    def bo_fixed(self) -> dict[int, float]:
        """Axis pinned during tuning for single-threshold triggers."""
        if self.trigger == "token":
            return {0: self.r1}
        if self.trigger == "sequence":
            return {1: self.r2}
        return {}

    def with_overrides(self, **changes) -> "Method":
        return replace(self, **changes)


# Baseline defaults come from an offline sweep on the scenario-1 preset.
_PIPELINED = dict(batching="dp", proactive=True, tune="bo", adaptive=True)

METHODS: dict[str, Method] = {
    "vanilla": Method("vanilla", "fixed", "flush", n_fixed=6),
    "hsl": Method("hsl", "token", "flush", r2=0.99),
    "edgellm": Method("edgellm", "edgellm", "flush", r1=0.3, proactive=True),
    "pipesd": Method("pipesd", "dual", **_PIPELINED),
    "no-pipeline": Method("no-pipeline", "dual", "flush", tune="bo"),
    "fixed-pipelined": Method("fixed-pipelined", "fixed", n_fixed=6, **{**_PIPELINED, "tune": "none"}),
    "token-pipelined": Method("token-pipelined", "token", **_PIPELINED),
    "sequence-pipelined": Method("sequence-pipelined", "sequence", **_PIPELINED),
    "greedy": Method("greedy", "dual", "greedy", proactive=True, tune="bo", adaptive=True),
    "immediate": Method("immediate", "dual", "immediate", proactive=True, tune="bo", adaptive=True),
}

COMPARISON = ("vanilla", "hsl", "edgellm", "pipesd")
ABLATION = ("vanilla", "no-pipeline", "fixed-pipelined", "token-pipelined", "sequence-pipelined", "pipesd")


def get_method(name: str) -> Method:
    try:
        return METHODS[name]
    except KeyError:
        raise ValidationError(f"unknown method {name!r}; choose from {', '.join(METHODS)}") from None
