"""Discrete-event simulation of edge clients sharing one cloud verifier.

Each edge drafts tokens back to back, cuts them into uplink batches per its
batching policy, and asks the cloud to verify when its trigger fires. The
cloud runs one verification at a time in arrival order across clients.
All times are integer microseconds.
"""
from __future__ import annotations

import hashlib
import json
import struct
from collections import deque
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Optional, Sequence, Union

from ..autotune import BayesOptimizer
from ..core import US_PER_MS, US_PER_S, PipelineParams, RunMetrics, ScenarioConfig, ValidationError
from ..monitor import EnvironmentMonitor, PROBE_SIZES, missing_probe_sizes
from ..scheduler import dp_optimal_batching
from ..trigger import TriggerPolicy
from ..verifier import CloudSession
from ..workload import DraftModel, DraftModelConfig, TargetOracle, ecs, energy_integrate, sample_power_trace
from .engine import EventKind, EventQueue
from .links import BandwidthSchedule, transfer_time
from .methods import Method, get_method


class SimulationError(RuntimeError):
    pass


def derive_seed(*parts: int) -> int:
    d = hashlib.blake2b(struct.pack(f">{len(parts)}q", *parts), digest_size=8).digest()
    return struct.unpack(">q", d)[0] & 0x7FFF_FFFF_FFFF


@dataclass
class SimOptions:
    """Charged overheads and guards.

    ``bo_cost_ms`` is charged per surrogate-guided suggestion,
    ``dp_cost_per_op_us`` per DP inner-loop operation and
    ``fit_cost_ms`` per least-squares refit; all delay drafting.
    """

    bo_cost_ms: float = 10.0
    dp_cost_per_op_us: float = 1.0
    fit_cost_ms: float = 0.1
    bo_trial_tokens: int = 20
    bootstrap_probes: bool = True
    max_sim_time_s: Optional[float] = None
    identical_clients: bool = False


@dataclass
class BatchSend:
    first: int
    last: int
    epoch: int
    cut_time: int
    comm_start: int = -1
    comm_end: int = -1
    probe: bool = False
    nav_round: Optional[int] = None
    sealed: bool = False
    tokens: list = field(default_factory=list, repr=False)

    @property
    def size(self) -> int:
        return self.last - self.first + 1


@dataclass
class SpecRoundTranscript:
    index: int
    client: int
    epoch: int
    start: int
    end: int
    tokens: list
    confidences: list
    reason: str
    c1_at_trigger: float
    trigger_time: int
    batches: list = field(default_factory=list)
    request_arrival: int = -1
    nav_start: int = -1
    nav_end: int = -1
    result_time: int = -1
    verify_start: int = -1
    n_accepted: int = -1
    n_submitted: int = -1
    correction: Optional[int] = None
    bonus: Optional[int] = None
    kept: Optional[bool] = None
    dropped: bool = False

    def to_json(self) -> dict:
        d = asdict(self)
        d["batches"] = [{k: v for k, v in b.items() if k != "tokens"} for b in d["batches"]]
        return d


@dataclass
class ClientResult:
    client: int
    seed: int
    metrics: RunMetrics
    transcripts: list
    output: list
    uplink: list
    n_hat_trace: list
    thresholds: tuple

    def __iter__(self):
        # unpacks as (metrics, transcripts)
        yield self.metrics
        yield self.transcripts


@dataclass
class _Nav:
    edge: "_Edge"
    round: SpecRoundTranscript


class _Cloud:
    def __init__(self, sim: "Simulation"):
        self.sim = sim
        self.queue: deque = deque()
        self.busy = False
        self.intervals: list[tuple[int, int, int]] = []
        self.dropped = 0

    def submit(self, edge: "_Edge", rnd: SpecRoundTranscript) -> None:
        self.queue.append(_Nav(edge, rnd))
        self._serve()

    def _serve(self) -> None:
        if self.busy or not self.queue:
            return
        self.busy = True
        self.sim.events.schedule(self.sim.events.now, EventKind.NAV_START, self._on_start)

    def _on_start(self) -> None:
        now = self.sim.events.now
        while self.queue:
            job = self.queue.popleft()
            rnd = job.round
            sess = job.edge.cloud_session
            if not sess.admissible(rnd.start, rnd.end, rnd.epoch):
                self.dropped += 1
                continue
            v_start = max(rnd.start, sess.confirmed + 1)
            n_sub = max(0, rnd.end - v_start + 1)
            sc = self.sim.scenario
            dur = int(round((sc.nav_base_latency + sc.nav_per_token_latency * n_sub) * US_PER_MS))
            rnd.nav_start = now
            self.sim.events.schedule(now + dur, EventKind.NAV_END, self._on_end, job)
            return
        self.busy = False

    def _on_end(self, job: _Nav) -> None:
        now = self.sim.events.now
        rnd = job.round
        outcome = job.edge.cloud_session.verify(rnd.start, rnd.end, rnd.epoch)
        rnd.nav_end = now
        self.intervals.append((rnd.nav_start, now, job.edge.cid))
        sc = self.sim.scenario
        bits = sc.result_payload_bytes * 8
        delay = int(round(sc.downlink_startup * US_PER_MS)) + transfer_time(bits, job.edge.down.at(now))
        self.sim.events.schedule(now + delay, EventKind.RESULT_DELIVER_END, job.edge.on_result, rnd, outcome)
        self.busy = False
        self._serve()


class _Edge:
    def __init__(self, sim: "Simulation", cid: int, seed: int):
        self.sim = sim
        self.cid = cid
        self.seed = seed
        sc = sim.scenario
        m = sim.method
        self.method = m
        self.oracle = TargetOracle(seed, sc.vocab_size)
        draft_cfg = DraftModelConfig(sc.draft_beta_a, sc.draft_beta_b, sc.draft_kappa, seed, sc.draft_hard_rate,
                                     sc.draft_hard_span, sc.draft_hard_a, sc.draft_hard_b)
        self.draft_model = DraftModel(draft_cfg, self.oracle)
        self.cloud_session = CloudSession(self.oracle)
        link_seed = derive_seed(sc.seed, seed)
        self.up = BandwidthSchedule(sc.uplink_bandwidth, link_seed, 0)
        self.down = BandwidthSchedule(sc.downlink_bandwidth, link_seed, 1)
        self.gamma = int(round(sc.gamma_ms * US_PER_MS))
        self.alpha = int(round(sc.comm_startup * US_PER_MS))
        self.token_bits = sc.token_payload_bytes * 8

        self.trigger = TriggerPolicy(m.trigger, m.r1, m.r2, m.n_fixed, sc.max_draft_len)
        self.monitor = EnvironmentMonitor(n_hat_initial=sc.n_hat_initial) if m.adaptive else None
        self.n_hat = sc.n_hat_initial
        self.params: Optional[PipelineParams] = None
        self.plan_ends: Optional[list[int]] = None
        self.plan_n = 0
        if m.batching == "dp" and not m.adaptive:
            beta = transfer_time(self.token_bits, self.up.at(0))
            self.params = PipelineParams(self.alpha, max(1, beta), self.gamma)

        self.confirmed = 0
        self.output: list[int] = []
        self.drafts: dict = {}
        self.last_drafted = 0
        self.sent_upto = 0
        self.open_start = 1
        self.epoch = 0
        self.gen_epoch = 0
        self.generating = False
        self.gen_pos = 0
        self.rounds: list[SpecRoundTranscript] = []
        self.queue: deque = deque()
        self.sending = False
        self.mode = "normal"
        self.window_base = 1
        self.proactive_base = 1
        self.busy_until = 0
        self.open_batches: list[BatchSend] = []

        self.transcripts: list[SpecRoundTranscript] = []
        self.uplink: list[BatchSend] = []
        self.n_hat_trace: list[tuple[int, int]] = [(0, self.n_hat)]
        self.drafted = 0
        self.nav_calls = 0
        self.submitted = 0
        self.accepted_drafts = 0
        self.bo_time = 0
        self.dp_time = 0
        self.pm_time = 0
        self.finish_time: Optional[int] = None
        self.final: Optional[dict] = None

        self.probes_outstanding = 0
        self.probe_records: list[tuple[int, float]] = []
        self.bootstrapped = False
        self.last_result_time = 0
        self.last_result_confirmed = 0

        self.bo: Optional[BayesOptimizer] = None
        self.bo_round = 0
        self.trial_t0 = 0
        self.trial_a0 = 0
        self.trial_warm = False
        self.trial_applied = 0
        self.last_trigger_time = 0

    # ------------------------------------------------------------------ setup

    @property
    def now(self) -> int:
        return self.sim.events.now

    def start(self) -> None:
        if self.monitor is not None and self.sim.options.bootstrap_probes:
            for size in PROBE_SIZES:
                self._enqueue_probe(size)
        elif self.monitor is not None and self.params is None:
            beta = transfer_time(self.token_bits, self.up.at(0))
            self._set_params(PipelineParams(self.alpha, max(1, beta), self.gamma))
        if self.method.tune == "bo":
            self._start_bo()
        if self.up.kind != "constant":
            self.sim.events.schedule(self.up.next_change(0), EventKind.BANDWIDTH_CHANGE, self._on_bandwidth)
        self._start_gen()

    def _on_bandwidth(self) -> None:
        now = self.now
        if self.monitor is not None:
            self.monitor.record(now / US_PER_MS, "uplink_bps", self.up.at(now))
            self.monitor.record(now / US_PER_MS, "downlink_bps", self.down.at(now))
        if not self.sim.stopped:
            self.sim.events.schedule(self.up.next_change(now), EventKind.BANDWIDTH_CHANGE, self._on_bandwidth)

    def _charge(self, us: int, bucket: str) -> None:
        self.busy_until = max(self.busy_until, self.now) + us
        setattr(self, bucket, getattr(self, bucket) + us)

    # ----------------------------------------------------------------- tuning

    def _start_bo(self) -> None:
        self.bo = BayesOptimizer(self.method.bo_budget, derive_seed(self.seed, self.cid, self.bo_round),
                                 fixed=self.method.bo_fixed)
        self.bo_round += 1
        self._bo_apply(self.bo.ask())
        self.trial_warm = False

    def _bo_apply(self, point: tuple[float, float]) -> None:
        self.trigger.set_thresholds(*point)
        self.trial_applied = self.now

    def _bo_step(self) -> None:
        bo = self.bo
        if bo is None:
            return
        if not self.trial_warm:
            # rounds triggered before the switch belong to the previous thresholds
            if self.last_trigger_time < self.trial_applied:
                return
            self.trial_warm = True
            self.trial_t0 = self.now
            self.trial_a0 = self.confirmed
            return
        gained = self.confirmed - self.trial_a0
        if gained < self.sim.options.bo_trial_tokens:
            return
        bo.tell((self.now - self.trial_t0) / US_PER_MS / gained)
        if bo.done:
            best = bo.result()
            self._bo_apply((best.r1, best.r2))
            self.bo = None
            if self.monitor is not None:
                # exploration windows are not a baseline for drift detection
                self.monitor.reset_tpt_baseline()
        else:
            before = bo.suggestions
            point = bo.ask()
            if bo.suggestions > before:
                self._charge(int(round(self.sim.options.bo_cost_ms * US_PER_MS)), "bo_time")
            self._bo_apply(point)
            self.trial_warm = False

    # --------------------------------------------------------- scheduling/DP

    def _set_params(self, params: PipelineParams) -> None:
        self.params = params
        self._replan()

    def _replan(self) -> None:
        if self.method.batching != "dp" or self.params is None:
            return
        res = dp_optimal_batching(self.n_hat, self.params)
        self.plan_ends = res.strategy.batch_ends()
        self.plan_n = self.n_hat
        self._charge(int(round(res.ops * self.sim.options.dp_cost_per_op_us)), "dp_time")
        if self.mode == "normal":
            self.window_base = self.sent_upto + 1

    def _enqueue_probe(self, size: int) -> None:
        self.probes_outstanding += 1
        self.queue.append(BatchSend(1, size, -1, self.now, probe=True))
        self._pump()

    def _on_probe_done(self, b: BatchSend) -> None:
        dur = b.comm_end - b.comm_start
        self.pm_time += dur
        self.probe_records.append((b.size, dur / US_PER_MS))
        self.probes_outstanding -= 1
        if self.probes_outstanding:
            return
        fit_us = int(round(self.sim.options.fit_cost_ms * US_PER_MS))
        if not self.bootstrapped:
            self.bootstrapped = True
            est = self.monitor.bootstrap(self.probe_records, self.gamma / US_PER_MS)
            self._charge(fit_us, "pm_time")
            self._set_params(est.to_params())
        else:
            self._refit(self.probe_records)
        self.probe_records = []

    def _refit(self, extra=()) -> None:
        est, changed = self.monitor.refresh(extra)
        self._charge(int(round(self.sim.options.fit_cost_ms * US_PER_MS)), "pm_time")
        if changed:
            self._set_params(est.to_params())

    def _maybe_refresh(self) -> None:
        mon = self.monitor
        if mon is None or not self.bootstrapped or self.probes_outstanding:
            return
        if not mon.comm_window_ready():
            return
        records = mon.comm.snapshot()
        missing = missing_probe_sizes(records, target=2)
        if missing:
            for size in missing:
                self._enqueue_probe(size)
        else:
            self._refit()

    # ------------------------------------------------------------- drafting

    def _start_gen(self) -> None:
        if self.generating or self.sim.stopped:
            return
        if len(self.rounds) >= (2 if self.method.proactive else 1):
            return
        pos = self.last_drafted + 1
        start = max(self.now, self.busy_until)
        self.generating = True
        self.gen_pos = pos
        self.sim.events.schedule(start + self.gamma, EventKind.TOKEN_GENERATED, self._on_token, pos, self.gen_epoch)

    def _cancel_gen(self) -> None:
        self.gen_epoch += 1
        self.generating = False

    def _on_token(self, pos: int, gen_epoch: int) -> None:
        if gen_epoch != self.gen_epoch:
            return
        self.generating = False
        tok = self.draft_model.draft(pos)
        self.drafts[pos] = tok
        self.last_drafted = pos
        self.drafted += 1
        if self.monitor is not None:
            self.monitor.add_generation(1, self.gamma / US_PER_MS)
        decision = self.trigger.observe(tok.confidence)
        if decision.fire:
            self._fire(decision)
        else:
            self._advance_batches()
        self._start_gen()

    # -------------------------------------------------------------- batching

    def _cut(self, first: int, last: int) -> None:
        b = BatchSend(first, last, self.epoch, self.now,
                      tokens=[self.drafts[p].token_id for p in range(first, last + 1)])
        self.queue.append(b)
        self.open_batches.append(b)
        self.sent_upto = last
        self._pump()

    def _next_cut(self) -> Optional[int]:
        m = self.method
        if self.mode == "proactive":
            if not m.proactive_send or m.batching in ("greedy", "immediate"):
                return None
            base = self.proactive_base - 1
            k = (self.sent_upto - base) // self.n_hat + 1
            return base + k * self.n_hat
        if m.batching != "dp" or self.plan_ends is None:
            return None
        base = self.window_base - 1
        rel = self.sent_upto - base
        w, r = divmod(rel, self.plan_n)
        for e in self.plan_ends:
            if e > r:
                return base + w * self.plan_n + e
        return base + (w + 1) * self.plan_n + self.plan_ends[0]

    def _advance_batches(self) -> None:
        m = self.method
        sending_allowed = self.mode == "normal" or m.proactive_send
        if m.batching == "greedy":
            if sending_allowed and not self.sending and not self.queue and self.last_drafted > self.sent_upto:
                self._cut(self.sent_upto + 1, self.last_drafted)
            return
        if m.batching == "immediate":
            while sending_allowed and self.sent_upto < self.last_drafted:
                self._cut(self.sent_upto + 1, self.sent_upto + 1)
            return
        while True:
            cut = self._next_cut()
            if cut is None or cut > self.last_drafted:
                return
            self._cut(self.sent_upto + 1, cut)

    def _fire(self, decision) -> None:
        start, end = self.open_start, self.last_drafted
        rnd = SpecRoundTranscript(
            index=len(self.transcripts), client=self.cid, epoch=self.epoch, start=start, end=end,
            tokens=[self.drafts[p].token_id for p in range(start, end + 1)],
            confidences=[self.drafts[p].confidence for p in range(start, end + 1)],
            reason=decision.reason.value, c1_at_trigger=decision.c1_at_trigger, trigger_time=self.now,
        )
        # flush: unsent tokens plus queued-but-unstarted data batches go as one
        pulled = [b for b in self.queue if not (b.probe or b.sealed) and b.nav_round is None and b.epoch == self.epoch]
        first = pulled[0].first if pulled else self.sent_upto + 1
        self.queue = deque(b for b in self.queue if b not in pulled)
        # with a verification outstanding, the request waits for its result
        held = bool(self.rounds)
        flush = BatchSend(first, end, self.epoch, self.now, nav_round=None if held else rnd.index, sealed=True,
                          tokens=[self.drafts[p].token_id for p in range(first, end + 1)])
        self.queue.append(flush)
        rnd.batches = [b for b in self.open_batches if b not in pulled] + [flush]
        self.open_batches = []
        self.sent_upto = end
        self.transcripts.append(rnd)
        self.rounds.append(rnd)
        self.open_start = end + 1
        self.mode = "proactive"
        self.proactive_base = end + 1
        self._pump()

    # -------------------------------------------------------------- channel

    def _pump(self) -> None:
        if self.sending or not self.queue:
            return
        self.sending = True
        self.sim.events.schedule(self.now, EventKind.BATCH_SEND_START, self._on_send_start)

    def _on_send_start(self) -> None:
        if not self.queue:
            self.sending = False
            return
        b = self.queue.popleft()
        now = self.now
        size = max(b.size, 0)
        b.comm_start = now
        b.comm_end = now + self.alpha + transfer_time(size * self.token_bits, self.up.at(now))
        self.sim.events.schedule(b.comm_end, EventKind.BATCH_SEND_END, self._on_send_end, b)

    def _on_send_end(self, b: BatchSend) -> None:
        self.sending = False
        self.uplink.append(b)
        if b.probe:
            self._on_probe_done(b)
        else:
            self.cloud_session.receive(b.epoch, b.first, b.tokens)
            if self.monitor is not None and b.size > 0 and b.epoch == self.epoch:
                self.monitor.add_comm(b.size, (b.comm_end - b.comm_start) / US_PER_MS)
            if b.nav_round is not None:
                rnd = self.transcripts[b.nav_round]
                rnd.request_arrival = self.now
                self.sim.cloud.submit(self, rnd)
            self._maybe_refresh()
        self._pump()
        self._advance_batches()

    # --------------------------------------------------------------- results

    def on_result(self, rnd: SpecRoundTranscript, outcome) -> None:
        now = self.now
        if not self.rounds or self.rounds[0] is not rnd:
            raise SimulationError(f"client {self.cid}: result for round {rnd.index} out of order")
        self.rounds.pop(0)
        res, v = outcome.result, outcome.verify_start
        if len(self.output) != v - 1:
            raise SimulationError(f"client {self.cid}: verified from {v} but {len(self.output)} tokens confirmed")
        accepted = [self.drafts[p].token_id for p in range(v, v + res.n_accepted)]
        self.output.extend(accepted)
        self.output.append(res.next_token)
        self.confirmed = v + res.n_accepted
        rnd.result_time = now
        rnd.verify_start = v
        rnd.n_accepted, rnd.n_submitted = res.n_accepted, res.n_submitted
        rnd.correction, rnd.bonus = res.correction, res.bonus
        self.nav_calls += 1
        self.submitted += res.n_submitted
        self.accepted_drafts += res.n_accepted
        self.trigger.after_nav(rnd.c1_at_trigger, res.n_accepted, res.n_submitted)

        has_proactive = self.last_drafted >= self.confirmed or (self.generating and self.gen_pos >= self.confirmed)
        head = self.drafts.get(self.confirmed)
        keep = res.all_accepted and (head is None or head.token_id == res.bonus)
        if res.all_accepted and head is not None:
            # the first proactive draft is judged against the target's extra token
            self.submitted += 1
            self.accepted_drafts += int(keep)
        if has_proactive:
            rnd.kept = keep
        if keep:
            for p in [p for p in self.drafts if p <= self.confirmed]:
                del self.drafts[p]
            if self.generating and self.gen_pos <= self.confirmed:
                self._cancel_gen()
            self.last_drafted = max(self.last_drafted, self.confirmed)
            self.sent_upto = max(self.sent_upto, self.confirmed)
            if self.open_start <= self.confirmed:
                self.open_start = self.confirmed + 1
                self.proactive_base = max(self.proactive_base, self.open_start)
            self.trigger.reset([self.drafts[p].confidence for p in range(self.open_start, self.last_drafted + 1)])
        else:
            self.epoch = rnd.epoch + 1
            for r in self.rounds:
                r.dropped = True
            self.rounds = []
            self.drafts = {}
            self.last_drafted = self.confirmed
            self.sent_upto = self.confirmed
            self.open_start = self.confirmed + 1
            self.queue = deque(b for b in self.queue if b.probe)
            self.open_batches = []
            self._cancel_gen()
            self.trigger.reset()
        if self.rounds:
            # the held proactive round goes out now as a request-only message
            nxt = self.rounds[0]
            self.queue.append(BatchSend(nxt.end + 1, nxt.end, self.epoch, now, nav_round=nxt.index, sealed=True))
            nxt.batches.append(self.queue[-1])
            self._pump()
        else:
            self.mode = "normal"
            self.window_base = self.sent_upto + 1

        self.last_trigger_time = rnd.trigger_time
        self._after_round(res.n_submitted)
        if self.finish_time is None and self.confirmed >= self.sim.target:
            self._finish()
        self._advance_batches()
        self._start_gen()

    def _after_round(self, n_submitted: int) -> None:
        now = self.now
        mon = self.monitor
        if mon is not None:
            gained = self.confirmed - self.last_result_confirmed
            retune = gained > 0 and mon.add_accepted(gained, (now - self.last_result_time) / US_PER_MS)
            if n_submitted > 0:
                old = self.n_hat
                self.n_hat = mon.add_draft_length(n_submitted)
                if self.n_hat != old:
                    self.n_hat_trace.append((now, self.n_hat))
                    self._replan()
            if self.bootstrapped and mon.gamma_changed():
                self._set_params(mon.estimates.to_params())
            if retune and self.method.tune == "bo" and self.bo is None:
                mon.reset_tpt_baseline()
                self._start_bo()
        self.last_result_time = now
        self.last_result_confirmed = self.confirmed
        self._bo_step()

    def _finish(self) -> None:
        self.finish_time = self.now
        self.final = dict(
            total_time=self.now, accepted_tokens=self.confirmed, nav_calls=self.nav_calls,
            drafted_tokens=self.drafted, submitted=self.submitted, accepted_drafts=self.accepted_drafts,
            bo_time=self.bo_time, dp_time=self.dp_time, pm_time=self.pm_time,
        )
        self.sim.client_finished()


def power_trace(intervals: Sequence[tuple[int, int]], horizon: int, scenario: ScenarioConfig) -> list[tuple[float, float]]:
    """Cloud power samples (seconds, watts) over ``[0, horizon)`` µs."""
    step = int(round(scenario.power_sample_interval * US_PER_MS))
    spans = sorted((s, min(e, horizon)) for s, e in intervals if s < horizon)
    trace = sample_power_trace(spans, horizon, step, scenario.cloud_idle_power, scenario.cloud_verify_power)
    return [(t / US_PER_S, w) for t, w in trace]


def session_energy(intervals: Sequence[tuple[int, int]], horizon: int, scenario: ScenarioConfig) -> float:
    return energy_integrate(power_trace(intervals, horizon, scenario), horizon / US_PER_S)


def ecs_from_transcripts(transcripts: Sequence[SpecRoundTranscript | dict], horizon: int,
                         accepted: int, scenario: ScenarioConfig, share: int = 1) -> float:
    """Recompute ECS from the verification intervals recorded in a transcript."""
    spans = []
    for t in transcripts:
        d = t if isinstance(t, dict) else asdict(t)
        if d["nav_end"] >= 0:
            spans.append((d["nav_start"], d["nav_end"]))
    return ecs(session_energy(spans, horizon, scenario) / share, accepted)


class Simulation:
    def __init__(self, scenario: ScenarioConfig, method: Union[Method, str], seed: int,
                 target_accepted_tokens: int, n_clients: int = 1, options: Optional[SimOptions] = None):
        if target_accepted_tokens < 1:
            raise ValidationError("target_accepted_tokens must be >= 1")
        if n_clients < 1:
            raise ValidationError("n_clients must be >= 1")
        self.scenario = scenario
        self.method = get_method(method) if isinstance(method, str) else method
        self.seed = seed
        self.target = target_accepted_tokens
        self.options = options or SimOptions()
        self.events = EventQueue()
        self.cloud = _Cloud(self)
        self.stopped = False
        seeds = [seed if (i == 0 or self.options.identical_clients) else derive_seed(seed, i) for i in range(n_clients)]
        self.edges = [_Edge(self, i, s) for i, s in enumerate(seeds)]
        self._finished = 0

    def client_finished(self) -> None:
        self._finished += 1
        if self._finished == len(self.edges):
            self.stopped = True

    def run(self) -> list[ClientResult]:
        limit_s = self.options.max_sim_time_s
        if limit_s is None:
            limit_s = 60.0 + 10.0 * self.target
        limit = int(limit_s * US_PER_S)
        for e in self.edges:
            self.events.schedule(0, EventKind.CLIENT_REQUEST_START, e.start)
        while not self.stopped:
            if not self.events.step():
                raise SimulationError("simulation stalled before every client reached its target")
            if self.events.now > limit:
                raise SimulationError(
                    f"simulated time exceeded {limit_s:g} s before reaching {self.target} accepted tokens"
                )
        return [self._result(e) for e in self.edges]

    def _result(self, e: _Edge) -> ClientResult:
        f = e.final
        horizon = f["total_time"]
        share = len(self.edges)
        spans = [(s, t) for s, t, _ in self.cloud.intervals]
        energy = session_energy(spans, horizon, self.scenario) / share
        metrics = RunMetrics(
            total_time=horizon,
            accepted_tokens=f["accepted_tokens"],
            ecs=ecs(energy, f["accepted_tokens"]),
            verification_frequency=f["nav_calls"] / f["accepted_tokens"],
            mean_draft_length=f["submitted"] / f["nav_calls"],
            acceptance_rate=f["accepted_drafts"] / f["submitted"] if f["submitted"] else 0.0,
            nav_calls=f["nav_calls"],
            drafted_tokens=f["drafted_tokens"],
            bo_time=f["bo_time"],
            dp_time=f["dp_time"],
            pm_time=f["pm_time"],
        )
        transcripts = [t for t in e.transcripts if t.trigger_time <= horizon]
        uplink = [b for b in e.uplink if b.comm_end <= horizon]
        return ClientResult(e.cid, e.seed, metrics, transcripts, e.output[: f["accepted_tokens"]], uplink,
                            e.n_hat_trace, (e.trigger.r1, e.trigger.r2))


def run_multi_client(scenario: ScenarioConfig, n_clients: int, method: Union[Method, str], seed: int,
                     target_accepted_tokens: int = 1000, options: Optional[SimOptions] = None) -> list[ClientResult]:
    """Clients keep drafting until every one of them reaches the target (full load)."""
    return Simulation(scenario, method, seed, target_accepted_tokens, n_clients, options).run()


def run_session(scenario: ScenarioConfig, method: Union[Method, str], target_accepted_tokens: int,
                seed: int, options: Optional[SimOptions] = None) -> ClientResult:
    return run_multi_client(scenario, 1, method, seed, target_accepted_tokens, options)[0]


def write_transcripts(path: Union[str, Path], transcripts: Sequence[SpecRoundTranscript]) -> None:
    with open(path, "w") as fh:
        for t in transcripts:
            fh.write(json.dumps(t.to_json()) + "\n")


def read_transcripts(path: Union[str, Path]) -> list[dict]:
    with open(path) as fh:
        return [json.loads(line) for line in fh if line.strip()]
