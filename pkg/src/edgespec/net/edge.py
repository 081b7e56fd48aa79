"""Edge side of the harness: drafter and transmitter tasks around a bounded queue.

The drafter owns all speculative state (drafts, rounds, trigger, plan) and is
the only task that mutates it; the transmitter drains the send queue through
the link shaper and reports timings back; the receiver turns NAV_RESULT
frames into messages for the drafter.
"""
from __future__ import annotations

import asyncio
import time
from dataclasses import dataclass, field
from typing import Optional, Union

from ..autotune import BayesOptimizer
from ..core import RunMetrics, ScenarioConfig
from ..monitor import EnvironmentMonitor, PROBE_SIZES, estimate_gamma, missing_probe_sizes
from ..scheduler import dp_optimal_batching
from ..sim.methods import Method, get_method
from ..sim.session import derive_seed, session_energy
from ..trigger import TriggerPolicy
from ..workload import DraftModel, DraftModelConfig, TargetOracle, ecs
from .protocol import Bye, DraftBatch, Frame, FrameError, Hello, NavRequest, NavResult, Probe, encode_frame, read_frame
from .throttle import Shaper

BO_TRIAL_TOKENS = 20


class EdgeError(RuntimeError):
    pass


@dataclass
class EdgeConfig:
    scenario: ScenarioConfig
    method: Union[Method, str] = "pipesd"
    seed: int = 0
    target_tokens: int = 200
    gen_delay_ms: float = 0.0
    rate_bps: Optional[float] = None
    startup_ms: float = 0.0
    pad_bytes_per_token: int = 0
    bootstrap_probes: bool = True
    queue_size: int = 64
    session_id: int = 1
    timeout_s: float = 120.0

    def __post_init__(self):
        if isinstance(self.method, str):
            self.method = get_method(self.method)
        if self.target_tokens < 1:
            raise ValueError("target_tokens must be >= 1")
        if self.queue_size < 1:
            raise ValueError("queue_size must be >= 1")


@dataclass
class EdgeResult:
    metrics: Optional[RunMetrics]
    output: list[int]
    comm_records: list[tuple[int, float]] = field(default_factory=list)
    probe_records: list[tuple[int, float]] = field(default_factory=list)
    nav_calls: int = 0
    aborted: bool = False
    error: str = ""


@dataclass
class _Round:
    index: int
    start: int
    end: int
    epoch: int
    c1: float


@dataclass
class _Send:
    frame: Frame
    kind: str  # "data", "probe" or "request"
    epoch: int = 0
    size: int = 0


class _Edge:
    def __init__(self, cfg: EdgeConfig):
        self.cfg = cfg
        sc = cfg.scenario
        m: Method = cfg.method
        self.m = m
        self.oracle = TargetOracle(cfg.seed, sc.vocab_size)
        self.draft_model = DraftModel(
            DraftModelConfig(sc.draft_beta_a, sc.draft_beta_b, sc.draft_kappa, cfg.seed, sc.draft_hard_rate,
                             sc.draft_hard_span, sc.draft_hard_a, sc.draft_hard_b), self.oracle)
        self.draft_model.prepare()
        self.trigger = TriggerPolicy(m.trigger, m.r1, m.r2, m.n_fixed, sc.max_draft_len)
        self.monitor = EnvironmentMonitor(n_hat_initial=sc.n_hat_initial) if m.adaptive else None
        self.n_hat = sc.n_hat_initial
        self.plan_ends: Optional[list[int]] = None
        self.plan_n = 0

        self.sendq: asyncio.Queue = asyncio.Queue(cfg.queue_size)
        self.results: asyncio.Queue = asyncio.Queue()
        self.confirmed = 0
        self.output: list[int] = []
        self.drafts: dict = {}
        self.last_drafted = 0
        self.sent_upto = 0
        self.open_start = 1
        self.epoch = 0
        self.rounds: list[_Round] = []
        self.n_rounds = 0
        self.mode = "normal"
        self.window_base = 1
        self.proactive_base = 1
        self.in_flight = 0

        self.comm_records: list[tuple[int, float]] = []
        self.probe_records: list[tuple[int, float]] = []
        self.probes_pending = 0
        self.bootstrapped = False
        self.nav_spans: list[tuple[int, int]] = []
        self.drafted = self.nav_calls = self.submitted = self.accepted_drafts = 0

        self.bo: Optional[BayesOptimizer] = None
        self.bo_round = 0
        self.trial_t0 = 0.0
        self.trial_a0 = 0
        self.last_result_t = 0.0
        self.last_result_confirmed = 0
        self.t0 = 0.0

    # ------------------------------------------------------------ helpers

    def _now(self) -> float:
        return time.perf_counter() - self.t0

    def _frame(self, body, round_id: int = 0) -> Frame:
        return Frame(self.cfg.session_id, round_id, body)

    async def _put(self, item: _Send) -> None:
        if item.kind == "data":
            self.in_flight += 1
        await self.sendq.put(item)

    async def _cut(self, first: int, last: int) -> None:
        toks = [self.drafts[p] for p in range(first, last + 1)]
        body = DraftBatch(self.epoch, first, tuple(t.token_id for t in toks),
                          tuple(round(t.confidence, 6) for t in toks), self.cfg.pad_bytes_per_token * len(toks))
        self.sent_upto = last
        await self._put(_Send(self._frame(body), "data", self.epoch, len(toks)))

    def _replan(self) -> None:
        if self.m.batching != "dp" or self.monitor is None or self.monitor.estimates is None:
            return
        res = dp_optimal_batching(self.n_hat, self.monitor.estimates.to_params())
        self.plan_ends = res.strategy.batch_ends()
        self.plan_n = self.n_hat
        if self.mode == "normal":
            self.window_base = self.sent_upto + 1

    def _next_cut(self) -> Optional[int]:
        if self.mode == "proactive":
            if not self.m.proactive_send:
                return None
            base = self.proactive_base - 1
            return base + ((self.sent_upto - base) // self.n_hat + 1) * self.n_hat
        if self.m.batching != "dp" or self.plan_ends is None:
            return None
        base = self.window_base - 1
        w, r = divmod(self.sent_upto - base, self.plan_n)
        for e in self.plan_ends:
            if e > r:
                return base + w * self.plan_n + e
        return base + (w + 1) * self.plan_n + self.plan_ends[0]

    async def _advance(self) -> None:
        b = self.m.batching
        if self.mode == "proactive" and not self.m.proactive_send:
            return
        if b == "greedy":
            if self.in_flight == 0 and self.last_drafted > self.sent_upto:
                await self._cut(self.sent_upto + 1, self.last_drafted)
            return
        if b == "immediate":
            while self.sent_upto < self.last_drafted:
                await self._cut(self.sent_upto + 1, self.sent_upto + 1)
            return
        while True:
            cut = self._next_cut()
            if cut is None or cut > self.last_drafted:
                return
            await self._cut(self.sent_upto + 1, cut)

    async def _request(self, rnd: _Round) -> None:
        await self._put(_Send(self._frame(NavRequest(rnd.epoch, rnd.start, rnd.end), rnd.index), "request", rnd.epoch))

    # ----------------------------------------------------------- drafting

    def _may_draft(self) -> bool:
        return len(self.rounds) < (2 if self.m.proactive else 1)

    async def _draft_one(self) -> None:
        pos = self.last_drafted + 1
        t = time.perf_counter()
        await asyncio.sleep(self.cfg.gen_delay_ms / 1000.0)
        tok = self.draft_model.draft(pos)
        self.drafts[pos] = tok
        self.last_drafted = pos
        self.drafted += 1
        if self.monitor is not None:
            self.monitor.add_generation(1, (time.perf_counter() - t) * 1000.0)
        decision = self.trigger.observe(tok.confidence)
        if decision.fire:
            await self._fire(decision.c1_at_trigger)
        else:
            await self._advance()

    async def _fire(self, c1: float) -> None:
        start, end = self.open_start, self.last_drafted
        if self.sent_upto < end:
            await self._cut(self.sent_upto + 1, end)
        rnd = _Round(self.n_rounds, start, end, self.epoch, c1)
        self.n_rounds += 1
        self.rounds.append(rnd)
        if len(self.rounds) == 1:
            await self._request(rnd)
        self.open_start = end + 1
        self.proactive_base = end + 1
        self.mode = "proactive"

    # ------------------------------------------------------------ results

    async def _on_result(self, frame: Frame) -> None:
        res: NavResult = frame.body
        if not self.rounds or frame.round_id != self.rounds[0].index:
            raise EdgeError(f"unexpected result for round {frame.round_id}")
        if res.stale:
            raise EdgeError(f"server judged round {frame.round_id} stale")
        rnd = self.rounds.pop(0)
        now_us = int(self._now() * 1e6)
        self.nav_spans.append((max(0, now_us - res.nav_us), now_us))
        v = res.verify_start
        if len(self.output) != v - 1:
            raise EdgeError(f"verified from {v} but {len(self.output)} tokens confirmed")
        self.output.extend(self.drafts[p].token_id for p in range(v, v + res.n_accepted))
        self.output.append(res.next_token)
        self.confirmed = v + res.n_accepted
        self.nav_calls += 1
        self.submitted += res.n_submitted
        self.accepted_drafts += res.n_accepted
        self.trigger.after_nav(rnd.c1, res.n_accepted, res.n_submitted)

        head = self.drafts.get(self.confirmed)
        keep = res.all_accepted and (head is None or head.token_id == res.bonus)
        if res.all_accepted and head is not None:
            self.submitted += 1
            self.accepted_drafts += int(keep)
        if keep:
            for p in [p for p in self.drafts if p <= self.confirmed]:
                del self.drafts[p]
            self.last_drafted = max(self.last_drafted, self.confirmed)
            self.sent_upto = max(self.sent_upto, self.confirmed)
            if self.open_start <= self.confirmed:
                self.open_start = self.confirmed + 1
                self.proactive_base = max(self.proactive_base, self.open_start)
            self.trigger.reset([self.drafts[p].confidence for p in range(self.open_start, self.last_drafted + 1)])
        else:
            self.epoch = rnd.epoch + 1
            self.rounds = []
            self.drafts = {}
            self.last_drafted = self.sent_upto = self.confirmed
            self.open_start = self.confirmed + 1
            self.trigger.reset()
        if self.rounds:
            await self._request(self.rounds[0])
        else:
            self.mode = "normal"
            self.window_base = self.sent_upto + 1
        self._after_round(res.n_submitted)

    def _after_round(self, n_submitted: int) -> None:
        now = self._now()
        mon = self.monitor
        if mon is not None:
            gained = self.confirmed - self.last_result_confirmed
            retune = gained > 0 and mon.add_accepted(gained, (now - self.last_result_t) * 1000.0)
            if n_submitted > 0:
                old = self.n_hat
                self.n_hat = mon.add_draft_length(n_submitted)
                if self.n_hat != old:
                    self._replan()
            if self.bootstrapped and mon.gamma_changed():
                self._replan()
            if retune and self.m.tune == "bo" and self.bo is None:
                mon.reset_tpt_baseline()
                self._start_bo()
        self.last_result_t = now
        self.last_result_confirmed = self.confirmed
        self._bo_step(now)

    # ------------------------------------------------------------- tuning

    def _start_bo(self) -> None:
        self.bo = BayesOptimizer(self.m.bo_budget, derive_seed(self.cfg.seed, self.bo_round), fixed=self.m.bo_fixed)
        self.bo_round += 1
        self.trigger.set_thresholds(*self.bo.ask())
        self.trial_t0, self.trial_a0 = self._now(), self.confirmed

    def _bo_step(self, now: float) -> None:
        bo = self.bo
        if bo is None:
            return
        gained = self.confirmed - self.trial_a0
        if gained < BO_TRIAL_TOKENS:
            return
        bo.tell((now - self.trial_t0) * 1000.0 / gained)
        if bo.done:
            best = bo.result()
            self.trigger.set_thresholds(best.r1, best.r2)
            self.bo = None
            if self.monitor is not None:
                self.monitor.reset_tpt_baseline()
        else:
            self.trigger.set_thresholds(*bo.ask())
        self.trial_t0, self.trial_a0 = now, self.confirmed

    # ------------------------------------------------------------- channel

    def _on_sent(self, item: _Send, ms: float) -> list[_Send]:
        """Record a finished send; returns follow-up probes to enqueue."""
        if item.kind == "data":
            self.in_flight -= 1
        if item.kind == "probe":
            self.probe_records.append((item.size, ms))
            self.probes_pending -= 1
            if self.probes_pending == 0:
                if not self.bootstrapped:
                    gen = self.monitor.gen.snapshot()
                    gamma = estimate_gamma(gen) if gen else self.cfg.scenario.gamma_ms
                    self.bootstrapped = True
                    self.monitor.bootstrap(self.probe_records, max(gamma, 1e-3))
                    self._replan()
                else:
                    _, changed = self.monitor.refresh(self.probe_records)
                    if changed:
                        self._replan()
                self.probe_records_all.extend(self.probe_records)
                self.probe_records = []
            return []
        if item.kind == "data" and item.epoch == self.epoch:
            self.comm_records.append((item.size, ms))
            mon = self.monitor
            if mon is not None:
                mon.add_comm(item.size, ms)
                if self.bootstrapped and not self.probes_pending and mon.comm_window_ready():
                    missing = missing_probe_sizes(mon.comm.snapshot(), target=2)
                    if missing:
                        return [self._probe(s) for s in missing]
                    _, changed = mon.refresh()
                    if changed:
                        self._replan()
        return []

    def _probe(self, size: int) -> _Send:
        self.probes_pending += 1
        return _Send(self._frame(Probe(size, self.cfg.pad_bytes_per_token * size + 8 * size), size), "probe", size=size)

    async def _transmit(self, shaper: Shaper) -> None:
        while True:
            item = await self.sendq.get()
            if item is None:
                return
            if item.kind == "data" and item.epoch < self.epoch:
                self.in_flight -= 1
                continue  # abandoned lineage, never leaves the edge
            pending = [item]
            while pending:
                cur = pending.pop(0)
                ms = await shaper.send(encode_frame(cur.frame))
                pending.extend(self._on_sent(cur, ms))
            if self.m.batching == "greedy" and self.in_flight == 0:
                await self.results.put(None)  # wake the drafter so it can cut

    async def _receive(self, reader: asyncio.StreamReader) -> None:
        try:
            while True:
                frame = await read_frame(reader)
                if frame is None:
                    await self.results.put(EdgeError("server closed the connection"))
                    return
                if isinstance(frame.body, Bye):
                    await self.results.put(EdgeError(f"server sent BYE {frame.body.code}: {frame.body.message}"))
                    return
                await self.results.put(frame)
        except (FrameError, ConnectionError) as exc:
            await self.results.put(EdgeError(f"receive failed: {exc}"))

    async def _handle(self, msg) -> None:
        if msg is None:
            await self._advance()
        elif isinstance(msg, Exception):
            raise msg
        else:
            await self._on_result(msg)

    # ---------------------------------------------------------------- run

    async def run(self, host: str, port: int) -> EdgeResult:
        cfg = self.cfg
        self.probe_records_all: list[tuple[int, float]] = []
        reader, writer = await asyncio.open_connection(host, port)
        shaper = Shaper(writer, cfg.rate_bps, cfg.startup_ms)
        writer.write(encode_frame(self._frame(Hello(cfg.seed, cfg.scenario.vocab_size))))
        await writer.drain()
        echo = await read_frame(reader)
        if echo is None or not isinstance(echo.body, Hello):
            raise EdgeError("server did not confirm the session")
        self.t0 = time.perf_counter()
        tx = asyncio.create_task(self._transmit(shaper))
        rx = asyncio.create_task(self._receive(reader))
        error = ""
        try:
            if self.monitor is not None and cfg.bootstrap_probes:
                for size in PROBE_SIZES:
                    await self.sendq.put(self._probe(size))
            elif self.monitor is not None:
                self.bootstrapped = True
            if self.m.tune == "bo":
                self._start_bo()
            await asyncio.wait_for(self._loop(), cfg.timeout_s)
        except (EdgeError, asyncio.TimeoutError, ConnectionError) as exc:
            error = str(exc) or type(exc).__name__
        finally:
            elapsed_us = int(self._now() * 1e6)
            tx.cancel()
            try:
                writer.write(encode_frame(self._frame(Bye(0, "done"))))
                await writer.drain()
            except ConnectionError:
                pass
            try:
                await asyncio.wait_for(rx, 2.0)
            except (asyncio.TimeoutError, asyncio.CancelledError):
                rx.cancel()
            writer.close()
            try:
                await writer.wait_closed()
            except ConnectionError:
                pass
        return EdgeResult(self._metrics(elapsed_us), list(self.output), self.comm_records,
                          self.probe_records_all, self.nav_calls, bool(error), error)

    async def _loop(self) -> None:
        target = self.cfg.target_tokens
        while self.confirmed < target:
            while not self.results.empty():
                await self._handle(self.results.get_nowait())
            if self.confirmed >= target:
                break
            if self._may_draft():
                await self._draft_one()
            else:
                await self._handle(await self.results.get())

    def _metrics(self, elapsed_us: int) -> Optional[RunMetrics]:
        if self.confirmed == 0:
            return None
        sc = self.cfg.scenario
        horizon = max(elapsed_us, 1)
        energy = session_energy(self.nav_spans, horizon, sc)
        return RunMetrics(
            total_time=elapsed_us, accepted_tokens=self.confirmed,
            ecs=ecs(energy, self.confirmed),
            verification_frequency=self.nav_calls / self.confirmed,
            mean_draft_length=self.submitted / self.nav_calls if self.nav_calls else 0.0,
            acceptance_rate=self.accepted_drafts / self.submitted if self.submitted else 0.0,
            nav_calls=self.nav_calls, drafted_tokens=self.drafted,
        )


async def run_edge(config: EdgeConfig, host: str, port: int) -> EdgeResult:
    return await _Edge(config).run(host, port)


def edge_run(config: EdgeConfig, host: str = "127.0.0.1", port: int = 7878) -> EdgeResult:
    """Run one edge session against a live server (blocking)."""
    return asyncio.run(run_edge(config, host, port))
