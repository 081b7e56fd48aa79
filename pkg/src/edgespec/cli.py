"""Command-line entry point: simulate, tune, schedule, serve, edge, report."""
from __future__ import annotations

import argparse
import csv
import json
import logging
import statistics
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from fractions import Fraction
from pathlib import Path
from typing import Iterable, Optional, Sequence

from .autotune import run_bo, run_grid, run_random
from .core import PRESETS, PipelineParams, ScenarioConfig, ValidationError, load_scenario
from .scheduler import BACKEND, brute_force_batching, dp_optimal_batching, greedy_timeline, immediate_send_timeline
from .scheduler.batching import BRUTE_FORCE_LIMIT, no_early_upload_timeline
from .sim import ABLATION, COMPARISON, get_method, run_session, write_transcripts

log = logging.getLogger("edgespec")

RUN_FIELDS = ("scenario", "method", "seed", "tpt", "ecs", "verification_frequency", "mean_draft_length",
              "acceptance_rate", "accepted_tokens", "total_time_us", "nav_calls", "drafted_tokens",
              "bo_time_us", "dp_time_us", "pm_time_us")


class CliError(Exception):
    pass


@dataclass(frozen=True)
class RunSpec:
    scenario: str
    method: str
    seed: int
    tokens: int


@dataclass
class ExperimentPlan:
    runs: list[RunSpec]
    csv_path: Optional[Path] = None
    summary_path: Optional[Path] = None
    transcript_dir: Optional[Path] = None

    def __post_init__(self):
        if not self.runs:
            raise CliError("experiment plan is empty")
        seen = set()
        for r in self.runs:
            key = (r.scenario, r.method, r.seed)
            if key in seen:
                raise CliError(f"duplicate run {key}")
            seen.add(key)


def _scenario(name: str) -> ScenarioConfig:
    try:
        return load_scenario(name)
    except FileNotFoundError:
        raise CliError(f"no scenario preset or file named {name!r} (presets: {', '.join(PRESETS)})") from None


def _run_cell(spec: RunSpec, transcript_dir: Optional[str]) -> dict:
    sc = _scenario(spec.scenario)
    res = run_session(sc, spec.method, spec.tokens, spec.seed)
    m = res.metrics
    if transcript_dir:
        write_transcripts(Path(transcript_dir) / f"{sc.name}_{spec.method}_{spec.seed}.jsonl", res.transcripts)
    return {
        "scenario": sc.name, "method": spec.method, "seed": spec.seed, "tpt": m.tpt, "ecs": m.ecs,
        "verification_frequency": m.verification_frequency, "mean_draft_length": m.mean_draft_length,
        "acceptance_rate": m.acceptance_rate, "accepted_tokens": m.accepted_tokens,
        "total_time_us": m.total_time, "nav_calls": m.nav_calls, "drafted_tokens": m.drafted_tokens,
        "bo_time_us": m.bo_time, "dp_time_us": m.dp_time, "pm_time_us": m.pm_time,
    }


def execute_plan(plan: ExperimentPlan, jobs: int = 1) -> list[dict]:
    tdir = str(plan.transcript_dir) if plan.transcript_dir else None
    if tdir:
        Path(tdir).mkdir(parents=True, exist_ok=True)
    if jobs > 1:
        with ProcessPoolExecutor(jobs) as ex:
            return list(ex.map(_run_cell, plan.runs, [tdir] * len(plan.runs)))
    return [_run_cell(r, tdir) for r in plan.runs]


def write_rows(path: Path, rows: Sequence[dict], fields: Sequence[str]) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=list(fields))
        w.writeheader()
        w.writerows(rows)


def _group(rows: Iterable[dict], *keys: str) -> dict:
    out: dict = {}
    for r in rows:
        out.setdefault(tuple(r[k] for k in keys), []).append(r)
    return out


def comparison_rows(rows: Sequence[dict], methods: Sequence[str]) -> list[dict]:
    """One row per scenario: mean TPT/ECS per method plus the full method's speedups."""
    full = "pipesd"
    table = []
    for (scenario,), cell in _group(rows, "scenario").items():
        by = _group(cell, "method")
        row: dict = {"scenario": scenario}
        for m in methods:
            if (m,) in by:
                row[f"tpt_{m}"] = statistics.fmean(float(r["tpt"]) for r in by[(m,)])
                row[f"ecs_{m}"] = statistics.fmean(float(r["ecs"]) for r in by[(m,)])
        if f"tpt_{full}" in row:
            for m in methods:
                if m != full and f"tpt_{m}" in row:
                    row[f"speedup_vs_{m}"] = row[f"tpt_{m}"] / row[f"tpt_{full}"]
                    row[f"ecs_reduction_vs_{m}"] = 1.0 - row[f"ecs_{full}"] / row[f"ecs_{m}"]
        table.append(row)
    return table


def ablation_rows(rows: Sequence[dict], methods: Sequence[str]) -> list[dict]:
    by = _group(rows, "method")
    out = []
    for m in methods:
        cell = by.get((m,), [])
        if not cell:
            continue
        tpts = [float(r["tpt"]) for r in cell]
        out.append({
            "method": m, "runs": len(cell), "tpt_mean": statistics.fmean(tpts), "tpt_median": statistics.median(tpts),
            "verification_frequency": statistics.median(float(r["verification_frequency"]) for r in cell),
            "mean_draft_length": statistics.median(float(r["mean_draft_length"]) for r in cell),
            "acceptance_rate": statistics.median(float(r["acceptance_rate"]) for r in cell),
            "ecs_median": statistics.median(float(r["ecs"]) for r in cell),
        })
    return out


def _print_table(rows: Sequence[dict]) -> None:
    if not rows:
        return
    keys = list(dict.fromkeys(k for r in rows for k in r))
    print(",".join(keys))
    for r in rows:
        print(",".join(f"{r[k]:.4f}" if isinstance(r.get(k), float) else str(r.get(k, "")) for k in keys))


def _seeds(args) -> list[int]:
    if args.seed_list:
        return [int(s) for s in args.seed_list.split(",")]
    return list(range(args.seed_start, args.seed_start + args.seeds))


# ------------------------------------------------------------------ simulate

def cmd_simulate(args) -> int:
    methods = list(ABLATION) if args.ablation else [m.strip() for m in args.methods.split(",")]
    for m in methods:
        get_method(m)
    scenarios = args.scenario or ["scenario1"]
    runs = [RunSpec(s, m, seed, args.tokens) for s in scenarios for m in methods for seed in _seeds(args)]
    plan = ExperimentPlan(runs, Path(args.csv) if args.csv else None,
                          Path(args.summary) if args.summary else None,
                          Path(args.transcripts) if args.transcripts else None)
    rows = execute_plan(plan, args.jobs)
    if plan.csv_path:
        write_rows(plan.csv_path, rows, RUN_FIELDS)
    summary = ablation_rows(rows, methods) if args.ablation else comparison_rows(rows, methods)
    if plan.summary_path:
        write_rows(plan.summary_path, summary, list(dict.fromkeys(k for r in summary for k in r)))
    _print_table(summary)
    return 0


# ---------------------------------------------------------------------- tune

def _live_evaluator(scenario: ScenarioConfig, method: str, tokens: int, base_seed: int):
    """(r1, r2) -> TPT of a fresh simulated session pinned to those thresholds."""
    counter = [0]
    m0 = get_method(method).with_overrides(tune="none")

    def evaluate(r1: float, r2: float) -> float:
        counter[0] += 1
        m = m0.with_overrides(r1=r1, r2=r2)
        return run_session(scenario, m, tokens, base_seed * 1000 + counter[0]).metrics.tpt

    return evaluate


def _validate(scenario: ScenarioConfig, method: str, r1: float, r2: float, tokens: int, seeds: Sequence[int]) -> float:
    m = get_method(method).with_overrides(tune="none", r1=r1, r2=r2)
    return statistics.fmean(run_session(scenario, m, tokens, s).metrics.tpt for s in seeds)


def cmd_tune(args) -> int:
    sc = _scenario(args.scenario)
    trace = []
    summary = []
    val_seeds = list(range(args.val_seeds))

    def run(name, tuner):
        evaluate = _live_evaluator(sc, args.method, args.trial_tokens, args.seed)
        res = tuner(evaluate)
        for i, smp in enumerate(res.samples):
            trace.append({"tuner": name, "iteration": i, "r1": smp.r1, "r2": smp.r2, "objective_ms": smp.objective})
        summary.append({"tuner": name, "r1": res.r1, "r2": res.r2, "best_trial_ms": res.objective,
                        "validation_tpt_ms": _validate(sc, args.method, res.r1, res.r2, args.tokens, val_seeds)})

    k = max(1, round(args.budget ** 0.5))
    run("bo", lambda ev: run_bo(ev, args.budget, args.seed))
    run("grid", lambda ev: run_grid(ev, k))
    run("random", lambda ev: run_random(ev, args.budget, args.seed))
    fixed = []
    if not args.no_fixed:
        for r1 in (0.3, 0.6, 0.9):
            for r2 in (0.3, 0.6, 0.9):
                fixed.append({"r1": r1, "r2": r2,
                              "validation_tpt_ms": _validate(sc, args.method, r1, r2, args.tokens, val_seeds)})
    if args.csv:
        write_rows(Path(args.csv), trace, ("tuner", "iteration", "r1", "r2", "objective_ms"))
    if args.summary:
        write_rows(Path(args.summary), summary, list(summary[0]))
    if args.fixed_csv and fixed:
        write_rows(Path(args.fixed_csv), fixed, ("r1", "r2", "validation_tpt_ms"))
    _print_table(summary)
    if fixed:
        print()
        _print_table(fixed)
    return 0


# ------------------------------------------------------------------ schedule

def cmd_schedule(args) -> int:
    to_us = lambda ms: int(round(ms * 1000))  # noqa: E731
    params = PipelineParams(to_us(args.alpha), to_us(args.beta), to_us(args.gamma))
    dp = dp_optimal_batching(args.n_hat, params)
    out = {
        "backend": BACKEND,
        "params_us": {"alpha": params.alpha, "beta": params.beta, "gamma": params.gamma},
        "n_hat": args.n_hat,
        "strategy": list(dp.strategy.boundaries),
        "batch_sizes": dp.strategy.batch_sizes(),
        "dp_ms": dp.total_time / 1000,
        "greedy_ms": greedy_timeline(params, args.n_hat).total_time / 1000,
        "immediate_ms": immediate_send_timeline(params, args.n_hat) / 1000,
        "no_early_upload_ms": no_early_upload_timeline(params, args.n_hat) / 1000,
    }
    if args.brute_force:
        if args.n_hat > BRUTE_FORCE_LIMIT:
            raise CliError(f"brute force is limited to n_hat <= {BRUTE_FORCE_LIMIT}")
        strat, total = brute_force_batching(args.n_hat, params)
        out["brute_force_ms"] = total / 1000
        out["brute_force_strategy"] = list(strat.boundaries)
    print(json.dumps(out, indent=2))
    return 0


# ------------------------------------------------------------- serve / edge

def _split_addr(addr: str, default_host: str = "127.0.0.1") -> tuple[str, int]:
    host, sep, port = addr.rpartition(":")
    if not sep:
        return default_host, int(addr)
    try:
        return host or default_host, int(port)
    except ValueError:
        raise CliError(f"bad address {addr!r}; expected host:port") from None


def cmd_serve(args) -> int:
    from .net import ServerConfig, serve

    host, port = _split_addr(args.listen)
    log.info("listening on %s:%d", host, port)
    serve(host, port, ServerConfig(args.nav_base_ms, args.nav_per_token_ms))
    return 0


def cmd_edge(args) -> int:
    from .net import EdgeConfig, edge_run
    from .workload import TargetOracle, target_prefix

    sc = _scenario(args.scenario)
    host, port = _split_addr(args.server)
    cfg = EdgeConfig(sc, args.method, args.seed, args.tokens, gen_delay_ms=args.gen_delay_ms,
                     rate_bps=args.rate_mbps * 1e6 if args.rate_mbps else None, startup_ms=args.startup_ms,
                     pad_bytes_per_token=args.pad_bytes, bootstrap_probes=not args.no_probes)
    res = edge_run(cfg, host, port)
    lossless = res.output == target_prefix(TargetOracle(args.seed, sc.vocab_size), len(res.output))
    if res.metrics is not None:
        m = res.metrics
        row = {"scenario": sc.name, "method": args.method, "seed": args.seed, "tpt": m.tpt, "ecs": m.ecs,
               "verification_frequency": m.verification_frequency, "mean_draft_length": m.mean_draft_length,
               "acceptance_rate": m.acceptance_rate, "accepted_tokens": m.accepted_tokens,
               "total_time_us": m.total_time, "nav_calls": m.nav_calls, "drafted_tokens": m.drafted_tokens,
               "bo_time_us": 0, "dp_time_us": 0, "pm_time_us": 0}
        if args.csv:
            write_rows(Path(args.csv), [row], RUN_FIELDS)
        _print_table([row])
    print(f"lossless={lossless} aborted={res.aborted} {res.error}".rstrip())
    return 0 if lossless and not res.aborted else 1


# -------------------------------------------------------------------- report

def overhead_bound(bo: Fraction, dp: Fraction, pm: Fraction) -> Fraction:
    """Upper bound on the control-plane share of edge energy: (T_BO + T_DP + T_PM) / T."""
    return bo + dp + pm


def read_runs(paths: Sequence[str]) -> list[dict]:
    rows = []
    for p in paths:
        with open(p, newline="") as fh:
            rows.extend(csv.DictReader(fh))
    if not rows:
        raise CliError("no rows in the given CSV files")
    missing = set(RUN_FIELDS) - set(rows[0])
    if missing:
        raise CliError(f"CSV is missing columns: {', '.join(sorted(missing))}")
    return rows


def report_rows(rows: Sequence[dict]) -> tuple[list[dict], list[dict]]:
    agg = []
    over = []
    for (scenario, method), cell in _group(rows, "scenario", "method").items():
        tpts = [float(r["tpt"]) for r in cell]
        agg.append({
            "scenario": scenario, "method": method, "runs": len(cell),
            "tpt_mean": statistics.fmean(tpts), "tpt_median": statistics.median(tpts),
            "ecs_median": statistics.median(float(r["ecs"]) for r in cell),
            "verification_frequency": statistics.median(float(r["verification_frequency"]) for r in cell),
            "mean_draft_length": statistics.median(float(r["mean_draft_length"]) for r in cell),
            "acceptance_rate": statistics.median(float(r["acceptance_rate"]) for r in cell),
        })
        total = sum(int(r["total_time_us"]) for r in cell)
        shares = [Fraction(sum(int(r[k]) for r in cell), total) * 100 for k in ("bo_time_us", "dp_time_us", "pm_time_us")]
        over.append({
            "scenario": scenario, "method": method,
            "bo_percent": float(shares[0]), "dp_percent": float(shares[1]), "pm_percent": float(shares[2]),
            "energy_bound_percent": float(overhead_bound(*shares)),
        })
    return agg, over


def cmd_report(args) -> int:
    if args.overhead_percent:
        shares = [Fraction(s) for s in args.overhead_percent]
        bound = overhead_bound(*shares)
        print(f"edge energy overhead bound: {float(bound):.3f}% (exact {bound})")
        if not args.inputs:
            return 0
    if not args.inputs:
        raise CliError("report needs at least one CSV input")
    agg, over = report_rows(read_runs(args.inputs))
    _print_table(agg)
    print()
    _print_table(over)
    if args.csv:
        write_rows(Path(args.csv), agg, list(agg[0]))
    if args.overhead_csv:
        write_rows(Path(args.overhead_csv), over, list(over[0]))
    return 0


# ---------------------------------------------------------------------- main

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="edgespec", description="Cloud-edge speculative decoding experiments.")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("simulate", help="run simulated sessions and write per-run metrics")
    s.add_argument("--scenario", action="append", help="preset name or JSON file (repeatable; default scenario1)")
    s.add_argument("--methods", default=",".join(COMPARISON), help="comma-separated method names")
    s.add_argument("--ablation", action="store_true", help="run the six ablation variants instead of --methods")
    s.add_argument("--seeds", type=int, default=5, help="number of consecutive seeds")
    s.add_argument("--seed-start", type=int, default=0)
    s.add_argument("--seed-list", help="explicit comma-separated seeds (overrides --seeds)")
    s.add_argument("--tokens", type=int, default=1000, help="accepted tokens per session")
    s.add_argument("--csv", help="per-run CSV output")
    s.add_argument("--summary", help="table-shaped summary CSV output")
    s.add_argument("--transcripts", help="directory for JSONL round transcripts")
    s.add_argument("--jobs", type=int, default=1, help="parallel worker processes")
    s.set_defaults(func=cmd_simulate)

    t = sub.add_parser("tune", help="compare BO, grid and random threshold search on live simulated sessions")
    t.add_argument("--scenario", default="scenario1")
    t.add_argument("--method", default="pipesd", help="method whose thresholds are tuned")
    t.add_argument("--budget", type=int, default=16)
    t.add_argument("--seed", type=int, default=0)
    t.add_argument("--trial-tokens", type=int, default=20, help="accepted tokens per evaluation")
    t.add_argument("--tokens", type=int, default=1000, help="accepted tokens per validation session")
    t.add_argument("--val-seeds", type=int, default=5, help="validation sessions per chosen pair")
    t.add_argument("--no-fixed", action="store_true", help="skip the nine fixed-pair rows")
    t.add_argument("--csv", help="trace CSV (one row per evaluation)")
    t.add_argument("--summary", help="summary CSV (one row per tuner)")
    t.add_argument("--fixed-csv", help="CSV for the fixed-pair sweep")
    t.set_defaults(func=cmd_tune)

    d = sub.add_parser("schedule", help="optimal batching of one draft window")
    d.add_argument("--alpha", type=float, required=True, help="startup overhead per batch (ms)")
    d.add_argument("--beta", type=float, required=True, help="per-token transmission time (ms)")
    d.add_argument("--gamma", type=float, required=True, help="per-token generation time (ms)")
    d.add_argument("--n-hat", type=int, required=True, help="window size in tokens")
    d.add_argument("--brute-force", action="store_true", help="also enumerate every partition")
    d.set_defaults(func=cmd_schedule)

    v = sub.add_parser("serve", help="run the verification server")
    v.add_argument("--listen", default="127.0.0.1:7878", help="host:port")
    v.add_argument("--nav-base-ms", type=float, default=0.0, help="emulated verification latency")
    v.add_argument("--nav-per-token-ms", type=float, default=0.0)
    v.set_defaults(func=cmd_serve)

    e = sub.add_parser("edge", help="run one edge session against a server")
    e.add_argument("--server", default="127.0.0.1:7878", help="host:port")
    e.add_argument("--scenario", default="scenario1")
    e.add_argument("--method", default="pipesd")
    e.add_argument("--tokens", type=int, default=200)
    e.add_argument("--seed", type=int, default=0)
    e.add_argument("--csv", help="write the run's metrics row here")
    e.add_argument("--gen-delay-ms", type=float, default=0.0, help="sleep per drafted token")
    e.add_argument("--rate-mbps", type=float, default=0.0, help="uplink cap (0 = unthrottled)")
    e.add_argument("--startup-ms", type=float, default=0.0, help="emulated per-message startup latency")
    e.add_argument("--pad-bytes", type=int, default=0, help="filler bytes per token")
    e.add_argument("--no-probes", action="store_true", help="skip the bootstrap probe batches")
    e.set_defaults(func=cmd_edge)

    r = sub.add_parser("report", help="aggregate per-run CSVs and overhead shares")
    r.add_argument("inputs", nargs="*", help="CSV files written by simulate")
    r.add_argument("--csv", help="aggregated metrics output")
    r.add_argument("--overhead-csv", help="overhead share output")
    r.add_argument("--overhead-percent", nargs=3, metavar=("BO", "DP", "PM"),
                   help="print the energy bound for given time shares (percent)")
    r.set_defaults(func=cmd_report)
    return p


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        return args.func(args)
    except (CliError, ValidationError, OSError, ValueError) as exc:
        print(f"edgespec: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
