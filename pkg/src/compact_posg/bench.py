"""Benchmark harness: instance batches, per-run records and summaries."""
from __future__ import annotations

import csv
import logging
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np

from .compact import hsvi_compact
from .exact import hsvi_exact
from .graph import LayeredDag, generate_instance, save_instance, shortest_costs
from .hsvi import BUDGET, CONVERGED, FAILED, HsviResult
from .posg import DEFAULT_MAX_STATES, StateSpaceTooLarge

logger = logging.getLogger(__name__)

ENGINES = ("exact", "compact", "generic")
CSV_COLUMNS = ("n", "instance", "engine", "seed", "runtime_s", "lb", "ub", "gap", "trials", "status")


@dataclass
class ExperimentConfig:
    vertices: Sequence[int] = tuple(range(5, 13))
    instances: int = 20
    p: float = 0.5
    epsilon: float = 0.1
    seed: int = 0
    budget_secs: Optional[float] = 300.0
    engines: Sequence[str] = ("exact", "compact")
    out: Path = Path("results")
    max_states: int = DEFAULT_MAX_STATES
    jobs: int = 1

    def __post_init__(self):
        if self.epsilon <= 0:
            raise ValueError("epsilon must be positive")
        if self.budget_secs is not None and self.budget_secs < 0:
            raise ValueError("budget must be nonnegative")
        if self.instances < 0:
            raise ValueError("instance count must be nonnegative")
        if not 0 <= self.p <= 1:
            raise ValueError("edge probability must lie in [0, 1]")
        if any(n < 2 for n in self.vertices):
            raise ValueError("instances need at least 2 vertices")
        bad = [e for e in self.engines if e not in ENGINES]
        if bad:
            raise ValueError(f"unknown engine(s): {', '.join(bad)}")
        self.out = Path(self.out)


@dataclass
class ResultRecord:
    n: int
    instance: str
    engine: str
    seed: int
    runtime_s: float
    lb: float
    ub: float
    gap: float
    trials: int
    status: str
    message: str = field(default="", compare=False)

    def row(self) -> Dict[str, str]:
        return {
            "n": str(self.n), "instance": self.instance, "engine": self.engine, "seed": str(self.seed),
            "runtime_s": f"{self.runtime_s:.6f}", "lb": repr(float(self.lb)), "ub": repr(float(self.ub)),
            "gap": repr(float(self.gap)), "trials": str(self.trials), "status": self.status,
        }


def instance_seed(seed: int, n: int, k: int) -> int:
    return int(np.random.SeedSequence([seed, n, k]).generate_state(1)[0])


def instance_name(n: int, k: int) -> str:
    return f"n{n:02d}_{k:03d}"


def generate_batch(config: ExperimentConfig) -> List[Tuple[str, int, LayeredDag]]:
    out = []
    for n in config.vertices:
        for k in range(config.instances):
            s = instance_seed(config.seed, n, k)
            out.append((instance_name(n, k), s, generate_instance(n, config.p, s)))
    return out


def write_batch(config: ExperimentConfig) -> List[Path]:
    config.out.mkdir(parents=True, exist_ok=True)
    written = []
    for name, s, g in generate_batch(config):
        path = config.out / f"{name}.txt"
        save_instance(g, path, f"{name} p={config.p} seed={s}")
        written.append(path)
    return written


def _initial_bounds(g: LayeredDag) -> Tuple[float, float]:
    return float(shortest_costs(g, "normal")[0]), float(shortest_costs(g, "honeypot")[0])


def run_engine(g: LayeredDag, engine: str, epsilon: float = 0.1, budget_secs: Optional[float] = None,
               instance: str = "", seed: int = -1, max_states: int = DEFAULT_MAX_STATES,
               keep_solution: bool = False):
    """Solve ``g`` with one engine.  Returns a :class:`ResultRecord`, plus the
    solver's solution object when ``keep_solution`` is set."""
    t0 = time.perf_counter()
    solution = None
    try:
        if engine == "exact":
            solution = hsvi_exact(g, epsilon, budget_secs=budget_secs, max_states=max_states)
        elif engine == "compact":
            solution = hsvi_compact(g, epsilon, mode="marginal", budget_secs=budget_secs)
        elif engine == "generic":
            solution = hsvi_compact(g, epsilon, mode="generic", budget_secs=budget_secs, max_states=max_states)
        else:
            raise ValueError(f"unknown engine {engine!r}")
        res: HsviResult = solution.result
        rec = ResultRecord(g.n, instance, engine, seed, res.runtime, res.lb, res.ub, res.gap,
                           res.trials, res.status, res.message)
    except StateSpaceTooLarge as exc:
        lb, ub = _initial_bounds(g)
        rec = ResultRecord(g.n, instance, engine, seed, time.perf_counter() - t0, lb, ub, ub - lb, 0,
                           BUDGET, str(exc))
    except Exception as exc:  # recorded per row, the batch carries on
        logger.exception("engine %s failed on %s", engine, instance)
        rec = ResultRecord(g.n, instance, engine, seed, time.perf_counter() - t0, math.nan, math.nan,
                           math.nan, 0, FAILED, f"{type(exc).__name__}: {exc}")
    return (rec, solution) if keep_solution else rec


def _run_job(args) -> ResultRecord:
    name, s, g, engine, config = args
    return run_engine(g, engine, config.epsilon, config.budget_secs, name, s, config.max_states)


class CsvAppender:
    """Single writer for result rows; flushes after each row."""

    def __init__(self, path: Path):
        self.path = Path(path)
        self.path.parent.mkdir(parents=True, exist_ok=True)
        self._fh = open(self.path, "w", newline="")
        self._w = csv.DictWriter(self._fh, fieldnames=CSV_COLUMNS, lineterminator="\n")
        self._w.writeheader()
        self._fh.flush()

    def append(self, rec: ResultRecord) -> None:
        self._w.writerow(rec.row())
        self._fh.flush()

    def close(self) -> None:
        self._fh.close()


def run_bench(config: ExperimentConfig, progress=None) -> List[ResultRecord]:
    config.out.mkdir(parents=True, exist_ok=True)
    jobs = [(name, s, g, engine, config) for name, s, g in generate_batch(config) for engine in config.engines]
    appender = CsvAppender(config.out / "results.csv")
    records = []
    try:
        if config.jobs > 1:
            with ProcessPoolExecutor(config.jobs) as pool:
                for rec in pool.map(_run_job, jobs):
                    appender.append(rec)
                    records.append(rec)
                    if progress:
                        progress(rec)
        else:
            for job in jobs:
                rec = _run_job(job)
                appender.append(rec)
                records.append(rec)
                if progress:
                    progress(rec)
    finally:
        appender.close()
    write_summary(summarize(records), config.out / "summary.csv")
    return records


@dataclass
class SizeSummary:
    n: int
    engine: str
    runs: int
    converged: int
    budget: int
    failed: int
    mean_runtime_s: float
    stderr_runtime_s: float
    max_quality: float  # only on the compact rows; nan elsewhere


SUMMARY_COLUMNS = ("n", "engine", "runs", "converged", "budget", "failed",
                   "mean_runtime_s", "stderr_runtime_s", "max_quality")


def quality_ratio(exact_ub: float, compact_lb: float) -> float:
    return (exact_ub - compact_lb) / compact_lb


def summarize(records: Iterable[ResultRecord]) -> List[SizeSummary]:
    """Per size and engine: runtime mean and standard error over converged
    runs, and for the compact engine the worst relative distance between the
    exact upper bound and the compact lower bound."""
    records = list(records)
    by_key: Dict[Tuple[int, str], List[ResultRecord]] = {}
    for r in records:
        by_key.setdefault((r.n, r.engine), []).append(r)
    exact_ub = {(r.n, r.instance): r.ub for r in records if r.engine == "exact" and r.status == CONVERGED}
    out = []
    for (n, engine), rows in sorted(by_key.items()):
        ok = [r.runtime_s for r in rows if r.status == CONVERGED]
        mean = float(np.mean(ok)) if ok else math.nan
        se = float(np.std(ok, ddof=1) / math.sqrt(len(ok))) if len(ok) > 1 else math.nan
        quality = math.nan
        if engine in ("compact", "generic"):
            ratios = [quality_ratio(exact_ub[n, r.instance], r.lb) for r in rows
                      if r.status == CONVERGED and (n, r.instance) in exact_ub]
            quality = max(ratios) if ratios else math.nan
        out.append(SizeSummary(n, engine, len(rows), len(ok),
                               sum(r.status == BUDGET for r in rows), sum(r.status == FAILED for r in rows),
                               mean, se, quality))
    return out


def write_summary(summary: Sequence[SizeSummary], path: Path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(SUMMARY_COLUMNS)
        for s in summary:
            w.writerow([s.n, s.engine, s.runs, s.converged, s.budget, s.failed,
                        f"{s.mean_runtime_s:.6f}", f"{s.stderr_runtime_s:.6f}", f"{s.max_quality:.6f}"])


def format_summary(summary: Sequence[SizeSummary]) -> str:
    lines = [f"{'n':>3} {'engine':>8} {'runs':>5} {'conv':>5} {'budget':>6} {'fail':>5} "
             f"{'runtime_s (mean +- se)':>26} {'max rel. gap':>13}"]
    for s in summary:
        rt = f"{s.mean_runtime_s:.4f} +- {s.stderr_runtime_s:.4f}"
        q = "" if math.isnan(s.max_quality) else f"{100 * s.max_quality:.3f}%"
        lines.append(f"{s.n:>3} {s.engine:>8} {s.runs:>5} {s.converged:>5} {s.budget:>6} {s.failed:>5} "
                     f"{rt:>26} {q:>13}")
    return "\n".join(lines)


def read_results(path) -> List[ResultRecord]:
    with open(path, newline="") as fh:
        return [ResultRecord(int(r["n"]), r["instance"], r["engine"], int(r["seed"]), float(r["runtime_s"]),
                             float(r["lb"]), float(r["ub"]), float(r["gap"]), int(r["trials"]), r["status"])
                for r in csv.DictReader(fh)]
