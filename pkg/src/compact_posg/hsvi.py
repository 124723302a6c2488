"""Trial-based HSVI driver shared by the exact and compact engines.

An engine exposes ``lb(x)``, ``ub(x)``, ``update(x)`` and ``prune()``.
``update`` solves both stage games at ``x``, inserts the new lower-bound
function and upper-bound point, and returns the successors reachable under
the attacker's optimistic (lower-bound) stage strategy as ``(weight, x')``
pairs.  With an undiscounted game the exploration threshold stays ``epsilon``
at every depth, so a depth cap guards against pathological trials.
"""
from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field
from typing import Any, List, Optional, Protocol, Sequence, Tuple

logger = logging.getLogger(__name__)

CONVERGED = "converged"
BUDGET = "budget"
FAILED = "failed"

MIN_WEIGHT = 1e-9


class BudgetExceeded(Exception):
    pass


class Engine(Protocol):
    def lb(self, x) -> float: ...

    def ub(self, x) -> float: ...

    def update(self, x) -> Sequence[Tuple[float, Any]]: ...

    def prune(self) -> None: ...


@dataclass
class TrialRecord:
    trial: int
    depth: int
    lb: float
    ub: float
    elapsed: float

    @property
    def gap(self) -> float:
        return self.ub - self.lb


@dataclass
class HsviResult:
    lb: float
    ub: float
    status: str
    trials: int
    runtime: float
    trace: List[TrialRecord] = field(default_factory=list)
    depth_cap_hits: int = 0
    message: str = ""

    @property
    def gap(self) -> float:
        return self.ub - self.lb


class _Clock:
    def __init__(self, budget: Optional[float]):
        self.start = time.perf_counter()
        self.budget = budget

    def elapsed(self) -> float:
        return time.perf_counter() - self.start

    def check(self) -> None:
        if self.budget is not None and self.elapsed() > self.budget:
            raise BudgetExceeded()


def run_hsvi(engine: Engine, root, epsilon: float, depth_cap: int,
             budget_secs: Optional[float] = None, max_trials: Optional[int] = None,
             prune_every: int = 50) -> HsviResult:
    if epsilon <= 0:
        raise ValueError("epsilon must be positive")
    clock = _Clock(budget_secs)
    trace: List[TrialRecord] = []
    state = {"inserted": 0, "cap_hits": 0}

    def explore(x, t: int) -> int:
        clock.check()
        successors = engine.update(x)
        state["inserted"] += 1
        if state["inserted"] % prune_every == 0:
            engine.prune()
        if t >= depth_cap:
            state["cap_hits"] += 1
            if state["cap_hits"] == 1:
                logger.warning("trial reached the depth cap %d", depth_cap)
            return t
        best, best_score = None, 0.0
        for weight, nxt in successors:
            if weight < MIN_WEIGHT:
                continue
            clock.check()
            score = weight * (engine.ub(nxt) - engine.lb(nxt) - epsilon)
            if score > best_score:
                best, best_score = nxt, score
        if best is None:
            return t
        depth = explore(best, t + 1)
        clock.check()
        engine.update(x)
        state["inserted"] += 1
        return depth

    status, message = CONVERGED, ""
    trials = 0
    lb = ub = float("nan")
    try:
        if budget_secs is not None and budget_secs <= 0:
            raise BudgetExceeded()
        lb, ub = engine.lb(root), engine.ub(root)
        while ub - lb > epsilon:
            if max_trials is not None and trials >= max_trials:
                status, message = BUDGET, f"trial limit {max_trials} reached"
                break
            depth = explore(root, 0)
            trials += 1
            lb, ub = engine.lb(root), engine.ub(root)
            trace.append(TrialRecord(trials, depth, lb, ub, clock.elapsed()))
            logger.debug("trial %d depth %d lb %.6f ub %.6f", trials, depth, lb, ub)
    except BudgetExceeded:
        status, message = BUDGET, "time budget exhausted"
        lb, ub = engine.lb(root), engine.ub(root)
    return HsviResult(lb, ub, status, trials, clock.elapsed(), trace, state["cap_hits"], message)
