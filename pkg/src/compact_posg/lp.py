"""Small LP modelling layer with primal and dual retrieval.

Models are built row by row; every row carries a hashable id so callers can
look up its dual multiplier afterwards.  Duals are reported as sensitivities
``d objective / d rhs`` in the model's own sense, which for a minimisation is
the usual nonnegative multiplier of a ``>=`` row.

Solving is delegated to HiGHS through :func:`scipy.optimize.linprog`.  Every
optimal solve is checked for strong duality; the worst gap seen so far is kept
in :data:`STATS`.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Dict, Hashable, List, Optional, Sequence

import numpy as np
import scipy.sparse as sp
from scipy.optimize import linprog

logger = logging.getLogger(__name__)

FEAS_TOL = 1e-6
GAP_TOL = 1e-6

OPTIMAL = "optimal"
INFEASIBLE = "infeasible"
UNBOUNDED = "unbounded"
FAILED = "failed"

_SENSES = ("<=", ">=", "==")


class LpError(RuntimeError):
    """An LP that had to be optimal was not."""

    def __init__(self, status: str, message: str = ""):
        super().__init__(f"LP {status}: {message}" if message else f"LP {status}")
        self.status = status


@dataclass
class LpStats:
    solves: int = 0
    optimal: int = 0
    max_gap: float = 0.0
    max_infeasibility: float = 0.0
    violations: int = 0

    def reset(self) -> None:
        self.solves = self.optimal = self.violations = 0
        self.max_gap = self.max_infeasibility = 0.0


STATS = LpStats()


@dataclass
class LpSolution:
    status: str
    objective: float = float("nan")
    x: Optional[np.ndarray] = None
    row_duals: Optional[np.ndarray] = None
    row_index: Dict[Hashable, int] = field(default_factory=dict)
    duality_gap: float = float("nan")
    message: str = ""

    @property
    def ok(self) -> bool:
        return self.status == OPTIMAL

    def dual(self, row_id: Hashable) -> float:
        return float(self.row_duals[self.row_index[row_id]])

    def value(self, var: int) -> float:
        return float(self.x[var])


class LpModel:
    """A linear program ``min/max c.x  s.t.  rows, lb <= x <= ub``."""

    def __init__(self, sense: str = "min"):
        if sense not in ("min", "max"):
            raise ValueError(f"sense must be 'min' or 'max', got {sense!r}")
        self.sense = sense
        self._lb: List[float] = []
        self._ub: List[float] = []
        self._obj: List[float] = []
        self._names: List[str] = []
        self._rows_idx: List[np.ndarray] = []
        self._rows_val: List[np.ndarray] = []
        self._row_sense: List[str] = []
        self._rhs: List[float] = []
        self._row_ids: List[Hashable] = []
        self._row_index: Dict[Hashable, int] = {}

    @property
    def num_vars(self) -> int:
        return len(self._lb)

    @property
    def num_rows(self) -> int:
        return len(self._rhs)

    def add_var(self, lb: float = 0.0, ub: float = np.inf, obj: float = 0.0, name: str = "") -> int:
        self._lb.append(lb)
        self._ub.append(ub)
        self._obj.append(obj)
        self._names.append(name or f"x{len(self._lb) - 1}")
        return len(self._lb) - 1

    def add_vars(self, count: int, lb: float = 0.0, ub: float = np.inf, prefix: str = "x") -> np.ndarray:
        start = self.num_vars
        self._lb.extend([lb] * count)
        self._ub.extend([ub] * count)
        self._obj.extend([0.0] * count)
        self._names.extend(f"{prefix}{k}" for k in range(count))
        return np.arange(start, start + count)

    def set_objective(self, idx: Sequence[int], coef: Sequence[float]) -> None:
        self._obj = [0.0] * self.num_vars
        for i, c in zip(idx, coef):
            self._obj[int(i)] += float(c)

    def add_row(self, row_id: Hashable, idx, coef, sense: str, rhs: float) -> int:
        if sense not in _SENSES:
            raise ValueError(f"unknown row sense {sense!r}")
        if row_id in self._row_index:
            raise ValueError(f"duplicate row id {row_id!r}")
        idx = np.asarray(idx, dtype=np.int64)
        coef = np.asarray(coef, dtype=float)
        if idx.shape != coef.shape:
            raise ValueError("index and coefficient arrays differ in shape")
        if not np.all(np.isfinite(coef)) or not np.isfinite(rhs):
            raise ValueError(f"non-finite coefficient in row {row_id!r}")
        self._row_index[row_id] = len(self._rhs)
        self._row_ids.append(row_id)
        self._rows_idx.append(idx)
        self._rows_val.append(coef)
        self._row_sense.append(sense)
        self._rhs.append(float(rhs))
        return len(self._rhs) - 1

    def _matrix(self, rows: List[int], sign: np.ndarray) -> sp.csr_matrix:
        if not rows:
            return sp.csr_matrix((0, self.num_vars))
        indptr = [0]
        for r in rows:
            indptr.append(indptr[-1] + len(self._rows_idx[r]))
        idx = np.concatenate([self._rows_idx[r] for r in rows])
        val = np.concatenate([self._rows_val[r] * s for r, s in zip(rows, sign)])
        m = sp.csr_matrix((val, idx, np.asarray(indptr)), shape=(len(rows), self.num_vars))
        m.sum_duplicates()
        return m

    def solve(self) -> LpSolution:
        STATS.solves += 1
        c = np.asarray(self._obj, dtype=float)
        obj_sign = 1.0 if self.sense == "min" else -1.0
        rhs = np.asarray(self._rhs, dtype=float)
        eq = [r for r, s in enumerate(self._row_sense) if s == "=="]
        ub = [r for r, s in enumerate(self._row_sense) if s != "=="]
        ub_sign = np.array([-1.0 if self._row_sense[r] == ">=" else 1.0 for r in ub])
        A_eq = self._matrix(eq, np.ones(len(eq)))
        A_ub = self._matrix(ub, ub_sign)
        b_eq = rhs[eq]
        b_ub = rhs[ub] * ub_sign if ub else np.zeros(0)
        bounds = np.column_stack([self._lb, self._ub]) if self.num_vars else None
        res = linprog(obj_sign * c,
                      A_ub=A_ub if ub else None, b_ub=b_ub if ub else None,
                      A_eq=A_eq if eq else None, b_eq=b_eq if eq else None,
                      bounds=bounds, method="highs")
        if res.status == 2:
            return LpSolution(INFEASIBLE, message=res.message)
        if res.status == 3:
            return LpSolution(UNBOUNDED, message=res.message)
        if res.status != 0:
            return LpSolution(FAILED, message=res.message)

        duals = np.zeros(self.num_rows)
        m_eq = np.asarray(res.eqlin.marginals) if eq else np.zeros(0)
        m_ub = np.asarray(res.ineqlin.marginals) if ub else np.zeros(0)
        duals[eq] = obj_sign * m_eq
        duals[ub] = obj_sign * ub_sign * m_ub

        lb, ubv = np.asarray(self._lb), np.asarray(self._ub)
        dual_obj = m_eq @ b_eq + m_ub @ b_ub
        fin = np.isfinite(lb)
        dual_obj += np.asarray(res.lower.marginals)[fin] @ lb[fin]
        fin = np.isfinite(ubv)
        dual_obj += np.asarray(res.upper.marginals)[fin] @ ubv[fin]
        gap = abs(res.fun - dual_obj)

        x = np.asarray(res.x)
        infeas = 0.0
        if eq:
            infeas = max(infeas, float(np.max(np.abs(A_eq @ x - b_eq))))
        if ub:
            infeas = max(infeas, float(np.max(A_ub @ x - b_ub, initial=0.0)))
        STATS.optimal += 1
        STATS.max_gap = max(STATS.max_gap, gap)
        STATS.max_infeasibility = max(STATS.max_infeasibility, infeas)
        if gap > GAP_TOL or infeas > FEAS_TOL:
            STATS.violations += 1
            logger.warning("LP self-check: duality gap %.3g, infeasibility %.3g", gap, infeas)
        return LpSolution(OPTIMAL, float(obj_sign * res.fun), x, duals,
                          self._row_index, gap, res.message)

    def slack(self, x: np.ndarray) -> np.ndarray:
        """Row activity minus rhs for each row (in the row's own orientation)."""
        act = np.array([self._rows_val[r] @ x[self._rows_idx[r]] for r in range(self.num_rows)])
        return act - np.asarray(self._rhs)

    def row_ids(self) -> List[Hashable]:
        return list(self._row_ids)

    def to_lp_format(self) -> str:
        """CPLEX LP text rendering, meant for cross-checking with other solvers."""
        def expr(idx, val):
            terms = [f"{'-' if v < 0 else '+'} {abs(v):.17g} {self._names[i]}"
                     for i, v in zip(idx, val) if v != 0]
            return " ".join(terms) if terms else "0 " + self._names[0]

        obj_idx = [i for i, v in enumerate(self._obj) if v != 0]
        out = ["Minimize" if self.sense == "min" else "Maximize",
               " obj: " + expr(obj_idx, [self._obj[i] for i in obj_idx]),
               "Subject To"]
        for r in range(self.num_rows):
            op = {"<=": "<=", ">=": ">=", "==": "="}[self._row_sense[r]]
            out.append(f" r{r}: {expr(self._rows_idx[r], self._rows_val[r])} {op} {self._rhs[r]:.17g}")
        out.append("Bounds")
        for i in range(self.num_vars):
            lo = "-inf" if self._lb[i] == -np.inf else f"{self._lb[i]:.17g}"
            hi = "+inf" if self._ub[i] == np.inf else f"{self._ub[i]:.17g}"
            out.append(f" {lo} <= {self._names[i]} <= {hi}")
        out.append("End")
        return "\n".join(out) + "\n"


def solve_or_raise(model: LpModel, what: str = "") -> LpSolution:
    sol = model.solve()
    if not sol.ok:
        raise LpError(sol.status, what or sol.message)
    return sol
