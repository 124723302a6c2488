"""HSVI over characteristic vectors (per-vertex marginal infection probabilities).

The lower bound is a point-wise maximum of affine functions ``a.chi + z``; the
upper bound is the monotone hull of a point set, where the hull constraint is
relaxed to ``sum(lam * chi_i) <= chi`` so the represented function is
nonincreasing in every coordinate.

Two stage-game formulations are provided:

* the *marginal* LP works on path probabilities ``pi[P]`` and joint
  path/vertex probabilities ``xi[P, v]`` and never touches the explicit state
  space; this is the scaling path;
* the *generic* LP lets the attacker pick any belief consistent with ``chi``
  on the explicit game; it is kept for cross-validation on small graphs.

In both, the only rows with a non-zero right-hand side are the normalisation
row and the ``chi`` rows, so their duals form a new lower-bound function.

The terminal state (target infected) is represented by a zero-cost ``NOOP``
pseudo path whose probability equals ``chi_n``; real paths are played only
while the target is not infected.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple

import numpy as np

from .graph import (DEFAULT_MAX_PATHS, LayeredDag, Path, all_paths, path_edges, prefix_until,
                    shortest_costs, stage_cost)
from .hsvi import HsviResult, run_hsvi
from .lp import LpModel, LpSolution, INFEASIBLE
from .posg import DET, NODET, ExplicitPosg, ImpossibleObservation, build_lateral_posg

logger = logging.getLogger(__name__)

CLIP_TOL = 1e-9
MIN_Q = 1e-9


class UnreachableCharVec(ValueError):
    """No point of the upper-bound set lies below the characteristic vector."""


@dataclass(frozen=True)
class CompactAlpha:
    a: np.ndarray
    z: float

    def __call__(self, chi) -> float:
        return float(self.a @ np.asarray(chi, dtype=float) + self.z)


@dataclass
class CompactBounds:
    """Lower-bound functions (rows of ``A``, entries of ``Z``) and upper-bound
    points (rows of ``X`` with values ``Y``).  The first ``num_init`` points are
    the unit vectors from initialisation and are never pruned."""
    A: np.ndarray
    Z: np.ndarray
    X: np.ndarray
    Y: np.ndarray
    num_init: int = 0

    @property
    def alphas(self) -> List[CompactAlpha]:
        return [CompactAlpha(a.copy(), float(z)) for a, z in zip(self.A, self.Z)]

    def add_alpha(self, alpha: CompactAlpha) -> None:
        self.A = np.vstack([self.A, alpha.a])
        self.Z = np.append(self.Z, alpha.z)

    def add_point(self, chi: np.ndarray, y: float) -> None:
        self.X = np.vstack([self.X, chi])
        self.Y = np.append(self.Y, y)

    def copy(self) -> "CompactBounds":
        return CompactBounds(self.A.copy(), self.Z.copy(), self.X.copy(), self.Y.copy(), self.num_init)


def init_bounds_compact(g: LayeredDag) -> CompactBounds:
    cstar = np.array([float(c) for c in shortest_costs(g, "normal")])
    cbar = np.array([float(c) for c in shortest_costs(g, "honeypot")])
    A = np.vstack([np.zeros(g.n), cstar - cstar[0]])
    Z = np.array([0.0, cstar[0]])
    return CompactBounds(A, Z, np.eye(g.n), cbar, g.n)


def lb_eval(chi, bounds: CompactBounds) -> float:
    return float(np.max(bounds.A @ np.asarray(chi, dtype=float) + bounds.Z))


def ub_eval(chi, bounds: CompactBounds) -> float:
    chi = np.asarray(chi, dtype=float)
    m = LpModel("min")
    lam = m.add_vars(len(bounds.Y), prefix="lam")
    m.set_objective(lam, bounds.Y)
    m.add_row("sum", lam, np.ones(len(lam)), "==", 1.0)
    for i in range(len(chi)):
        col = bounds.X[:, i]
        nz = col != 0
        m.add_row(("chi", i), lam[nz], col[nz], "<=", float(chi[i]))
    sol = m.solve()
    if sol.status == INFEASIBLE:
        raise UnreachableCharVec(f"no upper-bound point below {chi}")
    if not sol.ok:
        raise RuntimeError(f"upper-bound projection failed: {sol.status}")
    return sol.objective


def extract_alpha(sol: LpSolution, n: int) -> CompactAlpha:
    """Lower-bound function from the duals of a solved lower-bound stage LP."""
    a = np.array([sol.dual(("chi", i)) for i in range(n)])
    return CompactAlpha(a, sol.dual("norm"))


# -- marginal formulation ------------------------------------------------------

@dataclass(frozen=True, eq=False)
class MarginalGame:
    """Per-(path, honeypot edge) data for the marginal stage LP.  Path index
    ``len(paths)`` is the terminal ``NOOP``."""
    graph: LayeredDag
    paths: Tuple[Path, ...]
    edges: Tuple[Tuple[int, int], ...]
    cost: np.ndarray       # (P+1, H)
    contains: np.ndarray   # (P+1, H) bool
    infected: np.ndarray   # (P+1, H, n) bool: v infected by the prefix up to h (v_1 always)
    start: np.ndarray      # (P+1,) first vertex; n for NOOP
    continues: np.ndarray  # (H,) bool: detection on h leaves the target uninfected

    @property
    def n(self) -> int:
        return self.graph.n

    @property
    def noop(self) -> int:
        return len(self.paths)


def build_marginal_game(g: LayeredDag, max_paths: int = DEFAULT_MAX_PATHS) -> MarginalGame:
    paths = tuple(all_paths(g, max_paths))
    edges = g.edges
    n_p, n_e, n = len(paths), len(edges), g.n
    cost = np.zeros((n_p + 1, n_e))
    contains = np.zeros((n_p + 1, n_e), dtype=bool)
    infected = np.zeros((n_p + 1, n_e, n), dtype=bool)
    for pi, P in enumerate(paths):
        on_path = set(path_edges(P))
        for hi, h in enumerate(edges):
            cost[pi, hi] = float(stage_cost(P, h, g))
            if h in on_path:
                contains[pi, hi] = True
                infected[pi, hi, 0] = True
                for (_, v) in prefix_until(P, h):
                    infected[pi, hi, v - 1] = True
    start = np.array([P[0] for P in paths] + [n])
    continues = np.array([h[1] != n for h in edges])
    return MarginalGame(g, paths, edges, cost, contains, infected, start, continues)


@dataclass
class MarginalStrategy:
    pi: np.ndarray   # (P+1,) path probabilities, last entry NOOP
    xi: np.ndarray   # (P+1, n) joint path / infected-vertex probabilities


@dataclass
class MarginalStageResult:
    value: float
    strategy: MarginalStrategy
    defender: np.ndarray
    solution: LpSolution
    successors: Dict[int, Tuple[np.ndarray, float]] = field(default_factory=dict)


def successor_marginal(strategy: MarginalStrategy, h: int, mg: MarginalGame) -> Tuple[np.ndarray, float]:
    """Unnormalised marginals after detection on edge index ``h``, and the
    detection probability."""
    hit = mg.contains[:, h]
    inf = mg.infected[:, h, :]
    first = (inf & hit[:, None]) * strategy.pi[:, None]
    second = ((~inf) & hit[:, None]) * strategy.xi
    return (first + second).sum(axis=0), float(strategy.pi[hit].sum())


def tau_compact(strategy: MarginalStrategy, h: int, mg: MarginalGame) -> np.ndarray:
    chi, q = successor_marginal(strategy, h, mg)
    if q <= MIN_Q:
        raise ImpossibleObservation(f"detection on {mg.edges[h]} has probability {q:g}")
    return _normalise(chi, q)


def _normalise(chi: np.ndarray, q: float) -> np.ndarray:
    out = chi / q
    if np.any(out < -CLIP_TOL) or np.any(out > 1 + CLIP_TOL):
        logger.debug("clipping characteristic vector %s", out)
    return np.clip(out, 0.0, 1.0)


class _MarginalLp:
    """Variables and rows common to both marginal stage LPs."""

    def __init__(self, chi: np.ndarray, mg: MarginalGame):
        chi = np.asarray(chi, dtype=float)
        n, n_p1 = mg.n, mg.noop + 1
        m = LpModel("min")
        self.m, self.mg = m, mg
        self.pi = m.add_vars(n_p1, prefix="pi")
        # xi[P, v] as LP columns; -1 means "equal to pi[P]" (start vertex, NOOP)
        self.xi_col = np.full((n_p1, n), -1, dtype=np.int64)
        for p in range(mg.noop):
            s = mg.start[p] - 1
            cols = [v for v in range(n - 1) if v != s]
            self.xi_col[p, cols] = m.add_vars(len(cols), prefix=f"xi{p}_")
            for v, c in zip(cols, self.xi_col[p, cols]):
                m.add_row(("xi", p, v), [c, self.pi[p]], [1.0, -1.0], "<=", 0.0)
        self.xi_col[:mg.noop, n - 1] = -2   # real paths never run in the terminal state
        self.V = m.add_var(lb=-np.inf, name="V")
        m.set_objective([self.V], [1.0])
        m.add_row("norm", self.pi, np.ones(n_p1), "==", 1.0)
        for v in range(n):
            idx, coef = self._xi_terms(np.arange(n_p1), v)
            m.add_row(("chi", v), idx, coef, "==", float(chi[v]))
        # unnormalised successor marginals and detection probabilities
        self.succ_chi = {}
        self.succ_q = {}
        for h in np.flatnonzero(mg.continues):
            hit = np.flatnonzero(mg.contains[:, h])
            q = m.add_var(lb=-np.inf, name=f"q{h}")
            m.add_row(("q", h), np.concatenate([[q], self.pi[hit]]),
                      np.concatenate([[1.0], -np.ones(len(hit))]), "==", 0.0)
            cv = m.add_vars(n, lb=-np.inf, prefix=f"chi{h}_")
            for v in range(n):
                inf = mg.infected[hit, h, v]
                idx = list(self.pi[hit[inf]])
                coef = [1.0] * len(idx)
                i2, c2 = self._xi_terms(hit[~inf], v)
                m.add_row(("succ", h, v), [cv[v]] + idx + list(i2), [1.0] + [-c for c in coef] + [-c for c in c2],
                          "==", 0.0)
            self.succ_chi[h], self.succ_q[h] = cv, q

    def _xi_terms(self, paths: np.ndarray, v: int):
        col = self.xi_col[paths, v]
        own = col == -1
        real = col >= 0
        idx = np.concatenate([col[real], self.pi[paths[own]]])
        return idx, np.ones(len(idx))

    def br_row(self, h: int, extra_idx=(), extra_coef=()) -> None:
        self.m.add_row(("br", h), np.concatenate([[self.V], self.pi, list(extra_idx)]),
                       np.concatenate([[1.0], -self.mg.cost[:, h], list(extra_coef)]), ">=", 0.0)

    def strategy(self, sol: LpSolution) -> MarginalStrategy:
        pi = np.maximum(sol.x[self.pi], 0.0)
        xi = np.zeros_like(self.xi_col, dtype=float)
        real = self.xi_col >= 0
        xi[real] = np.maximum(sol.x[self.xi_col[real]], 0.0)
        own = self.xi_col == -1
        xi[own] = np.broadcast_to(pi[:, None], xi.shape)[own]
        return MarginalStrategy(pi, xi)

    def finish(self, sol: LpSolution) -> MarginalStageResult:
        mg = self.mg
        strat = self.strategy(sol)
        defender = np.array([sol.dual(("br", h)) for h in range(len(mg.edges))])
        res = MarginalStageResult(sol.objective, strat, defender, sol)
        for h in np.flatnonzero(mg.continues):
            res.successors[int(h)] = successor_marginal(strat, int(h), mg)
        return res


def _check_chi(chi, n: int) -> np.ndarray:
    chi = np.asarray(chi, dtype=float)
    if chi.shape != (n,):
        raise ValueError(f"characteristic vector must have length {n}")
    if abs(chi[0] - 1.0) > CLIP_TOL or np.any(chi < -CLIP_TOL) or np.any(chi > 1 + CLIP_TOL):
        raise UnreachableCharVec(f"characteristic vector {chi} is not reachable")
    return chi


def stage_lb_marginal(chi, bounds: CompactBounds, mg: MarginalGame) -> MarginalStageResult:
    chi = _check_chi(chi, mg.n)
    lp = _MarginalLp(chi, mg)
    m = lp.m
    cont = {}
    for h in np.flatnonzero(mg.continues):
        cont[h] = m.add_var(lb=-np.inf, name=f"Vh{h}")
        for j in range(len(bounds.Z)):
            a = bounds.A[j]
            nz = a != 0
            m.add_row(("alpha", int(h), j),
                      np.concatenate([[cont[h], lp.succ_q[h]], lp.succ_chi[h][nz]]),
                      np.concatenate([[1.0, -bounds.Z[j]], -a[nz]]), ">=", 0.0)
    for h in range(len(mg.edges)):
        if h in cont:
            lp.br_row(h, [cont[h]], [-1.0])
        else:
            lp.br_row(h)
    sol = m.solve()
    if sol.status == INFEASIBLE:
        raise UnreachableCharVec(f"marginal stage game infeasible at {chi}")
    if not sol.ok:
        raise RuntimeError(f"marginal lower-bound stage game: {sol.status}")
    return lp.finish(sol)


def stage_ub_marginal(chi, bounds: CompactBounds, mg: MarginalGame) -> MarginalStageResult:
    chi = _check_chi(chi, mg.n)
    lp = _MarginalLp(chi, mg)
    m = lp.m
    X, Y = bounds.X, bounds.Y
    for h in range(len(mg.edges)):
        if not mg.continues[h]:
            lp.br_row(h)
            continue
        lam = m.add_vars(len(Y), prefix=f"lam{h}_")
        m.add_row(("lam", h), np.concatenate([lam, [lp.succ_q[h]]]),
                  np.concatenate([np.ones(len(lam)), [-1.0]]), "==", 0.0)
        for v in range(mg.n):
            col = X[:, v]
            nz = col != 0
            m.add_row(("hull", h, v), np.concatenate([lam[nz], [lp.succ_chi[h][v]]]),
                      np.concatenate([col[nz], [-1.0]]), "<=", 0.0)
        lp.br_row(h, lam, -Y)
    sol = m.solve()
    if sol.status == INFEASIBLE:
        raise UnreachableCharVec(f"marginal stage game infeasible at {chi}")
    if not sol.ok:
        raise RuntimeError(f"marginal upper-bound stage game: {sol.status}")
    return lp.finish(sol)


# -- generic formulation over the explicit game ---------------------------------

@dataclass
class GenericStageResult:
    value: float
    belief: np.ndarray
    joint: np.ndarray
    defender: np.ndarray
    solution: LpSolution
    successors: Dict[Tuple[int, int], Tuple[np.ndarray, float]] = field(default_factory=dict)


def _generic_lp(chi: np.ndarray, game: ExplicitPosg):
    A = game.abstraction
    n = A.shape[0]
    m = LpModel("min")
    pi = m.add_vars(game.num_pairs, prefix="pi")
    V = m.add_var(lb=-np.inf, name="V")
    m.set_objective([V], [1.0])
    m.add_row("norm", pi, np.ones(game.num_pairs), "==", 1.0)
    for v in range(n):
        coef = A[v, game.pair_state]
        nz = coef != 0
        m.add_row(("chi", v), pi[nz], coef[nz], "==", float(chi[v]))
    succ = {}
    for a1 in range(len(game.edges)):
        for o in (DET, NODET):
            hit = game.observation[:, a1] == o
            q = m.add_var(lb=-np.inf, name=f"q{a1}_{o}")
            m.add_row(("q", a1, o), np.concatenate([[q], pi[hit]]),
                      np.concatenate([[1.0], -np.ones(int(hit.sum()))]), "==", 0.0)
            cv = m.add_vars(n, lb=-np.inf, prefix=f"chi{a1}_{o}_")
            ns = game.next_state[hit, a1]
            for v in range(n):
                coef = A[v, ns]
                nz = coef != 0
                m.add_row(("succ", a1, o, v), np.concatenate([[cv[v]], pi[hit][nz]]),
                          np.concatenate([[1.0], -coef[nz]]), "==", 0.0)
            succ[a1, o] = (cv, q)
    return m, pi, V, succ


def _generic_finish(sol: LpSolution, pi, game: ExplicitPosg) -> GenericStageResult:
    joint = np.maximum(sol.x[pi], 0.0)
    belief = np.bincount(game.pair_state, weights=joint, minlength=game.num_states)
    defender = np.array([sol.dual(("br", a1)) for a1 in range(len(game.edges))])
    res = GenericStageResult(sol.objective, belief, joint, defender, sol)
    for a1 in range(len(game.edges)):
        for o in (DET, NODET):
            mass = game.successor_mass(joint, a1, o)
            res.successors[a1, o] = (game.abstraction @ mass, float(mass.sum()))
    return res


def _generic_solve(m: LpModel, chi) -> LpSolution:
    sol = m.solve()
    if sol.status == INFEASIBLE:
        raise UnreachableCharVec(f"no belief is consistent with {chi}")
    if not sol.ok:
        raise RuntimeError(f"generic stage game: {sol.status}")
    return sol


def stage_lb_generic(chi, bounds: CompactBounds, game: ExplicitPosg) -> GenericStageResult:
    chi = np.asarray(chi, dtype=float)
    m, pi, V, succ = _generic_lp(chi, game)
    for a1 in range(len(game.edges)):
        idx, coef = [V], [1.0]
        idx.extend(pi)
        coef.extend(-game.reward[:, a1])
        for o in (DET, NODET):
            cv, q = succ[a1, o]
            w = m.add_var(lb=-np.inf, name=f"V{a1}_{o}")
            idx.append(w)
            coef.append(-game.gamma)
            for j in range(len(bounds.Z)):
                m.add_row(("alpha", a1, o, j), np.concatenate([[w, q], cv]),
                          np.concatenate([[1.0, -bounds.Z[j]], -bounds.A[j]]), ">=", 0.0)
        m.add_row(("br", a1), idx, coef, ">=", 0.0)
    return _generic_finish(_generic_solve(m, chi), pi, game)


def stage_ub_generic(chi, bounds: CompactBounds, game: ExplicitPosg) -> GenericStageResult:
    chi = np.asarray(chi, dtype=float)
    m, pi, V, succ = _generic_lp(chi, game)
    X, Y = bounds.X, bounds.Y
    for a1 in range(len(game.edges)):
        idx, coef = [V], [1.0]
        idx.extend(pi)
        coef.extend(-game.reward[:, a1])
        for o in (DET, NODET):
            cv, q = succ[a1, o]
            lam = m.add_vars(len(Y), prefix=f"lam{a1}_{o}_")
            m.add_row(("lam", a1, o), np.concatenate([lam, [q]]),
                      np.concatenate([np.ones(len(lam)), [-1.0]]), "==", 0.0)
            for v in range(X.shape[1]):
                col = X[:, v]
                nz = col != 0
                m.add_row(("hull", a1, o, v), np.concatenate([lam[nz], [cv[v]]]),
                          np.concatenate([col[nz], [-1.0]]), "<=", 0.0)
            idx.extend(lam)
            coef.extend(-game.gamma * Y)
        m.add_row(("br", a1), idx, coef, ">=", 0.0)
    return _generic_finish(_generic_solve(m, chi), pi, game)


# -- engines -------------------------------------------------------------------

class _CompactEngineBase:
    def __init__(self, g: LayeredDag, bounds: Optional[CompactBounds] = None, snapshots: bool = False):
        self.graph = g
        self.bounds = bounds or init_bounds_compact(g)
        self.extracted: List[Tuple[np.ndarray, CompactAlpha]] = []
        self.visited: List[np.ndarray] = []
        # bounds in force when each extracted alpha was computed (audit only)
        self.snapshots: Optional[List[CompactBounds]] = [] if snapshots else None

    def lb(self, chi) -> float:
        return lb_eval(chi, self.bounds)

    def ub(self, chi) -> float:
        return ub_eval(chi, self.bounds)

    def _insert(self, chi, lo_sol: LpSolution, ub_value: float) -> None:
        self.visited.append(np.array(chi, dtype=float))
        alpha = extract_alpha(lo_sol, self.graph.n)
        self.extracted.append((np.array(chi, dtype=float), alpha))
        if self.snapshots is not None:
            self.snapshots.append(self.bounds.copy())
        self.bounds.add_alpha(alpha)
        if ub_value < self.ub(chi):
            self.bounds.add_point(chi, ub_value)

    def prune(self) -> None:
        self.bounds = prune_compact(self.bounds)


class MarginalEngine(_CompactEngineBase):
    def __init__(self, g: LayeredDag, bounds: Optional[CompactBounds] = None,
                 max_paths: int = DEFAULT_MAX_PATHS, snapshots: bool = False):
        super().__init__(g, bounds, snapshots)
        self.mg = build_marginal_game(g, max_paths)

    def update(self, chi):
        lo = stage_lb_marginal(chi, self.bounds, self.mg)
        hi = stage_ub_marginal(chi, self.bounds, self.mg)
        self._insert(chi, lo.solution, hi.value)
        return [(q, _normalise(c, q)) for (c, q) in lo.successors.values() if q > MIN_Q]


class GenericEngine(_CompactEngineBase):
    def __init__(self, g: LayeredDag, game: Optional[ExplicitPosg] = None,
                 bounds: Optional[CompactBounds] = None, snapshots: bool = False, **posg_kwargs):
        super().__init__(g, bounds, snapshots)
        self.game = game or build_lateral_posg(g, **posg_kwargs)

    def update(self, chi):
        lo = stage_lb_generic(chi, self.bounds, self.game)
        hi = stage_ub_generic(chi, self.bounds, self.game)
        self._insert(chi, lo.solution, hi.value)
        return [(q, _normalise(c, q)) for (c, q) in lo.successors.values() if q > MIN_Q]


def prune_compact(bounds: CompactBounds, tol: float = 1e-9) -> CompactBounds:
    """Drop affine functions dominated on ``{chi : chi_1 = 1, 0 <= chi <= 1}``
    and non-initial points lying on or above the hull of the others."""
    A, Z = bounds.A, bounds.Z
    keep = []
    for i in range(len(Z)):
        dominated = False
        for j in range(len(Z)):
            if i == j:
                continue
            d = A[i] - A[j]
            worst = Z[i] - Z[j] + d[0] + np.maximum(d[1:], 0.0).sum()
            if worst <= tol and (j < i or not _same(A, Z, i, j, tol)):
                dominated = True
                break
        if not dominated:
            keep.append(i)
    out = CompactBounds(A[keep], Z[keep], bounds.X, bounds.Y, bounds.num_init)
    pts = list(range(len(out.Y)))
    for i in range(len(out.Y) - 1, out.num_init - 1, -1):
        others = [k for k in pts if k != i]
        rest = CompactBounds(out.A, out.Z, out.X[others], out.Y[others], out.num_init)
        if ub_eval(out.X[i], rest) <= out.Y[i] + tol:
            pts.remove(i)
    out.X, out.Y = out.X[pts], out.Y[pts]
    return out


def _same(A, Z, i, j, tol) -> bool:
    return abs(Z[i] - Z[j]) <= tol and np.all(np.abs(A[i] - A[j]) <= tol)


@dataclass
class CompactSolution:
    result: HsviResult
    bounds: CompactBounds
    extracted: List[Tuple[np.ndarray, CompactAlpha]]
    visited: List[np.ndarray]
    snapshots: Optional[List[CompactBounds]] = None

    @property
    def lb(self) -> float:
        return self.result.lb

    @property
    def ub(self) -> float:
        return self.result.ub


def initial_char_vec(n: int) -> np.ndarray:
    chi = np.zeros(n)
    chi[0] = 1.0
    return chi


def hsvi_compact(g: LayeredDag, epsilon: float = 0.1, depth_cap: Optional[int] = None,
                 mode: str = "marginal", budget_secs: Optional[float] = None,
                 max_trials: Optional[int] = None, **kwargs) -> CompactSolution:
    if mode == "marginal":
        engine = MarginalEngine(g, **kwargs)
    elif mode == "generic":
        engine = GenericEngine(g, **kwargs)
    else:
        raise ValueError(f"unknown mode {mode!r}")
    if depth_cap is None:
        depth_cap = 5 * g.n
    result = run_hsvi(engine, initial_char_vec(g.n), epsilon, depth_cap, budget_secs, max_trials)
    return CompactSolution(result, engine.bounds, engine.extracted, engine.visited, engine.snapshots)
