"""Unabstracted HSVI over full beliefs.

Lower bound: point-wise maximum of alpha vectors over states.  Upper bound:
lower convex hull of (belief, value) points, always including the simplex
corners.  Stage games are linear programs over joint attacker strategies
``pi(s and a2)``; the values are attacker costs, so the attacker's LP is a
minimisation and the defender's best responses appear as ``>=`` rows.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import List, Optional, Tuple

import numpy as np

from .graph import LayeredDag, shortest_costs
from .hsvi import HsviResult, run_hsvi
from .lp import LpModel, solve_or_raise
from .posg import DET, NODET, ExplicitPosg, build_lateral_posg, DEFAULT_MAX_STATES

logger = logging.getLogger(__name__)

SUPPORT_TOL = 1e-12


@dataclass
class ExactBounds:
    alphas: List[np.ndarray]
    points: np.ndarray   # (m, |S|) beliefs
    values: np.ndarray   # (m,)
    num_corners: int = 0

    def add_alpha(self, alpha: np.ndarray) -> None:
        self.alphas.append(np.asarray(alpha, dtype=float))

    def add_point(self, b: np.ndarray, y: float) -> None:
        self.points = np.vstack([self.points, b])
        self.values = np.append(self.values, y)


@dataclass
class StageResult:
    value: float
    joint: np.ndarray                 # over game pairs
    defender: np.ndarray              # best-response weights per defender edge
    alpha: Optional[np.ndarray] = None


def init_bounds_exact(game: ExplicitPosg) -> ExactBounds:
    """Lower bound ``min_{v in I} C*(v)``, corner values ``min_{v in I} Cbar*(v)``."""
    g = game.graph
    cstar = [float(c) for c in shortest_costs(g, "normal")]
    cbar = [float(c) for c in shortest_costs(g, "honeypot")]
    alpha = np.zeros(game.num_states)
    y = np.zeros(game.num_states)
    for s, inf in enumerate(game.states):
        if inf is not None:
            alpha[s] = min(cstar[v - 1] for v in inf)
            y[s] = min(cbar[v - 1] for v in inf)
    return ExactBounds([alpha], np.eye(game.num_states), y, game.num_states)


def lb_eval_exact(b: np.ndarray, alphas: List[np.ndarray]) -> float:
    return float(np.max(np.asarray(alphas) @ b))


def ub_eval_exact(b: np.ndarray, bounds: ExactBounds) -> float:
    """Projection of ``b`` onto the lower convex hull of the point set."""
    b = np.asarray(b, dtype=float)
    supp = b > SUPPORT_TOL
    usable = np.flatnonzero(~np.any(bounds.points[:, ~supp] > SUPPORT_TOL, axis=1))
    m = LpModel("min")
    lam = m.add_vars(len(usable), prefix="lam")
    m.set_objective(lam, bounds.values[usable])
    m.add_row("sum", lam, np.ones(len(usable)), "==", 1.0)
    pts = bounds.points[usable]
    for s in np.flatnonzero(supp):
        col = pts[:, s]
        nz = col != 0
        m.add_row(("b", int(s)), lam[nz], col[nz], "==", float(b[s]))
    return solve_or_raise(m, "upper-bound projection").objective


def _support_pairs(game: ExplicitPosg, b: np.ndarray) -> np.ndarray:
    states = np.flatnonzero(b > SUPPORT_TOL)
    return np.concatenate([game.state_pairs[s] for s in states])


def _stage_model(game: ExplicitPosg, b: np.ndarray):
    """Variables and rows shared by both stage LPs: the joint strategy and
    its consistency with ``b``."""
    m = LpModel("min")
    pairs = _support_pairs(game, b)
    pi = m.add_vars(len(pairs), prefix="pi")
    V = m.add_var(lb=-np.inf, name="V")
    m.set_objective([V], [1.0])
    states = game.pair_state[pairs]
    for s in np.unique(states):
        m.add_row(("b", int(s)), pi[states == s], np.ones(int(np.sum(states == s))), "==", float(b[s]))
    return m, pairs, pi, V


def _defender_weights(sol, n_edges: int) -> np.ndarray:
    return np.array([sol.dual(("br", a1)) for a1 in range(n_edges)])


def stage_lb_exact(b: np.ndarray, alphas: List[np.ndarray], game: ExplicitPosg) -> StageResult:
    m, pairs, pi, V = _stage_model(game, b)
    gamma = game.gamma
    A = np.asarray(alphas)
    n_e = len(game.edges)
    cont = {}
    for a1 in range(n_e):
        for o in (DET, NODET):
            cont[a1, o] = m.add_var(lb=-np.inf, name=f"V_{a1}_{o}")
    for a1 in range(n_e):
        m.add_row(("br", a1),
                  np.concatenate([[V], pi, [cont[a1, DET], cont[a1, NODET]]]),
                  np.concatenate([[1.0], -game.reward[pairs, a1], [-gamma, -gamma]]), ">=", 0.0)
        for o in (DET, NODET):
            hit = game.observation[pairs, a1] == o
            succ = game.next_state[pairs[hit], a1]
            for i in range(len(A)):
                coef = A[i, succ]
                nz = coef != 0
                m.add_row(("alpha", a1, o, i),
                          np.concatenate([[cont[a1, o]], pi[hit][nz]]),
                          np.concatenate([[1.0], -coef[nz]]), ">=", 0.0)
    sol = solve_or_raise(m, "exact lower-bound stage game")
    joint = np.zeros(game.num_pairs)
    joint[pairs] = np.maximum(sol.x[pi], 0.0)
    p = _defender_weights(sol, n_e)

    # Dual-feasible completion: each state's alpha value is the attacker's best
    # response against the defender's mixed honeypot and the continuation mixture.
    mu = np.array([[[sol.dual(("alpha", a1, o, i)) for i in range(len(A))] for o in (DET, NODET)]
                   for a1 in range(n_e)])
    cont_val = mu @ A                                    # (|A1|, 2, |S|)
    cols = np.arange(n_e)[None, :]
    per_pair = game.reward @ p + cont_val[cols, game.observation, game.next_state].sum(axis=1)
    starts = np.array([sp[0] for sp in game.state_pairs])
    alpha = np.minimum.reduceat(per_pair, starts)
    return StageResult(sol.objective, joint, p, alpha)


def stage_ub_exact(b: np.ndarray, bounds: ExactBounds, game: ExplicitPosg) -> StageResult:
    m, pairs, pi, V = _stage_model(game, b)
    gamma = game.gamma
    n_e = len(game.edges)
    pts, ys = bounds.points, bounds.values
    for a1 in range(n_e):
        idx, coef = [V], [1.0]
        idx.extend(pi)
        coef.extend(-game.reward[pairs, a1])
        for o in (DET, NODET):
            hit = game.observation[pairs, a1] == o
            succ = game.next_state[pairs[hit], a1]
            reach = np.zeros(game.num_states, dtype=bool)
            reach[succ] = True
            usable = np.flatnonzero(~np.any(pts[:, ~reach] > SUPPORT_TOL, axis=1))
            lam = m.add_vars(len(usable), prefix=f"lam_{a1}_{o}_")
            idx.extend(lam)
            coef.extend(-gamma * ys[usable])
            for s in np.flatnonzero(reach):
                into = succ == s
                col = pts[usable, s]
                nz = col != 0
                m.add_row(("hull", a1, o, int(s)),
                          np.concatenate([lam[nz], pi[hit][into]]),
                          np.concatenate([col[nz], -np.ones(int(into.sum()))]), "==", 0.0)
        m.add_row(("br", a1), idx, coef, ">=", 0.0)
    sol = solve_or_raise(m, "exact upper-bound stage game")
    joint = np.zeros(game.num_pairs)
    joint[pairs] = np.maximum(sol.x[pi], 0.0)
    return StageResult(sol.objective, joint, _defender_weights(sol, n_e))


class ExactEngine:
    """Engine adapter for :func:`run_hsvi` over full beliefs."""

    def __init__(self, game: ExplicitPosg, bounds: Optional[ExactBounds] = None):
        self.game = game
        self.bounds = bounds or init_bounds_exact(game)
        self.visited: List[np.ndarray] = []

    def lb(self, b) -> float:
        return lb_eval_exact(b, self.bounds.alphas)

    def ub(self, b) -> float:
        return ub_eval_exact(b, self.bounds)

    def update(self, b):
        self.visited.append(np.array(b, dtype=float))
        lo = stage_lb_exact(b, self.bounds.alphas, self.game)
        hi = stage_ub_exact(b, self.bounds, self.game)
        self.bounds.add_alpha(lo.alpha)
        if hi.value < self.ub(b):
            self.bounds.add_point(b, hi.value)
        succ = []
        for a1 in range(len(self.game.edges)):
            for o in (DET, NODET):
                mass = self.game.successor_mass(lo.joint, a1, o)
                q = float(mass.sum())
                if q > 0:
                    succ.append((q, mass / q))
        return succ

    def prune(self) -> None:
        self.bounds.alphas = prune_alphas(self.bounds.alphas)
        self.bounds.points, self.bounds.values = prune_points(self.bounds)


def prune_alphas(alphas: List[np.ndarray], tol: float = 1e-9) -> List[np.ndarray]:
    """Drop alpha vectors dominated state-wise by another one."""
    A = np.asarray(alphas)
    keep = []
    for i in range(len(A)):
        dominated = False
        for j in range(len(A)):
            if i != j and np.all(A[j] >= A[i] - tol) and (np.any(A[j] > A[i] + tol) or j < i):
                dominated = True
                break
        if not dominated:
            keep.append(alphas[i])
    return keep


def prune_points(bounds: ExactBounds, tol: float = 1e-9) -> Tuple[np.ndarray, np.ndarray]:
    """Drop non-corner points that lie on or above the hull of the others."""
    c = bounds.num_corners
    pts, ys = bounds.points, bounds.values
    keep = list(range(len(pts)))
    for i in range(len(pts) - 1, c - 1, -1):
        others = [k for k in keep if k != i]
        rest = ExactBounds([], pts[others], ys[others], c)
        if ub_eval_exact(pts[i], rest) <= ys[i] + tol:
            keep.remove(i)
    return pts[keep], ys[keep]


@dataclass
class ExactSolution:
    result: HsviResult
    bounds: ExactBounds
    game: ExplicitPosg
    visited: List[np.ndarray]

    @property
    def lb(self) -> float:
        return self.result.lb

    @property
    def ub(self) -> float:
        return self.result.ub


def hsvi_exact(game_or_graph, epsilon: float = 0.1, depth_cap: Optional[int] = None,
               budget_secs: Optional[float] = None, max_trials: Optional[int] = None,
               max_states: int = DEFAULT_MAX_STATES) -> ExactSolution:
    game = game_or_graph
    if isinstance(game_or_graph, LayeredDag):
        game = build_lateral_posg(game_or_graph, max_states=max_states)
    if depth_cap is None:
        depth_cap = 5 * game.graph.n
    engine = ExactEngine(game)
    result = run_hsvi(engine, game.initial_belief(), epsilon, depth_cap, budget_secs, max_trials)
    return ExactSolution(result, engine.bounds, game, engine.visited)
