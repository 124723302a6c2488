"""Explicit one-sided POSG for the lateral-movement game.

States are infections (vertex sets containing vertex 1); every infection that
contains the target is merged into one absorbing terminal state.  Values are
the attacker's expected total cost: the defender (player 1) maximises, the
attacker (player 2, perfectly informed) minimises.

Attacker actions are paths; a path is available in a state when its first
vertex is infected.  The terminal state has a single zero-cost ``NOOP``
action.  The game is stored as a list of feasible (state, action) pairs with
dense per-pair arrays of rewards, successor states and observations for every
defender action.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import List, Optional, Tuple

import numpy as np

from .graph import LayeredDag, Path, all_paths, path_edges, prefix_until, stage_cost, DEFAULT_MAX_PATHS

DET, NODET = 0, 1
OBSERVATIONS = ("det", "nodet")
DEFAULT_MAX_STATES = 2 ** 10 + 1


class StateSpaceTooLarge(RuntimeError):
    pass


class ImpossibleObservation(ValueError):
    pass


def vertex_mask(vertices) -> int:
    m = 0
    for v in vertices:
        m |= 1 << (v - 1)
    return m


@dataclass(frozen=True, eq=False)
class ExplicitPosg:
    graph: LayeredDag
    gamma: float
    states: Tuple[Optional[frozenset], ...]  # None marks the terminal
    edges: Tuple[Tuple[int, int], ...]       # defender actions
    paths: Tuple[Path, ...]                  # attacker actions; index len(paths) is NOOP
    pair_state: np.ndarray                   # (K,) state of each feasible pair
    pair_action: np.ndarray                  # (K,) attacker action of each pair
    reward: np.ndarray                       # (K, |A1|) stage cost
    next_state: np.ndarray                   # (K, |A1|)
    observation: np.ndarray                  # (K, |A1|) DET or NODET
    state_pairs: Tuple[np.ndarray, ...]      # pair indices grouped by state
    abstraction: np.ndarray                  # (n, |S|) marginal-infection matrix

    @property
    def num_states(self) -> int:
        return len(self.states)

    @property
    def terminal(self) -> int:
        return len(self.states) - 1

    @property
    def noop(self) -> int:
        return len(self.paths)

    @property
    def num_pairs(self) -> int:
        return len(self.pair_state)

    def state_index(self, infection) -> int:
        n = self.graph.n
        if n in infection:
            return self.terminal
        if 1 not in infection:
            raise ValueError("infection must contain vertex 1")
        return (vertex_mask(infection) >> 1) & ((1 << (n - 2)) - 1)

    def pure_belief(self, infection) -> np.ndarray:
        b = np.zeros(self.num_states)
        b[self.state_index(infection)] = 1.0
        return b

    def initial_belief(self) -> np.ndarray:
        return self.pure_belief({1})

    def feasible(self, s: int, action: int) -> bool:
        if s == self.terminal:
            return action == self.noop
        return action != self.noop and self.paths[action][0] in self.states[s]

    def transition(self, s: int, a1: int, a2: int) -> Tuple[int, int, float]:
        """(observation, successor, stage cost) of a feasible (s, a1, a2)."""
        k = self.state_pairs[s][self.pair_action[self.state_pairs[s]] == a2]
        if len(k) == 0:
            raise ValueError(f"action {a2} infeasible in state {s}")
        k = k[0]
        return int(self.observation[k, a1]), int(self.next_state[k, a1]), float(self.reward[k, a1])

    def successor_mass(self, joint: np.ndarray, a1: int, o: int) -> np.ndarray:
        """Unnormalised successor belief given a joint pair distribution."""
        w = np.where(self.observation[:, a1] == o, joint, 0.0)
        return np.bincount(self.next_state[:, a1], weights=w, minlength=self.num_states)


def build_lateral_posg(g: LayeredDag, gamma: float = 1.0, max_states: int = DEFAULT_MAX_STATES,
                       max_paths: int = DEFAULT_MAX_PATHS) -> ExplicitPosg:
    n = g.n
    num_states = 2 ** (n - 2) + 1
    if num_states > max_states:
        raise StateSpaceTooLarge(f"{num_states} states exceed the cap of {max_states}")
    paths = all_paths(g, max_paths)
    edges = g.edges
    terminal = num_states - 1
    full = (1 << (n - 2)) - 1

    states: List[Optional[frozenset]] = []
    for m in range(num_states - 1):
        states.append(frozenset([1] + [v for v in range(2, n) if m >> (v - 2) & 1]))
    states.append(None)

    # per path and defender edge: cost, observation, bits of newly infected vertices
    n_p, n_e = len(paths), len(edges)
    p_cost = np.zeros((n_p, n_e))
    p_obs = np.zeros((n_p, n_e), dtype=np.int64)
    p_add = np.zeros((n_p, n_e), dtype=np.int64)
    p_hits_target = np.zeros((n_p, n_e), dtype=bool)
    for pi, P in enumerate(paths):
        on_path = set(path_edges(P))
        for hi, h in enumerate(edges):
            p_cost[pi, hi] = float(stage_cost(P, h, g))
            p_obs[pi, hi] = DET if h in on_path else NODET
            heads = [v for (_, v) in prefix_until(P, h)]
            p_hits_target[pi, hi] = n in heads
            p_add[pi, hi] = sum(1 << (v - 2) for v in heads if v != n)
    start = np.array([P[0] for P in paths], dtype=np.int64)

    pair_state, pair_action = [], []
    for m in range(num_states - 1):
        start_infected = ((m >> np.maximum(start - 2, 0)) & 1).astype(bool)
        ok = (start == 1) | (start_infected & (start >= 2))
        idx = np.flatnonzero(ok)
        pair_state.append(np.full(len(idx), m, dtype=np.int64))
        pair_action.append(idx)
    pair_state.append(np.array([terminal]))
    pair_action.append(np.array([n_p]))
    pair_state = np.concatenate(pair_state)
    pair_action = np.concatenate(pair_action)

    real = pair_action < n_p
    K = len(pair_state)
    reward = np.zeros((K, n_e))
    observation = np.full((K, n_e), NODET, dtype=np.int64)
    next_state = np.full((K, n_e), terminal, dtype=np.int64)
    pa = pair_action[real]
    reward[real] = p_cost[pa]
    observation[real] = p_obs[pa]
    ns = (pair_state[real][:, None] | p_add[pa]) & full
    next_state[real] = np.where(p_hits_target[pa], terminal, ns)

    order = np.argsort(pair_state, kind="stable")
    bounds = np.searchsorted(pair_state[order], np.arange(num_states + 1))
    state_pairs = tuple(order[bounds[s]:bounds[s + 1]] for s in range(num_states))

    A = np.zeros((n, num_states))
    for s, inf in enumerate(states):
        if inf is None:
            A[:, s] = 1.0
        else:
            A[[v - 1 for v in inf], s] = 1.0

    return ExplicitPosg(g, gamma, tuple(states), tuple(edges), tuple(paths), pair_state, pair_action,
                        reward, next_state, observation, state_pairs, A)


def characteristic_vector(b: np.ndarray, A: np.ndarray) -> np.ndarray:
    return A @ np.asarray(b, dtype=float)


def joint_from_conditional(game: ExplicitPosg, b: np.ndarray, cond: np.ndarray) -> np.ndarray:
    return np.asarray(b)[game.pair_state] * np.asarray(cond)


def belief_update(game: ExplicitPosg, b: np.ndarray, a1: int, pi2: np.ndarray, o: int,
                  tol: float = 1e-12) -> Tuple[np.ndarray, float]:
    """Bayesian update of the defender's belief.

    ``pi2`` gives, for every feasible pair ``k``, the conditional probability of
    the attacker playing ``pair_action[k]`` in ``pair_state[k]``.  Returns the
    posterior and the probability of observing ``o``.
    """
    mass = game.successor_mass(joint_from_conditional(game, b, pi2), a1, o)
    prob = float(mass.sum())
    if prob <= tol:
        raise ImpossibleObservation(f"observation {OBSERVATIONS[o]} has probability {prob:g}")
    return mass / prob, prob


def conditional_from_joint(game: ExplicitPosg, joint: np.ndarray) -> np.ndarray:
    """Per-state conditional strategy; states without mass play uniformly."""
    mass = np.bincount(game.pair_state, weights=joint, minlength=game.num_states)
    counts = np.bincount(game.pair_state, minlength=game.num_states)
    m = mass[game.pair_state]
    return np.where(m > 0, joint / np.where(m > 0, m, 1.0), 1.0 / counts[game.pair_state])
