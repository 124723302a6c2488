import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from compact_posg.graph import chain, generate_instance, infection_update, stage_cost
from compact_posg.posg import (DET, NODET, ImpossibleObservation, StateSpaceTooLarge, belief_update,
                               build_lateral_posg, characteristic_vector, conditional_from_joint)


def pure_strategy(game, path):
    """Conditional strategy playing ``path`` wherever it is feasible, else the
    first feasible action."""
    cond = np.zeros(game.num_pairs)
    target = game.paths.index(path) if path in game.paths else -1
    for s, pairs in enumerate(game.state_pairs):
        acts = game.pair_action[pairs]
        hit = np.flatnonzero(acts == target)
        cond[pairs[hit[0] if len(hit) else 0]] = 1.0
    return cond


class TestBuild:
    def test_two_vertices(self):
        game = build_lateral_posg(chain(2))
        assert game.num_states == 2
        assert len(game.edges) == 1 and len(game.paths) == 1

    def test_state_count(self, k4):
        assert build_lateral_posg(k4).num_states == 2 ** 2 + 1

    def test_transition_example(self, k4):
        game = build_lateral_posg(k4)
        s = game.state_index({1})
        o, s2, r = game.transition(s, game.edges.index((2, 3)), game.paths.index((1, 2, 3, 4)))
        assert o == DET
        assert game.states[s2] == frozenset({1, 2, 3})
        assert r == 4

    def test_cap(self):
        with pytest.raises(StateSpaceTooLarge):
            build_lateral_posg(chain(8), max_states=10)

    @pytest.mark.parametrize("seed", range(3))
    def test_transitions_match_graph_model(self, seed):
        g = generate_instance(6, 0.5, seed)
        game = build_lateral_posg(g)
        for k in range(game.num_pairs):
            s, a2 = game.pair_state[k], game.pair_action[k]
            inf = game.states[s]
            for a1, h in enumerate(game.edges):
                if inf is None:
                    assert game.next_state[k, a1] == game.terminal and game.reward[k, a1] == 0
                    continue
                P = game.paths[a2]
                assert P[0] in inf
                assert game.reward[k, a1] == float(stage_cost(P, h, g))
                assert game.next_state[k, a1] == game.state_index(infection_update(inf, P, h))
                assert game.observation[k, a1] == (DET if h in zip(P, P[1:]) else NODET)

    def test_every_state_has_an_action(self):
        game = build_lateral_posg(generate_instance(6, 0.5, 1))
        assert all(len(p) > 0 for p in game.state_pairs)
        assert game.pair_action[game.state_pairs[game.terminal]].tolist() == [game.noop]


class TestBeliefUpdate:
    def test_detection(self, k4):
        game = build_lateral_posg(k4)
        b = game.initial_belief()
        cond = pure_strategy(game, (1, 2, 3, 4))
        post, prob = belief_update(game, b, game.edges.index((2, 3)), cond, DET)
        assert prob == 1.0
        assert post[game.state_index({1, 2, 3})] == 1.0

    def test_undetected(self, shortcut4):
        game = build_lateral_posg(shortcut4)
        cond = pure_strategy(game, (1, 2, 3, 4))
        h = game.edges.index((1, 3))
        post, prob = belief_update(game, game.initial_belief(), h, cond, NODET)
        assert prob == 1.0 and post[game.terminal] == 1.0
        with pytest.raises(ImpossibleObservation):
            belief_update(game, game.initial_belief(), h, cond, DET)

    @given(st.integers(0, 500), st.integers(4, 6))
    @settings(max_examples=25, deadline=None)
    def test_posteriors_are_distributions(self, seed, n):
        rng = np.random.default_rng(seed)
        game = build_lateral_posg(generate_instance(n, 0.5, seed))
        b = rng.dirichlet(np.ones(game.num_states))
        raw = rng.random(game.num_pairs)
        sums = np.bincount(game.pair_state, weights=raw)
        cond = raw / sums[game.pair_state]
        a1 = int(rng.integers(len(game.edges)))
        total = 0.0
        for o in (DET, NODET):
            try:
                post, prob = belief_update(game, b, a1, cond, o)
            except ImpossibleObservation:
                continue
            assert np.all(post >= 0) and abs(post.sum() - 1) < 1e-9
            total += prob
        assert abs(total - 1) < 1e-9

    def test_chain_beliefs_stay_pure(self):
        game = build_lateral_posg(chain(6))
        b = game.initial_belief()
        frontier = (1, 2, 3, 4, 5, 6)
        cond = conditional_from_joint(game, np.where(
            np.isin(game.pair_action, [game.paths.index(frontier)]), 1.0, 0.0) * b[game.pair_state])
        for a1 in range(len(game.edges)):
            for o in (DET, NODET):
                try:
                    post, _ = belief_update(game, b, a1, cond, o)
                except ImpossibleObservation:
                    continue
                assert np.count_nonzero(post) == 1


class TestCharacteristicVector:
    def test_examples(self, k4):
        game = build_lateral_posg(k4)
        A = game.abstraction
        assert characteristic_vector(game.initial_belief(), A).tolist() == [1, 0, 0, 0]
        b = 0.5 * game.pure_belief({1}) + 0.5 * game.pure_belief({1, 2})
        assert characteristic_vector(b, A).tolist() == [1, 0.5, 0, 0]
        assert characteristic_vector(game.pure_belief({1, 4}), A).tolist() == [1, 1, 1, 1]

    def test_abstraction_matrix(self):
        A = build_lateral_posg(generate_instance(6, 0.5, 0)).abstraction
        assert set(np.unique(A)) <= {0.0, 1.0}
        assert np.all(A[0] == 1)

    @given(st.integers(0, 1000), st.floats(0, 1))
    @settings(max_examples=25)
    def test_linear(self, seed, lam):
        rng = np.random.default_rng(seed)
        A = build_lateral_posg(chain(5)).abstraction
        b1, b2 = rng.dirichlet(np.ones(A.shape[1]), size=2)
        mix = characteristic_vector(lam * b1 + (1 - lam) * b2, A)
        assert np.allclose(mix, lam * characteristic_vector(b1, A) + (1 - lam) * characteristic_vector(b2, A))
