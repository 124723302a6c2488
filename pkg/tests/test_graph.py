from fractions import Fraction

import pytest
from hypothesis import given, settings, strategies as st

from compact_posg.graph import (GraphError, chain, chain_oracle, dumps_instance, enumerate_paths,
                                generate_instance, infection_update, loads_instance, make_dag, path_cost,
                                path_edges, prefix_until, shortest_costs, stage_cost)


def brute_force_paths(g, v):
    """Independent DFS over the edge list."""
    if v == g.n:
        return [(v,)]
    out = []
    for (i, j) in g.edges:
        if i == v:
            out.extend((v,) + tail for tail in brute_force_paths(g, j))
    return out


def brute_force_shortest(g, which):
    cost = g.normal_cost if which == "normal" else g.honeypot_cost
    best = []
    for v in range(1, g.n + 1):
        if v == g.n:
            best.append(0)
        else:
            best.append(min(sum(cost[e] for e in path_edges(P)) for P in brute_force_paths(g, v)))
    return best


instances = st.builds(generate_instance, st.integers(2, 7), st.sampled_from([0.0, 0.3, 0.5, 1.0]),
                      st.integers(0, 10_000))


class TestGenerate:
    def test_pure_chain(self):
        g = generate_instance(4, 0.0, seed=1)
        assert g.edges == ((1, 2), (2, 3), (3, 4))
        assert [g.C(e) for e in g.edges] == [1, 1, 1]
        assert [g.Cbar(e) for e in g.edges] == [2, 3, 4]

    def test_single_edge(self):
        g = generate_instance(2, 1.0, seed=0)
        assert g.edges == ((1, 2),)
        assert g.C((1, 2)) == 1 and g.Cbar((1, 2)) == 2

    def test_complete(self):
        g = generate_instance(4, 1.0, seed=0)
        assert set(g.edges) == {(1, 2), (1, 3), (1, 4), (2, 3), (2, 4), (3, 4)}
        assert g.C((1, 3)) == 2 and g.Cbar((1, 3)) == 6

    def test_rejects_small(self):
        with pytest.raises(GraphError):
            generate_instance(1, 0.5, seed=0)

    def test_rejects_bad_probability(self):
        with pytest.raises(GraphError):
            generate_instance(4, 1.5, seed=0)

    def test_reproducible(self):
        a = generate_instance(9, 0.5, seed=123)
        b = generate_instance(9, 0.5, seed=123)
        assert dumps_instance(a) == dumps_instance(b)
        assert dumps_instance(a) != dumps_instance(generate_instance(9, 0.5, seed=124))

    @given(instances)
    def test_invariants(self, g):
        for i in range(1, g.n):
            assert (i, i + 1) in g.edges
        for e in g.edges:
            assert e[0] < e[1]
            assert g.Cbar(e) >= g.C(e) > 0


class TestPaths:
    def test_chain(self, k4):
        paths = enumerate_paths(k4)
        assert paths == {1: [(1, 2, 3, 4)], 2: [(2, 3, 4)], 3: [(3, 4)]}

    def test_complete(self, complete4):
        assert enumerate_paths(complete4)[1] == [(1, 2, 3, 4), (1, 2, 4), (1, 3, 4), (1, 4)]

    def test_two_vertices(self):
        assert sum(len(v) for v in enumerate_paths(chain(2)).values()) == 1

    def test_cap(self):
        with pytest.raises(GraphError):
            enumerate_paths(generate_instance(10, 1.0, 0), max_paths=100)

    @given(instances)
    @settings(max_examples=30)
    def test_matches_dfs(self, g):
        got = enumerate_paths(g)
        for v in range(1, g.n):
            assert got[v] == sorted(brute_force_paths(g, v))
            for P in got[v]:
                assert P[-1] == g.n and all(a < b for a, b in zip(P, P[1:]))


class TestCosts:
    def test_path_cost(self, k4, complete4):
        assert path_cost((1, 2, 3, 4), k4) == 3
        assert path_cost((1, 3, 4), complete4) == 3
        assert path_cost((1, 2), chain(2)) == 1

    def test_prefix(self):
        P = (1, 2, 3, 4)
        assert prefix_until(P, (2, 3)) == [(1, 2), (2, 3)]
        assert prefix_until(P, (1, 3)) == [(1, 2), (2, 3), (3, 4)]
        assert prefix_until(P, (1, 2)) == [(1, 2)]

    def test_stage_cost(self, k4):
        P = (1, 2, 3, 4)
        assert stage_cost(P, (2, 3), k4) == 4
        assert stage_cost(P, (1, 3), k4) == 3
        assert stage_cost(P, (3, 4), k4) == 6

    @given(instances, st.data())
    def test_stage_cost_at_least_prefix(self, g, data):
        paths = [P for ps in enumerate_paths(g).values() for P in ps]
        P = data.draw(st.sampled_from(paths))
        h = data.draw(st.sampled_from(g.edges))
        plain = sum(g.C(e) for e in prefix_until(P, h))
        c = stage_cost(P, h, g)
        assert c >= plain
        assert (c == plain) == (h not in path_edges(P))


class TestInfection:
    def test_examples(self):
        P = (1, 2, 3, 4)
        assert infection_update({1}, P, (2, 3)) == {1, 2, 3}
        assert infection_update({1}, P, (1, 3)) == {1, 2, 3, 4}
        assert infection_update({1, 2}, (2, 3, 4), (2, 3)) == {1, 2, 3}

    def test_requires_infected_start(self):
        with pytest.raises(GraphError):
            infection_update({1}, (2, 3, 4), (2, 3))

    @given(instances, st.data())
    def test_monotone(self, g, data):
        inf = {1} | set(data.draw(st.sets(st.integers(1, g.n - 1))))
        paths = [P for v, ps in enumerate_paths(g).items() if v in inf for P in ps]
        P = data.draw(st.sampled_from(paths))
        h = data.draw(st.sampled_from(g.edges))
        assert infection_update(inf, P, h) >= inf


class TestShortest:
    def test_chain(self, k4):
        assert shortest_costs(k4, "normal") == [3, 2, 1, 0]
        assert shortest_costs(k4, "honeypot") == brute_force_shortest(k4, "honeypot") == [9, 7, 4, 0]

    def test_complete(self, complete4):
        assert shortest_costs(complete4)[0] == brute_force_shortest(complete4, "normal")[0] == 3

    @given(instances)
    @settings(max_examples=30)
    def test_against_brute_force(self, g):
        c, cbar = shortest_costs(g, "normal"), shortest_costs(g, "honeypot")
        assert c == brute_force_shortest(g, "normal")
        assert cbar == brute_force_shortest(g, "honeypot")
        assert all(b >= a for a, b in zip(c, cbar))
        if g.is_chain():
            assert all(x >= y for x, y in zip(c, c[1:]))


class TestChainOracle:
    @pytest.mark.parametrize("n, value", [(2, 2), (3, 5), (4, 9)])
    def test_hand_values(self, n, value):
        assert chain_oracle(chain(n)) == value

    def test_rejects_non_chain(self, complete4):
        with pytest.raises(GraphError):
            chain_oracle(complete4)

    @given(st.integers(2, 12), st.lists(st.integers(1, 9), min_size=22, max_size=22),
           st.lists(st.integers(0, 9), min_size=22, max_size=22))
    def test_between_cost_bounds(self, n, c, extra):
        edges = [(i, i + 1) for i in range(1, n)]
        C = {e: Fraction(c[k]) for k, e in enumerate(edges)}
        Cbar = {e: C[e] + extra[k] for k, e in enumerate(edges)}
        g = make_dag(n, edges, C, Cbar)
        w = chain_oracle(g)
        assert shortest_costs(g, "normal")[0] <= w <= shortest_costs(g, "honeypot")[0]


class TestInstanceFiles:
    def test_roundtrip(self, tmp_path):
        g = generate_instance(7, 0.5, seed=3)
        text = dumps_instance(g, "seed 3")
        assert text.startswith("# seed 3\n7\n")
        h = loads_instance(text)
        assert h == g and h.normal_cost == g.normal_cost and h.honeypot_cost == g.honeypot_cost

    def test_comments_and_fractions(self):
        g = loads_instance("# header\n3\n1 2 1/2 3 # trailing\n2 3 1 1\n")
        assert g.C((1, 2)) == Fraction(1, 2)

    @pytest.mark.parametrize("text", [
        "",
        "3\n1 2 1 2\n",                 # chain edge (2,3) missing
        "3\n1 2 1 2\n2 3 2 1\n",        # honeypot cost below normal cost
        "3\n1 2 1 2\n2 3 1 2\n3 2 1 2\n",  # backward edge
        "3\n1 2 1 2\n2 3 1\n",          # short row
        "3\n1 2 0 2\n2 3 1 2\n",        # zero cost
        "x\n",
    ])
    def test_rejects_invalid(self, text):
        with pytest.raises(GraphError):
            loads_instance(text)
