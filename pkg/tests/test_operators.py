import collections

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from ivgp.gp.operators import (
    OPERATORS,
    GpParams,
    Individual,
    breed,
    crossover,
    crossover_points,
    init_population,
    mutate,
    random_tree,
    replace_comma,
    tournament_select,
)
from ivgp.gp.tree import ARITY, FUNCTIONS, TERMINALS, ExprTree, parse_prefix

seeds = st.integers(0, 2 ** 32 - 1)


class TestParams:
    def test_defaults(self):
        p = GpParams()
        assert (p.mu, p.lam, p.max_depth, p.tournament_size) == (100, 200, 17, 4)
        assert p.operator_probs.tolist() == [0.6, 0.2, 0.1, 0.1]

    @pytest.mark.parametrize("kw", [dict(p_crossover=0.7), dict(mu=300), dict(init_depth_max=20),
                                    dict(epoch_length=0)])
    def test_invalid(self, kw):
        with pytest.raises(ValueError):
            GpParams(**kw)


class TestInitialisation:
    def test_ramped_half_and_half(self):
        pop = init_population(GpParams(), np.random.default_rng(0))
        assert len(pop) == 100
        full = [ind for ind in pop if ind.origin == "init-full"]
        assert len(full) == 50
        # full trees reach their level exactly and have only functions above it
        for ind in full:
            d = ind.tree.node_depths()
            for sym, depth in zip(ind.tree.nodes, d):
                assert (ARITY[sym] == 0) == (depth == ind.depth)
        depths = collections.Counter(ind.depth for ind in full)
        assert sorted(depths) == [2, 3, 4, 5, 6]
        # grow trees may stop early but never exceed their level
        assert all(1 <= ind.depth <= 6 for ind in pop)

    @settings(max_examples=100)
    @given(seeds, st.integers(1, 8))
    def test_grow_respects_depth_and_has_function_root(self, seed, depth):
        t = random_tree(np.random.default_rng(seed), depth, "grow")
        assert t.depth <= depth
        assert t.nodes[0] in FUNCTIONS

    def test_zero_depth_is_terminal(self):
        assert random_tree(np.random.default_rng(0), 0).nodes[0] in TERMINALS


def individuals(fits, births=None):
    births = births or [0] * len(fits)
    return [Individual(ExprTree(("ck",)), f, b) for f, b in zip(fits, births)]


class TestSelection:
    def test_tournament_picks_minimum_of_draws(self):
        rng = np.random.default_rng(5)
        pop = individuals(list(rng.uniform(size=30)))
        for s in range(200):
            r1, r2 = np.random.default_rng(s), np.random.default_rng(s)
            picks = r1.integers(30, size=4)
            expected = min(picks, key=lambda i: pop[i].fitness)
            assert tournament_select(pop, r2, 4) is pop[expected]

    def test_tie_prefers_older_then_lower_index(self):
        pop = individuals([0.5, 0.5, 0.5], births=[3, 1, 1])
        rng = np.random.default_rng(0)
        for _ in range(50):
            state = rng.bit_generator.state
            picks = rng.integers(3, size=4)
            rng.bit_generator.state = state
            winner = tournament_select(pop, rng, 4)
            if 1 in picks:
                assert winner is pop[1]
            elif 2 in picks:
                assert winner is pop[2]

    def test_selection_pressure(self):
        # with k=4 the best of 10 wins with probability 1 - 0.9**4
        pop = individuals(list(range(10)))
        rng = np.random.default_rng(1)
        wins = sum(tournament_select(pop, rng, 4) is pop[0] for _ in range(20000))
        p = 1 - 0.9 ** 4
        sd = np.sqrt(20000 * p * (1 - p))
        assert abs(wins - 20000 * p) < 4 * sd

    def test_comma_replacement_ignores_parents(self):
        off = individuals([5.0, 1.0, 3.0, 1.0, 2.0])
        out = replace_comma(off, 3)
        assert [ind.fitness for ind in out] == [1.0, 1.0, 2.0]
        assert out[0] is off[1] and out[1] is off[3]

    def test_comma_needs_enough_offspring(self):
        with pytest.raises(ValueError):
            replace_comma(individuals([1.0]), 2)


class TestVariation:
    @settings(max_examples=200)
    @given(seeds)
    def test_crossover_swaps_internal_subtrees(self, seed):
        rng = np.random.default_rng(seed)
        p1, p2 = random_tree(rng, 5, "full"), random_tree(rng, 5)
        child = crossover(p1, p2, rng)
        assert child.depth <= 17
        if child != p1:
            # the prefix before the cut point and the suffix after it are from p1
            i = next(k for k in range(len(p1)) if k >= len(child) or child.nodes[k] != p1.nodes[k])
            assert i >= 1

    def test_crossover_depth_limit_falls_back_to_parent(self):
        # the only cut point sits at depth 1 and every donor has depth >= 1
        p1 = parse_prefix("(add ck (cos tau))")
        p2 = parse_prefix("(mul (sin (cos (exp tau))) ck)")
        for s in range(20):
            assert crossover(p1, p2, np.random.default_rng(s), max_depth=1) is p1

    def test_crossover_needs_internal_points(self):
        t = parse_prefix("(add ck sk)")
        assert crossover_points(t) == []
        assert crossover(t, t, np.random.default_rng(0)) is t

    @settings(max_examples=200)
    @given(seeds, st.sampled_from(["branch", "point", "expansion"]))
    def test_mutations_keep_limits(self, seed, kind):
        rng = np.random.default_rng(seed)
        t = random_tree(rng, 6)
        child = mutate(t, kind, rng)
        assert child.depth <= 17
        assert ExprTree(child.nodes).node_depths() == child.node_depths()

    @settings(max_examples=100)
    @given(seeds)
    def test_point_mutation_changes_one_symbol_of_same_arity(self, seed):
        rng = np.random.default_rng(seed)
        t = random_tree(rng, 5)
        child = mutate(t, "point", rng)
        diff = [i for i, (a, b) in enumerate(zip(t.nodes, child.nodes)) if a != b]
        assert len(child) == len(t) and len(diff) == 1
        assert ARITY[t.nodes[diff[0]]] == ARITY[child.nodes[diff[0]]]

    @settings(max_examples=100)
    @given(seeds)
    def test_expansion_only_grows(self, seed):
        rng = np.random.default_rng(seed)
        t = random_tree(rng, 4)
        assert len(mutate(t, "expansion", rng)) >= len(t)

    def test_unknown_mutation(self):
        with pytest.raises(ValueError):
            mutate(parse_prefix("(add ck sk)"), "swap", np.random.default_rng(0))


class TestBreeding:
    def test_operator_frequencies(self):
        params = GpParams()
        rng = np.random.default_rng(2)
        pop = init_population(params, rng)
        for i, ind in enumerate(pop):
            ind.fitness = float(i)
        counts = collections.Counter()
        for g in range(50):
            counts.update(ind.origin for ind in breed(pop, params, rng, g))
        observed = [counts[op] for op in OPERATORS]
        expected = np.array([0.6, 0.2, 0.1, 0.1]) * sum(observed)
        assert sum(observed) == 50 * params.lam
        assert stats.chisquare(observed, expected).pvalue > 1e-3

    def test_offspring_carry_generation(self):
        params = GpParams(mu=10, lam=20)
        rng = np.random.default_rng(0)
        pop = init_population(params, rng)
        off = breed(pop, params, rng, generation=7)
        assert len(off) == 20 and all(o.birth_generation == 7 for o in off)
