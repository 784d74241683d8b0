import numpy as np
import pytest

from ivgp.data import CaseSet, FitnessCase
from ivgp.gp.engine import (
    HISTORY_COLUMNS,
    FitnessCache,
    fitness_mse,
    run_evolution,
    write_history,
)
from ivgp.gp.operators import WORST_FITNESS, GpParams, init_population, random_tree
from ivgp.gp.tree import evaluate, parse_prefix
from ivgp.subset_selection import SchedulerConfig, SubsetScheduler

SMALL = GpParams(mu=20, lam=40, epoch_length=5, generations_static=20, generations_dynamic=30)


def surface_cases(name, n, seed):
    rng = np.random.default_rng(seed)
    sk = rng.uniform(0.85, 1.15, n)
    tau = rng.uniform(0.05, 1.0, n)
    ck = rng.uniform(0.01, 0.2, n)
    sigma = 0.15 + 0.5 * np.log(sk) ** 2 + 0.05 * np.sqrt(tau)
    return CaseSet(name, ck, sk, tau, sigma, np.arange(n))


@pytest.fixture(scope="module")
def subsets():
    return [surface_cases(f"S{i + 1}", 60, i) for i in range(4)]


def run(method, subsets, seed=0, test=None, **kw):
    ids = [s.name for s in subsets]
    g = SMALL.generations_static if method == "STATIC" else SMALL.epoch_length
    cfg = SchedulerConfig(method, g, ids, seed=seed + 100, **kw)
    return run_evolution(SMALL, SubsetScheduler(cfg), subsets, test,
                         np.random.default_rng(seed))


class TestFitness:
    def test_mse_by_hand(self):
        cases = [FitnessCase(0.1, 1.0, 0.5, 0.2), FitnessCase(0.3, 1.1, 0.25, 0.4)]
        tree = parse_prefix("(add ck ck)")  # predicts 0.2 and 0.6
        assert fitness_mse(tree, cases) == pytest.approx((0.0 + 0.04) / 2, abs=1e-15)

    def test_empty_dataset(self):
        with pytest.raises(ValueError):
            fitness_mse(parse_prefix("(add ck sk)"), [])

    def test_capped_outputs_keep_mse_finite(self):
        cs = CaseSet("x", np.ones(2), np.ones(2), np.ones(2), np.ones(2), np.arange(2))
        # e^700 is capped at 1e100 so the squared error stays representable
        huge = parse_prefix("(exp (exp (exp (exp ck))))")
        assert fitness_mse(huge, cs) == pytest.approx(1e200, rel=1e-12)
        assert fitness_mse(huge, cs) < WORST_FITNESS

    def test_callable_predictor(self, subsets):
        s = subsets[0]
        tree = parse_prefix("(pdiv ck sk)")
        assert fitness_mse(lambda cs: cs.ck / cs.sk, s) == fitness_mse(tree, s)

    def test_cache_is_bit_identical(self, subsets):
        rng = np.random.default_rng(3)
        cache = FitnessCache(subsets[1])
        for _ in range(300):
            t = random_tree(rng, int(rng.integers(1, 9)))
            assert cache(t) == fitness_mse(t, subsets[1])
            assert np.array_equal(cache.predict(t),
                                  evaluate(t, subsets[1].ck, subsets[1].sk, subsets[1].tau))

    def test_cache_retain_prunes(self, subsets):
        pop = init_population(SMALL, np.random.default_rng(0))
        cache = FitnessCache(subsets[0])
        cache.assign(pop)
        before = len(cache._memo)
        cache.retain(pop[:3])
        assert len(cache._memo) < before
        assert all(cache(ind.tree) == ind.fitness for ind in pop)


class TestEvolution:
    def test_static_history_shape(self, subsets):
        res = run("STATIC", subsets[:1])
        assert len(res.history) == 20
        assert [h.generation for h in res.history] == list(range(1, 21))
        assert {h.active_subset_id for h in res.history} == {"S1"}
        assert len(res.champions) == 1

    def test_best_so_far_is_monotone_within_epoch(self, subsets):
        res = run("SSS", subsets)
        for e in range(6):
            chunk = res.best_so_far[e * 5:(e + 1) * 5]
            assert chunk == sorted(chunk, reverse=True)

    def test_subsets_rotate_every_epoch(self, subsets):
        res = run("SSS", subsets)
        active = [h.active_subset_id for h in res.history]
        assert active == [subsets[(t // 5) % 4].name for t in range(30)]
        assert len(res.champions) == 6

    def test_winner_has_lowest_test_mse(self, subsets):
        test = surface_cases("T", 80, 99)
        res = run("RSS", subsets, test=test)
        assert res.best_test_mse == min(c.test_mse for c in res.champions)
        assert res.best_test_mse == fitness_mse(res.best.tree, test)

    def test_determinism(self, subsets, tmp_path):
        for name in ("a.csv", "b.csv"):
            write_history(tmp_path / name, run("ARSS", subsets, seed=5).history)
        assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()
        assert (tmp_path / "a.csv").read_text().splitlines()[0] == ",".join(HISTORY_COLUMNS)

    def test_different_seeds_differ(self, subsets):
        assert run("RSS", subsets, seed=1).best.tree != run("RSS", subsets, seed=2).best.tree

    def test_weights_follow_population_fitness(self, subsets):
        res = run("ASSS", subsets)
        sched = res.scheduler
        # after the warm-up every subset carries the mean MSE of its last epoch
        assert np.all(sched.state.weights != 1.0)

    def test_best_on_all_mode(self, subsets):
        res = run("ASSS", subsets, weight_mode="best_on_all")
        champ = res.champions[-1].individual
        expected = [fitness_mse(champ.tree, s) for s in subsets]
        assert res.scheduler.state.weights.tolist() == expected

    def test_subset_count_must_match(self, subsets):
        cfg = SchedulerConfig("RSS", 5, ["a", "b"])
        with pytest.raises(ValueError):
            run_evolution(SMALL, SubsetScheduler(cfg), subsets)

    def test_callback_sees_every_generation(self, subsets):
        seen = []
        cfg = SchedulerConfig("SSS", 5, [s.name for s in subsets])
        run_evolution(SMALL, SubsetScheduler(cfg), subsets, rng=np.random.default_rng(0),
                      on_generation=lambda t, pop: seen.append((t, len(pop))))
        assert seen == [(t, 20) for t in range(1, 31)]

    def test_learns_the_surface(self, subsets):
        params = GpParams(mu=50, lam=100, generations_static=60)
        cfg = SchedulerConfig("STATIC", 60, ["S1"])
        res = run_evolution(params, SubsetScheduler(cfg), subsets[:1], rng=np.random.default_rng(0))
        baseline = float(np.var(subsets[0].sigma))
        assert res.history[-1].best_mse < baseline
