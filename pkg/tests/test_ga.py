import dataclasses

import numpy as np
import pytest

from parloop.dependence import Label, classify
from parloop.errors import ExhaustedError
from parloop.ga import (
    EDIT_KINDS,
    GAConfig,
    Individual,
    crossover,
    evolve,
    fitness,
    mutate,
    random_loop,
    structural_features,
    tournament,
)
from parloop.loop_model import render, validate
from parloop.parse import parse_source

from conftest import loop

SMALL = dict(population_size=40, generations=3)


def test_fitness_by_hand():
    nest = loop("if (b[i] > 0) { a[i] = 1; } if (c[i] > 0) { a[i] = 2; }")
    assert structural_features(nest) == {"functions": 1, "conditionals": 2, "variables": 3, "loops": 1}
    ind = Individual(nest)
    assert fitness(ind, GAConfig(target_class=Label.PARALLELIZABLE)) == 8.0


def test_fitness_zero_for_wrong_class_and_invalid():
    nest = loop("a[i] = b[i];")
    assert fitness(Individual(nest), GAConfig(target_class=Label.UNDEFINED)) == 0.0
    bad = loop("a[i] = b[i + 1];")
    ind = Individual(bad)
    assert fitness(ind, GAConfig()) == 0.0 and ind.label is None


def test_weighted_fitness():
    nest = loop("if (b[i] > 0) { a[i] = 1; }")
    cfg = GAConfig(weights={"functions": 0.0, "conditionals": 5.0, "variables": 0.0, "loops": 0.0},
                   validity_bonus=0.5)
    assert fitness(Individual(nest), cfg) == 5.5


def test_config_validation():
    with pytest.raises(ValueError):
        GAConfig(crossover_rate=1.5)
    with pytest.raises(ValueError):
        GAConfig(weights={"bogus": 1.0})
    assert GAConfig(population_size=200).elite_count == 2
    assert GAConfig(population_size=20).elite_count == 1


def test_random_loops_are_valid():
    rng = np.random.default_rng(0)
    cfg = GAConfig()
    for _ in range(300):
        assert validate(random_loop(rng, cfg))


class TestCrossover:
    def test_self_crossover(self):
        nest = random_loop(np.random.default_rng(1), GAConfig())
        a = Individual(nest)
        c1, c2 = crossover(a, a.copy(), np.random.default_rng(2), GAConfig(crossover_rate=1.0))
        assert render(c1.genome) == render(nest) == render(c2.genome)

    def test_rate_zero_copies(self):
        rng = np.random.default_rng(3)
        cfg = GAConfig(crossover_rate=0.0)
        a, b = Individual(random_loop(rng, cfg)), Individual(random_loop(rng, cfg))
        c1, c2 = crossover(a, b, rng, cfg)
        assert c1.genome == a.genome and c2.genome == b.genome

    def test_children_always_valid(self):
        rng = np.random.default_rng(4)
        cfg = GAConfig(crossover_rate=1.0)
        pool = [random_loop(rng, cfg) for _ in range(60)]
        for k in range(2000):
            a = Individual(pool[int(rng.integers(len(pool)))])
            b = Individual(pool[int(rng.integers(len(pool)))])
            c1, c2 = crossover(a, b, np.random.default_rng([4, k]), cfg)
            assert validate(c1.genome) and validate(c2.genome)


class TestMutate:
    def test_rate_zero_identity(self):
        rng = np.random.default_rng(5)
        cfg = GAConfig(mutation_rate=0.0)
        nest = random_loop(rng, cfg)
        assert mutate(Individual(nest), rng, cfg).genome == nest

    def test_rate_one_stays_valid(self):
        rng = np.random.default_rng(6)
        cfg = GAConfig(mutation_rate=1.0)
        changed = 0
        for k in range(2000):
            nest = random_loop(rng, cfg)
            out = mutate(Individual(nest), np.random.default_rng([6, k]), cfg)
            assert validate(out.genome)
            changed += render(out.genome) != render(nest)
        assert changed > 1000

    def test_constant_edit(self):
        nest = parse_source(
            "void kernel(int n, int a[n]) {\n    for (int i = 0; i < n; i++) {\n        a[i] = i + 1;\n    }\n}\n"
        )
        for seed in range(10):
            out = mutate(Individual(nest), np.random.default_rng(seed), GAConfig(), kind="constant")
            text = render(out.genome)
            assert "a[i] = i + " in text or "a[i] = i - " in text or text == render(nest)

    @pytest.mark.parametrize("kind", EDIT_KINDS)
    def test_each_kind_valid(self, kind):
        rng = np.random.default_rng(7)
        cfg = GAConfig()
        for k in range(200):
            out = mutate(Individual(random_loop(rng, cfg)), np.random.default_rng([7, k]), cfg, kind=kind)
            assert validate(out.genome)


def test_tournament_prefers_fitter():
    pop = [Individual(loop("a[i] = 1;"), fitness=float(f)) for f in range(10)]
    winners = tournament(pop, 200, 3, np.random.default_rng(8))
    assert np.mean([w.fitness for w in winners]) > 4.5


class TestEvolve:
    @pytest.mark.parametrize("target", [Label.PARALLELIZABLE, Label.UNDEFINED])
    def test_purity_and_uniqueness(self, target):
        out = evolve(GAConfig(target_class=target, seed=3, **SMALL))
        assert out
        assert len({s.id for s in out}) == len(out)
        for s in out:
            nest = parse_source(s.source_text)
            assert validate(nest) and classify(nest) is target and s.label == int(target)
        fits = [float(s.provenance.rsplit("=", 1)[1]) for s in out]
        assert fits == sorted(fits, reverse=True)

    def test_deterministic(self):
        cfg = GAConfig(seed=9, **SMALL)
        assert evolve(cfg) == evolve(dataclasses.replace(cfg))

    def test_callback_sees_every_generation(self):
        seen = []
        evolve(GAConfig(seed=1, **SMALL), on_generation=lambda g, pop: seen.append((g, len(pop))))
        assert seen == [(g, 40) for g in range(4)]

    def test_exhausted(self):
        # all-zero weights and bonus leave every individual at fitness 0
        cfg = GAConfig(target_class=Label.UNDEFINED, population_size=2, generations=1,
                       weights={"functions": 0.0, "conditionals": 0.0, "variables": 0.0, "loops": 0.0},
                       validity_bonus=0.0, seed=0)
        with pytest.raises(ExhaustedError):
            evolve(cfg)
