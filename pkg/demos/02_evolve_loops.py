"""Breeding labelled loops with a genetic algorithm.

Fitness rewards structural richness (conditionals, distinct variables) but
only for loops the oracle puts in the target class, so the final population
is a pure sample of that class. A small population keeps this quick.
"""
from collections import Counter

from parloop.dependence import Label
from parloop.ga import GAConfig, evolve, structural_features
from parloop.parse import parse_source

best_per_gen = []


def watch(gen, pop):
    fits = [ind.fitness or 0.0 for ind in pop]
    hits = sum(ind.label == Label.PARALLELIZABLE for ind in pop)
    best_per_gen.append(max(fits))
    print(f"generation {gen:2d}: best fitness {max(fits):4.1f}, {hits}/{len(pop)} in target class")


cfg = GAConfig(target_class=Label.PARALLELIZABLE, population_size=60, generations=6, seed=3)
samples = evolve(cfg, on_generation=watch)

print(f"\n{len(samples)} unique Parallelizable loops; the fittest one:\n")
print(samples[0].source_text)

shape = Counter()
for s in samples:
    f = structural_features(parse_source(s.source_text))
    shape[(f["conditionals"], f["variables"])] += 1
print("most common (conditionals, variables):", shape.most_common(3))
