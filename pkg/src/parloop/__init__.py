"""Loop parallelizability laboratory.

Generate labeled loop corpora with a genetic algorithm and a brute-force
dependence oracle, tokenize them, train a transformer classifier and evaluate
it with stratified cross-validation.
"""
__version__ = "0.1.0"
