"""
Expression trees and protected operators
========================================

Models are prefix-encoded trees over the terminals ck (C/K), sk (S/K) and
tau.  Division, logarithm, square root and exponential are protected so
that every tree evaluates to a finite number.
"""

import numpy as np

from ivgp.gp.operators import GpParams, crossover, init_population, mutate, random_tree
from ivgp.gp.tree import evaluate, parse_prefix, to_infix

tree = parse_prefix("(pdiv (psqrt ck) (add sk (mul tau tau)))")
print(tree, "depth", tree.depth, "nodes", len(tree))
print(to_infix(tree))

ck = np.array([0.02, 0.05, 0.1])
sk = np.array([0.95, 1.0, 1.05])
tau = np.array([0.1, 0.5, 1.0])
print("values:", evaluate(tree, ck, sk, tau))

# x / 0 = 1 and ln 0 = 0 keep degenerate trees finite
print(evaluate(parse_prefix("(pdiv ck (sub sk sk))"), ck, sk, tau))
print(evaluate(parse_prefix("(pln (sub tau tau))"), ck, sk, tau))
print(evaluate(parse_prefix("(exp (exp (exp (exp sk))))"), ck, sk, tau))

# ramped half-and-half start, then one of each variation operator
rng = np.random.default_rng(1)
pop = init_population(GpParams(), rng)
print("initial depths:", sorted({ind.depth for ind in pop}))
a, b = pop[10].tree, pop[60].tree
print("parent  ", a)
print("cross   ", crossover(a, b, rng))
for kind in ("branch", "point", "expansion"):
    print(f"{kind:8s}", mutate(a, kind, rng))
print("grown   ", random_tree(rng, 4))
