from .engine import (EvolutionResult, FitnessCache, HistoryRow, fitness_mse, run_evolution,
                     write_history)
from .operators import (GpParams, Individual, breed, crossover, init_population, mutate,
                        random_tree, replace_comma, tournament_select)
from .tree import ExprTree, eval_tree, evaluate, parse_prefix, to_infix, to_prefix
