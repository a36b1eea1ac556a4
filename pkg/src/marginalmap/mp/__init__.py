"""Message passing: weighted updates, mixed-product BP and fixed-point checks."""
from ..beliefs import BeliefSet, MessageSet, MixedBeliefSet, beliefs_from_messages, mixed_beliefs
from .checks import (check_mixed_consistency, check_reparameterization, hamming_subsets,
                     verify_local_optimality)
from .engine import (SolveReport, SolverOptions, approx_q, clamp_max_nodes, iterate, mixed_tables,
                     mixed_update, one_round, run_annealed, run_generic, run_jiang, run_max_product,
                     run_mixed_product, run_sum_product, weighted_tables, weighted_update)
