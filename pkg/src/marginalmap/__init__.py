"""Marginal MAP inference by variational message passing."""
from .errors import (ConsistencyError, InvalidConfigurationError, MarginalMapError, ParseError,
                     ResourceLimitError, StructuralViolationError, StructureError)
from .model import (EDGE_CROSS, EDGE_MAX, EDGE_SUM, GraphPartition, PairwiseModel, is_ab_tree,
                    partition_edges, random_model, weather_model)
from .oracle import (ExactResult, conditional_entropy_exact, exact_inference, log_partition_exact,
                     map_exact, marginal_map_exact, marginals_exact, q_value, smoothed_phi)

# the joint-energy function lives in ``marginalmap.model``; the name ``energy`` here is the
# entropy-weight submodule
__version__ = "0.1.0"
