from .embedding import RealEmbedding, embed, embed_matrix, embed_vector, unembed
from .oracle import grid_minimize, reference_oracle
from .prox import prox_composite, prox_groups, prox_l1, prox_l2
from .solvers import (SolverConfig, SolverError, SparseSolution, extract_association, solve_ew,
                      solve_gw, warm_restart)

__all__ = [
    "RealEmbedding", "embed", "embed_matrix", "embed_vector", "unembed",
    "grid_minimize", "reference_oracle",
    "prox_composite", "prox_groups", "prox_l1", "prox_l2",
    "SolverConfig", "SolverError", "SparseSolution", "extract_association",
    "solve_ew", "solve_gw", "warm_restart",
]
