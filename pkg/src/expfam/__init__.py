"""Score-matching structure learning for polynomial exponential families."""

__version__ = "0.1.0"

from .families import (  # noqa: F401
    Factor,
    Family,
    FactorGraph,
    Model,
    StructureSet,
    TailSpec,
    build_factor_graph,
    eval_basis,
    generate_family,
    group_l1_norms,
    induced_subgraph,
    maximal_structure,
    partial_derivative,
)
