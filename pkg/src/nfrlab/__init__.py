"""Normal form reduction experiments for dispersive equations on the torus."""

__version__ = "0.1.0"

from .lattice import SeqState, TruncatedLattice, norm_l2s, random_state
from .model import EQUATIONS, EquationSpec, registry
from .trees import Tree, TreeCountError, enumerate_system_trees, enumerate_trees, tree_count
from .nfr import (GenTerm, PhaseChain, ResonanceRule, ResourceCapError, build_generation,
                  eval_term, generation_equation, limit_equation_tail)
from .dynamics import IntegratorCfg, RegularizationCfg, Trajectory, solve, solve_regularized

__all__ = [
    "SeqState", "TruncatedLattice", "norm_l2s", "random_state",
    "EQUATIONS", "EquationSpec", "registry",
    "Tree", "TreeCountError", "enumerate_system_trees", "enumerate_trees", "tree_count",
    "GenTerm", "PhaseChain", "ResonanceRule", "ResourceCapError", "build_generation",
    "eval_term", "generation_equation", "limit_equation_tail",
    "IntegratorCfg", "RegularizationCfg", "Trajectory", "solve", "solve_regularized",
]
