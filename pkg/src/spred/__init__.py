"""Smooth policy regularisation from demonstrations on toy goal-conditioned
environments: ensemble-critic TD3 + HER with uncertainty-weighted behaviour
cloning, plus the property-verification and analysis tooling."""

from .kernels import BACKEND

__all__ = ["BACKEND"]
__version__ = "0.1.0"
