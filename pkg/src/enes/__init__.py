"""Equivariant neural eikonal solver.

A conditional neural field whose latent is a pose-context point cloud in a
Lie group, trained purely from the eikonal PDE residual.  Steerability --
transforming the latent cloud transforms the solution -- holds exactly by
construction.  Ships with fast-marching / analytic oracles for validation
and geodesic extraction by gradient backtracking.
"""

import jax

# All numerics run in float64: the finite-difference tolerances used for
# verification are unreachable in float32.
jax.config.update("jax_enable_x64", True)

from . import geometry, groups, field, autodiff, model, oracle, train, evaluate  # noqa: E402,F401

__version__ = "0.1.0"
