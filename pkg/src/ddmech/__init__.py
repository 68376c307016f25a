"""Data-driven computational mechanics in 2D plane strain.

Solves boundary-value problems directly from datasets of
(strain, stress, tangent stiffness) samples: states are kept on the
compatibility/equilibrium constraint set while their distance to the
dataset's local tangent maps is minimized.  Elastic/inelastic subset
labels plus per-point transition rules extend the scheme to J2
elasto-plasticity with isotropic hardening.
"""

from ddmech import bench, data, fem, materials, neighbors, solver, tensors, transition

__all__ = [
    "bench",
    "data",
    "fem",
    "materials",
    "neighbors",
    "solver",
    "tensors",
    "transition",
]

__version__ = "0.1.0"
