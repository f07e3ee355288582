"""Optimal experimental design via determinant-proportional sampling.

Design spaces cut out by constraint systems, regression feature bases,
information-matrix criteria, volume-proportional samplers, convex weight
relaxations, search heuristics, and exact enumeration references.
"""

from . import (
    design_space,
    features,
    oracle,
    pvs_sampler,
    relaxation,
    search,
)

# The command-line front end lives in optdesign.cli; it is deliberately not
# imported here so `python -m optdesign.cli` and plain library imports stay
# independent.

__version__ = "0.1.0"

__all__ = [
    "design_space",
    "features",
    "oracle",
    "pvs_sampler",
    "relaxation",
    "search",
    "__version__",
]
