"""Hodge decomposition of residual currents on projective complete intersections.

Pipeline: exact Hefer division → fibered residues over V → Hodge projector
and ∂̄-solution operator → homotopy and exactness checks → JSON reports.
"""

__version__ = "1.0.0"
