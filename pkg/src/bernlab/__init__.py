"""Numerical laboratory for one-phase free-boundary problems at a fixed
analytic boundary.

Modules
-------
grid        half-ball grids, masked fields, cut-cell quadrature
obstacle    harmonic obstacle extension, gradient-flow coordinates, coefficients
bernoulli   one-phase energy minimization and free-boundary extraction
hodograph   vertical hodograph transform and its linearization
signorini   quasilinear thin-obstacle (unilateral) minimization
frequency   boundary Almgren-type frequency analytics and identity checks
whitney     3-adic stopping-time cube decomposition and doubling predicates
blowup      homogeneous-solution catalog and rescaling classification
cli         command-line front end and experiment pipeline
"""

__version__ = "0.1.0"
