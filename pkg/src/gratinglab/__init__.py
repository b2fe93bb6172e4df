"""Periodic transmission gratings with rectangular profiles: forward FEM
solver, corner singularity analysis, a Taylor-series rank oracle and a
finite-candidate inverse solver."""

__version__ = "0.1.0"
