"""
GrwSim - global random walk solvers for Richards flow and reactive transport
"""

__version__ = "0.1.0"
