"""
Numerical core for GrwSim: constitutive laws, lattices, GRW solvers and analysis.
"""
