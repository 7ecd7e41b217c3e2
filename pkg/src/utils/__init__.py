"""
Utility functions for GrwSim: field I/O and logging setup
"""
