"""
Run configuration, output stores and published reference tables for GrwSim
"""
