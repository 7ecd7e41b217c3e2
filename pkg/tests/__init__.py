"""
Test suite for GrwSim
"""
