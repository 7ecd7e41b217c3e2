"""
Plotly figures for GrwSim run directories
"""
