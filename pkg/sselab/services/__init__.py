"""
Experiment services: Monte Carlo engine and result writers
"""
