"""
sselab - Monte Carlo laboratory for stochastic Schrödinger equations
Pseudospectral space discretization, exponential and classical time integrators
"""

__version__ = "1.0.0"
