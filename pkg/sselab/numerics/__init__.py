"""
Numerical kernels: spectral grid, noise, integrators, observables and the scalar oracle
"""
