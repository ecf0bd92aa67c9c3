"""Numerical laboratory for the 1D stochastic Landau-Lifshitz-Gilbert equation.

Modules
-------
grid_ops     grids, Neumann Laplacian, discrete norms, spectral basis
model        drift, noise channels and the Stratonovich-to-Ito correction
det_solver   projected RK2 skeleton solver, stability quantities, Galerkin check
sde_solver   stochastic Heun and Ito-corrected Euler schemes, ensembles
ldp          reversal plans, control costs, probability bounds, estimators
cli          command-line front end
"""
__version__ = "0.1.0"
