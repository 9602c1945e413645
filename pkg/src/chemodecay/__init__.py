"""Pseudospectral solver and decay-rate verifier for a dissipative chemotaxis
system (cell density coupled to the gradient of log chemical concentration)
on a periodic box.

Modules:
    spectral_core    grids, transforms, spectral calculus, norms, field I/O
    linear_semigroup exact per-mode propagator of the linearized system
    chemotaxis_model state, nonlinear fluxes, Cole-Hopf maps, initial data
    time_integrator  exponential (ETD) time stepping and trajectory recording
    decay_analysis   slope fits, lower-bound ratios, energy and split audits
    cli_runner       batch command-line interface
"""

__version__ = "0.1.0"
