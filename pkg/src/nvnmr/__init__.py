"""Simulation and analysis of NV-center nanoscale NMR.

Modules: spinsys (spin system and Hamiltonians), dynamics (propagators),
protocols (multipulse and correlation protocols), spectra (Fourier analysis,
fitting, aliasing, assignment), seqlang (pulse-sequence language), io and
config (file formats), cli (command-line driver).
"""

__version__ = "0.1.0"
