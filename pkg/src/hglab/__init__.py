"""Numerical laboratory for small-data Einstein-scalar evolution in harmonic gauge.

Modules: nullframe, geometry, initdata, vectorfields, evolution, asymptotics,
diagnostics and harness, with fd, blocks, kernels, checks and gridio as support.
"""

__version__ = "0.1.0"
