"""Two-dimensional gauged Ginzburg-Landau vortex laboratory.

Full-field simulator for the order parameter / vector potential pair under
applied boundary currents, reduced point-vortex dynamics, and a verification
harness checking energy identities, growth bounds, and the reduced laws on
epsilon ladders.
"""

__version__ = "0.1.0"
