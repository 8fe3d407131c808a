"""Doubly radial averaged kernels, odd-sector nonlocal energies, and
saddle-shaped minimizers on the cone {|x'| = |x''|}."""

__version__ = "0.1.0"
