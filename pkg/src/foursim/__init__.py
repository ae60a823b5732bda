"""Four-beam structured illumination: simulation, reconstruction and image metrics.

Submodules are imported on demand so the command-line entry point can set
thread limits before numerical libraries load.
"""

__version__ = "0.1.0"
