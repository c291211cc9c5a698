"""Volume penalty calibration and verification toolkit.

Computes mask shift/smoothing corrections that remove the displacement
length of penalized no-slip boundaries, and verifies the predicted
convergence rates on 1D and 2D damped flow problems.
"""

__version__ = "0.1.0"
