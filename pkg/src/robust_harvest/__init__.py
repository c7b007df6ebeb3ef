"""Robust harvesting of a fish population with uncertain individual growth.

Submodules:

- ``growth``: logistic and uncertain logistic growth models and their moments
- ``calibration``: logistic least squares and moment-matching grid search
- ``robust``: entropic lower bound of the average weight, worst-case distortion
- ``hjb``: explicit, semi-implicit and implicit HJB solvers with invariant checks
- ``policy``: feedback harvest rates, trajectories, sensitivity runs
- ``config``, ``csvio``, ``cli``: configuration files, CSV formats, command line
"""

__version__ = "0.1.0"

from .errors import FitError, InvariantViolation, StabilityError, ValidationError  # noqa: E402

__all__ = ["FitError", "InvariantViolation", "StabilityError", "ValidationError", "__version__"]
