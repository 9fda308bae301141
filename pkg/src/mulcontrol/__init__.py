"""Piecewise-static multiplicative controls for semilinear reaction-diffusion
equations, with finite-difference simulation, a sine-basis oracle and
numerical checks of the energy estimates."""

from .field_core import *  # noqa: F401,F403
from .dynamics import *  # noqa: F401,F403
from . import spectral, estimates, synthesis  # noqa: F401

__version__ = "0.1.0"
