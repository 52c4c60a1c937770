"""Nonlocal isoperimetric energy on the flat torus: geometry, stability and gradient flows."""

from .errors import *  # noqa: F401,F403
from .flows import FlowConfig, integrate, ms_velocity, sdf_velocity
from .functional import J, boundary_trace, nonlocal_energy
from .geometry import BoundarySet, MarkerCurve, circle, lamella, read_snapshot, write_snapshot
from .greens import green, green_grad
from .metrics import alpha_distance, d_distance, fit_decay
from .stability import assemble_pi, constrained_spectrum

__version__ = "0.1.0"
