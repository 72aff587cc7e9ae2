"""Stabilized finite elements for coupled Stokes-Brinkman flow and solute transport."""
from .analysis import ErrorReport, ResidualField, aposteriori_estimate, eoc, error_norms
from .mesh import Mesh, Subdomain, build_structured_mesh, partition_interface
from .problem import CoefficientSet, ProblemCase, make_case
from .spaces import CoupledLayout, State, build_layout, build_space
from .stabilization import StabilizationParams, build_stabilization, compute_taus
from .timestepper import TimeLoopConfig, Trajectory, initial_state, run, step

__version__ = "0.1.0"
