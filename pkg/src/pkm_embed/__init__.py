"""Kinematics and inverse dynamics of parallel manipulators with hybrid
limbs, using local constraint embedding of the intra-limb loops."""

from . import constraints, dynamics, irsbot2, kinematics, se3, solver, topology

__all__ = [
    "constraints",
    "dynamics",
    "irsbot2",
    "kinematics",
    "se3",
    "solver",
    "topology",
]

__version__ = "0.1.0"
