"""Lattice Yang-Mills-Higgs simulation toolkit."""
from ._accel import backend
from .errors import *  # noqa: F401,F403
from .lattice import DirectedEdge, Lattice, LatticePath, build_lattice
from .model import Couplings, FieldConfiguration, Target, TangentVector

__version__ = "0.1.0"
