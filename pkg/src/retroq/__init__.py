"""Retrocausal bookkeeping for quantum states: two-state vectors, weak values,
conditional (future-fixed) individual states and weak-velocity trajectories."""

from . import bell, bohmtraj, factorize, qcore, qgrid, tsvf
from .errors import RetroqError
from .kernels import BACKEND

__version__ = "0.1.0"

__all__ = ["BACKEND", "RetroqError", "__version__", "bell", "bohmtraj", "factorize",
           "qcore", "qgrid", "tsvf"]
