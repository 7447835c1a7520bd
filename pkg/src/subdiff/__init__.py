"""Time-fractional semilinear diffusion in 1D: solvers, energy monitors and decay verdicts."""
from __future__ import annotations

__version__ = "0.1.0"
