"""Homogenised Biot plate model of a thin poroelastic layer and its micro-scale reference."""
from __future__ import annotations

__version__ = "0.1.0"
