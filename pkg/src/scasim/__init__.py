"""Shared-control flight simulator: CfM-based pilot/autopilot coordination under anomalies."""

from ._accel import BACKEND, NUMBA_ENABLED

__version__ = "0.1.0"
__all__ = ["BACKEND", "NUMBA_ENABLED", "__version__"]
