"""Indefinite-weight boundary value problems: thresholds, coded solutions, stability."""
import os

if "NUMBA_THREADING_LAYER" not in os.environ:
    import numba

    numba.config.THREADING_LAYER = "workqueue"

__version__ = "0.1.0"
