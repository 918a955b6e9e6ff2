"""Unified fault diagnosis and prognosis transformer for rotating-machinery signals."""
import os as _os

# RMGPT_THREADS caps BLAS worker threads; it must be applied before numpy loads.
if _os.environ.get("RMGPT_THREADS"):
    for _var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
        _os.environ.setdefault(_var, _os.environ["RMGPT_THREADS"])

__version__ = "0.1.0"
