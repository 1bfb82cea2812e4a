"""Backend dispatch for the evaluation kernels.

The active backend is chosen once at import time from the environment
variable ``EARLYCAST_BACKEND``:

* ``auto`` (default): numba if importable, else pure numpy
* ``numba``: require the jitted kernels, raise if numba is unavailable
* ``numpy``: force the pure-numpy fallback

Both implementations are importable side by side (``numpy_impl``,
``numba_impl``) for benchmarking; the names re-exported here are the ones
the rest of the library uses.
"""
from __future__ import annotations

import os

from . import numpy_impl

_choice = os.environ.get("EARLYCAST_BACKEND", "auto").strip().lower()
if _choice not in ("auto", "numba", "numpy"):
    raise ValueError(f"EARLYCAST_BACKEND must be auto|numba|numpy, got {_choice!r}")

if _choice == "numpy":
    _impl = numpy_impl
else:
    try:
        from . import numba_impl as _impl
    except ImportError:
        if _choice == "numba":
            raise
        _impl = numpy_impl

BACKEND = _impl.NAME

lstm_cell = _impl.lstm_cell
dense_sigmoid = _impl.dense_sigmoid
dense_linear = _impl.dense_linear
lstm2_step = _impl.lstm2_step
lstm2_zero_state = _impl.lstm2_zero_state
classifier_trace = _impl.classifier_trace
predictor_trace = _impl.predictor_trace
psc_trace = _impl.psc_trace
conv1d_causal = _impl.conv1d_causal
