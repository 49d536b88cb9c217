"""Backend selection for the hot kernels.

The compiled extension ``_ckernels`` is used when it imports; otherwise the
numpy fallback in ``_pykernels`` is used. Set ``CODINGMEASURES_BACKEND=python``
to force the fallback (the test suite runs both when both are available).
"""

import importlib
import os

from . import _pykernels

_NAMES = ("lift_batch", "path_diameters", "bowen_counts", "sample_chain", "markov_birkhoff")


def _load_compiled():
    try:
        return importlib.import_module("codingmeasures._ckernels")
    except ImportError:
        return None


_compiled = _load_compiled()


def available_backends():
    """Names of the importable backends, preferred first."""
    return ["cython", "python"] if _compiled is not None else ["python"]


def get_backend(name=None):
    """Return the kernel module for ``name`` ('cython' or 'python')."""
    if name is None:
        name = os.environ.get("CODINGMEASURES_BACKEND", "").strip().lower() or available_backends()[0]
    if name == "python":
        return _pykernels
    if name == "cython":
        if _compiled is None:
            raise ImportError("compiled kernels are not built; run `pip install -e . --no-build-isolation`")
        return _compiled
    raise ValueError(f"unknown backend {name!r}")


_active = get_backend()
BACKEND = "cython" if _active is _compiled and _compiled is not None else "python"

lift_batch = _active.lift_batch
path_diameters = _active.path_diameters
bowen_counts = _active.bowen_counts
sample_chain = _active.sample_chain
markov_birkhoff = _active.markov_birkhoff

LIFT_OK = _pykernels.LIFT_OK
LIFT_CRITICAL = _pykernels.LIFT_CRITICAL
LIFT_DIVERGED = _pykernels.LIFT_DIVERGED
