"""Numerical kernels with a compiled core and a numpy fallback.

The Cython extension is used when it was built and ``TRIROBUST_PURE_PYTHON``
is unset; otherwise the numpy implementation with the same signature is
selected. ``BACKEND`` names the active one.
"""

import os

from . import _vertex_py

python_enumerate_vertices = _vertex_py.enumerate_vertices

try:
    if os.environ.get("TRIROBUST_PURE_PYTHON"):
        raise ImportError("pure python requested")
    from ._vertex import enumerate_vertices as compiled_enumerate_vertices
except ImportError:
    compiled_enumerate_vertices = None

if compiled_enumerate_vertices is not None:
    enumerate_vertices = compiled_enumerate_vertices
    BACKEND = "cython"
else:
    enumerate_vertices = python_enumerate_vertices
    BACKEND = "python"

__all__ = ["enumerate_vertices", "python_enumerate_vertices", "compiled_enumerate_vertices", "BACKEND"]
