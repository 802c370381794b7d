"""Pick the compiled assignment kernel when it was built, else pure Python.

Set ``MSTRACK_PURE_PYTHON=1`` to force the fallback.
"""
import os

from . import _lsap_py

try:
    if os.environ.get("MSTRACK_PURE_PYTHON"):
        raise ImportError("pure-python kernel requested")
    from . import _lsap_cy as _kernel
    BACKEND = "cython"
except ImportError:
    _kernel = _lsap_py
    BACKEND = "python"

solve = _kernel.solve
solve_python = _lsap_py.solve


def available_backends():
    names = {"python": _lsap_py.solve}
    try:
        from . import _lsap_cy
        names["cython"] = _lsap_cy.solve
    except ImportError:
        pass
    return names
