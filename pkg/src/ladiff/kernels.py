"""Select the tree kernels: compiled extension if importable, numpy otherwise.

Set ``LADIFF_PURE_PYTHON=1`` to force the numpy path.
"""
import os

from . import _kernels_py

BACKEND = "python"
_impl = _kernels_py
if not os.environ.get("LADIFF_PURE_PYTHON"):
    try:
        from . import _kernels as _impl  # noqa: F811

        BACKEND = "cython"
    except ImportError:
        _impl = _kernels_py

best_split_node = _impl.best_split_node
apply_tree = _impl.apply_tree


def get_backend(name):
    """Kernel module by name ('cython' or 'python'); used by tests and benchmarks."""
    if name == "python":
        return _kernels_py
    if name == "cython":
        from . import _kernels

        return _kernels
    raise ValueError(f"unknown kernel backend {name!r}")
