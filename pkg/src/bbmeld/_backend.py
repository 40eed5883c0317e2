"""Pick the compiled kernels when available.

Set ``BBMELD_PURE_PYTHON=1`` to force the numpy fallback.
"""
import os

from . import _kernels_py as python_kernels

compiled_kernels = None
if os.environ.get("BBMELD_PURE_PYTHON") != "1":
    try:
        from . import _kernels as compiled_kernels
    except ImportError:
        compiled_kernels = None

kernels = compiled_kernels if compiled_kernels is not None else python_kernels
BACKEND = "compiled" if compiled_kernels is not None else "python"


def use(name: str) -> None:
    """Switch the active backend at runtime (``"compiled"`` or ``"python"``)."""
    global kernels, BACKEND
    if name == "compiled":
        if compiled_kernels is None:
            raise RuntimeError("compiled kernels are not built")
        kernels, BACKEND = compiled_kernels, "compiled"
    elif name == "python":
        kernels, BACKEND = python_kernels, "python"
    else:
        raise ValueError(f"unknown backend {name!r}")
