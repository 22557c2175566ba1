"""Kernel backend selection: compiled extension when available, NumPy fallback.

Set SUPERKMEANS_KERNELS=python to force the fallback (or =compiled to require
the extension). Both backends expose the same four entry points and produce
bit-identical scan results.
"""

from __future__ import annotations

import os

from . import _kernels_py

try:
    from . import _kernels  # compiled extension
except ImportError:
    _kernels = None

HAS_COMPILED = _kernels is not None

_env = os.environ.get("SUPERKMEANS_KERNELS", "auto").strip().lower()
if _env in ("auto", ""):
    DEFAULT_BACKEND = "compiled" if HAS_COMPILED else "python"
elif _env in ("compiled", "native"):
    if not HAS_COMPILED:
        raise ImportError(
            "SUPERKMEANS_KERNELS=compiled but the extension is not built; "
            "install with `pip install -e . --no-build-isolation`"
        )
    DEFAULT_BACKEND = "compiled"
elif _env in ("python", "py", "reference"):
    DEFAULT_BACKEND = "python"
else:
    raise ValueError(f"unknown SUPERKMEANS_KERNELS value {_env!r}")


def available_backends() -> list[str]:
    return ["compiled", "python"] if HAS_COMPILED else ["python"]


def get_kernels(name: str | None = None):
    """Resolve a backend name ('auto'/None, 'compiled', 'python') to a module."""
    if name in (None, "auto", ""):
        name = DEFAULT_BACKEND
    if name == "compiled":
        if not HAS_COMPILED:
            raise ImportError("compiled kernels are not available")
        return _kernels
    if name == "python":
        return _kernels_py
    raise ValueError(f"unknown kernel backend {name!r}")


def resolve_threads(threads: int | None) -> int:
    if threads is not None:
        if threads < 1:
            raise ValueError("threads must be >= 1")
        return threads
    return os.cpu_count() or 1
