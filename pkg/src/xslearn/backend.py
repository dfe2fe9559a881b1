"""Selection between the compiled and pure-numpy training kernels.

The compiled module is preferred when importable. Selection can be
forced with the XSLEARN_BACKEND environment variable or per call:

  auto      compiled if available, else python (default)
  compiled  require the extension; RuntimeError if missing
  python    always the numpy fallback
"""

from __future__ import annotations

import os

from . import _fallback

try:
    from . import _fastpath  # type: ignore[attr-defined]
except ImportError:  # extension not built; pure-Python install
    _fastpath = None

_CHOICES = ("auto", "compiled", "python")


def compiled_available() -> bool:
    return _fastpath is not None


def get_backend(name: str | None = None):
    """Return the kernel module for `name` (or the environment default)."""
    if name is None or name == "auto":
        # "auto" defers to the environment, so XSLEARN_BACKEND overrides
        # configs that did not pin a backend explicitly
        name = os.environ.get("XSLEARN_BACKEND", "auto")
    if name not in _CHOICES:
        raise ValueError(f"unknown backend {name!r}; choose from {_CHOICES}")
    if name == "python":
        return _fallback
    if _fastpath is not None:
        return _fastpath
    if name == "compiled":
        raise RuntimeError("compiled kernels requested but xslearn._fastpath is not importable")
    return _fallback


def backend_name(module) -> str:
    return "compiled" if module is _fastpath and module is not None else "python"
