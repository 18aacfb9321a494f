"""Backend switch for the hot kernels.

Every kernel exists twice: a loop version compiled with numba and a
vectorised numpy version.  The numba path is used unless numba is missing or
the environment variable ``ACTIVEBILEVEL_DISABLE_NUMBA`` is set to a truthy
value.  ``set_backend`` overrides the choice at runtime (tests, benchmarks).
"""
from __future__ import annotations

import os
from contextlib import contextmanager

ENV_FLAG = "ACTIVEBILEVEL_DISABLE_NUMBA"

try:
    import numba
except ImportError:  # pragma: no cover - numba is a declared dependency
    numba = None

HAVE_NUMBA = numba is not None


def _env_disabled() -> bool:
    return os.environ.get(ENV_FLAG, "").strip().lower() in {"1", "true", "yes", "on"}


_backend = "numba" if HAVE_NUMBA and not _env_disabled() else "numpy"


def njit(func):
    """Compile ``func`` with numba when available, otherwise return it as is."""
    if numba is None:
        return func
    return numba.njit(cache=True)(func)


def backend() -> str:
    return _backend


def use_numba() -> bool:
    return _backend == "numba"


def set_backend(name: str) -> None:
    global _backend
    if name not in ("numba", "numpy"):
        raise ValueError(f"unknown backend {name!r}")
    if name == "numba" and not HAVE_NUMBA:
        raise RuntimeError("numba is not installed")
    _backend = name


@contextmanager
def using_backend(name: str):
    previous = _backend
    set_backend(name)
    try:
        yield
    finally:
        set_backend(previous)
