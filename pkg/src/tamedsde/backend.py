"""Kernel backend selection.

The hot path loops (ensemble stepping over paths x steps) exist twice: as
numba ``@njit`` kernels and as pure-numpy vectorised fallbacks with identical
semantics.  Which one runs is controlled by the environment variable

    TAMED_SDE_BACKEND = auto | numba | numpy     (default: auto)

``auto`` uses numba when it imports cleanly and the model at hand provides
scalar-state kernels; ``numpy`` disables numba entirely; ``numba`` forces it
and raises if unavailable.  Individual calls may also be pinned through the
``backend=`` argument accepted by the ensemble drivers.

Both backends produce results that agree to floating-point noise but are not
bit-identical to each other (different evaluation order of transcendental
functions).  Within one backend, results are bit-reproducible and independent
of the worker-thread count.
"""

from __future__ import annotations

import os

_ENV_VAR = "TAMED_SDE_BACKEND"
_VALID = ("auto", "numba", "numpy")

try:
    import numba  # noqa: F401

    NUMBA_AVAILABLE = True
except ImportError:  # pragma: no cover - exercised only on stripped installs
    NUMBA_AVAILABLE = False


def _env_choice() -> str:
    raw = os.environ.get(_ENV_VAR, "auto").strip().lower()
    if raw not in _VALID:
        raise ValueError(
            f"{_ENV_VAR}={raw!r} invalid; expected one of {_VALID}"
        )
    return raw


def resolve_backend(requested: str | None = None) -> str:
    """Return the effective backend name, 'numba' or 'numpy'.

    ``requested`` overrides the environment variable; ``None``/'auto' defer
    to it.
    """
    choice = requested if requested is not None else _env_choice()
    if choice not in _VALID:
        raise ValueError(f"backend {choice!r} invalid; expected one of {_VALID}")
    if choice == "auto":
        choice = _env_choice()
    if choice == "auto":
        return "numba" if NUMBA_AVAILABLE else "numpy"
    if choice == "numba" and not NUMBA_AVAILABLE:
        raise RuntimeError("numba backend requested but numba is not importable")
    return choice


def default_threads() -> int:
    """Worker count: TAMED_SDE_THREADS env var, else hardware parallelism."""
    raw = os.environ.get("TAMED_SDE_THREADS", "").strip()
    if raw:
        n = int(raw)
        if n < 1:
            raise ValueError("TAMED_SDE_THREADS must be >= 1")
        return n
    return os.cpu_count() or 1
