"""Kernel backend selection.

The compiled extension is preferred when importable; set the environment
variable ``MORPHFACE_KERNEL=python`` (or call :func:`set_backend`) to force
the pure-numpy fallback.  Both backends are bit-equal; the compiled one is
orders of magnitude faster on mesh-sized workloads (see benchmarks/).
"""

import os
import warnings

from . import raster_py

try:
    from . import _rasterc
except ImportError:  # pragma: no cover - depends on the build
    _rasterc = None

_BACKENDS = {"python": raster_py.raster_kernel}
if _rasterc is not None:
    _BACKENDS["native"] = _rasterc.raster_kernel


def available_backends():
    return sorted(_BACKENDS)


def _initial_backend() -> str:
    env = os.environ.get("MORPHFACE_KERNEL", "").strip().lower()
    if env:
        if env in _BACKENDS:
            return env
        warnings.warn(
            f"MORPHFACE_KERNEL={env!r} not available (have {available_backends()}); "
            "falling back to auto selection",
            RuntimeWarning,
        )
    return "native" if "native" in _BACKENDS else "python"


_active = _initial_backend()


def get_backend() -> str:
    return _active


def set_backend(name: str) -> None:
    global _active
    if name not in _BACKENDS:
        raise ValueError(f"unknown kernel backend {name!r}; have {available_backends()}")
    _active = name


def raster_kernel(proj, tris, width, height, near, cull, backend=None):
    fn = _BACKENDS[backend if backend is not None else _active]
    return fn(proj, tris, width, height, near, cull)
