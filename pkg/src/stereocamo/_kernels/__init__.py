"""Hot-kernel backend selection.

The numba backend is used when importable; set ``STEREOCAMO_BACKEND=numpy``
to force the pure-numpy fallback (or ``=numba`` to require the jitted
path).  ``use_backend``/``backend_name`` allow switching at runtime, which
the test suite and the kernel benchmark rely on.
"""

from __future__ import annotations

import os

from . import _impl_numpy

_IMPLS = {"numpy": _impl_numpy}
try:
    from . import _impl_numba

    _IMPLS["numba"] = _impl_numba
except ImportError:  # pragma: no cover - numba is an optional speedup
    _impl_numba = None

KERNELS = (
    "rasterize_tris",
    "scatter_texture_grad",
    "sad_volume",
    "sad_volume_backward",
    "zncc_volume",
    "zncc_volume_backward",
)

_active_name = ""
_active = _impl_numpy


def available_backends():
    return tuple(sorted(_IMPLS))


def use_backend(name):
    """Select the kernel backend ("numba" or "numpy")."""
    global _active, _active_name
    if name not in _IMPLS:
        raise ValueError(f"unknown kernel backend {name!r}; "
                         f"available: {', '.join(available_backends())}")
    _active = _IMPLS[name]
    _active_name = name
    return name


def backend_name():
    return _active_name


def _init_from_env():
    env = os.environ.get("STEREOCAMO_BACKEND", "auto").strip().lower()
    if env in ("", "auto"):
        use_backend("numba" if "numba" in _IMPLS else "numpy")
    else:
        use_backend(env)


_init_from_env()


def rasterize_tris(*args):
    return _active.rasterize_tris(*args)


def scatter_texture_grad(*args):
    return _active.scatter_texture_grad(*args)


def sad_volume(*args):
    return _active.sad_volume(*args)


def sad_volume_backward(*args):
    return _active.sad_volume_backward(*args)


def zncc_volume(*args):
    return _active.zncc_volume(*args)


def zncc_volume_backward(*args):
    return _active.zncc_volume_backward(*args)
