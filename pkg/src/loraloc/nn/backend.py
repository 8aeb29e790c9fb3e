"""Kernel backend selection: compiled extension if available, numpy otherwise.

The default is resolved once at import time; set LORALOC_KERNELS to
"compiled" (fail hard if the extension is absent) or "python" to force a
backend, or call set_backend() at runtime (used by the benchmark and the
cross-backend tests).
"""

import contextlib
import logging
import os

from . import _kernels_py

log = logging.getLogger(__name__)

_BACKENDS = {"python": _kernels_py}
try:
    from . import _kernels as _kernels_compiled

    _BACKENDS["compiled"] = _kernels_compiled
except ImportError:
    _kernels_compiled = None

_impl = _kernels_py


def available_backends():
    return tuple(sorted(_BACKENDS))


def active_backend() -> str:
    return _impl.NAME


def set_backend(name: str):
    """Switch the active kernel set; returns the module now in use."""
    global _impl
    if name == "auto":
        name = "compiled" if "compiled" in _BACKENDS else "python"
    if name not in _BACKENDS:
        raise ValueError(f"backend {name!r} unavailable (have {available_backends()})")
    _impl = _BACKENDS[name]
    return _impl


@contextlib.contextmanager
def use_backend(name: str):
    previous = active_backend()
    set_backend(name)
    try:
        yield
    finally:
        set_backend(previous)


def single_thread_blas():
    """Pin BLAS to one thread: at our matrix sizes threading overhead loses
    badly, and a fixed thread count keeps reductions bit-reproducible."""
    from threadpoolctl import threadpool_limits

    return threadpool_limits(limits=1, user_api="blas")


def affine_act(x, w, b, relu):
    return _impl.affine_act(x, w, b, relu)


def affine_backward_masked(x, w, dout, act):
    return _impl.affine_backward_masked(x, w, dout, act)


def adam_update(param, grad, m, v, t, lr, beta1, beta2, eps):
    _impl.adam_update(param, grad, m, v, t, lr, beta1, beta2, eps)


_requested = os.environ.get("LORALOC_KERNELS", "auto")
set_backend(_requested)
if _requested == "auto" and active_backend() == "python":
    log.info("compiled kernels unavailable; using the numpy fallback")
