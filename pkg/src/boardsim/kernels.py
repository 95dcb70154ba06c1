"""Backend selection for the LMS hot loops.

The compiled extension is preferred; if it is missing (not built, or
``BOARDSIM_FORCE_PYTHON=1`` is set) the pure-Python fallback is used. Both
expose the same three functions and produce bit-identical results.
"""
import logging
import os

from . import _fallback

log = logging.getLogger(__name__)

BACKEND = "python"
_impl = _fallback

if not os.environ.get("BOARDSIM_FORCE_PYTHON"):
    try:
        from . import _kernels as _impl  # noqa: F811
        BACKEND = "cython"
    except ImportError:  # pragma: no cover - depends on build
        log.debug("compiled kernels unavailable, using pure-Python fallback")

lms_run = _impl.lms_run
filter_block = _impl.filter_block
update_block = _impl.update_block
# only the compiled backend has a pipeline engine; dualcore falls back to
# its generator workers otherwise
pipeline_run = getattr(_impl, "pipeline_run", None)


def backends():
    """Return ``{name: module}`` for every backend importable here."""
    found = {"python": _fallback}
    try:
        from . import _kernels
    except ImportError:  # pragma: no cover
        pass
    else:
        found["cython"] = _kernels
    return found
