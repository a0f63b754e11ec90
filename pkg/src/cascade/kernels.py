"""Selects the training kernel: compiled extension if built, numpy fallback.

Set ``CASCADE_FORCE_PURE=1`` to force the fallback (used by the kernel
benchmark and cross-checking tests). Both backends implement the same
``train_document`` contract; results agree to float32 rounding but are only
guaranteed bit-reproducible within one backend.
"""
from __future__ import annotations

import logging
import os

from . import _pvdm_pure

logger = logging.getLogger(__name__)

_compiled = None
if not os.environ.get("CASCADE_FORCE_PURE"):
    try:
        from . import _pvdm_inner as _compiled  # type: ignore[no-redef]
    except ImportError:
        logger.info("compiled kernel unavailable; using pure-python fallback")

BACKEND = "compiled" if _compiled is not None else "pure-python"
train_document = (_compiled or _pvdm_pure).train_document


def backends() -> dict[str, object]:
    """Importable kernel modules keyed by name (for benchmarks/tests)."""
    found: dict[str, object] = {"pure-python": _pvdm_pure}
    if _compiled is not None:
        found["compiled"] = _compiled
    else:
        try:
            from . import _pvdm_inner
            found["compiled"] = _pvdm_inner
        except ImportError:
            pass
    return found
