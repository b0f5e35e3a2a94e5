"""Backend selection for the patch-fitting kernel.

Prefers the compiled extension; falls back to the numpy implementation.
Set TRIHESS_FORCE_PYTHON=1 to skip the extension (useful for timing and
for the backend-equivalence tests).
"""

import os

if os.environ.get("TRIHESS_FORCE_PYTHON"):
    from . import _ppr_numpy as _backend
else:
    try:
        from . import _ppr_core as _backend
    except ImportError:
        from . import _ppr_numpy as _backend

BACKEND = _backend.__name__.rsplit(".", 1)[-1].lstrip("_")
batch_patch_pinv = _backend.batch_patch_pinv
