"""Power-flow kernel selection.

Prefers the compiled extension; falls back to the numpy implementation when
the extension is missing or BGCOSIM_PURE_PYTHON=1 is set. Both kernels share
one contract, so everything above this module is backend-agnostic.
"""

from __future__ import annotations

import os

if os.environ.get("BGCOSIM_PURE_PYTHON") == "1":
    from bgcosim._pf_python import newton_solve

    BACKEND = "python"
else:
    try:
        from bgcosim._pf_core import newton_solve  # type: ignore[no-redef]

        BACKEND = "compiled"
    except ImportError:
        from bgcosim._pf_python import newton_solve  # type: ignore[no-redef]

        BACKEND = "python"

__all__ = ["newton_solve", "BACKEND"]
