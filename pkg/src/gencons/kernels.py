"""Kernel backend selection: the compiled extension when built, else Python.

Set ``GENCONS_KERNELS=python`` to force the pure-Python backend.
"""

import os

if os.environ.get("GENCONS_KERNELS", "").lower() == "python":
    from gencons._kernels_py import BACKEND, decision_codes, first_disjoint
else:
    try:
        from gencons._kernels import BACKEND, decision_codes, first_disjoint
    except ImportError:  # extension not built
        from gencons._kernels_py import BACKEND, decision_codes, first_disjoint

__all__ = ["BACKEND", "decision_codes", "first_disjoint"]
