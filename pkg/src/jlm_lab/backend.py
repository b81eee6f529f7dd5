"""Kernel selection: compiled extension when present, pure Python otherwise.

Set ``JLM_LAB_BACKEND=python`` (or ``cython``) before import to force one.
"""

import os

_forced = os.environ.get("JLM_LAB_BACKEND", "").strip().lower()

if _forced == "python":
    from . import _jetkernel_py as _kernel

    BACKEND = "python"
elif _forced in ("", "cython"):
    try:
        from . import _jetkernel_cy as _kernel

        BACKEND = "cython"
    except ImportError:
        if _forced == "cython":
            raise
        from . import _jetkernel_py as _kernel

        BACKEND = "python"
else:
    raise RuntimeError(
        f"JLM_LAB_BACKEND={_forced!r} not recognized (use 'cython' or 'python')"
    )

eval_tape = _kernel.eval_tape
