"""Backend selection for the inner loops.

The compiled extension is used when it imports; otherwise, or when the
environment variable ``BLOWUP_LAB_PURE`` is set to a non-empty value other
than ``0``, the numpy/pure-Python versions are used.
"""

import os

from . import _pykernels

_force_pure = os.environ.get("BLOWUP_LAB_PURE", "") not in ("", "0")

_ext = None
if not _force_pure:
    try:
        from . import _ckernels as _ext
    except ImportError:  # extension not built
        _ext = None

_impl = _ext if _ext is not None else _pykernels

BACKEND = "compiled" if _ext is not None else "python"

thomas = _impl.thomas
imex_step = _impl.imex_step
linearly_implicit_step = _impl.linearly_implicit_step
angular_weight = _impl.angular_weight
shoot_dp54 = _impl.shoot_dp54


def backends():
    """Return ``{name: module}`` for every backend importable here."""
    out = {"python": _pykernels}
    try:
        from . import _ckernels
        out["compiled"] = _ckernels
    except ImportError:
        pass
    return out
