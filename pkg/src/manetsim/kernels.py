"""Backend selection for the mobility/connectivity kernel.

The compiled ``_kernels`` extension is used when it has been built;
otherwise (or when ``MANETSIM_PURE_PYTHON=1``) the pure-Python twin is
used. Both produce identical results.
"""

from __future__ import annotations

import os

from . import _pykernels
from .scenario import MovementScript, Position, leg_duration_us

try:
    if os.environ.get("MANETSIM_PURE_PYTHON", "") not in ("", "0"):
        raise ImportError("pure-python backend forced")
    from . import _kernels as _compiled
except ImportError:
    _compiled = None

BACKEND = "cython" if _compiled is not None else "python"


def backends() -> dict[str, type]:
    out = {"python": _pykernels.MobilityCore}
    if _compiled is not None:
        out["cython"] = _compiled.MobilityCore
    return out


def build_core(
    script: MovementScript,
    order: list[str],
    fixed: dict[str, Position] | None = None,
    backend: str | None = None,
):
    """Flatten ``script`` into the kernel's array layout.

    ``order`` fixes the node index used by the kernel; nodes listed in
    ``fixed`` (the base station) are stationary at the given position.
    """
    fixed = fixed or {}
    ix, iy, offsets = [], [], [0]
    dep, arr, sx, sy, ex, ey = [], [], [], [], [], []
    for node in order:
        if node in fixed:
            pos = fixed[node]
            legs = ()
        else:
            pos = script.initial[node]
            legs = script.legs.get(node, ())
        ix.append(pos[0])
        iy.append(pos[1])
        for leg in legs:
            dep.append(leg.depart_us)
            arr.append(leg.depart_us + leg_duration_us(pos, leg))
            sx.append(pos[0])
            sy.append(pos[1])
            ex.append(leg.dest[0])
            ey.append(leg.dest[1])
            pos = leg.dest
        offsets.append(len(dep))
    cls = backends()[backend or BACKEND]
    return cls(ix, iy, offsets, dep, arr, sx, sy, ex, ey)
