"""Hot-kernel backend selection.

The compiled Cython extension is preferred; the pure numpy implementation is
the fallback. Set SLAMKIT_PURE_PYTHON=1 to force the fallback (used by the
parity tests and the benchmark).
"""

import os

from slamkit.kernels import _python

if os.environ.get("SLAMKIT_PURE_PYTHON", "") not in ("", "0"):
    _backend = _python
else:
    try:
        from slamkit.kernels import _native as _backend
    except ImportError:
        _backend = _python

BACKEND = _backend.BACKEND

sphere_trace = _backend.sphere_trace
tsdf_integrate = _backend.tsdf_integrate
tsdf_raycast = _backend.tsdf_raycast
marching_cubes = _backend.marching_cubes
bvh_raycast = _backend.bvh_raycast

# Scene encoding shared by both backends.
scene_sdf = _python.scene_sdf
PRIM_ROOM = _python.PRIM_ROOM
PRIM_SPHERE = _python.PRIM_SPHERE
PRIM_BOX = _python.PRIM_BOX


def backend_name() -> str:
    return BACKEND
