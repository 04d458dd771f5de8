"""Hot inner-loop kernels with a compiled/pure backend switch.

The compiled Cython extension is preferred when importable; set DFLAB_PURE=1
to force the numpy fallback. Both backends implement the same two functions
with matching semantics:

``tree_split_scan(xs, ys)``
    Best SSE split of one sorted feature column.
``mars_pair_sweep(Q, qty, y, h, xv, order, tol, stride=1)``
    Best hinge-pair knot for one (parent term, variable) combination.
"""
import os

from . import _pure

if os.environ.get("DFLAB_PURE"):
    _impl = _pure
    BACKEND = "pure"
else:
    try:
        from . import _fast as _impl
        BACKEND = "compiled"
    except ImportError:
        _impl = _pure
        BACKEND = "pure"

tree_split_scan = _impl.tree_split_scan
mars_pair_sweep = _impl.mars_pair_sweep


def available_backends():
    """Map backend name -> module, for equivalence tests and benchmarks."""
    out = {"pure": _pure}
    try:
        from . import _fast
        out["compiled"] = _fast
    except ImportError:
        pass
    return out
