"""Term-arithmetic kernel for sparse Grassmann coefficients.

Two interchangeable backends provide the same four functions on parallel
(keys, values) arrays, where each key is a bitmask over the odd generators:

    mul_terms, add_terms, scale_terms, lderiv_terms

The compiled backend is used when the extension built; setting
SUPERGEO_PURE_PYTHON=1 forces the pure-Python one.
"""

import os

if os.environ.get("SUPERGEO_PURE_PYTHON", "") not in ("", "0"):
    from . import pykernel as _impl
else:
    try:
        from . import gkernel as _impl  # type: ignore[attr-defined]
    except ImportError:
        from . import pykernel as _impl

backend_name = _impl.BACKEND
mul_terms = _impl.mul_terms
add_terms = _impl.add_terms
scale_terms = _impl.scale_terms
lderiv_terms = _impl.lderiv_terms
merge_sign = _impl.merge_sign
