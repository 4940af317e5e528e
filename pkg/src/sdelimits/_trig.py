"""Branch-free scalar sine/cosine for use inside compiled kernels.

``math.sin`` and ``math.cos`` go through libm and carry an unpredictable
quadrant branch; inside the Euler loop that costs more than the rest of the
step combined. The polynomials below are the fdlibm kernel coefficients on
``[-pi/4, pi/4]`` with a two-term Cody-Waite reduction, accurate to about one
ulp for ``|y| <= 1e5``.
"""

import math

import numba as nb
import numpy as np

_S1 = -1.66666666666666324348e-01
_S2 = 8.33333333332248946124e-03
_S3 = -1.98412698298579493134e-04
_S4 = 2.75573137070700676789e-06
_S5 = -2.50507602534068634195e-08
_S6 = 1.58969099521155010221e-10

_C1 = 4.16666666666666019037e-02
_C2 = -1.38888888888741095749e-03
_C3 = 2.48015872894767294178e-05
_C4 = -2.75573143513906633035e-07
_C5 = 2.08757232129817482790e-09
_C6 = -1.13596475577881948265e-11

_INV_PIO2 = 6.36619772367581382433e-01
_PIO2_1 = 1.57079632673412561417e00
_PIO2_2 = 6.07710050630396597660e-11
_PIO2_2T = 2.02226624879595063154e-21

#: Largest argument for which the two-term reduction keeps ~1 ulp accuracy.
SINCOS_MAX_ARG = 1.0e5


@nb.njit(inline="always", error_model="numpy")
def sincos(y):
    """Return ``(sin(y), cos(y))``."""
    n = math.floor(y * _INV_PIO2 + 0.5)
    r = (y - n * _PIO2_1) - n * _PIO2_2
    r = r - n * _PIO2_2T
    z = r * r
    s = r + r * z * (_S1 + z * (_S2 + z * (_S3 + z * (_S4 + z * (_S5 + z * _S6)))))
    hz = 0.5 * z
    w = 1.0 - hz
    c = w + (((1.0 - w) - hz) + z * z * (_C1 + z * (_C2 + z * (_C3 + z * (_C4 + z * (_C5 + z * _C6))))))
    q = np.int64(n)
    odd = (q & 1) == 1
    s1 = c if odd else s
    c1 = s if odd else c
    sgn_s = -1.0 if (q & 2) == 2 else 1.0
    sgn_c = -1.0 if ((q + 1) & 2) == 2 else 1.0
    return sgn_s * s1, sgn_c * c1


@nb.njit(error_model="numpy")
def sincos_array(y):
    s = np.empty_like(y)
    c = np.empty_like(y)
    for i in range(y.size):
        s[i], c[i] = sincos(y[i])
    return s, c
