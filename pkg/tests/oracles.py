"""Independent reference computations used by the tests.

Nothing here imports the package's quadrature or transform code.  Integrals
use explicit composite Simpson weights; exponents of trigonometric drifts
use their closed-form antiderivatives.
"""

import math

import numpy as np


def simpson_weights(n: int, h: float) -> np.ndarray:
    """Composite Simpson weights for ``n`` (even) panels of width ``h``."""
    if n % 2:
        raise ValueError("Simpson needs an even number of panels")
    w = np.ones(n + 1)
    w[1:-1:2] = 4.0
    w[2:-1:2] = 2.0
    return w * h / 3.0


def simpson(f, a: float, b: float, n: int) -> float:
    x = np.linspace(a, b, n + 1)
    return float(simpson_weights(n, (b - a) / n) @ f(x))


def cumulative_simpson_even(y: np.ndarray, h: float) -> np.ndarray:
    """Integral from the first node to every even node (Simpson over pairs of panels)."""
    pairs = h / 3.0 * (y[:-2:2] + 4.0 * y[1:-1:2] + y[2::2])
    return np.concatenate([[0.0], np.cumsum(pairs)])


def trig_exponent(alpha, beta, x):
    """``2 int_0^x (alpha_0 + sum alpha_k cos(k u) + beta_k sin(k u)) du`` in closed form."""
    x = np.asarray(x, dtype=float)
    E = alpha[0] * x
    for k in range(1, len(alpha)):
        E = E + alpha[k] * np.sin(k * x) / k + beta[k - 1] * (1.0 - np.cos(k * x)) / k
    return 2.0 * E


def scale_function(alpha, beta, x: float, h: float) -> float:
    """``int_0^x exp(-E)`` by composite Simpson at spacing close to ``h``."""
    if x == 0:
        return 0.0
    n = 2 * max(1, int(math.ceil(abs(x) / (2 * h))))
    return simpson(lambda u: np.exp(-trig_exponent(alpha, beta, u)), 0.0, x, n)


def nested_phi(alpha, beta, g, x: float, h: float) -> float:
    """``2 int_0^x exp(-E(u)) int_0^u g exp(E) dv du``.

    The inner integral is accumulated at every even node of a grid of
    spacing ``h / 2``; the outer Simpson then runs on the even nodes.
    """
    if x == 0:
        return 0.0
    n = 4 * max(1, int(math.ceil(abs(x) / (4 * h))))
    d = x / n
    u = np.arange(n + 1) * d
    E = trig_exponent(alpha, beta, u)
    inner = cumulative_simpson_even(g(u) * np.exp(E), d)
    outer_vals = np.exp(-E[::2]) * inner
    return 2.0 * float(simpson_weights(n // 2, 2 * d) @ outer_vals)


def random_trig_poly(rng: np.random.Generator, max_degree: int = 5, lo: float = -2.0, hi: float = 2.0):
    d = int(rng.integers(1, max_degree + 1))
    alpha = rng.uniform(lo, hi, d + 1)
    beta = rng.uniform(lo, hi, d)
    return alpha, beta


def trig_poly_values(alpha, beta, x):
    x = np.asarray(x, dtype=float)
    out = np.full_like(x, alpha[0])
    for k in range(1, len(alpha)):
        out = out + alpha[k] * np.cos(k * x) + beta[k - 1] * np.sin(k * x)
    return out


def brute_sup_gap_integral(b: float, L: float = 1.0, n: int = 200_000) -> float:
    """``int_0^L t b / (1 + t^2 b^2) dt`` by Simpson (closed form ``ln(1 + L^2 b^2) / (2 b)``)."""
    return simpson(lambda t: t * b / (1.0 + (t * b) ** 2), 0.0, L, n)
