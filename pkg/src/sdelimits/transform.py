"""Scale-function tables.

For a homogeneous drift ``ahat`` the scale function is

    f(x) = int_0^x exp(-E(u)) du,   E(u) = 2 int_0^u ahat(v) dv,

so ``f' = exp(-E)`` is positive and ``f`` strictly increasing.  Tables are
computed on a uniform grid ``x_i = i h``, ``|i| <= n``, by cumulative
composite Simpson on a refined sub-grid of spacing ``h / r``; ``r`` doubles
until the exponent stops changing at the requested tolerance.

Nested integrals ``J_q(x) = f'(x) int_0^x q(u) / f'(u) du`` are evaluated as
``int_0^x q(u) exp(E(u) - E(x)) du``, a recursion that only ever
exponentiates exponent differences across one panel; it overflows only where
the value itself does.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Callable, Optional

import numba as nb
import numpy as np
from scipy.integrate import cumulative_simpson
from scipy.interpolate import CubicHermiteSpline, PchipInterpolator

from .errors import EvaluationError, OutOfRangeError, TransformOverflowError
from .model import ModelFamily

MAX_EXPONENT = 700.0


def grid_spacing(b: float, h_max: float = 0.005) -> float:
    """Largest spacing allowed for parameter ``b``: ``min(h_max, 1 / (20 b))``."""
    return min(h_max, 1.0 / (20.0 * b)) if b and math.isfinite(b) else h_max


def _outward_cumulative(vals: np.ndarray, n: int, dx: float) -> np.ndarray:
    """``int_0^{x_i}`` of sampled ``vals`` on a symmetric grid with ``x_n = 0``."""
    right = cumulative_simpson(vals[n:], dx=dx, initial=0.0)
    left = cumulative_simpson(vals[: n + 1][::-1], dx=dx, initial=0.0)[::-1]
    return np.concatenate([-left[:-1], right])


@nb.njit(error_model="numpy")
def _nested_side(q, E, d, out):
    """Outward recursion for ``J(x) = int_0^x q(u) exp(E(u) - E(x)) du`` on one side.

    ``q`` and ``E`` start at ``x = 0`` and step by ``d`` (negative on the
    left).  Nodes 2k use Simpson panels from node 2k-2; odd nodes use panels
    from the previous odd node, seeded by a quadratic start on the first cell.
    """
    n = q.size
    out[0] = 0.0
    if n > 2:
        # int_0^d of the quadratic through nodes 0, 1, 2
        out[1] = d / 12.0 * (
            5.0 * q[0] * math.exp(E[0] - E[1]) + 8.0 * q[1] - q[2] * math.exp(E[2] - E[1])
        )
    elif n == 2:
        out[1] = 0.5 * d * (q[0] * math.exp(E[0] - E[1]) + q[1])
    for k in range(2, n):
        e2 = math.exp(E[k - 2] - E[k])
        e1 = math.exp(E[k - 1] - E[k])
        out[k] = e2 * out[k - 2] + d / 3.0 * (q[k - 2] * e2 + 4.0 * q[k - 1] * e1 + q[k])


def nested_integral(q_vals: np.ndarray, E: np.ndarray, n: int, d: float, q0=None) -> np.ndarray:
    """``int_0^{x_i} q(u) exp(E(u) - E(x_i)) du`` on a symmetric grid with ``x_n = 0``.

    ``q0 = (q(0-), q(0+))`` replaces the value at the origin on each side so a
    jump of ``q`` at 0 does not spoil the first Simpson panel.
    """
    q_vals = np.asarray(q_vals, dtype=float)
    E = np.ascontiguousarray(E, dtype=float)
    qr = q_vals[n:].copy()
    ql = q_vals[: n + 1][::-1].copy()
    if q0 is not None:
        ql[0], qr[0] = q0
    right = np.empty(qr.size)
    left = np.empty(n + 1)
    _nested_side(qr, E[n:], d, right)
    _nested_side(ql, np.ascontiguousarray(E[: n + 1][::-1]), -d, left)
    return np.concatenate([left[::-1][:-1], right])


_TINY = np.array([-5e-324, 5e-324])


def _sample(q: Callable, x: np.ndarray):
    """Values of ``q`` on ``x`` plus its one-sided values at the origin."""
    qv = np.asarray(q(x), dtype=float)
    q0 = np.asarray(q(_TINY), dtype=float)
    if not (np.all(np.isfinite(qv)) and np.all(np.isfinite(q0))):
        raise EvaluationError("integrand is not finite on the grid")
    return qv, (float(q0[0]), float(q0[1]))


@dataclass(frozen=True)
class TransformTable:
    """Tabulated ``f', f, G, G'`` on ``x_i = i h``, ``i = -n..n``.

    With ``log_space`` the stored ``f_prime`` and ``f`` (and ``G`` when it is
    ``f``) are scaled by ``exp(-log_scale)``; ``exponent`` is always exact.
    """

    b: float
    h: float
    n: int
    grid: np.ndarray
    exponent: np.ndarray
    f_prime_vals: np.ndarray
    f_vals: np.ndarray
    G_vals: np.ndarray
    G_prime_vals: np.ndarray
    refinement: int
    fine_exponent: np.ndarray
    log_space: bool = False
    log_scale: float = 0.0
    G_is_f: bool = True

    @property
    def x_max(self) -> float:
        return self.n * self.h

    @property
    def zero_index(self) -> int:
        return self.n

    @property
    def fine_spacing(self) -> float:
        return self.h / self.refinement

    def _check(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if np.any(np.abs(x) > self.x_max * (1.0 + 1e-12)) or np.any(np.isnan(x)):
            raise OutOfRangeError(f"points outside the table window [-{self.x_max}, {self.x_max}]")
        return x

    # interpolants are built lazily and cached on the instance
    def _spline(self, name, factory):
        cache = self.__dict__.setdefault("_cache", {})
        if name not in cache:
            cache[name] = factory()
        return cache[name]

    def f(self, x) -> np.ndarray:
        """Scale function by cubic Hermite interpolation (monotone since ``f' > 0``)."""
        x = self._check(x)
        return self._spline("f", lambda: CubicHermiteSpline(self.grid, self.f_vals, self.f_prime_vals))(x)

    def G(self, x) -> np.ndarray:
        x = self._check(x)
        if self.G_is_f:
            return self.f(x)
        return self._spline("G", lambda: PchipInterpolator(self.grid, self.G_vals))(x)

    def f_prime(self, x) -> np.ndarray:
        """Linear interpolation of ``f'``."""
        x = self._check(x)
        return np.interp(x, self.grid, self.f_prime_vals)

    def G_inverse(self, y) -> np.ndarray:
        y = np.asarray(y, dtype=float)
        lo, hi = self.G_vals[0], self.G_vals[-1]
        if np.any(y < lo) or np.any(y > hi):
            raise OutOfRangeError(f"values outside the range of G on the table, [{lo}, {hi}]")
        if not np.all(np.diff(self.G_vals) > 0):
            raise EvaluationError("G is not strictly increasing on the grid; no inverse")
        return self._spline("Ginv", lambda: PchipInterpolator(self.G_vals, self.grid))(y)

    def with_G(self, G: Callable, G_prime: Callable) -> "TransformTable":
        """Same table with a user-supplied transform ``G`` (vectorised callables)."""
        Gv = np.asarray(G(self.grid), dtype=float)
        Gp = np.asarray(G_prime(self.grid), dtype=float)
        if not (np.all(np.isfinite(Gv)) and np.all(np.isfinite(Gp))):
            raise EvaluationError("G or G' is not finite on the grid")
        new = replace(self, G_vals=Gv, G_prime_vals=Gp, G_is_f=False)
        new.__dict__.pop("_cache", None)
        return new

    def nested(self, q: Callable) -> np.ndarray:
        """``J_q(x_i) = f'(x_i) int_0^{x_i} q / f'`` at every grid point.

        ``q`` is a vectorised callable; it is sampled on the refined sub-grid.
        """
        r = self.refinement
        xf = np.arange(-self.n * r, self.n * r + 1) * self.fine_spacing
        qv, q0 = _sample(q, xf)
        J = nested_integral(qv, self.fine_exponent, self.n * r, self.fine_spacing, q0)
        return J[::r]

    def to_csv(self, path, phi: Optional["NestedTransform"] = None) -> None:
        cols = [self.grid, self.f_prime_vals, self.f_vals, self.G_vals]
        header = "x,f_prime,f,G,phi"
        cols.append(phi.phi_vals if phi is not None else np.full(self.grid.size, np.nan))
        np.savetxt(path, np.column_stack(cols), delimiter=",", header=header, comments="", fmt="%.17g")


@dataclass(frozen=True)
class NestedTransform:
    """``Phi(x) = 2 int_0^x f'(u) I(u) du`` with ``I(u) = int_0^u g / f'``.

    ``inner_vals`` holds ``I`` (scaled by ``exp(log_scale)`` in log-space tables);
    ``J_vals = f' I`` is the unscaled product.
    """

    phi_vals: np.ndarray
    inner_vals: np.ndarray
    J_vals: np.ndarray
    grid: np.ndarray

    def phi(self, x) -> np.ndarray:
        """Cubic Hermite interpolation of ``Phi`` using ``Phi' = 2 J``."""
        x = np.asarray(x, dtype=float)
        if np.any(np.abs(x) > self.grid[-1] * (1.0 + 1e-12)):
            raise OutOfRangeError("points outside the table window")
        cache = self.__dict__.setdefault("_cache", {})
        if "phi" not in cache:
            cache["phi"] = CubicHermiteSpline(self.grid, self.phi_vals, 2.0 * self.J_vals)
        return cache["phi"](x)


def build_f(
    model: ModelFamily,
    b: float,
    X_max: float = 8.0,
    tol: float = 1e-10,
    h: Optional[float] = None,
    log_space: bool = False,
    max_refinement: int = 64,
) -> TransformTable:
    """Tabulate the scale function of ``model`` at parameter ``b``.

    The exponent is integrated on sub-grids of spacing ``h / r`` for
    ``r = 2, 4, ...`` until successive results agree within
    ``tol * max(1, max|E|)``.
    """
    if X_max <= 0 or tol <= 0:
        raise ValueError("X_max and tol must be positive")
    h = grid_spacing(b) if h is None else float(h)
    n = int(math.ceil(X_max / h - 1e-9))
    h = X_max / n
    grid = np.arange(-n, n + 1) * h

    def exponent(r):
        xf = np.arange(-n * r, n * r + 1) * (h / r)
        a = model.homogeneous_values(xf, b)
        return 2.0 * _outward_cumulative(a, n * r, h / r)

    r = 2
    Ef = exponent(r)
    while True:
        if r >= max_refinement:
            break
        Ef2 = exponent(2 * r)
        change = np.max(np.abs(Ef2[:: 2] - Ef))
        Ef, r = Ef2, 2 * r
        if change <= tol * max(1.0, np.max(np.abs(Ef))):
            break

    scale = 0.0
    if np.max(np.abs(Ef)) > MAX_EXPONENT:
        if not log_space:
            raise TransformOverflowError(
                f"|2 int ahat| reaches {np.max(np.abs(Ef)):.1f} > {MAX_EXPONENT}; rebuild with log_space=True"
            )
        scale = float(np.max(-Ef))
    fpf = np.exp(-Ef - scale)
    ff = _outward_cumulative(fpf, n * r, h / r)
    E = Ef[::r].copy()
    fp = fpf[::r].copy()
    f = ff[::r].copy()
    f[n] = 0.0
    return TransformTable(
        b=float(b), h=h, n=n, grid=grid, exponent=E, f_prime_vals=fp, f_vals=f, G_vals=f,
        G_prime_vals=fp, refinement=r, fine_exponent=Ef, log_space=bool(scale), log_scale=scale,
    )


def build_phi(table: TransformTable, model: ModelFamily, b: float) -> NestedTransform:
    """Nested transform ``Phi`` for the model's integrand ``g`` at parameter ``b``."""
    return phi_from(table, lambda x: model.g_values(x, b))


def phi_from(table: TransformTable, g: Callable) -> NestedTransform:
    """``Phi`` for a vectorised integrand ``g``."""
    r = table.refinement
    d = table.fine_spacing
    xf = np.arange(-table.n * r, table.n * r + 1) * d
    gv, g0 = _sample(g, xf)
    Jf = nested_integral(gv, table.fine_exponent, table.n * r, d, g0)
    phi = 2.0 * _outward_cumulative(Jf, table.n * r, d)[::r]
    J = Jf[::r].copy()
    inner = J * np.exp(table.exponent)
    phi[table.n] = 0.0
    return NestedTransform(phi_vals=phi, inner_vals=inner, J_vals=J, grid=table.grid)


def a3_functional(table: TransformTable, q: Callable, x) -> np.ndarray:
    """``f'(x) int_0^x q / f'`` at the points ``x`` (linear interpolation of the tabulated values)."""
    x = table._check(x)
    return np.interp(x, table.grid, table.nested(q))
