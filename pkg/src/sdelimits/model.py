"""Coefficient families, parameter schedules and the built-in model catalog.

Every coefficient is a numba-compiled scalar function so the same object can
be evaluated on grids (conditions, transforms) and called from the Euler
kernel.  Coefficients do not take the parameter ``b_T`` directly; instead a
model maps ``b_T`` to a small float array ``c`` once per parameter value
(``ModelFamily.coefficients``) and the scalar functions read from it.  This
keeps powers like ``b_T**gamma`` out of the inner loop.

Signatures:

* ``drift(t, x, c)``, ``sup_gap(t, c)``
* ``homogeneous_drift(x, c)``, ``integrand_g(x, c)``, ``terminal_F(x, c)``
* ``drift_bound(c)`` (plain Python is fine)

Limit-model functions use ``(x, c)`` with ``c = LimitModel.params``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Callable, Optional, Sequence

import numba as nb
import numpy as np

from ._trig import sincos
from .errors import EvaluationError, InvalidParameterError

_jit = nb.njit(error_model="numpy", cache=True)


# -- vectorised evaluation helpers -----------------------------------------


@nb.njit(error_model="numpy")
def _map_x(f, x, c):
    out = np.empty(x.size)
    for i in range(x.size):
        out[i] = f(x[i], c)
    return out


@nb.njit(error_model="numpy")
def _map_tx(f, t, x, c):
    out = np.empty(x.size)
    for i in range(x.size):
        out[i] = f(t[i], x[i], c)
    return out


def evaluate_x(f, x, c) -> np.ndarray:
    """Evaluate a compiled ``f(x, c)`` elementwise over an array of any shape."""
    x = np.asarray(x, dtype=float)
    out = _map_x(f, np.ascontiguousarray(x.ravel()), np.asarray(c, dtype=float))
    return out.reshape(x.shape)


def evaluate_tx(f, t, x, c) -> np.ndarray:
    """Evaluate a compiled ``f(t, x, c)`` elementwise with numpy broadcasting."""
    t, x = np.broadcast_arrays(np.asarray(t, dtype=float), np.asarray(x, dtype=float))
    out = _map_tx(
        f,
        np.ascontiguousarray(t.ravel()),
        np.ascontiguousarray(x.ravel()),
        np.asarray(c, dtype=float),
    )
    return out.reshape(x.shape)


# -- shared scalar coefficients --------------------------------------------


@_jit
def zero_tx(t, x, c):
    return 0.0


@_jit
def zero_x(x, c):
    return 0.0


@_jit
def one_x(x, c):
    return 1.0


@_jit
def identity_x(x, c):
    return x


@_jit
def sin_x(x, c):
    return math.sin(x)


# -- data types -------------------------------------------------------------


@dataclass(frozen=True)
class ModelFamily:
    """The drift family of ``d xi = a_T(t, xi) dt + dW`` plus the functionals' integrands.

    ``coefficients(b)`` must return a float64 array; it is the only place the
    parameter enters.
    """

    name: str
    drift: Callable
    homogeneous_drift: Callable
    drift_bound: Callable
    integrand_g: Callable
    terminal_F: Callable
    coefficients: Callable[[float], np.ndarray]
    x0: float = 0.0
    sup_gap: Optional[Callable] = None
    description: str = ""

    def coef(self, b: float) -> np.ndarray:
        c = np.ascontiguousarray(self.coefficients(float(b)), dtype=float)
        if not np.all(np.isfinite(c)):
            raise EvaluationError(f"{self.name}: non-finite coefficients at b_T={b}")
        return c

    def bound(self, b: float) -> float:
        return float(self.drift_bound(self.coef(b)))

    def drift_values(self, t, x, b: float) -> np.ndarray:
        """``a_T(t, x)`` on a grid; raises if the declared bound is exceeded."""
        c = self.coef(b)
        vals = evaluate_tx(self.drift, t, x, c)
        if not np.all(np.isfinite(vals)):
            raise EvaluationError(f"{self.name}: non-finite drift value at b_T={b}")
        bound = float(self.drift_bound(c))
        worst = float(np.max(np.abs(vals))) if vals.size else 0.0
        if worst > bound * (1.0 + 1e-12) + 1e-12:
            raise EvaluationError(
                f"{self.name}: |a_T| = {worst:.6g} exceeds declared bound {bound:.6g} at b_T={b}"
            )
        return vals

    def homogeneous_values(self, x, b: float) -> np.ndarray:
        vals = evaluate_x(self.homogeneous_drift, x, self.coef(b))
        if not np.all(np.isfinite(vals)):
            raise EvaluationError(f"{self.name}: non-finite homogeneous drift at b_T={b}")
        return vals

    def g_values(self, x, b: float) -> np.ndarray:
        return evaluate_x(self.integrand_g, x, self.coef(b))

    def F_values(self, x, b: float) -> np.ndarray:
        return evaluate_x(self.terminal_F, x, self.coef(b))

    def gap_values(self, t, b: float) -> np.ndarray:
        if self.sup_gap is None:
            raise AttributeError(f"{self.name} has no closed-form sup_gap")
        return evaluate_x(self.sup_gap, t, self.coef(b))

    def with_integrand(self, integrand_g=None, terminal_F=None, name=None) -> "ModelFamily":
        return replace(
            self,
            integrand_g=integrand_g if integrand_g is not None else self.integrand_g,
            terminal_F=terminal_F if terminal_F is not None else self.terminal_F,
            name=name or self.name,
        )


@dataclass(frozen=True)
class ParamSchedule:
    """Increasing parameter values ``b_T``; all must exceed 1."""

    values: tuple
    gamma: float = 0.5

    def __post_init__(self):
        vals = tuple(float(v) for v in self.values)
        if not vals:
            raise InvalidParameterError("schedule is empty")
        if any(v <= 1.0 for v in vals):
            raise InvalidParameterError(f"schedule values must exceed 1, got {vals}")
        if any(b <= a for a, b in zip(vals, vals[1:])):
            raise InvalidParameterError(f"schedule must be strictly increasing, got {vals}")
        object.__setattr__(self, "values", vals)

    @classmethod
    def dyadic(cls, k_min: int = 3, k_max: int = 10, gamma: float = 0.5) -> "ParamSchedule":
        return cls(tuple(2.0**k for k in range(k_min, k_max + 1)), gamma)

    def __len__(self):
        return len(self.values)

    def __iter__(self):
        return iter(self.values)


@dataclass(frozen=True)
class LimitModel:
    """Coefficients of ``d zeta = a0(zeta) dt + sigma0(zeta) dW_hat``, ``zeta(0) = y0``.

    ``c0`` and ``b0`` are the constants of the two-constant condition; ``g0_antiderivative`` is an
    optional closed form of ``int_0^y g0``.
    """

    a0: Callable = zero_x
    sigma0: Callable = one_x
    g0: Callable = zero_x
    F0: Callable = zero_x
    y0: float = 0.0
    params: np.ndarray = field(default_factory=lambda: np.zeros(1))
    c0: Optional[float] = None
    b0: Optional[float] = None
    g0_antiderivative: Optional[Callable] = None

    def __post_init__(self):
        object.__setattr__(self, "params", np.ascontiguousarray(self.params, dtype=float))
        if not math.isfinite(self.y0):
            raise InvalidParameterError("y0 must be finite")

    def values(self, fname: str, x) -> np.ndarray:
        return evaluate_x(getattr(self, fname), x, self.params)

    def check_window(self, lo: float, hi: float, n: int = 2001) -> None:
        """Local boundedness proxy: every function finite on ``[lo, hi]``."""
        xs = np.linspace(lo, hi, n)
        for name in ("a0", "sigma0", "g0", "F0"):
            if not np.all(np.isfinite(self.values(name, xs))):
                raise EvaluationError(f"limit function {name} is not finite on [{lo}, {hi}]")


# -- Example 1 / Example 2 ---------------------------------------------------
# coefficient layout: [b, b**gamma, cos(b), sin(b)]


@_jit
def _ex1_drift(t, x, c):
    b = c[0]
    s, co = sincos(b * x)
    tb = t * b
    gap = tb / (1.0 + tb * tb)
    # sin((x - 1) b) = sin(bx) cos(b) - cos(bx) sin(b)
    return c[1] * co + gap * (s * c[2] - co * c[3])


@_jit
def _ex1_homogeneous(x, c):
    s, co = sincos(c[0] * x)
    return c[1] * co


@_jit
def _ex1_gap(t, c):
    tb = t * c[0]
    return tb / (1.0 + tb * tb)


@_jit
def _ex2_g(x, c):
    b = c[0]
    return c[1] / (1.0 + b * b * x * x)


def _check_gamma(gamma: float) -> float:
    gamma = float(gamma)
    if not (0.0 <= gamma < 1.0):
        raise InvalidParameterError(f"gamma must lie in [0, 1), got {gamma}")
    return gamma


def _ex1_coefficients(gamma: float):
    def coefficients(b: float) -> np.ndarray:
        return np.array([b, b**gamma, math.cos(b), math.sin(b)])

    return coefficients


def example1_model(gamma: float = 0.5, x0: float = 0.0) -> tuple[ModelFamily, LimitModel]:
    """Oscillating drift ``b^g cos(x b) + t b / (1 + t^2 b^2) sin((x - 1) b)``.

    The transformed process ``G_T(xi_T)`` with ``G_T = f_T`` converges to
    ``x0 + W``, so the limit has ``a0 = 0``, ``sigma0 = 1``, ``y0 = x0``.
    """
    gamma = _check_gamma(gamma)
    model = ModelFamily(
        name="example1",
        drift=_ex1_drift,
        homogeneous_drift=_ex1_homogeneous,
        drift_bound=lambda c: c[1] + 0.5,
        integrand_g=zero_x,
        terminal_F=zero_x,
        coefficients=_ex1_coefficients(gamma),
        x0=float(x0),
        sup_gap=_ex1_gap,
        description=f"example1(gamma={gamma}, x0={x0})",
    )
    limit = LimitModel(a0=zero_x, sigma0=one_x, g0=zero_x, F0=zero_x, y0=float(x0))
    return model, limit


def example2_integrand(gamma: float = 0.5) -> Callable:
    """``g_T(x) = b^gamma / (1 + b^2 x^2)`` as a vectorised ``g(x, b)``; its limit is ``g0 = 0``."""
    gamma = _check_gamma(gamma)

    def g(x, b):
        x = np.asarray(x, dtype=float)
        return b**gamma / (1.0 + b * b * x * x)

    return g


def example2_model(gamma: float = 0.5, x0: float = 0.0) -> tuple[ModelFamily, LimitModel]:
    """Example 1's drift with the integrand of :func:`example2_integrand`."""
    model, limit = example1_model(gamma, x0)
    model = replace(
        model,
        name="example2",
        integrand_g=_ex2_g,
        description=f"example2(gamma={gamma}, x0={x0})",
    )
    return model, limit


# -- synthetic oracle models -------------------------------------------------
# coefficient layout: [b, drift constant, integrand constant]


@_jit
def _const_drift(t, x, c):
    return c[1]


@_jit
def _const_drift_h(x, c):
    return c[1]


@_jit
def _linear_drift(t, x, c):
    return min(max(-x, -10.0), 10.0)


@_jit
def _linear_drift_h(x, c):
    return min(max(-x, -10.0), 10.0)


@_jit
def _g_const(x, c):
    return c[2]


@_jit
def _g_sign_sin(x, c):
    s, co = sincos(c[0] * x)
    if s > 0.0:
        return 1.0
    if s < 0.0:
        return -1.0
    return 0.0


@_jit
def _g_smooth(x, c):
    return math.sin(x) / (1.0 + x * x)


@_jit
def _sigma_const_drift(y, c):
    # G = f with f' = exp(-2 c x): G'(G^{-1}(y)) = 1 - 2 c y
    return abs(1.0 - 2.0 * c[0] * y)


@_jit
def _antiderivative_identity(y, c):
    return y


@_jit
def _antiderivative_half_square(y, c):
    return 0.5 * y * y


INTEGRANDS = {
    "zero": zero_x,
    "one": one_x,
    "identity": identity_x,
    "sin": sin_x,
    "constant": _g_const,
    "sign_sin": _g_sign_sin,
    "smooth": _g_smooth,
}

TERMINALS = {"zero": zero_x, "identity": identity_x, "sin": sin_x}

SYNTHETIC_KINDS = ("zero_drift", "constant_drift", "linear_drift")


def synthetic_model(
    kind: str,
    c: float = 1.0,
    integrand: str = "zero",
    g_const: float = 1.0,
    terminal: str = "zero",
    x0: float = 0.0,
) -> ModelFamily:
    """Oracle models with known behaviour.

    ``zero_drift`` makes ``xi_T = x0 + W`` exactly; ``constant_drift`` uses
    ``a_T = c``; ``linear_drift`` is ``-x`` clipped to ``[-10, 10]``.
    """
    if integrand not in INTEGRANDS:
        raise InvalidParameterError(f"unknown integrand {integrand!r}; choose from {sorted(INTEGRANDS)}")
    if terminal not in TERMINALS:
        raise InvalidParameterError(f"unknown terminal {terminal!r}; choose from {sorted(TERMINALS)}")
    if kind == "zero_drift":
        drift, hom, bound, cval = zero_tx, zero_x, (lambda cc: 0.0), 0.0
    elif kind == "constant_drift":
        drift, hom, bound, cval = _const_drift, _const_drift_h, (lambda cc: abs(cc[1])), float(c)
    elif kind == "linear_drift":
        drift, hom, bound, cval = _linear_drift, _linear_drift_h, (lambda cc: 10.0), 0.0
    else:
        raise InvalidParameterError(f"unknown synthetic kind {kind!r}; choose from {SYNTHETIC_KINDS}")

    def coefficients(b: float) -> np.ndarray:
        return np.array([b, cval, float(g_const)])

    return ModelFamily(
        name=kind,
        drift=drift,
        homogeneous_drift=hom,
        drift_bound=bound,
        integrand_g=INTEGRANDS[integrand],
        terminal_F=TERMINALS[terminal],
        coefficients=coefficients,
        x0=float(x0),
        sup_gap=zero_x,
        description=f"{kind}(c={cval}, integrand={integrand}, terminal={terminal})",
    )


def synthetic_limit(model: ModelFamily, g0: str = "zero", F0: str = "zero") -> LimitModel:
    """Limit coefficients for the synthetic models that have one in closed form."""
    antiderivatives = {"zero": zero_x, "one": _antiderivative_identity, "identity": _antiderivative_half_square}
    common = dict(
        g0=INTEGRANDS[g0],
        F0=TERMINALS[F0],
        y0=model.x0,
        g0_antiderivative=antiderivatives.get(g0),
    )
    if model.name == "zero_drift":
        return LimitModel(a0=zero_x, sigma0=one_x, **common)
    if model.name == "constant_drift":
        cval = float(model.coef(2.0)[1])
        if model.x0 != 0.0:
            y0 = (1.0 - math.exp(-2.0 * cval * model.x0)) / (2.0 * cval) if cval else model.x0
            common["y0"] = y0
        return LimitModel(a0=zero_x, sigma0=_sigma_const_drift, params=np.array([cval]), **common)
    raise InvalidParameterError(f"no closed-form limit model for {model.name!r}")


# -- trigonometric polynomial drifts -------------------------------------------
# coefficient layout: [b, d, alpha_0 .. alpha_d, beta_1 .. beta_d]


@_jit
def _trig_poly(x, c):
    d = int(c[1])
    acc = c[2]
    for k in range(1, d + 1):
        s, co = sincos(k * x)
        acc += c[2 + k] * co + c[2 + d + k] * s
    return acc


@_jit
def _trig_poly_t(t, x, c):
    return _trig_poly(x, c)


def trig_poly_model(alpha: Sequence[float], beta: Sequence[float], x0: float = 0.0) -> ModelFamily:
    """Time-homogeneous drift ``alpha_0 + sum_k alpha_k cos(k x) + beta_k sin(k x)``."""
    alpha = np.asarray(alpha, dtype=float)
    beta = np.asarray(beta, dtype=float)
    d = alpha.size - 1
    if d < 0 or beta.size != d:
        raise InvalidParameterError("need alpha_0..alpha_d and beta_1..beta_d")
    bound = float(np.abs(alpha).sum() + np.abs(beta).sum())

    def coefficients(b: float) -> np.ndarray:
        return np.concatenate([[b, d], alpha, beta])

    return ModelFamily(
        name="trig_poly",
        drift=_trig_poly_t,
        homogeneous_drift=_trig_poly,
        drift_bound=lambda c: bound,
        integrand_g=zero_x,
        terminal_F=zero_x,
        coefficients=coefficients,
        x0=float(x0),
        sup_gap=zero_x,
        description=f"trig_poly(degree={d})",
    )


CATALOG = ("example1", "example2") + SYNTHETIC_KINDS


def build_model(name: str, params: Optional[dict] = None) -> tuple[ModelFamily, Optional[LimitModel]]:
    """Resolve a catalog name plus parameters into a model and its limit."""
    params = dict(params or {})
    if name == "example1":
        return example1_model(params.get("gamma", 0.5), params.get("x0", 0.0))
    if name == "example2":
        return example2_model(params.get("gamma", 0.5), params.get("x0", 0.0))
    if name in SYNTHETIC_KINDS:
        g0 = params.pop("g0", None)
        F0 = params.pop("F0", params.pop("f0", None))
        allowed = {"c", "integrand", "g_const", "terminal", "x0"}
        unknown = sorted(set(params) - allowed)
        if unknown:
            raise InvalidParameterError(f"unknown parameters {unknown} for {name!r}; allowed: {sorted(allowed)}")
        model = synthetic_model(name, **params)
        try:
            limit = synthetic_limit(
                model, g0=g0 or params.get("integrand", "zero"), F0=F0 or params.get("terminal", "zero")
            )
        except (InvalidParameterError, KeyError):
            limit = None
        return model, limit
    raise InvalidParameterError(f"unknown model {name!r}; catalog: {', '.join(CATALOG)}")


def schedule_from(values: Sequence[float] | None = None, k_range=None, gamma: float = 0.5) -> ParamSchedule:
    if values:
        return ParamSchedule(tuple(values), gamma)
    if k_range:
        return ParamSchedule.dyadic(int(k_range[0]), int(k_range[1]), gamma)
    raise InvalidParameterError("schedule needs explicit values or a k range")
