"""Numerical audits of the class membership and limit conditions.

Each checker returns a :class:`ConditionResult` holding one scalar per
parameter value plus a verdict.  Conditions that are limits in the parameter
(A0, A3, A4 and the two-constant condition) are judged by a decaying-trend
rule on the finite schedule together with a final-value threshold.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import asdict, dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
from scipy.integrate import cumulative_simpson, quad, simpson
from scipy.interpolate import CubicHermiteSpline

from .errors import ConfigurationError, EvaluationError
from .model import LimitModel, ModelFamily, ParamSchedule, evaluate_tx, evaluate_x
from .transform import TransformTable, build_f, grid_spacing, nested_integral

PASS, FAIL, INCONCLUSIVE = "pass", "fail", "inconclusive"

DEFAULT_B_SETS = (
    ((0.0, 0.05),),
    ((0.0, 0.1),),
    ((0.0, 0.4),),
    ((-0.2, 0.05),),
    ((0.5, 1.0),),
    ((-1.0, -0.5), (0.2, 0.3)),
)


@dataclass(frozen=True)
class ConditionConfig:
    """Windows, resolutions and thresholds shared by the checkers.

    ``psi_C1 = None`` fits the linear ``psi(lam) = C1 lam`` as the smallest
    admissible constant; ``a1_C = None`` likewise reports a fitted constant.
    Values at or below ``zero_tol`` count as exactly zero in trend verdicts.
    """

    N: float = 5.0
    L: float = 1.0
    n_t: int = 64
    X_max: float = 8.0
    a0_window: Optional[float] = None
    B_sets: tuple = DEFAULT_B_SETS
    psi_C1: Optional[float] = None
    m: float = 1.0
    alpha: float = 1.0
    C: float = math.exp(-2.0)
    a1_C: Optional[float] = None
    trend_factor: float = 0.1
    final_threshold: float = 0.1
    zero_tol: float = 1e-9
    tol: float = 1e-10

    def __post_init__(self):
        if not (self.N > 0 and self.L > 0):
            raise ConfigurationError("N and L must be positive")
        if not (self.alpha > 0 and self.C > 0):
            raise ConfigurationError("alpha and C must be positive")
        if self.n_t < 2 or self.n_t % 2:
            raise ConfigurationError("n_t must be an even integer >= 2")
        sets = tuple(tuple((float(a), float(b)) for a, b in B) for B in self.B_sets)
        for B in sets:
            for a, b in B:
                if not (-self.N <= a < b <= self.N):
                    raise ConfigurationError(f"set interval [{a}, {b}] is not a proper subinterval of [-N, N]")
        object.__setattr__(self, "B_sets", sets)


@dataclass
class ConditionResult:
    name: str
    b_values: list
    values: list
    verdict: str
    threshold: Optional[float] = None
    trend: Optional[bool] = None
    extra: dict = field(default_factory=dict)
    note: str = ""

    def as_dict(self) -> dict:
        return asdict(self)


@dataclass
class ConditionReport:
    results: list
    header: dict = field(default_factory=dict)

    def __getitem__(self, name: str) -> ConditionResult:
        for r in self.results:
            if r.name == name:
                return r
        raise KeyError(name)

    @property
    def passed(self) -> bool:
        return all(r.verdict == PASS for r in self.results)

    def to_json(self) -> str:
        body = {"header": self.header, "conditions": [r.as_dict() for r in self.results]}
        return json.dumps(body, indent=2, sort_keys=True, default=_jsonable)

    def to_csv(self) -> str:
        out = io.StringIO()
        w = csv.writer(out, lineterminator="\n")
        w.writerow(["condition", "T_index", "b_T", "value"])
        for r in self.results:
            for i, (b, v) in enumerate(zip(r.b_values, r.values)):
                w.writerow([r.name, i, repr(float(b)), repr(float(v))])
        return out.getvalue()


def _jsonable(v):
    if isinstance(v, np.generic):
        return v.item()
    if isinstance(v, np.ndarray):
        return v.tolist()
    raise TypeError(type(v))


# -- trend rule ----------------------------------------------------------------


def decaying_trend(values: Sequence[float], factor: float = 0.1, zero_tol: float = 0.0) -> bool:
    """True when the sequence decays: ``last < factor * first`` and it strictly
    decreases on at least ``K - 2`` of its ``K - 1`` steps.

    The rule only compares values with each other, so rescaling the sequence
    by a positive constant leaves the verdict unchanged.  A sequence that is
    identically zero (all ``|v| <= zero_tol``) counts as decayed.
    """
    v = np.abs(np.asarray(values, dtype=float))
    if v.size == 0 or not np.all(np.isfinite(v)):
        return False
    if np.all(v <= zero_tol):
        return True
    if v.size == 1:
        return False
    down = int(np.sum(np.diff(v) < 0))
    return bool(v[-1] < factor * v[0] and down >= v.size - 2)


def _limit_verdict(values, cfg: ConditionConfig) -> tuple[bool, str]:
    trend = decaying_trend(values, cfg.trend_factor, cfg.zero_tol)
    final_ok = abs(values[-1]) < cfg.final_threshold
    return trend, PASS if trend and final_ok else FAIL


def build_tables(model: ModelFamily, schedule: ParamSchedule, cfg: ConditionConfig) -> list[TransformTable]:
    return [build_f(model, b, X_max=cfg.X_max, tol=cfg.tol) for b in schedule]


# -- A0 --------------------------------------------------------------------------


def a0_integral(model: ModelFamily, b: float, cfg: ConditionConfig) -> tuple[float, str]:
    """``int_0^L sup_x |a_T - ahat_T| dt`` and the method used."""
    c = model.coef(b)
    if model.sup_gap is not None and cfg.a0_window is None:
        f = lambda t: float(evaluate_x(model.sup_gap, t, c))
        pts = [p for p in (1.0 / b,) if 0 < p < cfg.L]
        val, _ = quad(f, 0.0, cfg.L, points=pts or None, limit=200, epsabs=1e-12, epsrel=1e-10)
        return float(val), "closed-form envelope"
    window = cfg.a0_window if cfg.a0_window is not None else cfg.N
    if window is None:
        raise ConfigurationError("no closed-form envelope and no x-window for the inner sup")
    h = grid_spacing(b)
    n = int(math.ceil(window / h))
    xs = np.arange(-n, n + 1) * (window / n)
    ts = np.linspace(0.0, cfg.L, cfg.n_t + 1)
    ahat = model.homogeneous_values(xs, b)
    sup = np.array([np.max(np.abs(model.drift_values(t, xs, b) - ahat)) for t in ts])
    return float(simpson(sup, x=ts)), f"grid sup over |x| <= {window}"


def check_A0(model: ModelFamily, schedule: ParamSchedule, cfg: ConditionConfig) -> ConditionResult:
    vals, method = [], ""
    for b in schedule:
        v, method = a0_integral(model, b, cfg)
        vals.append(v)
    trend, verdict = _limit_verdict(vals, cfg)
    return ConditionResult("A0", list(schedule), vals, verdict, cfg.final_threshold, trend, note=method)


# -- A1 and growth -------------------------------------------------------------


def G_second(table: TransformTable, model: Optional[ModelFamily] = None) -> np.ndarray:
    """``G''`` on the grid by centred differences of ``G'`` (one-sided at the ends)."""
    return np.gradient(table.G_prime_vals, table.h, edge_order=2)


def a1_ratio(model: ModelFamily, table: TransformTable, cfg: ConditionConfig) -> tuple[float, float]:
    """Largest ``([G'a + G''/2]^2 + G'^2) / (1 + G^2)`` over the time and space grids, and ``|G(x0)|``."""
    b = table.b
    Gp = table.G_prime_vals
    half_G2 = 0.5 * G_second(table)
    if not np.all(np.isfinite(half_G2)):
        raise EvaluationError("non-finite finite-difference G''")
    denom = 1.0 + table.G_vals**2
    worst = 0.0
    for t in np.linspace(0.0, cfg.L, cfg.n_t + 1):
        a = model.drift_values(t, table.grid, b)
        expr = (Gp * a + half_G2) ** 2 + Gp**2
        worst = max(worst, float(np.max(expr / denom)))
    return worst, float(abs(table.G(model.x0)))


def check_A1(model: ModelFamily, tables: Sequence[TransformTable], cfg: ConditionConfig) -> ConditionResult:
    """Smallest admissible constant per parameter value; passes when ``cfg.a1_C`` covers all of them."""
    smallest, g_x0 = [], []
    for table in tables:
        ratio, gx = a1_ratio(model, table, cfg)
        smallest.append(max(ratio, gx))
        g_x0.append(gx)
    C = cfg.a1_C if cfg.a1_C is not None else max(smallest)
    verdict = PASS if max(smallest) <= C else FAIL
    violation = [s - C for s in smallest]
    note = "fitted constant" if cfg.a1_C is None else "given constant"
    return ConditionResult(
        "A1", [t.b for t in tables], smallest, verdict, C,
        extra={"max_violation": violation, "abs_G_x0": g_x0}, note=note,
    )


def growth_margin(table: TransformTable, alpha: float) -> float:
    """``min |G(x)| / |x|**alpha`` over grid points with ``|x| >= h``."""
    mask = np.abs(table.grid) >= table.h * (1.0 - 1e-12)
    x = table.grid[mask]
    return float(np.min(np.abs(table.G_vals[mask]) / np.abs(x) ** alpha))


def check_growth(tables: Sequence[TransformTable], cfg: ConditionConfig) -> ConditionResult:
    vals = [growth_margin(t, cfg.alpha) for t in tables]
    verdict = PASS if min(vals) >= cfg.C else FAIL
    return ConditionResult("growth", [t.b for t in tables], vals, verdict, cfg.C)


# -- A2 --------------------------------------------------------------------------


def _preimage_edges(table: TransformTable, B) -> list:
    """Preimages ``G^{-1}([a, b])`` of the intervals of ``B``."""
    lo, hi = table.G_vals[0], table.G_vals[-1]
    edges = []
    for a, b in B:
        if a < lo or b > hi:
            raise ConfigurationError(f"set [{a}, {b}] leaves the range of G on the table [{lo:.4g}, {hi:.4g}]")
        edges.append(tuple(float(e) for e in table.G_inverse(np.array([a, b]))))
    return edges


def a2_values(table: TransformTable, B) -> np.ndarray:
    """``|f'(x) int_0^x 1{G(u) in B} / f'(u) du|`` on the table grid.

    The indicator is piecewise constant, so the integral is a difference of
    ``K(x) = int_0^x exp(E)`` at the preimage endpoints.  ``K`` comes from the
    smooth nested integral of ``1`` and is Hermite-interpolated with
    ``K' = exp(E)``; Simpson on the jump itself would only be first order.
    """
    if not B:
        return np.zeros_like(table.grid)
    r = table.refinement
    xf = np.arange(-table.n * r, table.n * r + 1) * table.fine_spacing
    E = table.fine_exponent
    J1 = nested_integral(np.ones_like(xf), E, table.n * r, table.fine_spacing, (1.0, 1.0))
    with np.errstate(over="ignore"):
        eE = np.exp(E)
        K = J1 * eE
    if not (np.all(np.isfinite(K)) and np.all(np.isfinite(eE))):
        raise EvaluationError("exp(E) overflows; the indicator integral needs a narrower table")
    Kf = CubicHermiteSpline(xf, K, eE)
    x = table.grid
    lo, hi = np.minimum(x, 0.0), np.maximum(x, 0.0)
    total = np.zeros_like(x)
    for u, v in _preimage_edges(table, B):
        total += Kf(np.clip(v, lo, hi)) - Kf(np.clip(u, lo, hi))
    E_grid = E[::r]
    return np.abs(total * np.exp(-E_grid))


def check_A2(tables: Sequence[TransformTable], cfg: ConditionConfig) -> ConditionResult:
    """Worst ratio ``a2 / (psi(lam(B)) (1 + |x|**m))`` over the tested sets."""
    raw = []
    for table in tables:
        worst = 0.0
        for B in cfg.B_sets:
            lam = sum(b - a for a, b in B)
            r = a2_values(table, B) / (lam * (1.0 + np.abs(table.grid) ** cfg.m))
            worst = max(worst, float(np.max(r)))
        raw.append(worst)
    if cfg.psi_C1 is None:
        C1 = max(raw)
        note = "pass on tested family; psi(lam) = C1 lam with fitted C1"
    else:
        C1 = cfg.psi_C1
        note = "pass on tested family; psi(lam) = C1 lam with given C1"
    vals = [r / C1 for r in raw]
    verdict = PASS if max(vals) <= 1.0 else FAIL
    return ConditionResult("A2", [t.b for t in tables], vals, verdict, 1.0, extra={"psi_C1": C1}, note=note)


# -- A3 and the families of q ------------------------------------------------------


def G_prime_fine(table: TransformTable, x: np.ndarray) -> np.ndarray:
    if table.G_is_f:
        xf = np.arange(-table.n * table.refinement, table.n * table.refinement + 1) * table.fine_spacing
        return np.exp(-np.interp(x, xf, table.fine_exponent) - table.log_scale)
    return np.interp(x, table.grid, table.G_prime_vals)


def q_theorem2_drift(model: ModelFamily, limit: LimitModel) -> Callable:
    """``G' ahat + G''/2 - a0(G)``; when ``G = f`` the first two terms cancel identically."""

    def family(table: TransformTable):
        def q(x):
            if table.G_is_f:
                first = 0.0
            else:
                G2 = np.interp(x, table.grid, G_second(table))
                first = G_prime_fine(table, x) * model.homogeneous_values(x, table.b) + 0.5 * G2
            return first - limit.values("a0", table.G(x))

        return q

    return family


def q_theorem2_diffusion(limit: LimitModel) -> Callable:
    """``G'^2 - sigma0(G)^2``."""

    def family(table: TransformTable):
        return lambda x: G_prime_fine(table, x) ** 2 - limit.values("sigma0", table.G(x)) ** 2

    return family


def q_theorem3(model: ModelFamily, limit: LimitModel) -> Callable:
    """``g_T - g0(G)``."""

    def family(table: TransformTable):
        return lambda x: model.g_values(x, table.b) - limit.values("g0", table.G(x))

    return family


def q_theorem6(model: ModelFamily, limit: LimitModel) -> Callable:
    """``(g_T - g0(G) G')^2``."""

    def family(table: TransformTable):
        return lambda x: (
            model.g_values(x, table.b) - limit.values("g0", table.G(x)) * G_prime_fine(table, x)
        ) ** 2

    return family


def _window(table: TransformTable, N: float) -> np.ndarray:
    if N > table.x_max * (1 + 1e-12):
        raise ConfigurationError(f"window N={N} exceeds the table range {table.x_max}")
    return np.abs(table.grid) <= N * (1 + 1e-12)


def check_A3(
    tables: Sequence[TransformTable], q_family: Callable, cfg: ConditionConfig, name: str = "A3"
) -> ConditionResult:
    """``sup_{|x| <= N} |f'(x) int_0^x q_T / f'|`` per parameter value."""
    vals = []
    for table in tables:
        J = table.nested(q_family(table))
        vals.append(float(np.max(np.abs(J[_window(table, cfg.N)]))))
    trend, verdict = _limit_verdict(vals, cfg)
    return ConditionResult(name, [t.b for t in tables], vals, verdict, cfg.final_threshold, trend)


def check_A4(
    tables: Sequence[TransformTable], model: ModelFamily, g0: Callable, cfg: ConditionConfig
) -> ConditionResult:
    """Bound ``C_N`` of the nested integral of ``g_T`` and ``sup |J_g - g0(G) G'|``.

    ``g0`` is a vectorised callable of ``y``.
    """
    vals, bounds = [], []
    for table in tables:
        J = table.nested(lambda x: model.g_values(x, table.b))
        w = _window(table, cfg.N)
        resid = J - g0(table.G_vals) * table.G_prime_vals
        bounds.append(float(np.max(np.abs(J[w]))))
        vals.append(float(np.max(np.abs(resid[w]))))
    trend, verdict = _limit_verdict(vals, cfg)
    return ConditionResult(
        "A4", [t.b for t in tables], vals, verdict, cfg.final_threshold, trend, extra={"C_N": bounds}
    )


def _fine_J(table: TransformTable, g: Callable):
    r = table.refinement
    xf = np.arange(-table.n * r, table.n * r + 1) * table.fine_spacing
    gv = np.asarray(g(xf), dtype=float)
    tiny = np.array([-5e-324, 5e-324])
    g0 = np.asarray(g(tiny), dtype=float)
    return xf, nested_integral(gv, table.fine_exponent, table.n * r, table.fine_spacing, (g0[0], g0[1]))


def fit_two_constants(table: TransformTable, model: ModelFamily, N: float) -> tuple[float, float]:
    """Least-squares ``c0`` (mean of ``J_g``) and ``b0`` (rms of ``J_g - c0``) over ``|x| <= N``."""
    xf, J = _fine_J(table, lambda x: model.g_values(x, table.b))
    w = np.abs(xf) <= N
    c0 = float(np.mean(J[w]))
    b0 = float(np.sqrt(np.mean((J[w] - c0) ** 2)))
    return c0, b0


def check_theorem5(
    tables: Sequence[TransformTable],
    model: ModelFamily,
    cfg: ConditionConfig,
    c0: Optional[float] = None,
    b0: Optional[float] = None,
) -> ConditionResult:
    """Residuals of the two-constant condition.

    ``values`` holds ``sup |int_0^x (J_g - c0)|``; ``extra["Q_sup"]`` the
    nested sup of ``Q_T = (J_g - c0)^2 - b0^2``.  Missing constants are fitted
    at the largest parameter value.
    """
    fitted = c0 is None or b0 is None
    if fitted:
        fc0, fb0 = fit_two_constants(tables[-1], model, cfg.N)
        c0 = fc0 if c0 is None else c0
        b0 = fb0 if b0 is None else b0
    first, second, bounds = [], [], []
    for table in tables:
        r = table.refinement
        d = table.fine_spacing
        n = table.n * r
        xf, J = _fine_J(table, lambda x: model.g_values(x, table.b))
        w = np.abs(xf) <= cfg.N
        right = cumulative_simpson(J[n:] - c0, dx=d, initial=0.0)
        left = cumulative_simpson((J[: n + 1] - c0)[::-1], dx=d, initial=0.0)
        first.append(float(max(np.max(np.abs(right[: int(cfg.N / d) + 1])), np.max(np.abs(left[: int(cfg.N / d) + 1])))))
        Q = (J - c0) ** 2 - b0**2
        JQ = nested_integral(Q, table.fine_exponent, n, d, (Q[n], Q[n]))
        second.append(float(np.max(np.abs(JQ[w]))))
        bounds.append(float(np.max(np.abs(J[w]))))
    t1, v1 = _limit_verdict(first, cfg)
    t2, v2 = _limit_verdict(second, cfg)
    verdict = PASS if v1 == PASS and v2 == PASS else FAIL
    return ConditionResult(
        "theorem5", [t.b for t in tables], first, verdict, cfg.final_threshold, t1 and t2,
        extra={"Q_sup": second, "C_N": bounds, "c0": c0, "b0": b0, "fitted": fitted},
    )


# -- orchestration ---------------------------------------------------------------

ALL_CONDITIONS = ("A0", "A1", "growth", "A2", "A3_drift", "A3_diffusion", "A3_integrand", "A3_squared", "A4", "theorem5")


def run_conditions(
    model: ModelFamily,
    limit: Optional[LimitModel],
    schedule: ParamSchedule,
    cfg: ConditionConfig,
    names: Sequence[str] = ("A0", "A1", "growth", "A2", "A3_drift", "A3_diffusion"),
    tables: Optional[list] = None,
    header: Optional[dict] = None,
) -> ConditionReport:
    """Run the requested checkers in a fixed order and collect the report."""
    unknown = [n for n in names if n not in ALL_CONDITIONS]
    if unknown:
        raise ConfigurationError(f"unknown conditions {unknown}; choose from {ALL_CONDITIONS}")
    needs_limit = {"A3_drift", "A3_diffusion", "A3_integrand", "A3_squared", "A4"}
    if limit is None and needs_limit.intersection(names):
        raise ConfigurationError("these conditions need a limit model")
    if tables is None and set(names) - {"A0"}:
        tables = build_tables(model, schedule, cfg)
    out = []
    for name in ALL_CONDITIONS:
        if name not in names:
            continue
        if name == "A0":
            out.append(check_A0(model, schedule, cfg))
        elif name == "A1":
            out.append(check_A1(model, tables, cfg))
        elif name == "growth":
            out.append(check_growth(tables, cfg))
        elif name == "A2":
            out.append(check_A2(tables, cfg))
        elif name == "A3_drift":
            out.append(check_A3(tables, q_theorem2_drift(model, limit), cfg, name))
        elif name == "A3_diffusion":
            out.append(check_A3(tables, q_theorem2_diffusion(limit), cfg, name))
        elif name == "A3_integrand":
            out.append(check_A3(tables, q_theorem3(model, limit), cfg, name))
        elif name == "A3_squared":
            out.append(check_A3(tables, q_theorem6(model, limit), cfg, name))
        elif name == "A4":
            g0 = lambda y: limit.values("g0", y)
            out.append(check_A4(tables, model, g0, cfg))
        elif name == "theorem5":
            out.append(check_theorem5(tables, model, cfg, limit.c0 if limit else None, limit.b0 if limit else None))
    return ConditionReport(out, dict(header or {}))
