"""Distribution comparisons, moment estimators and convergence reports.

A weak-convergence claim is checked through one-dimensional marginals: the
two-sample Kolmogorov-Smirnov distance between the prelimit functional at
fixed times and an independent sample of the limit, plus the same distance
for the path supremum.  When the limit is a point mass the KS distance is
meaningless, and the report switches to the path median of
``sup_t |X(t) - limit|``.

Every report header states that agreement of marginals and sups is a proxy:
it cannot detect every difference between laws on path space.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import asdict, dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
from scipy.integrate import trapezoid

from .errors import ConfigurationError, HypothesisNotMetError
from .model import LimitModel, ModelFamily, ParamSchedule
from .simulate import (
    SimConfig,
    compute_functionals,
    gaussian_reference,
    limit_functionals,
    simulate_ensemble,
    simulate_limit,
    theorem4_limit_functional,
)
from .transform import build_f

QUANTITIES = ("zeta", "beta1", "beta1_tilde", "beta1_wiener", "beta2", "I")
THEOREM_QUANTITY = {2: "zeta", 3: "beta1", 4: "beta1_tilde", 5: "beta1_wiener", 6: "beta2", 7: "I"}
PROXY_NOTE = (
    "weak convergence on path space is checked through KS distances of fixed-time marginals "
    "and of the path supremum; this proxy can miss differences between laws"
)


# -- Kolmogorov-Smirnov ----------------------------------------------------------


@dataclass(frozen=True)
class MarginalSample:
    """Sorted values of a per-path scalar at time ``t``."""

    t: float
    values: np.ndarray

    def __post_init__(self):
        v = np.sort(np.asarray(self.values, dtype=float).ravel())
        if v.size < 1:
            raise ValueError("empty sample")
        object.__setattr__(self, "values", v)

    @property
    def n(self) -> int:
        return self.values.size


def ks_critical(n: int, m: int, alpha: float = 0.01) -> float:
    """Asymptotic two-sample critical value ``c(alpha) sqrt((n + m) / (n m))``."""
    c = math.sqrt(-0.5 * math.log(alpha / 2.0))
    return c * math.sqrt((n + m) / (n * m))


def ks_statistic(a, b) -> float:
    """``sup_x |F_a(x) - F_b(x)|`` evaluated at every point of the merged sample."""
    a = a.values if isinstance(a, MarginalSample) else np.sort(np.asarray(a, dtype=float).ravel())
    b = b.values if isinstance(b, MarginalSample) else np.sort(np.asarray(b, dtype=float).ravel())
    if a.size == 0 or b.size == 0:
        raise ValueError("KS distance needs two nonempty samples")
    pts = np.concatenate([a, b])
    Fa = np.searchsorted(a, pts, side="right") / a.size
    Fb = np.searchsorted(b, pts, side="right") / b.size
    return float(np.max(np.abs(Fa - Fb)))


def ks_two_sample(a, b, alpha: float = 0.01) -> tuple[float, float]:
    """KS distance and its critical value at level ``alpha``."""
    D = ks_statistic(a, b)
    n = a.n if isinstance(a, MarginalSample) else np.size(a)
    m = b.n if isinstance(b, MarginalSample) else np.size(b)
    return D, ks_critical(n, m, alpha)


# -- bootstrap and trends ----------------------------------------------------------


def bootstrap_se(x: np.ndarray, stat: Callable = np.mean, n_boot: int = 200, seed: int = 0) -> float:
    """Standard error of ``stat`` over the first axis by resampling rows."""
    x = np.asarray(x, dtype=float)
    rng = np.random.default_rng(seed)
    idx = rng.integers(0, x.shape[0], size=(n_boot, x.shape[0]))
    reps = np.array([stat(x[i]) for i in idx])
    return float(np.std(reps, axis=0, ddof=1).max()) if reps.ndim > 1 else float(np.std(reps, ddof=1))


def bootstrap_ci(x, stat: Callable = np.mean, n_boot: int = 200, seed: int = 0, level: float = 0.95):
    x = np.asarray(x, dtype=float)
    rng = np.random.default_rng(seed)
    idx = rng.integers(0, x.shape[0], size=(n_boot, x.shape[0]))
    reps = np.array([stat(x[i]) for i in idx])
    q = (1.0 - level) / 2.0
    return float(np.quantile(reps, q)), float(np.quantile(reps, 1.0 - q))


def nonincreasing_steps(values: Sequence[float]) -> int:
    return int(np.sum(np.diff(np.asarray(values, dtype=float)) <= 0))


# -- convergence reports -----------------------------------------------------------


@dataclass
class ConvergenceReport:
    """Per-parameter statistics for one functional.

    In ``ks`` mode ``rows`` holds ``(T_index, b_T, time, ks, critical, pass)``
    for each configured time and for the path supremum (``time = "sup"``);
    the verdict uses the fixed times only.  In ``quantile`` mode each row has
    ``time = "sup"`` and the ``ks`` column carries the path median of
    ``sup_t |X(t) - limit|``.
    """

    quantity: str
    mode: str
    times: list
    b_values: list
    rows: list
    threshold: float
    alpha: float
    trend: bool
    final_pass: bool
    verdict: str
    n_excluded: list = field(default_factory=list)
    header: dict = field(default_factory=dict)
    note: str = ""

    @property
    def passed(self) -> bool:
        return self.verdict == "pass"

    def series(self, time) -> list:
        return [r[3] for r in self.rows if r[2] == time]

    def to_csv(self) -> str:
        out = io.StringIO()
        w = csv.writer(out, lineterminator="\n")
        w.writerow(["quantity", "T_index", "b_T", "time", "ks", "critical", "pass"])
        for i, b, t, ks, crit, ok in self.rows:
            tt = t if isinstance(t, str) else repr(float(t))
            w.writerow([self.quantity, i, repr(float(b)), tt, repr(float(ks)), repr(float(crit)), int(ok)])
        return out.getvalue()

    def to_json(self) -> str:
        body = asdict(self)
        body["header"] = dict(self.header, proxy=PROXY_NOTE)
        return json.dumps(body, indent=2, sort_keys=True, default=lambda v: v.item() if hasattr(v, "item") else str(v))


def _sup_abs(paths: np.ndarray, centre: float = 0.0) -> np.ndarray:
    return np.max(np.abs(paths - centre), axis=1)


def convergence_report(
    quantity: str,
    b_values: Sequence[float],
    samples: Sequence[np.ndarray],
    limit_sample: np.ndarray,
    times: np.ndarray,
    check_times: Sequence[float] = (0.25, 0.5, 1.0),
    alpha: float = 0.01,
    ks_floor: float = 0.03,
    quantile_threshold: float = 0.05,
    min_steps: Optional[int] = None,
    n_excluded: Optional[Sequence[int]] = None,
    header: Optional[dict] = None,
) -> ConvergenceReport:
    """Compare per-parameter path samples with one limit sample.

    ``samples[i]`` and ``limit_sample`` are ``(paths, len(times))`` arrays on
    the same record grid.  The trend requirement is that the tracked series
    (KS at the last check time, or the quantile statistic) does not increase
    on at least ``min_steps`` steps, ``K - 2`` by default.
    """
    K = len(samples)
    if K == 0 or K != len(b_values):
        raise ConfigurationError("need one sample per parameter value")
    min_steps = max(K - 2, 0) if min_steps is None else min_steps
    cols = []
    for t in check_times:
        r = int(round(t / times[-1] * (len(times) - 1)))
        if abs(times[r] - t) > 1e-9:
            raise ConfigurationError(f"time {t} is not on the record grid")
        cols.append(r)
    rows = []
    degenerate = np.all(np.ptp(limit_sample, axis=0) == 0.0)
    if degenerate:
        centre = float(limit_sample[0, -1])
        stats_ = [float(np.median(_sup_abs(s, centre))) for s in samples]
        for i, (b, v) in enumerate(zip(b_values, stats_)):
            rows.append((i, b, "sup", v, quantile_threshold, bool(v < quantile_threshold)))
        trend = nonincreasing_steps(stats_) >= min_steps and (K == 1 or stats_[-1] < stats_[0])
        final_pass = stats_[-1] < quantile_threshold
        mode, threshold = "quantile", quantile_threshold
        note = "limit is a point mass; KS replaced by the path median of sup |X - limit|"
    else:
        lim_sup = _sup_abs(limit_sample)
        last = []
        final_pass = True
        threshold = 0.0
        for i, (b, s) in enumerate(zip(b_values, samples)):
            for t, r in zip(check_times, cols):
                D, crit = ks_two_sample(s[:, r], limit_sample[:, r], alpha)
                thr = max(crit, ks_floor)
                rows.append((i, b, float(t), D, thr, bool(D < thr)))
                if i == K - 1:
                    final_pass &= D < thr
                    threshold = thr
                if t == check_times[-1]:
                    last.append(D)
            D, crit = ks_two_sample(_sup_abs(s), lim_sup, alpha)
            thr = max(crit, ks_floor)
            rows.append((i, b, "sup", D, thr, bool(D < thr)))
        trend = nonincreasing_steps(last) >= min_steps
        mode = "ks"
        note = f"threshold max(critical at alpha={alpha}, {ks_floor})"
    verdict = "pass" if trend and final_pass else "fail"
    return ConvergenceReport(
        quantity=quantity, mode=mode, times=[float(t) for t in check_times], b_values=[float(b) for b in b_values],
        rows=rows, threshold=float(threshold), alpha=alpha, trend=bool(trend), final_pass=bool(final_pass),
        verdict=verdict, n_excluded=list(n_excluded or []), header=dict(header or {}), note=note,
    )


# -- running a schedule ------------------------------------------------------------


@dataclass
class ScheduleRun:
    """Per-parameter path samples of the requested quantities and their limit counterparts."""

    b_values: list
    times: np.ndarray
    samples: dict
    limit: dict
    n_excluded: list


def _needs_table(quantities) -> bool:
    return "zeta" in quantities


def run_schedule(
    model: ModelFamily,
    limit: LimitModel,
    schedule: ParamSchedule,
    sim: SimConfig,
    quantities: Sequence[str] = ("zeta",),
) -> ScheduleRun:
    """Simulate every parameter value and the independent limit ensemble once."""
    bad = [q for q in quantities if q not in QUANTITIES]
    if bad:
        raise ConfigurationError(f"unknown quantities {bad}; choose from {QUANTITIES}")
    samples = {q: [] for q in quantities}
    excluded = []
    times = None
    for i, b in enumerate(schedule):
        ens = simulate_ensemble(
            model, b, sim.dt, sim.L, sim.M, sim.base_seed, sim.crn, schedule_index=i, replicate=sim.replicate,
            x_max=sim.x_max, n_record=sim.n_record, allow_coarse=sim.allow_coarse, workers=sim.workers,
        )
        table = build_f(model, b, X_max=sim.x_max) if _needs_table(quantities) else None
        fs = compute_functionals(ens, model, b, table)
        times = ens.times
        excluded.append(fs.n_excluded)
        for q in quantities:
            samples[q].append(
                {"zeta": fs.zeta, "beta2": fs.beta2, "I": fs.I}.get(q, fs.beta1)
            )
        del ens, fs
    lens = simulate_limit(
        limit, sim.limit_dt, sim.L, sim.M, sim.base_seed, replicate=sim.replicate, n_record=sim.n_record,
        workers=sim.workers,
    )
    if not np.allclose(lens.times, times):
        raise ConfigurationError("limit and prelimit record grids differ")
    lf = limit_functionals(lens, limit)
    lim = {}
    for q in quantities:
        if q == "zeta":
            lim[q] = lf.zeta
        elif q == "beta1":
            lim[q] = lf.beta1
        elif q == "beta1_tilde":
            lim[q] = theorem4_limit_functional(lens, limit)
        elif q == "beta1_wiener":
            if limit.b0 is None:
                raise ConfigurationError("the Wiener-limit check needs the constant b0")
            lim[q] = gaussian_reference(2.0 * limit.b0, times, sim.M, sim.base_seed, sim.replicate)
        elif q == "beta2":
            lim[q] = lf.beta2
        elif q == "I":
            lim[q] = lf.I
    return ScheduleRun([float(b) for b in schedule], times, samples, lim, excluded)


def theorem_check(
    quantity: str,
    schedule: ParamSchedule,
    model: ModelFamily,
    limit: LimitModel,
    sim: SimConfig,
    hypotheses=None,
    skip_hypotheses: bool = False,
    check_times: Sequence[float] = (0.25, 0.5, 1.0),
    alpha: float = 0.01,
    ks_floor: float = 0.03,
    quantile_threshold: float = 0.05,
    header: Optional[dict] = None,
) -> ConvergenceReport:
    """Simulate the schedule and the limit, then compare the chosen functional.

    ``hypotheses`` is a condition report (anything with ``passed``); without
    one, or when it failed, the check is refused unless ``skip_hypotheses``.
    """
    if quantity not in QUANTITIES:
        raise ConfigurationError(f"unknown quantity {quantity!r}; choose from {QUANTITIES}")
    if not skip_hypotheses:
        if hypotheses is None:
            raise HypothesisNotMetError("no condition report supplied; audit the hypotheses or pass skip_hypotheses")
        if not hypotheses.passed:
            raise HypothesisNotMetError("the hypotheses of this limit theorem failed the audit")
    run = run_schedule(model, limit, schedule, sim, (quantity,))
    return convergence_report(
        quantity, run.b_values, run.samples[quantity], run.limit[quantity], run.times, check_times,
        alpha, ks_floor, quantile_threshold, n_excluded=run.n_excluded, header=header,
    )


# -- moment and occupation suites ----------------------------------------------------


@dataclass
class MomentSummary:
    """Uniform-in-parameter moment proxies.

    ``sup_second[i]`` estimates ``E sup_t zeta^2``; ``fourth_ratio[g][i]`` is
    the largest ``E (zeta(t + g) - zeta(t))^4 / g^2`` over disjoint pairs.
    """

    b_values: list
    sup_second: list
    sup_second_se: list
    sup_second_ci: list
    fourth_ratio: dict
    fourth_ratio_ci: dict
    uniformity: float
    fourth_bound: float
    uniform_factor: float = 2.0
    fourth_limit: float = 6.0

    @property
    def passed(self) -> bool:
        return self.uniformity < self.uniform_factor and self.fourth_bound <= self.fourth_limit

    def to_json(self) -> str:
        d = asdict(self)
        d["fourth_ratio"] = {repr(k): v for k, v in self.fourth_ratio.items()}
        d["fourth_ratio_ci"] = {repr(k): v for k, v in self.fourth_ratio_ci.items()}
        d["passed"] = self.passed
        return json.dumps(d, indent=2, sort_keys=True)


def fourth_moment_ratio(paths: np.ndarray, times: np.ndarray, gap: float) -> np.ndarray:
    """``E (X(t + gap) - X(t))^4 / gap^2`` for ``t = 0, gap, 2 gap, ...``."""
    step = times[1] - times[0]
    k = int(round(gap / step))
    if k < 1 or abs(k * step - gap) > 1e-12:
        raise ConfigurationError(f"gap {gap} is not a multiple of the record spacing {step}")
    idx = np.arange(0, len(times) - k, k)
    inc = paths[:, idx + k] - paths[:, idx]
    return np.mean(inc**4, axis=0) / gap**2


def moment_suite(
    b_values: Sequence[float],
    zeta: Sequence[np.ndarray],
    times: np.ndarray,
    gaps: Sequence[float] = (2.0**-4, 2.0**-6),
    n_boot: int = 200,
    seed: int = 0,
    uniform_factor: float = 2.0,
    fourth_limit: float = 6.0,
) -> MomentSummary:
    sup2, se, ci = [], [], []
    ratios = {g: [] for g in gaps}
    rci = {g: [] for g in gaps}
    for s in zeta:
        m = np.max(s**2, axis=1)
        sup2.append(float(m.mean()))
        se.append(bootstrap_se(m, n_boot=n_boot, seed=seed))
        ci.append(bootstrap_ci(m, n_boot=n_boot, seed=seed))
        for g in gaps:
            r = fourth_moment_ratio(s, times, g)
            j = int(np.argmax(r))
            ratios[g].append(float(r[j]))
            k = int(round(g / (times[1] - times[0])))
            inc4 = (s[:, j * k + k] - s[:, j * k]) ** 4 / g**2
            rci[g].append(bootstrap_ci(inc4, n_boot=n_boot, seed=seed))
    positive = [v for v in sup2 if v > 0]
    uniformity = max(positive) / min(positive) if positive else 1.0
    bound = max((max(v) for v in ratios.values()), default=0.0)
    return MomentSummary(
        list(map(float, b_values)), sup2, se, ci, ratios, rci, float(uniformity), float(bound),
        uniform_factor, fourth_limit,
    )


def occupation(paths: np.ndarray, times: np.ndarray, lo: float, hi: float) -> float:
    """Estimate of ``int_0^L P(X(s) in [lo, hi]) ds`` by the trapezoid rule on the record grid."""
    inside = ((paths >= lo) & (paths <= hi)).mean(axis=0)
    return float(trapezoid(inside, times))


@dataclass
class OccupationFit:
    lambdas: list
    values: list
    C: float
    residual: float
    halving: list

    @property
    def passed(self) -> bool:
        return self.residual < 0.3


def occupation_fit(zeta: Sequence[np.ndarray], times: np.ndarray, lambdas=(0.4, 0.2, 0.1, 0.05)) -> OccupationFit:
    """Least-squares ``O(lam) ~ C lam`` over every parameter value and ``lam``.

    ``residual`` is ``max |O - C lam| / (C lam)``; ``halving`` lists
    ``O(lam) / O(lam / 2)`` per parameter value and consecutive pair.
    """
    lam = np.asarray(lambdas, dtype=float)
    O = np.array([[occupation(s, times, 0.0, l) for l in lam] for s in zeta])
    L = np.broadcast_to(lam, O.shape)
    C = float(np.sum(O * L) / np.sum(L * L))
    residual = float(np.max(np.abs(O - C * L) / (C * L)))
    halving = [list(map(float, row[:-1] / row[1:])) for row in O]
    return OccupationFit(list(map(float, lam)), O.tolist(), C, residual, halving)


def martingale_check(beta2: Sequence[np.ndarray], qv: Sequence[np.ndarray], n_boot: int = 200, seed: int = 0) -> dict:
    """Mean of ``beta2(L)`` against 0 and ``beta2(L)^2 - qv(L)`` against 0, pooled over parameter values.

    Arrays are ``(paths,)`` terminal values, one per parameter value, sharing
    path indices; the bootstrap resamples path indices jointly.
    """
    B = np.column_stack([np.asarray(b, dtype=float) for b in beta2])
    Q = np.column_stack([np.asarray(q, dtype=float) for q in qv])
    D = B**2 - Q
    mean = float(B.mean())
    diff = float(D.mean())
    se_mean = bootstrap_se(B, stat=lambda x: x.mean(), n_boot=n_boot, seed=seed)
    se_diff = bootstrap_se(D, stat=lambda x: x.mean(), n_boot=n_boot, seed=seed + 1)
    return {
        "mean": mean, "mean_se": se_mean, "second_moment": float((B**2).mean()), "qv_mean": float(Q.mean()),
        "diff": diff, "diff_se": se_diff,
        "passed": abs(mean) <= 3 * se_mean and abs(diff) <= 3 * se_diff,
    }
