"""Euler-Maruyama path ensembles and the functionals computed along them.

The kernel integrates ``dX = drift(t, X) dt + diffusion(X) dW`` on the
dyadic grid ``t_k = k L / 2**n`` and, at full resolution, accumulates

* ``beta1 = sum g(X_k) dt``            (left-endpoint Riemann sum)
* ``beta2 = sum h(X_k) dW_k``          (left-endpoint Ito sum)
* ``qv    = sum h(X_k)**2 dt``         (its discrete quadratic variation)

For the prelimit equation ``diffusion = 1`` and ``h = g``; for the limit
equation ``h = g0 * sigma0``.  Values are stored every ``stride`` steps;
storing the full grid of a ``2**20``-step path for ``10**4`` paths would not
fit in memory, and the functionals need full-resolution sums anyway.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Optional

import numba as nb
import numpy as np
from scipy.integrate import cumulative_simpson
from scipy.interpolate import CubicHermiteSpline

from .errors import ConfigurationError, OutOfRangeError, ResolutionError
from .model import LimitModel, ModelFamily, evaluate_x, one_x
from .rng import MAX_LEVEL, bridge_refine, fill_normals, seed_key

LANES = 8
BLOCK_BITS = 12
DEFAULT_SEED = 20170922


# -- kernel ------------------------------------------------------------------


@nb.njit(nogil=True, error_model="numpy")
def _euler_paths(
    drift, diffusion, g, h, c, x0, L, level, k0, k1, stream, j0, j1, stride, xmax,
    xi, w_rec, dw_rec, b1_rec, b2_rec, qv_rec, exited,
):
    n = 1 << level
    dt = L / n
    lc = level - BLOCK_BITS if level > BLOCK_BITS else 0
    nc = 1 << lc
    sub = level - lc
    nf = 1 << sub
    coarse = np.zeros((LANES, nc + 1))
    fine = np.zeros((LANES, nf + 1))
    scratch = np.empty(max(nc, nf) // 2 + 1)
    x = np.empty(LANES)
    dacc = np.empty(LANES)
    b1 = np.empty(LANES)
    b2 = np.empty(LANES)
    qv = np.empty(LANES)
    out = np.empty(LANES, dtype=np.bool_)
    sqrt_l = math.sqrt(L)

    for g0 in range(j0, j1, LANES):
        m = min(LANES, j1 - g0)
        for p in range(m):
            j = g0 + p
            fill_normals(k0, k1, j, stream, 0, 1, scratch)
            coarse[p, 0] = 0.0
            coarse[p, nc] = sqrt_l * scratch[0]
            bridge_refine(k0, k1, j, stream, coarse[p], 0, 0, lc, L, scratch)
            x[p] = x0
            dacc[p] = 0.0
            b1[p] = 0.0
            b2[p] = 0.0
            qv[p] = 0.0
            out[p] = abs(x0) > xmax
            xi[j, 0] = x0
            w_rec[j, 0] = 0.0
            b1_rec[j, 0] = 0.0
            b2_rec[j, 0] = 0.0
            qv_rec[j, 0] = 0.0

        countdown = stride
        r = 0
        for cell in range(nc):
            for p in range(m):
                fine[p, 0] = coarse[p, cell]
                fine[p, nf] = coarse[p, cell + 1]
                bridge_refine(k0, k1, g0 + p, stream, fine[p], lc, cell, sub, L, scratch)
            for kl in range(nf):
                t = (cell * nf + kl) * dt
                for p in range(m):
                    xp = x[p]
                    dw = fine[p, kl + 1] - fine[p, kl]
                    a = drift(t, xp, c)
                    s = diffusion(xp, c)
                    gv = g(xp, c)
                    hv = h(xp, c)
                    b1[p] += gv * dt
                    b2[p] += hv * dw
                    qv[p] += hv * hv * dt
                    dacc[p] += dw
                    xp = xp + a * dt + s * dw
                    if abs(xp) > xmax:
                        out[p] = True
                    x[p] = xp
                countdown -= 1
                if countdown == 0:
                    countdown = stride
                    r += 1
                    for p in range(m):
                        j = g0 + p
                        xi[j, r] = x[p]
                        w_rec[j, r] = fine[p, kl + 1]
                        dw_rec[j, r - 1] = dacc[p]
                        b1_rec[j, r] = b1[p]
                        b2_rec[j, r] = b2[p]
                        qv_rec[j, r] = qv[p]
                        dacc[p] = 0.0
        for p in range(m):
            exited[g0 + p] = out[p]


# -- adapters for limit-model coefficients -----------------------------------

_LIFTED: dict = {}
_PRODUCTS: dict = {}


def _time_lift(f):
    """``f(x, c)`` as ``f(t, x, c)``; cached so each function compiles once."""
    if f not in _LIFTED:

        @nb.njit(error_model="numpy")
        def lifted(t, x, c):
            return f(x, c)

        _LIFTED[f] = lifted
    return _LIFTED[f]


def _product(f, g):
    key = (f, g)
    if key not in _PRODUCTS:

        @nb.njit(error_model="numpy")
        def prod(x, c):
            return f(x, c) * g(x, c)

        _PRODUCTS[key] = prod
    return _PRODUCTS[key]


# -- data types ----------------------------------------------------------------


@dataclass(frozen=True)
class PathEnsemble:
    """``M`` simulated paths stored every ``stride`` Euler steps.

    ``dW[:, r]`` is the Wiener increment over record interval ``r``; with
    ``stride == 1`` these are the raw per-step increments.  ``W`` holds the
    bridge values themselves, so paths sharing a seed agree exactly on common
    grid points whatever their step size.
    """

    label: str
    b: float
    L: float
    level: int
    stride: int
    base_seed: int
    stream: int
    x0: float
    times: np.ndarray
    xi: np.ndarray
    W: np.ndarray
    dW: np.ndarray
    beta1: np.ndarray
    beta2: np.ndarray
    qv: np.ndarray
    exited: np.ndarray
    x_max: float

    @property
    def dt(self) -> float:
        return self.L / (1 << self.level)

    @property
    def M(self) -> int:
        return self.xi.shape[0]

    @property
    def n_exited(self) -> int:
        return int(self.exited.sum())

    @property
    def valid(self) -> np.ndarray:
        return ~self.exited

    def time_index(self, t: float) -> int:
        r = t / self.L * (len(self.times) - 1)
        ri = int(round(r))
        if abs(r - ri) > 1e-9 or not 0 <= ri < len(self.times):
            raise ConfigurationError(f"t={t} is not on the record grid (spacing {self.times[1] - self.times[0]})")
        return ri

    def to_csv(self, path, paths: Optional[int] = None) -> None:
        """Debug dump with columns ``path_id, t, xi, dW``."""
        n = self.M if paths is None else min(paths, self.M)
        with open(path, "w") as fh:
            fh.write("path_id,t,xi,dW\n")
            for j in range(n):
                for r, t in enumerate(self.times):
                    dw = self.dW[j, r] if r < self.dW.shape[1] else float("nan")
                    fh.write(f"{j},{t!r},{self.xi[j, r]!r},{dw!r}\n")


@dataclass(frozen=True)
class FunctionalSample:
    """Per-path series of the functionals on the record grid (valid paths only)."""

    times: np.ndarray
    beta1: np.ndarray
    beta2: np.ndarray
    I: np.ndarray
    zeta: Optional[np.ndarray]
    qv: np.ndarray
    n_excluded: int = 0

    def at(self, name: str, t: float) -> np.ndarray:
        r = int(round(t / self.times[-1] * (len(self.times) - 1))) if self.times[-1] else 0
        if abs(self.times[r] - t) > 1e-9:
            raise ConfigurationError(f"t={t} is not on the record grid")
        return getattr(self, name)[:, r]


# -- helpers -------------------------------------------------------------------


def resolution_dt(b: Optional[float]) -> float:
    """Largest admissible step: ``min(1e-3, b**-2)`` (``1e-3`` when ``b`` is None)."""
    return 1e-3 if b is None or not math.isfinite(b) else min(1e-3, b**-2)


def level_for(L: float, dt: Optional[float], b: Optional[float], allow_coarse: bool = False) -> int:
    """Number of dyadic halvings of ``[0, L]`` giving the Euler step.

    Without an explicit ``dt`` the step is the largest ``L / 2**n`` not
    exceeding the resolution rule.
    """
    rule = resolution_dt(b)
    if dt is None:
        level = max(0, math.ceil(math.log2(L / rule) - 1e-12))
    else:
        ratio = L / dt
        level = int(round(math.log2(ratio)))
        if abs(2.0**level - ratio) > 1e-9 * ratio:
            raise ConfigurationError(f"dt={dt} must be L / 2**n for L={L}")
        if dt > rule * (1.0 + 1e-12) and not allow_coarse:
            raise ResolutionError(
                f"dt={dt:.3g} exceeds min(1e-3, b_T**-2)={rule:.3g}: one Euler step would move "
                "the path across more than one drift oscillation; pass allow_coarse=True to override"
            )
    if level > MAX_LEVEL:
        raise ConfigurationError(f"level {level} exceeds the bridge limit {MAX_LEVEL}")
    return level


def stream_id(kind: int, replicate: int = 0, index: int = 0) -> int:
    """Stream word: 2 bits of kind, 18 bits of replicate, 12 bits of schedule index."""
    if not (0 <= kind < 4 and 0 <= replicate < 2**18 and 0 <= index < 2**12):
        raise ConfigurationError("stream components out of range")
    return (kind << 30) | (replicate << 12) | index


XI_STREAM, LIMIT_STREAM, GAUSS_STREAM = 0, 1, 2


def _run(
    label, drift, diffusion, g, h, c, x0, b, L, level, base_seed, stream, M, n_record, x_max, workers
) -> PathEnsemble:
    if M < 1:
        raise ConfigurationError("M must be at least 1")
    n = 1 << level
    n_rec = min(int(n_record), n)
    if n_rec < 1 or n_rec & (n_rec - 1):
        raise ConfigurationError("n_record must be a power of two")
    stride = n // n_rec
    shape = (M, n_rec + 1)
    xi = np.empty(shape)
    w = np.empty(shape)
    dw = np.empty((M, n_rec))
    b1 = np.empty(shape)
    b2 = np.empty(shape)
    qv = np.empty(shape)
    exited = np.zeros(M, dtype=bool)
    k0, k1 = seed_key(base_seed)
    c = np.ascontiguousarray(c, dtype=float)

    def chunk(lo, hi):
        _euler_paths(
            drift, diffusion, g, h, c, float(x0), float(L), level, k0, k1, stream,
            lo, hi, stride, float(x_max), xi, w, dw, b1, b2, qv, exited,
        )

    workers = max(1, int(workers))
    if workers == 1 or M <= LANES:
        chunk(0, M)
    else:
        edges = np.linspace(0, M, workers + 1).astype(int)
        with ThreadPoolExecutor(workers) as pool:
            list(pool.map(chunk, edges[:-1], edges[1:]))
    times = np.arange(n_rec + 1) * (L / n_rec)
    return PathEnsemble(
        label=label, b=b, L=L, level=level, stride=stride, base_seed=int(base_seed), stream=stream,
        x0=float(x0), times=times, xi=xi, W=w, dW=dw, beta1=b1, beta2=b2, qv=qv, exited=exited,
        x_max=float(x_max),
    )


# -- public operations ---------------------------------------------------------


def simulate_ensemble(
    model: ModelFamily,
    b: float,
    dt: Optional[float] = None,
    L: float = 1.0,
    M: int = 10_000,
    base_seed: int = DEFAULT_SEED,
    crn: bool = True,
    *,
    schedule_index: int = 0,
    replicate: int = 0,
    x_max: float = 8.0,
    n_record: int = 256,
    allow_coarse: bool = False,
    workers: int = 1,
) -> PathEnsemble:
    """Euler-Maruyama paths of ``d xi = a_T(t, xi) dt + dW``, ``xi(0) = x0``.

    With ``crn=True`` every parameter value uses the same Brownian paths:
    path ``j`` draws its normals from ``(base_seed, j, node)`` only, and the
    bridge construction makes the paths agree on every common grid point even
    when ``dt`` differs between parameter values.
    """
    level = level_for(L, dt, b, allow_coarse)
    stream = stream_id(XI_STREAM, replicate, 0 if crn else 1 + schedule_index)
    g = model.integrand_g
    return _run(
        model.name, model.drift, one_x, g, g, model.coef(b), model.x0, float(b), L, level,
        base_seed, stream, M, n_record, x_max, workers,
    )


def simulate_limit(
    limit: LimitModel,
    dt: Optional[float] = None,
    L: float = 1.0,
    M: int = 10_000,
    base_seed: int = DEFAULT_SEED,
    *,
    replicate: int = 0,
    x_max: float = 1e6,
    n_record: int = 256,
    workers: int = 1,
) -> PathEnsemble:
    """Euler-Maruyama paths of ``d zeta = a0 dt + sigma0 dW_hat`` on a separate stream.

    ``beta1`` accumulates ``int g0(zeta) ds`` and ``beta2`` accumulates
    ``int g0(zeta) sigma0(zeta) dW_hat``.
    """
    level = level_for(L, dt, None, allow_coarse=True)
    stream = stream_id(LIMIT_STREAM, replicate, 0)
    return _run(
        "limit", _time_lift(limit.a0), limit.sigma0, limit.g0, _product(limit.g0, limit.sigma0),
        limit.params, limit.y0, float("nan"), L, level, base_seed, stream, M, n_record, x_max, workers,
    )


def gaussian_reference(scale: float, times: np.ndarray, M: int, base_seed: int, replicate: int = 0) -> np.ndarray:
    """Samples of ``scale * W(t)`` at each requested time (independent stream)."""
    from .rng import normals

    stream = stream_id(GAUSS_STREAM, replicate, 0)
    out = np.empty((M, len(times)))
    for j in range(M):
        out[j] = scale * np.sqrt(times) * normals(base_seed, j, stream, 0, len(times))
    return out


def compute_functionals(ens: PathEnsemble, model: ModelFamily, b: float, table=None) -> FunctionalSample:
    """Assemble ``beta1, beta2, I_T = F_T(xi) + beta2`` and ``zeta_T = G_T(xi)``.

    Exited paths are dropped (count in ``n_excluded``); ``zeta`` is None when
    no table is supplied.
    """
    keep = ens.valid
    xi = ens.xi[keep]
    beta2 = ens.beta2[keep]
    I = model.F_values(xi, b) + beta2
    zeta = None
    if table is not None:
        zeta = table.G(xi)
    return FunctionalSample(
        times=ens.times, beta1=ens.beta1[keep], beta2=beta2, I=I, zeta=zeta, qv=ens.qv[keep],
        n_excluded=int((~keep).sum()),
    )


def limit_functionals(ens: PathEnsemble, limit: LimitModel) -> FunctionalSample:
    """Limit-side counterparts: ``zeta``, ``int g0(zeta) ds``, ``int g0 sigma0 dW_hat``, ``F0(zeta) + beta2``."""
    keep = ens.valid
    zeta = ens.xi[keep]
    beta2 = ens.beta2[keep]
    I = limit.values("F0", zeta) + beta2
    return FunctionalSample(
        times=ens.times, beta1=ens.beta1[keep], beta2=beta2, I=I, zeta=zeta, qv=ens.qv[keep],
        n_excluded=int((~keep).sum()),
    )


def g0_antiderivative(limit: LimitModel, window: float, h: float = 1e-3):
    """``H(y) = int_0^y g0`` as a callable; closed form when the model supplies one."""
    if limit.g0_antiderivative is not None:
        f = limit.g0_antiderivative
        return lambda y: evaluate_x(f, y, limit.params)
    n = int(math.ceil(window / h))
    grid = np.arange(-n, n + 1) * (window / n)
    vals = limit.values("g0", grid)
    right = cumulative_simpson(vals[n:], dx=window / n, initial=0.0)
    left = -cumulative_simpson(vals[: n + 1][::-1], dx=window / n, initial=0.0)[::-1]
    H = np.concatenate([left[:-1], right])
    spline = CubicHermiteSpline(grid, H, vals)

    def antiderivative(y):
        y = np.asarray(y, dtype=float)
        if np.any(np.abs(y) > window):
            raise OutOfRangeError(f"antiderivative window is [-{window}, {window}]")
        return spline(y)

    return antiderivative


def theorem4_limit_functional(limit_ens: PathEnsemble, limit: LimitModel, window: float = 16.0) -> np.ndarray:
    """``2 (int_{y0}^{zeta(t)} g0 - int_0^t g0(zeta) sigma0(zeta) dW_hat)`` per path and record time."""
    H = g0_antiderivative(limit, window)
    keep = limit_ens.valid
    zeta = limit_ens.xi[keep]
    return 2.0 * ((H(zeta) - H(np.array(limit.y0))) - limit_ens.beta2[keep])


def riemann_ito_sums(ens: PathEnsemble, model: ModelFamily, b: float) -> tuple[np.ndarray, np.ndarray]:
    """Recompute ``beta1`` and ``beta2`` from stored paths (requires ``stride == 1``)."""
    if ens.stride != 1:
        raise ConfigurationError("full-resolution recomputation needs stride 1")
    gv = model.g_values(ens.xi[:, :-1], b)
    z = np.zeros((ens.M, 1))
    b1 = np.concatenate([z, np.cumsum(gv * ens.dt, axis=1)], axis=1)
    b2 = np.concatenate([z, np.cumsum(gv * ens.dW, axis=1)], axis=1)
    return b1, b2


@dataclass(frozen=True)
class SimConfig:
    """Simulation settings shared by every parameter value of a schedule.

    ``dt = None`` applies the resolution rule per parameter value;
    ``limit_dt = None`` uses ``1e-3`` rounded down to a dyadic step.
    """

    L: float = 1.0
    M: int = 10_000
    base_seed: int = DEFAULT_SEED
    crn: bool = True
    x_max: float = 8.0
    n_record: int = 256
    dt: Optional[float] = None
    limit_dt: Optional[float] = None
    allow_coarse: bool = False
    workers: int = 1
    replicate: int = 0

    def __post_init__(self):
        if self.M < 1:
            raise ConfigurationError("M must be at least 1")
        if not (self.L > 0 and self.x_max > 0):
            raise ConfigurationError("L and x_max must be positive")
        if not 0 <= int(self.base_seed) < 2**64:
            raise ConfigurationError("base_seed must be a 64-bit unsigned integer")
