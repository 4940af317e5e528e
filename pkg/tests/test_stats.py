import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.stats import ks_2samp

from sdelimits.errors import HypothesisNotMetError
from sdelimits.model import LimitModel, ParamSchedule, synthetic_limit, synthetic_model, zero_x
from sdelimits.simulate import SimConfig, simulate_ensemble, simulate_limit
from sdelimits.stats import (
    MarginalSample,
    bootstrap_ci,
    bootstrap_se,
    convergence_report,
    fourth_moment_ratio,
    ks_critical,
    ks_statistic,
    ks_two_sample,
    martingale_check,
    moment_suite,
    nonincreasing_steps,
    occupation,
    occupation_fit,
    theorem_check,
)

samples = st.lists(st.floats(-1e6, 1e6, allow_nan=False), min_size=1, max_size=40)


# -- Kolmogorov-Smirnov ----------------------------------------------------------


def test_ks_examples():
    assert ks_statistic([0.3, 1.0, 2.0], [2.0, 0.3, 1.0]) == 0.0
    assert ks_statistic([0.0], [1.0]) == 1.0
    assert ks_statistic([1.0, 2.0], [1.5, 2.5]) == 0.5


def test_ks_critical_value():
    assert math.sqrt(-0.5 * math.log(0.005)) == pytest.approx(1.628, abs=1e-3)
    assert ks_critical(10_000, 10_000, 0.01) == pytest.approx(0.0230, abs=1e-4)
    D, crit = ks_two_sample(MarginalSample(1.0, [0.0, 1.0]), MarginalSample(1.0, [0.5]))
    assert D == 0.5 and crit == ks_critical(2, 1)


def test_marginal_sample():
    s = MarginalSample(0.5, [3.0, 1.0, 2.0])
    assert list(s.values) == [1.0, 2.0, 3.0] and s.n == 3
    with pytest.raises(ValueError):
        MarginalSample(0.5, [])
    with pytest.raises(ValueError):
        ks_statistic([], [1.0])


@settings(max_examples=100)
@given(samples, samples)
def test_ks_symmetric_and_matches_scipy(a, b):
    assert ks_statistic(a, b) == ks_statistic(b, a)
    assert ks_statistic(a, b) == pytest.approx(ks_2samp(a, b, method="asymp").statistic, abs=1e-12)
    assert 0.0 <= ks_statistic(a, b) <= 1.0


ints = st.lists(st.integers(-1000, 1000), min_size=1, max_size=40)


@settings(max_examples=100)
@given(ints, ints)
def test_ks_invariant_under_increasing_maps(a, b):
    # integer samples keep the map strictly increasing in floating point too
    f = lambda x: np.exp(np.asarray(x, dtype=float) / 100.0) - 3.0
    assert ks_statistic(f(a), f(b)) == ks_statistic(a, b)


# -- bootstrap ----------------------------------------------------------------------


def test_bootstrap_se_scaling():
    model = synthetic_model("zero_drift")
    ens = simulate_ensemble(model, 8.0, M=8000)
    x = ens.xi[:, -1]
    ratio = bootstrap_se(x[:4000], n_boot=2000, seed=1) / bootstrap_se(x, n_boot=2000, seed=2)
    assert 1.3 <= ratio <= 1.6


def test_bootstrap_ci_brackets_mean():
    x = np.random.default_rng(0).normal(size=2000)
    lo, hi = bootstrap_ci(x, seed=1)
    assert lo < x.mean() < hi
    assert bootstrap_se(np.ones(10)) == 0.0


def test_nonincreasing_steps():
    assert nonincreasing_steps([3, 2, 2, 4, 1]) == 3


# -- convergence reports ------------------------------------------------------------


def _times(n=8):
    return np.linspace(0.0, 1.0, n + 1)


def test_quantile_mode_for_point_mass():
    times = _times()
    rng = np.random.default_rng(1)
    samples = [s * rng.normal(size=(50, times.size)) for s in (1.0, 0.5, 0.2, 0.01)]
    limit = np.zeros((50, times.size))
    rep = convergence_report("beta1", [8, 16, 32, 64], samples, limit, times)
    assert rep.mode == "quantile" and "point mass" in rep.note
    assert all(r[2] == "sup" for r in rep.rows)
    vals = rep.series("sup")
    assert vals == sorted(vals, reverse=True)
    assert rep.trend and rep.final_pass and rep.passed


def test_ks_mode_report_and_formats():
    times = _times()
    rng = np.random.default_rng(2)
    limit = rng.normal(size=(400, times.size))
    samples = [rng.normal(loc=m, size=(400, times.size)) for m in (1.0, 0.5, 0.0)]
    rep = convergence_report("zeta", [8, 16, 32], samples, limit, times, header={"seed": 1})
    assert rep.mode == "ks"
    assert len(rep.rows) == 3 * 4
    assert rep.series(1.0)[0] > rep.series(1.0)[-1]
    assert rep.threshold == pytest.approx(max(ks_critical(400, 400), 0.03))
    csv_lines = rep.to_csv().splitlines()
    assert csv_lines[0] == "quantity,T_index,b_T,time,ks,critical,pass"
    assert len(csv_lines) == 1 + len(rep.rows)
    body = json.loads(rep.to_json())
    assert body["header"]["seed"] == 1 and "proxy" in body["header"]
    assert body["verdict"] == rep.verdict


def test_report_needs_one_sample_per_value():
    from sdelimits.errors import ConfigurationError

    with pytest.raises(ConfigurationError):
        convergence_report("zeta", [8, 16], [np.zeros((3, 9))], np.zeros((3, 9)), _times())


def test_theorem_check_requires_hypotheses():
    model = synthetic_model("zero_drift", integrand="smooth")
    limit = synthetic_limit(model, g0="zero")
    sched = ParamSchedule.dyadic(3, 4)
    sim = SimConfig(M=64)
    with pytest.raises(HypothesisNotMetError):
        theorem_check("I", sched, model, limit, sim)

    class Failed:
        passed = False

    with pytest.raises(HypothesisNotMetError):
        theorem_check("I", sched, model, limit, sim, hypotheses=Failed())


def test_identity_case_matches_limit_law():
    # the prelimit equation already is the limit equation
    model = synthetic_model("zero_drift", integrand="smooth", terminal="sin")
    limit = LimitModel(g0=model.integrand_g, F0=model.terminal_F)
    rep = theorem_check(
        "I", ParamSchedule.dyadic(3, 5), model, limit, SimConfig(M=4000), skip_hypotheses=True
    )
    fixed = [r for r in rep.rows if r[2] != "sup"]
    assert all(r[5] for r in fixed)
    assert rep.final_pass


# -- moments, occupation, martingale ------------------------------------------------


@pytest.fixture(scope="module")
def brownian():
    return simulate_ensemble(synthetic_model("zero_drift", x0=0.25), 8.0, M=4000)


def test_sup_second_moment_matches_brownian_oracle(brownian):
    ens = brownian
    summ = moment_suite([8.0], [ens.xi], ens.times)
    oracle = np.max((0.25 + ens.W) ** 2, axis=1)
    se = bootstrap_se(oracle)
    assert abs(summ.sup_second[0] - oracle.mean()) < 3 * se
    assert summ.uniformity == 1.0


def test_brownian_fourth_moment_ratio(brownian):
    ens = brownian
    for gap in (2.0**-4, 2.0**-6):
        k = int(round(gap / (ens.times[1] - ens.times[0])))
        inc = ens.W[:, k::k] - ens.W[:, :-k:k]
        per_path = np.mean(inc**4, axis=1) / gap**2
        assert abs(per_path.mean() - 3.0) < 3 * bootstrap_se(per_path, seed=4)
        assert np.mean(fourth_moment_ratio(ens.W, ens.times, gap)) == pytest.approx(per_path.mean())


def test_frozen_limit_has_no_moments():
    ens = simulate_limit(LimitModel(sigma0=zero_x, y0=0.0), M=64)
    assert np.all(fourth_moment_ratio(ens.xi, ens.times, 2.0**-4) == 0)
    summ = moment_suite([1.0], [ens.xi], ens.times)
    assert summ.sup_second == [0.0] and summ.fourth_bound == 0.0


def test_moment_summary_verdict(brownian):
    ens = brownian
    summ = moment_suite([8.0, 16.0], [ens.xi, 3.0 * ens.xi], ens.times)
    assert summ.uniformity == pytest.approx(9.0)
    assert not summ.passed
    assert json.loads(summ.to_json())["passed"] is False


def test_occupation_of_constant_paths():
    times = _times(16)
    paths = np.vstack([np.full(times.size, 0.05), np.full(times.size, 2.0)])
    assert occupation(paths, times, 0.0, 0.1) == pytest.approx(0.5)


def test_occupation_fit_linear():
    times = _times(16)
    u = (np.arange(1000) + 0.5) / 1000
    # uniform positions on [0, 1] give occupation exactly lam
    paths = np.repeat(u[:, None], times.size, axis=1)
    fit = occupation_fit([paths, paths], times)
    assert fit.C == pytest.approx(1.0, abs=1e-3)
    assert fit.residual < 0.01 and fit.passed
    assert all(h == pytest.approx(2.0, abs=0.02) for row in fit.halving for h in row)


def test_martingale_check_brownian(brownian):
    ens = brownian
    W1 = ens.W[:, -1]
    res = martingale_check([W1, W1], [np.ones_like(W1), np.ones_like(W1)])
    assert res["passed"]
    shifted = martingale_check([W1 + 1.0], [np.ones_like(W1)])
    assert not shifted["passed"]
