import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import oracles
from sdelimits.conditions import (
    ConditionConfig,
    a0_integral,
    a1_ratio,
    a2_values,
    build_tables,
    check_A0,
    check_A1,
    check_A2,
    check_A3,
    check_A4,
    check_growth,
    check_theorem5,
    decaying_trend,
    growth_margin,
    q_theorem2_drift,
    q_theorem3,
    run_conditions,
)
from sdelimits.errors import ConfigurationError
from sdelimits.model import ParamSchedule, example1_model, example2_model, synthetic_limit, synthetic_model
from sdelimits.transform import build_f

E4 = math.exp(4.0)
SCHEDULE = ParamSchedule.dyadic(3, 10)


@pytest.fixture(scope="module")
def ex1():
    model, limit = example1_model(0.5)
    cfg = ConditionConfig(psi_C1=E4, a1_C=2 * E4 + 1)
    return model, limit, cfg, build_tables(model, SCHEDULE, cfg)


@pytest.fixture(scope="module")
def ex2():
    model, limit = example2_model(0.5)
    cfg = ConditionConfig()
    return model, limit, cfg, build_tables(model, SCHEDULE, cfg)


@pytest.fixture(scope="module")
def flat():
    model = synthetic_model("zero_drift", integrand="one")
    return model, build_f(model, 8.0)


# -- trend rule ------------------------------------------------------------------


def test_trend_rule_examples():
    assert decaying_trend([1.0, 0.5, 0.2, 0.05])
    assert decaying_trend([1.0, 0.5, 0.6, 0.05])  # one rise allowed
    assert not decaying_trend([1.0, 0.5, 0.6, 0.7, 0.05])
    assert not decaying_trend([1.0, 0.5, 0.2, 0.11])
    assert decaying_trend([0.0, 1e-12, 0.0], zero_tol=1e-9)
    assert not decaying_trend([1.0, np.nan])


@settings(max_examples=60)
@given(
    st.lists(st.floats(1e-6, 1e3), min_size=2, max_size=9),
    st.floats(1e-3, 1e3),
)
def test_trend_is_scale_free(values, k):
    assert decaying_trend(values) == decaying_trend([k * v for v in values])


def test_config_validation():
    with pytest.raises(ConfigurationError):
        ConditionConfig(N=0)
    with pytest.raises(ConfigurationError):
        ConditionConfig(alpha=-1)
    with pytest.raises(ConfigurationError):
        ConditionConfig(B_sets=(((0.0, 6.0),),))


# -- A0 --------------------------------------------------------------------------


def test_a0_closed_form_value():
    model, _ = example1_model(0.5)
    v, method = a0_integral(model, 100.0, ConditionConfig())
    assert v == pytest.approx(math.log(10001) / 200, abs=1e-10)
    assert v == pytest.approx(0.046053, abs=1e-6)
    assert "closed-form" in method
    assert v == pytest.approx(oracles.brute_sup_gap_integral(100.0), abs=1e-9)


def test_a0_zero_gap_and_trend():
    zero = check_A0(synthetic_model("zero_drift"), SCHEDULE, ConditionConfig())
    assert all(v == 0 for v in zero.values) and zero.verdict == "pass"
    model, _ = example1_model(0.5)
    cfg = ConditionConfig()
    assert a0_integral(model, 2.0**8, cfg)[0] < a0_integral(model, 2.0**4, cfg)[0]
    res = check_A0(model, SCHEDULE, cfg)
    for b, v in zip(SCHEDULE, res.values):
        assert abs(v - math.log(1 + b * b) / (2 * b)) < 1e-4
    assert res.trend and res.verdict == "pass"


def test_a0_window_fallback_agrees():
    model, _ = example1_model(0.5)
    for b in (4.0, 8.0, 16.0):
        exact, _ = a0_integral(model, b, ConditionConfig())
        approx, method = a0_integral(model, b, ConditionConfig(a0_window=5.0, n_t=256))
        assert "grid sup" in method
        assert abs(approx - exact) <= 0.05 * exact


# -- A1 and growth ------------------------------------------------------------------


def test_a1_example1(ex1):
    model, _, cfg, tables = ex1
    res = check_A1(model, tables, cfg)
    assert res.verdict == "pass"
    assert max(res.values) <= 2 * E4 + 1
    assert all(v <= 0 for v in res.extra["max_violation"])


def test_a1_zero_drift_identity(flat):
    model, table = flat
    ratio, gx0 = a1_ratio(model, table, ConditionConfig())
    assert ratio == pytest.approx(1.0, abs=1e-12)
    assert gx0 == 0.0


def test_a1_ignores_integrand(ex1):
    model, _, cfg, tables = ex1
    other = model.with_integrand(synthetic_model("zero_drift", integrand="smooth").integrand_g)
    assert a1_ratio(model, tables[2], cfg) == a1_ratio(other, tables[2], cfg)


def test_growth_cases(ex1, flat):
    _, _, cfg, tables = ex1
    res = check_growth(tables, cfg)
    assert res.verdict == "pass" and min(res.values) >= math.exp(-2)
    _, table = flat
    assert growth_margin(table, 1.0) == pytest.approx(1.0, abs=1e-12)
    cubic = table.with_G(lambda x: x**3, lambda x: 3 * x**2)
    assert growth_margin(cubic, 1.0) == pytest.approx(table.h**2, rel=1e-9)
    assert check_growth([cubic], ConditionConfig(C=0.9)).verdict == "fail"


# -- A2 --------------------------------------------------------------------------


def test_a2_empty_set(flat):
    _, table = flat
    assert np.all(a2_values(table, ()) == 0)


def test_a2_zero_drift_interval(flat):
    _, table = flat
    lam = 0.4
    v = a2_values(table, ((0.0, lam),))
    right = table.grid >= lam
    assert np.allclose(v[right], lam, atol=1e-9)
    ratio = v / (lam * (1 + np.abs(table.grid)))
    assert np.max(ratio) <= 1.0


def test_a2_example1(ex1):
    model, _, cfg, tables = ex1
    res = check_A2(tables, cfg)
    assert res.verdict == "pass" and max(res.values) <= 1.0
    for t in tables:
        r = a2_values(t, ((0.0, 0.1),)) / (E4 * 0.1 * (1 + np.abs(t.grid)))
        assert np.max(r) <= 1.0


def test_a2_set_outside_range():
    table = build_f(synthetic_model("constant_drift", c=2.0), 2.0)
    with pytest.raises(ConfigurationError):
        a2_values(table, ((0.0, 0.4),))


# -- A3 and A4 --------------------------------------------------------------------


def test_a3_zero_family(flat):
    _, table = flat
    res = check_A3([table], lambda t: (lambda x: np.zeros_like(x)), ConditionConfig())
    assert res.values == [0.0]


def test_a3_example1_drift_family_vanishes(ex1):
    model, limit, cfg, tables = ex1
    res = check_A3(tables, q_theorem2_drift(model, limit), cfg, "A3_drift")
    assert all(v == 0 for v in res.values) and res.verdict == "pass"


def test_a3_example2_integrand(ex2):
    model, limit, cfg, tables = ex2
    res = check_A3(tables, q_theorem3(model, limit), cfg, "A3_integrand")
    for b, v in zip(SCHEDULE, res.values):
        assert v <= E4 * math.pi * b ** (0.5 - 1)
    assert res.trend and res.verdict == "pass"
    a4 = check_A4(tables, model, lambda y: limit.values("g0", y), cfg)
    assert np.allclose(a4.values, res.values, rtol=1e-12, atol=0)


def test_constant_integrand_counterexample_fails():
    model = synthetic_model("zero_drift", integrand="one")
    limit = synthetic_limit(model)
    cfg = ConditionConfig()
    tables = build_tables(model, ParamSchedule.dyadic(3, 6), cfg)
    res = check_A3(tables, q_theorem3(model, limit), cfg, "A3_integrand")
    assert res.values[-1] == pytest.approx(cfg.N, rel=1e-9)
    assert res.verdict == "fail"


def test_a4_exact_cases(flat):
    _, table = flat
    zero_model = synthetic_model("zero_drift")
    res = check_A4([table], zero_model, lambda y: np.zeros_like(y), ConditionConfig())
    assert res.values == [0.0] and res.extra["C_N"] == [0.0]
    # g_T = 1 integrates to x, which is g0(G) G' for g0(y) = y and G = x
    one_model, _ = flat
    res = check_A4([table], one_model, lambda y: y, ConditionConfig())
    assert res.values[0] < 1e-12


# -- two-constant condition -----------------------------------------------------


def test_theorem5_zero(flat):
    _, table = flat
    res = check_theorem5([table], synthetic_model("zero_drift"), ConditionConfig(), 0.0, 0.0)
    assert res.values == [0.0] and res.extra["Q_sup"] == [0.0]


def test_theorem5_constant_integrand_fails():
    model = synthetic_model("zero_drift", integrand="one")
    cfg = ConditionConfig()
    tables = build_tables(model, ParamSchedule.dyadic(3, 6), cfg)
    res = check_theorem5(tables, model, cfg)
    assert res.verdict == "fail"
    assert res.values[-1] > 1.0


def test_theorem5_oscillating_sign():
    model = synthetic_model("zero_drift", integrand="sign_sin")
    cfg = ConditionConfig()
    sched = ParamSchedule.dyadic(3, 7)
    tables = build_tables(model, sched, cfg)
    res = check_theorem5(tables, model, cfg, 0.0, None)
    for b, v in zip(sched, res.values):
        assert v <= 2 * math.pi / b * cfg.N
    assert decaying_trend(res.values)


# -- reports ---------------------------------------------------------------------


def test_example1_membership_report(ex1):
    model, limit, cfg, tables = ex1
    rep = run_conditions(model, limit, SCHEDULE, cfg, ("A0", "A1", "growth", "A2"), tables=tables)
    assert rep.passed
    assert [r.name for r in rep.results] == ["A0", "A1", "growth", "A2"]


def test_report_determinism_and_formats(ex1):
    model, limit, cfg, tables = ex1
    names = ("A0", "A1", "A3_drift", "A3_diffusion")
    a = run_conditions(model, limit, SCHEDULE, cfg, names, tables=tables, header={"k": 1})
    b = run_conditions(model, limit, SCHEDULE, cfg, names)
    assert a.to_csv() == b.to_csv()
    lines = a.to_csv().splitlines()
    assert lines[0] == "condition,T_index,b_T,value"
    assert len(lines) == 1 + len(names) * len(SCHEDULE)
    body = json.loads(a.to_json())
    assert body["header"] == {"k": 1}
    assert [c["name"] for c in body["conditions"]] == list(names)
    for c in body["conditions"]:
        assert all(math.isfinite(v) for v in c["values"])


def test_run_conditions_errors(ex1):
    model, limit, cfg, tables = ex1
    with pytest.raises(ConfigurationError):
        run_conditions(model, limit, SCHEDULE, cfg, ("A9",), tables=tables)
    with pytest.raises(ConfigurationError):
        run_conditions(model, None, SCHEDULE, cfg, ("A3_drift",), tables=tables)
