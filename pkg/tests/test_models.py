import math

import numpy as np
import pytest
from scipy import integrate as sp_integrate

from sdefw.models import (HestonParams, InadmissibleState, ModelError,
                          asian_call_payoff, gbm_asian_model, gbm_model,
                          heston_model, make_model, model_names, parse_payoff)
from sdefw.ode_flows import builtin_tableau, rk_step


PAPER_POINT = np.array([[1.0, 0.09, 0.0]])


# -- parameter validation -----------------------------------------------------------

def test_feller_condition_enforced():
    with pytest.raises(ModelError, match="Feller"):
        HestonParams(alpha=0.1, theta_vol=0.01, beta=0.5)


def test_correlation_bound():
    with pytest.raises(ModelError):
        HestonParams(rho=1.5)


def test_positive_initial_state():
    with pytest.raises(ModelError):
        HestonParams(x1=-1.0)


# -- vector fields ----------------------------------------------------------------------

def test_drift_field_at_reference_point():
    m = heston_model()
    v0 = m.field(0, PAPER_POINT)[0]
    assert np.allclose(v0, [0.005, -0.0025, 1.0], atol=1e-15)


def test_second_diffusion_field_sparsity():
    m = heston_model()
    states = np.array([[1.0, 0.09, 0.0], [2.0, 0.25, 3.0]])
    v2 = m.field(2, states)
    assert np.all(v2[:, 0] == 0) and np.all(v2[:, 2] == 0)
    assert v2[0, 1] == pytest.approx(0.1 * math.sqrt(0.09))


def test_zero_correlation_kills_variance_component_of_first_field():
    m = heston_model(rho=0.0)
    v1 = m.field(1, PAPER_POINT)
    assert v1[0, 1] == 0.0
    assert v1[0, 0] == pytest.approx(math.sqrt(0.09))


def test_inadmissible_state_raises_on_checked_eval():
    m = heston_model()
    with pytest.raises(InadmissibleState):
        m.field(1, np.array([[1.0, -0.01, 0.0]]), check=True)


# -- exact flows ----------------------------------------------------------------------------

def test_flows_at_zero_time_are_identity():
    m = heston_model()
    for i in (1, 2):
        out = m.flow(i, 0.0, PAPER_POINT)
        assert np.allclose(out, PAPER_POINT, atol=1e-16)


def test_variance_flow_group_law():
    m = heston_model()
    s, t = 0.7, -0.4
    one = m.flow(2, t, m.flow(2, s, PAPER_POINT))
    two = m.flow(2, s + t, PAPER_POINT)
    assert np.allclose(one, two, atol=1e-14)


def test_price_flow_group_law():
    m = heston_model()
    one = m.flow(1, 0.3, m.flow(1, 0.5, PAPER_POINT))
    two = m.flow(1, 0.8, PAPER_POINT)
    assert np.allclose(one, two, atol=1e-14)


@pytest.mark.parametrize("i", [1, 2])
def test_flow_derivative_matches_field(i):
    m = heston_model()
    eps = 1e-5
    plus = m.flow(i, eps, PAPER_POINT)
    minus = m.flow(i, -eps, PAPER_POINT)
    fd = (plus - minus) / (2 * eps)
    assert np.allclose(fd, m.field(i, PAPER_POINT), atol=1e-6)


@pytest.mark.parametrize("i", [1, 2])
def test_exact_vs_numeric_flow(i):
    m = heston_model()
    t = 0.5
    exact = m.flow(i, t, PAPER_POINT)
    numeric = m.flow(i, t, PAPER_POINT, tableau=builtin_tableau("rk7"))
    assert np.allclose(exact, numeric, rtol=1e-10, atol=1e-12)


def test_drift_flow_against_substep_reference():
    m = heston_model()
    h = 0.5                       # T/n with n = 2
    single = m.flow(0, h, PAPER_POINT)
    fine = PAPER_POINT.copy()
    for _ in range(64):
        fine = rk_step(builtin_tableau("rk7"), m.fields[0], fine, h / 64)
    assert np.max(np.abs(single - fine) / np.abs(fine)) < 1e-10


def test_variance_clamp_flags_path():
    m = heston_model()
    out = m.flow(2, -10.0, PAPER_POINT)     # drives the variance root negative
    assert math.isnan(out[0, 1])


def test_feller_margin_under_flows():
    m = heston_model()
    n = 2
    bound = 6 * math.sqrt(1.0 / n)
    for z in np.linspace(-bound, bound, 41):
        state = m.flow(2, z, m.flow(1, z, m.flow(0, 1.0 / n, PAPER_POINT)))
        assert state[0, 1] > 0


# -- payoff -----------------------------------------------------------------------------------

def test_asian_payoff_at_the_money():
    T, K = 1.0, 1.05
    state = np.array([[1.0, 0.09, K * T]])
    assert asian_call_payoff(state, T, K)[0] == 0.0


def test_asian_payoff_in_the_money():
    T, K = 1.0, 1.05
    state = np.array([[1.0, 0.09, 2 * K * T]])
    assert asian_call_payoff(state, T, K)[0] == pytest.approx(1.05)


def test_asian_payoff_piecewise_linear_convex():
    T, K = 1.0, 1.05
    xs = np.array([0.5, 1.05, 1.6])
    vals = asian_call_payoff(np.column_stack([xs * 0, xs * 0, xs]), T, K)
    assert vals[0] == 0.0
    assert 2 * vals[1] <= vals[0] + vals[2] + 1e-15


# -- GBM family -----------------------------------------------------------------------------

def test_gbm_zero_volatility_is_deterministic():
    m = gbm_model(mu=0.1, sigma=0.0)
    out = m.flow(0, 2.0, np.array([[1.0]]))
    assert out[0, 0] == pytest.approx(math.exp(0.2))


def test_gbm_flow_group_law_exact():
    m = gbm_model(mu=0.1, sigma=0.4)
    x = np.array([[1.7]])
    a = m.flow(1, 0.3, m.flow(1, 0.2, x))
    b = m.flow(1, 0.5, x)
    assert np.allclose(a, b, atol=1e-15)


def test_gbm_closed_form_moments():
    m = gbm_model(mu=0.07, sigma=0.3, x0=2.0)
    assert m.closed_form["mean"](1.5) == pytest.approx(2.0 * math.exp(0.105))
    assert m.closed_form["second_moment"](1.5) == pytest.approx(
        4.0 * math.exp((2 * 0.07 + 0.09) * 1.5))


def test_gbm_asian_average_flow():
    m = gbm_asian_model(mu=0.2, sigma=0.1)
    out = m.flow(0, 1.0, np.array([[1.0, 0.0]]))
    mu_s = 0.2 - 0.5 * 0.01
    assert out[0, 0] == pytest.approx(math.exp(mu_s))
    assert out[0, 1] == pytest.approx((math.exp(mu_s) - 1.0) / mu_s)


def test_gbm_asian_moments_against_quadrature_oracle():
    # independent check of the closed forms by direct numerical integration
    mu, sigma, x0, T = 0.3, 0.5, 1.2, 0.8
    m = gbm_asian_model(mu=mu, sigma=sigma, x0=x0)

    mean_num = sp_integrate.quad(lambda t: x0 * math.exp(mu * t), 0, T)[0]
    assert m.closed_form["mean"](T) == pytest.approx(mean_num, rel=1e-10)

    def corr(s, t):
        lo = min(s, t)
        return x0 ** 2 * math.exp(mu * (s + t) + sigma ** 2 * lo)

    m2_num = sp_integrate.dblquad(corr, 0, T, 0, T, epsabs=1e-12)[0]
    assert m.closed_form["second_moment"](T) == pytest.approx(m2_num, rel=1e-9)


# -- registry and payoff parsing --------------------------------------------------------------

def test_registry():
    assert model_names() == ["gbm", "gbm_asian", "heston"]
    assert make_model("gbm", mu=0.0, sigma=0.1).name == "gbm"
    with pytest.raises(ModelError, match="unknown model"):
        make_model("cir")


def test_parse_payoff():
    m = gbm_asian_model()
    states = np.array([[2.0, 3.0]])
    assert parse_payoff(m, "x1")(states)[0] == 2.0
    assert parse_payoff(m, "x2^2")(states)[0] == 9.0
    assert parse_payoff(m, "default")(states)[0] == 3.0
    with pytest.raises(ModelError):
        parse_payoff(m, "x5")
    with pytest.raises(ModelError):
        parse_payoff(m, "strike")
