"""Concrete SDE models in Stratonovich form.

A model bundles the driving vector fields V_0..V_d, per-field flow maps
(closed-form where available, single Runge-Kutta steps otherwise), a payoff,
and an admissible-state predicate.  All field and flow callables are
vectorized over a leading batch axis: states have shape (B, N) and diffusion
flow times may be per-path arrays.

Inadmissible states surface as NaN in batch mode (the sampler counts the
affected paths as aborted) and as exceptions when evaluated with check=True.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field as dc_field

import numpy as np

from .ode_flows import ButcherTableau, builtin_tableau, rk_step


class InadmissibleState(ValueError):
    """State outside the model's domain (e.g. nonpositive variance)."""


class ModelError(ValueError):
    """Invalid model parameters."""


@dataclass(frozen=True)
class SdeModel:
    """d+1 vector fields with flow maps, a payoff, and parameter record."""

    name: str
    dimension: int
    d: int
    fields: tuple
    exact_flows: dict
    payoff: object
    params: dict
    drift_tableau: str = "rk7"
    admissible: object = None
    closed_form: dict = dc_field(default_factory=dict)

    def field(self, i: int, states, check: bool = False):
        states = np.asarray(states, dtype=float)
        if check and self.admissible is not None:
            ok = np.asarray(self.admissible(states))
            if not np.all(ok):
                raise InadmissibleState(
                    f"{self.name}: state outside admissible domain")
        return self.fields[i](states)

    def flow(self, i: int, t, states, tableau: ButcherTableau | None = None):
        """Flow of field i for time t (scalar or per-path array).

        A tableau argument forces a single numeric step even when a closed
        form exists; otherwise closed forms win and the model's drift tableau
        is the numeric fallback.
        """
        if tableau is None and i in self.exact_flows:
            return self.exact_flows[i](t, np.asarray(states, dtype=float))
        tab = tableau or builtin_tableau(self.drift_tableau)
        return rk_step(tab, self.fields[i], states, t, check_finite=False)

    def with_payoff(self, payoff) -> "SdeModel":
        return SdeModel(name=self.name, dimension=self.dimension, d=self.d,
                        fields=self.fields, exact_flows=self.exact_flows,
                        payoff=payoff, params=self.params,
                        drift_tableau=self.drift_tableau,
                        admissible=self.admissible,
                        closed_form=self.closed_form)


# -- Heston with averaged-price state -------------------------------------------------


@dataclass(frozen=True)
class HestonParams:
    """Parameters of the stochastic-volatility benchmark.

    theta_vol is the long-run variance level; the Feller condition
    2 alpha theta_vol > beta^2 keeps the variance strictly positive.
    """

    mu: float = 0.05
    alpha: float = 2.0
    theta_vol: float = 0.09
    beta: float = 0.1
    rho: float = 0.0
    x1: float = 1.0
    x2: float = 0.09
    T: float = 1.0
    K: float = 1.05

    def __post_init__(self):
        if 2.0 * self.alpha * self.theta_vol - self.beta ** 2 <= 0.0:
            raise ModelError("Feller condition 2*alpha*theta_vol > beta^2 fails")
        if abs(self.rho) > 1.0:
            raise ModelError("correlation must satisfy |rho| <= 1")
        if self.x1 <= 0.0 or self.x2 <= 0.0:
            raise ModelError("initial price and variance must be positive")


def _safe_sqrt(y):
    with np.errstate(invalid="ignore"):
        return np.sqrt(np.where(y >= 0.0, y, np.nan))


def asian_call_payoff(states, T: float, K: float):
    states = np.asarray(states, dtype=float)
    return np.maximum(states[..., 2] / T - K, 0.0)


def heston_model(params: HestonParams | None = None, **kw) -> SdeModel:
    """Three-state model: price, variance, running price integral.

    Stratonovich fields; the variance flows have closed forms when rho = 0,
    the drift field is integrated numerically (high-order single step).
    """
    p = params or HestonParams(**kw)
    mu, al, th, be, rho = p.mu, p.alpha, p.theta_vol, p.beta, p.rho

    def v0(y):
        y1, y2 = y[..., 0], y[..., 1]
        out = np.empty_like(y)
        out[..., 0] = y1 * (mu - y2 / 2.0 - rho * be / 4.0)
        out[..., 1] = al * (th - y2) - be ** 2 / 4.0
        out[..., 2] = y1
        return out

    def v1(y):
        root = _safe_sqrt(y[..., 1])
        out = np.zeros_like(y)
        out[..., 0] = y[..., 0] * root
        out[..., 1] = rho * be * root
        return out

    def v2(y):
        out = np.zeros_like(y)
        out[..., 1] = be * math.sqrt(1.0 - rho ** 2) * _safe_sqrt(y[..., 1])
        return out

    exact = {}
    if rho == 0.0:
        def flow1(t, y):
            out = y.copy()
            out[..., 0] = y[..., 0] * np.exp(np.asarray(t) * _safe_sqrt(y[..., 1]))
            return out

        def flow2(t, y):
            # root of the variance after time t; a negative value would leave
            # the admissible branch, which is flagged by NaN (path abort)
            out = y.copy()
            s = be * np.asarray(t) / 2.0 + _safe_sqrt(y[..., 1])
            out[..., 1] = np.where(s >= 0.0, s * s, np.nan)
            return out

        exact = {1: flow1, 2: flow2}

    x0 = np.array([p.x1, p.x2, 0.0])
    return SdeModel(
        name="heston",
        dimension=3,
        d=2,
        fields=(v0, v1, v2),
        exact_flows=exact,
        payoff=lambda s: asian_call_payoff(s, p.T, p.K),
        params={"mu": mu, "alpha": al, "theta_vol": th, "beta": be, "rho": rho,
                "x1": p.x1, "x2": p.x2, "T": p.T, "K": p.K, "x0": x0},
        drift_tableau="rk7",
        admissible=lambda s: np.asarray(s)[..., 1] > 0.0,
    )


# -- geometric Brownian motion ----------------------------------------------------------


def gbm_model(mu: float = 0.05, sigma: float = 0.2, x0: float = 1.0) -> SdeModel:
    """Scalar model dX = mu X dt + sigma X dB (Ito drift mu).

    Both flows are closed-form exponentials that commute, so every splitting
    scheme built from them reproduces polynomial moments exactly; first and
    second moments are supplied in closed form.
    """
    if sigma < 0:
        raise ModelError("sigma must be >= 0")
    mu_s = mu - 0.5 * sigma ** 2          # Stratonovich-corrected drift

    def v0(y):
        return mu_s * y

    def v1(y):
        return sigma * y

    def flow0(t, y):
        return y * np.exp(mu_s * np.asarray(t))[..., None]

    def flow1(t, y):
        return y * np.exp(sigma * np.asarray(t))[..., None]

    return SdeModel(
        name="gbm",
        dimension=1,
        d=1,
        fields=(v0, v1),
        exact_flows={0: flow0, 1: flow1},
        payoff=lambda s: np.asarray(s)[..., 0],
        params={"mu": mu, "sigma": sigma, "x0": np.array([x0])},
        drift_tableau="rk4",
        closed_form={
            "mean": lambda T: x0 * math.exp(mu * T),
            "second_moment": lambda T: x0 ** 2 * math.exp((2 * mu + sigma ** 2) * T),
        },
    )


def gbm_asian_model(mu: float = 0.05, sigma: float = 0.2,
                    x0: float = 1.0) -> SdeModel:
    """GBM augmented with the running price integral A_t = int_0^t X ds.

    The drift field feeds the average, so it no longer commutes with the
    squared diffusion field and the splitting error is visible on payoffs of
    the averaged coordinate; E[A_T] and E[A_T^2] are closed-form.
    """
    if sigma < 0:
        raise ModelError("sigma must be >= 0")
    mu_s = mu - 0.5 * sigma ** 2

    def v0(y):
        out = np.empty_like(y)
        out[..., 0] = mu_s * y[..., 0]
        out[..., 1] = y[..., 0]
        return out

    def v1(y):
        out = np.zeros_like(y)
        out[..., 0] = sigma * y[..., 0]
        return out

    def flow0(t, y):
        t = np.asarray(t)
        out = y.copy()
        growth = np.exp(mu_s * t)
        if mu_s == 0.0:
            out[..., 1] = y[..., 1] + y[..., 0] * t
        else:
            out[..., 1] = y[..., 1] + y[..., 0] * (growth - 1.0) / mu_s
        out[..., 0] = y[..., 0] * growth
        return out

    def flow1(t, y):
        out = y.copy()
        out[..., 0] = y[..., 0] * np.exp(sigma * np.asarray(t))
        return out

    def mean_avg(T):
        return x0 * (math.exp(mu * T) - 1.0) / mu if mu else x0 * T

    def second_moment_avg(T):
        c = mu + sigma ** 2
        return (2.0 * x0 ** 2 / c) * ((math.exp((2 * mu + sigma ** 2) * T) - 1.0)
                                      / (2 * mu + sigma ** 2)
                                      - (math.exp(mu * T) - 1.0) / mu)

    return SdeModel(
        name="gbm_asian",
        dimension=2,
        d=1,
        fields=(v0, v1),
        exact_flows={0: flow0, 1: flow1},
        payoff=lambda s: np.asarray(s)[..., 1],
        params={"mu": mu, "sigma": sigma, "x0": np.array([x0, 0.0])},
        drift_tableau="rk4",
        closed_form={
            "mean": mean_avg,
            "second_moment": second_moment_avg,
        },
    )


# -- registry ------------------------------------------------------------------------


_REGISTRY = {
    "heston": heston_model,
    "gbm": gbm_model,
    "gbm_asian": gbm_asian_model,
}


def make_model(name: str, **params) -> SdeModel:
    try:
        factory = _REGISTRY[name]
    except KeyError:
        raise ModelError(
            f"unknown model {name!r}; available: {sorted(_REGISTRY)}") from None
    return factory(**params)


def model_names() -> list[str]:
    return sorted(_REGISTRY)


def parse_payoff(model: SdeModel, key: str = "default"):
    """Resolve a payoff by name: 'default' (the model's own), or a state
    component 'x<i>' / 'x<i>^<p>' with 1-based component index."""
    if key in (None, "default"):
        return model.payoff
    if key.startswith("x"):
        comp, _, power = key[1:].partition("^")
        idx = int(comp) - 1
        p = int(power) if power else 1
        if not 0 <= idx < model.dimension:
            raise ModelError(f"payoff component {key!r} outside state "
                             f"dimension {model.dimension}")
        return lambda s: np.asarray(s, dtype=float)[..., idx] ** p
    raise ModelError(f"unknown payoff {key!r}")
