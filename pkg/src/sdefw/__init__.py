"""Weak approximation of Stratonovich SDEs by extrapolated splitting schemes.

Subpackages:
  free_algebra   exact truncated noncommutative series and order-condition checks
  extrapolation  exact scheme weights (Vandermonde system in 1/theta^2)
  ode_flows      explicit Runge-Kutta flow maps and order verification
  randomness     reproducible path randomness: counter-based PRNG, Sobol, inverse CDF
  models         concrete SDE models (Heston with Asian payoff, GBM variants)
  scheme_engine  path sampling, MC/QMC estimation, quadrature oracle, cost model
  cli            batch front end (`sdefw` command)
"""

from .extrapolation import SchemeSpec, solve_weights, closed_form_m3, nv_scheme

__all__ = ["SchemeSpec", "solve_weights", "closed_form_m3", "nv_scheme"]

__version__ = "0.1.0"
