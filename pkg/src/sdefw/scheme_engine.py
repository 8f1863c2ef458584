"""Path sampling and estimation for extrapolated splitting schemes.

One step at level theta applies theta repetitions of the (d+1)-fold flow
composition; the per-step Bernoulli bit selects ascending (Lambda = 1) or
descending (Lambda = 0) field order.  Levels of one path share the Bernoulli
bits.  The estimator contracts per-level sample means with the extrapolation
weights.

Paths are independent work items grouped into fixed-size blocks by path
index.  Blocks are summed with numpy's fixed-shape pairwise reduction and
combined across blocks with compensated summation in block order, so results
are bit-identical for any worker count.
"""

from __future__ import annotations

import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field as dc_field

import numpy as np

from .extrapolation import SchemeSpec
from .models import SdeModel, make_model, parse_payoff
from .ode_flows import builtin_tableau, gauss_hermite
from .randomness import (PathRandomness, PointSource, draw_block_randomness,
                         required_dimension)

BLOCK_SIZE = 8192            # paths per block; fixed so reductions have a
                             # worker-independent shape


class EstimationError(RuntimeError):
    """Estimator refused to report (excessive path aborts)."""


class QuadratureBudgetError(RuntimeError):
    """Requested deterministic oracle exceeds the evaluation budget."""


@dataclass
class EstimateReport:
    """Result of one estimation run plus instrumentation.

    The headline value is always recomputed from the stored per-level means,
    so report consumers can re-derive it bit-exactly.
    """

    model: str
    scheme: SchemeSpec
    n: int
    M: int
    rng: str
    level_means: np.ndarray
    level_stderr: np.ndarray
    combo_stderr: float
    aborted: int
    elapsed_s: float
    counters: dict = dc_field(default_factory=dict)

    @property
    def value(self) -> float:
        weights = np.array([float(f) for f in self.scheme.weights])
        return float(weights @ self.level_means)

    def csv_rows(self, reference: float | None = None) -> list[str]:
        err = "" if reference is None else repr(abs(self.value - reference))
        rows = [f"{self.model},{self.scheme.label()},{self.n},{self.M},"
                f"{self.rng},{self.value!r},{err},{self.combo_stderr!r},"
                f"{self.elapsed_s:.3f},{self.counters.get('cost_units', '')}"]
        for theta, mean, se in zip(self.scheme.thetas, self.level_means,
                                   self.level_stderr):
            rows.append(f"{self.model},level:{theta},{self.n},{self.M},"
                        f"{self.rng},{mean!r},,{se!r},,")
        return rows


# -- single-step / single-path reference implementations ------------------------------


def _resolve_overrides(tableau_overrides):
    if not tableau_overrides:
        return {}
    return {int(i): builtin_tableau(name) if isinstance(name, str) else name
            for i, name in tableau_overrides.items()}


def nv_step(states, theta: int, j: int, n: int, lam, zmat, model: SdeModel,
            tableau_overrides=None):
    """Advance a batch of states through time step j at level theta.

    states: (B, N); lam: (B,) bits; zmat: (B, d+1, theta*n) with row 0 the
    drift times.  Column (rep * n + j) feeds repetition rep of step j.
    """
    states = np.asarray(states, dtype=float)
    lam = np.asarray(lam)
    overrides = _resolve_overrides(tableau_overrides)
    out = states.copy()
    for forward in (True, False):
        sel = (lam == 1) if forward else (lam != 1)
        if not np.any(sel):
            continue
        sub = out[sel]
        z = zmat[sel]
        order = range(model.d + 1) if forward else range(model.d, -1, -1)
        for rep in range(theta):
            col = rep * n + j
            for i in order:
                t = z[:, i, col] if i > 0 else float(z[0, 0, col])
                sub = model.flow(i, t, sub, tableau=overrides.get(i))
        out[sel] = sub
    return out


def sample_path(model: SdeModel, scheme: SchemeSpec, T: float, x0, n: int,
                randomness: PathRandomness, tableau_overrides=None,
                payoff=None) -> np.ndarray:
    """Payoff vector (one entry per level) for a single simulated path."""
    payoff = payoff or model.payoff
    lam = np.asarray(randomness.lam)[None, :]
    out = np.empty(scheme.m)
    for k, theta in enumerate(scheme.thetas):
        states = np.asarray(x0, dtype=float)[None, :]
        zmat = np.asarray(randomness.z[k])[None, ...]
        for j in range(n):
            states = nv_step(states, theta, j, n, lam[:, j], zmat, model,
                             tableau_overrides)
        out[k] = payoff(states)[0]
    return out


def _sample_block(model: SdeModel, scheme: SchemeSpec, T: float, x0, n: int,
                  lam, blocks, tableau_overrides=None, payoff=None):
    """(B, m) payoffs for a block; aborted paths carry NaN."""
    payoff = payoff or model.payoff
    B = lam.shape[0]
    out = np.empty((B, scheme.m))
    x0 = np.asarray(x0, dtype=float)
    for k, theta in enumerate(scheme.thetas):
        states = np.broadcast_to(x0, (B, model.dimension)).copy()
        zmat = blocks[k]
        for j in range(n):
            states = nv_step(states, theta, j, n, lam[:, j], zmat, model,
                             tableau_overrides)
        out[:, k] = payoff(states)
    return out


# -- deterministic parallel estimation ---------------------------------------------


def _block_partition(M: int, block_size: int = BLOCK_SIZE):
    return [(s, min(block_size, M - s)) for s in range(0, M, block_size)]


def _block_sums(model, scheme, T, x0, n, source, start, count, coupling,
                tableau_overrides, payoff_key):
    payoff = parse_payoff(model, payoff_key)
    lam, blocks = draw_block_randomness(source, start, count, scheme, n,
                                        model.d, T, coupling)
    vals = _sample_block(model, scheme, T, x0, n, lam, blocks,
                         tableau_overrides, payoff)
    finite = np.all(np.isfinite(vals), axis=1)
    aborted = int(count - finite.sum())
    vals = np.where(finite[:, None], vals, 0.0)
    weights = np.array([float(f) for f in scheme.weights])
    combo = vals @ weights
    return (vals.sum(axis=0), (vals * vals).sum(axis=0),
            float(combo.sum()), float((combo * combo).sum()), aborted)


def _worker_task(args):
    (model_name, model_kwargs, payoff_key, thetas, T, n, source_kwargs,
     coupling, tableau_overrides, start, count) = args
    model = make_model(model_name, **model_kwargs)
    from .extrapolation import solve_weights
    scheme = solve_weights(thetas)
    source = PointSource(**source_kwargs)
    x0 = model.params["x0"]
    return _block_sums(model, scheme, T, x0, n, source, start, count,
                       coupling, tableau_overrides, payoff_key)


def _kahan_add(total, comp, value):
    y = value - comp
    t = total + y
    comp = (t - total) - y
    return t, comp


def estimate(model: SdeModel, scheme: SchemeSpec, T: float, x0, n: int,
             M: int, source: PointSource, *, coupling: str = "independent",
             workers: int = 1, tableau_overrides=None, payoff_key: str = "default",
             abort_tolerance: float = 1e-3,
             model_kwargs: dict | None = None) -> EstimateReport:
    """Monte Carlo / quasi-Monte Carlo estimate of E[g(X_T)].

    Deterministic for fixed (source, M, n, scheme) regardless of `workers`:
    the path-block partition, per-block reductions and the block combination
    order are all fixed by path index.
    """
    if M < 1:
        raise ValueError("need at least one path")
    t0 = time.perf_counter()
    parts = _block_partition(M)
    if workers > 1:
        if model_kwargs is None:
            raise ValueError("parallel estimation needs model_kwargs to "
                             "rebuild the model in worker processes")
        args = [(model.name, model_kwargs, payoff_key, scheme.thetas, T, n,
                 {"kind": source.kind, "dimension": source.dimension,
                  "seed": source.seed, "skip": source.skip,
                  "table_path": source.table_path},
                 coupling, tableau_overrides, start, count)
                for start, count in parts]
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_worker_task, args))
    else:
        results = [_block_sums(model, scheme, T, x0, n, source, start, count,
                               coupling, tableau_overrides, payoff_key)
                   for start, count in parts]

    m = scheme.m
    sums = np.zeros(m)
    comps = np.zeros(m)
    sqs = np.zeros(m)
    sq_comps = np.zeros(m)
    combo_sum = combo_comp = 0.0
    combo_sq = combo_sq_comp = 0.0
    aborted = 0
    for bs, bsq, bc, bcsq, ab in results:
        for k in range(m):
            sums[k], comps[k] = _kahan_add(sums[k], comps[k], bs[k])
            sqs[k], sq_comps[k] = _kahan_add(sqs[k], sq_comps[k], bsq[k])
        combo_sum, combo_comp = _kahan_add(combo_sum, combo_comp, bc)
        combo_sq, combo_sq_comp = _kahan_add(combo_sq, combo_sq_comp, bcsq)
        aborted += ab

    if aborted > abort_tolerance * M:
        raise EstimationError(
            f"{aborted} of {M} paths aborted (> {abort_tolerance:.2%}); "
            "estimate would be biased")
    M_eff = M - aborted
    means = sums / M_eff
    level_var = np.maximum(sqs / M_eff - means ** 2, 0.0)
    level_stderr = np.sqrt(level_var / M_eff)
    combo_mean = combo_sum / M_eff
    combo_var = max(combo_sq / M_eff - combo_mean ** 2, 0.0)

    sum_theta = sum(scheme.thetas)
    counters = {
        "flow_applications": M * n * sum_theta * (model.d + 1),
        "gaussian_vector_draws": M * n * sum_theta,
        "bernoulli_draws": M * n,
        "paths": M,
    }
    return EstimateReport(
        model=model.name, scheme=scheme, n=n, M=M, rng=source.label(),
        level_means=means, level_stderr=level_stderr,
        combo_stderr=math.sqrt(combo_var / M_eff),
        aborted=aborted, elapsed_s=time.perf_counter() - t0,
        counters=counters)


def make_source(rng_kwargs: dict, scheme: SchemeSpec, n: int, d: int,
                coupling: str = "independent") -> PointSource:
    """Point source sized exactly for one path of the given run."""
    dim = required_dimension(scheme, n, d, coupling)
    return PointSource(dimension=dim, **rng_kwargs)


# -- deterministic quadrature oracle -------------------------------------------------


def quadrature_expectation(model: SdeModel, scheme: SchemeSpec, T: float,
                           x0, n: int, *, nodes: int = 16,
                           eval_budget: float = 4e8,
                           tableau_overrides=None, payoff=None,
                           chunk: int = 1 << 21) -> dict:
    """Noise-free E[g(X_T)] per level and extrapolated, by tensor-product
    Gauss-Hermite quadrature with exact averaging over both orderings.

    Only for d = 1 models.  The ordering average enumerates both branches
    per step, so the evaluation tree has (2 * nodes^theta)^n leaves per
    level; configurations beyond `eval_budget` raise QuadratureBudgetError.
    """
    if model.d != 1:
        raise ValueError("the quadrature oracle requires d = 1 models")
    if n > 8:
        raise QuadratureBudgetError("ordering enumeration is capped at n = 8")
    payoff = payoff or model.payoff
    overrides = _resolve_overrides(tableau_overrides)
    z_std, z_w = gauss_hermite(nodes)
    x0 = np.asarray(x0, dtype=float)

    levels = []
    for theta in scheme.thetas:
        leaves = float(2 * nodes ** theta) ** n
        if leaves > eval_budget:
            raise QuadratureBudgetError(
                f"level theta={theta}: {leaves:.3g} evaluations exceed the "
                f"budget {eval_budget:.3g}; reduce n or nodes")
        tau = T / (n * theta)
        z_phys = z_std * math.sqrt(tau)

        def one_step(states, weights):
            outs = []
            wouts = []
            for forward in (True, False):
                s, w = states, weights * 0.5
                for _ in range(theta):
                    if forward:
                        s = model.flow(0, tau, s, tableau=overrides.get(0))
                    W = s.shape[0]
                    s = np.repeat(s, nodes, axis=0)
                    w = np.repeat(w, nodes) * np.tile(z_w, W)
                    s = model.flow(1, np.tile(z_phys, W), s,
                                   tableau=overrides.get(1))
                    if not forward:
                        s = model.flow(0, tau, s, tableau=overrides.get(0))
                outs.append(s)
                wouts.append(w)
            return np.concatenate(outs), np.concatenate(wouts)

        factor = 2 * nodes ** theta

        def recurse(states, weights, steps_left):
            if steps_left == 0:
                return float(np.dot(weights, payoff(states)))
            if states.shape[0] * factor ** steps_left <= chunk:
                s, w = states, weights
                for _ in range(steps_left):
                    s, w = one_step(s, w)
                return float(np.dot(w, payoff(s)))
            s, w = one_step(states, weights)
            total = 0.0
            piece = max(1, chunk // factor ** (steps_left - 1), chunk // (1 << 16))
            for lo in range(0, s.shape[0], piece):
                total += recurse(s[lo:lo + piece], w[lo:lo + piece],
                                 steps_left - 1)
            return total

        start = x0[None, :].astype(float)
        levels.append(recurse(start, np.ones(1), n))

    levels = np.array(levels)
    weights = np.array([float(f) for f in scheme.weights])
    return {"levels": levels, "value": float(weights @ levels)}


# -- cost model -----------------------------------------------------------------------


def cost_estimate(scheme: SchemeSpec, n: int, M: int, d: int,
                  a: float, B: float, Zc: float) -> float:
    """Closed-form operation count of the estimation algorithm.

    a: operations per flow solve; B: per Bernoulli draw; Zc: per
    d-dimensional Gaussian draw.
    """
    if min(n, M) < 0 or d < 0:
        raise ValueError("inputs must be nonnegative")
    m = scheme.m
    sum_theta = sum(scheme.thetas)
    per_path = 5 * m + n * ((d + 1) * a + Zc + 1) * sum_theta + n * B + 1
    return M * per_path + 2 * m


def instrumented_cost(report: EstimateReport, a: float, B: float,
                      Zc: float) -> float:
    """Total cost implied by the run's instrumentation counters, using the
    same operation classes and bookkeeping constants as cost_estimate."""
    c = report.counters
    m = report.scheme.m
    M = c["paths"]
    return (a * c["flow_applications"]
            + Zc * c["gaussian_vector_draws"]
            + 1 * c["gaussian_vector_draws"]          # per-slot bookkeeping
            + B * c["bernoulli_draws"]
            + 5 * m * M + M                           # per-level and per-path overhead
            + 2 * m)                                  # final contraction
