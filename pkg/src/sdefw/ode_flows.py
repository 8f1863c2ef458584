"""Explicit Runge-Kutta flow maps for autonomous ODEs x' = V(x).

Tableaux are stored with exact rational coefficients so their order can be
verified through the rooted-tree order conditions in exact arithmetic; the
numeric fast path uses cached float arrays.  Tableaux are data: they can be
loaded from plain text files and swapped without code changes.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from functools import lru_cache
from importlib import resources

import numpy as np
from numpy.polynomial.hermite_e import hermegauss


class TableauError(ValueError):
    """Malformed tableau data."""


class FlowFailure(RuntimeError):
    """Non-finite value produced during stage evaluation."""

    def __init__(self, stage: int, message: str | None = None):
        self.stage = stage
        super().__init__(message or f"non-finite stage value at stage {stage}")


class InconclusiveOrder(RuntimeError):
    """Too few usable points to fit a convergence slope."""


@dataclass(frozen=True)
class ButcherTableau:
    """Strictly-lower-triangular explicit method: row i of `a` has i entries."""

    name: str
    a: tuple[tuple[Fraction, ...], ...]
    b: tuple[Fraction, ...]
    declared_order: int
    _np_cache: dict = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        s = len(self.b)
        if len(self.a) != s:
            raise TableauError(f"need {s} coefficient rows, got {len(self.a)}")
        for i, row in enumerate(self.a):
            if len(row) != i:
                raise TableauError(
                    f"row {i + 1} must have {i} entries (explicit method), "
                    f"got {len(row)}")
        if sum(self.b) != 1:
            raise TableauError(f"weights must sum to 1, got {sum(self.b)}")

    @property
    def stages(self) -> int:
        return len(self.b)

    def arrays(self) -> tuple[np.ndarray, np.ndarray]:
        """(a, b) as float arrays; a is (s, s) strictly lower triangular."""
        if "a" not in self._np_cache:
            s = self.stages
            a = np.zeros((s, s))
            for i, row in enumerate(self.a):
                a[i, :i] = [float(v) for v in row]
            self._np_cache["a"] = a
            self._np_cache["b"] = np.array([float(v) for v in self.b])
        return self._np_cache["a"], self._np_cache["b"]


# -- file format -----------------------------------------------------------------
#
#   line 1:  "<stages> <order>"
#   then one line per stage i = 1..s with the i-1 entries of row i of `a`
#   (the first of these lines is empty), then one line with the s weights.
#   Tokens are decimals or rationals "p/q".  Leading '#' lines are comments.


def _token(t: str) -> Fraction:
    return Fraction(t)


def parse_tableau(text: str, name: str = "tableau") -> ButcherTableau:
    lines = text.splitlines()
    i = 0
    while i < len(lines) and lines[i].lstrip().startswith("#"):
        i += 1
    if i >= len(lines):
        raise TableauError("missing header line")
    header = lines[i].split()
    if len(header) != 2:
        raise TableauError(f"header must be '<stages> <order>', got {lines[i]!r}")
    s, order = int(header[0]), int(header[1])
    body = lines[i + 1:]
    if len(body) < s + 1:
        raise TableauError(f"expected {s + 1} body lines, found {len(body)}")
    a = []
    for r in range(s):
        toks = body[r].split()
        if len(toks) != r:
            raise TableauError(f"stage {r + 1}: expected {r} entries, got {len(toks)}")
        a.append(tuple(_token(t) for t in toks))
    btoks = body[s].split()
    if len(btoks) != s:
        raise TableauError(f"weight line: expected {s} entries, got {len(btoks)}")
    return ButcherTableau(name=name, a=tuple(a),
                          b=tuple(_token(t) for t in btoks),
                          declared_order=order)


def format_tableau(t: ButcherTableau) -> str:
    lines = [f"{t.stages} {t.declared_order}"]
    lines += [" ".join(str(v) for v in row) for row in t.a]
    lines.append(" ".join(str(v) for v in t.b))
    return "\n".join(lines) + "\n"


def load_tableau_file(path, name: str | None = None) -> ButcherTableau:
    with open(path) as fh:
        return parse_tableau(fh.read(), name=name or str(path))


SHIPPED_TABLEAUX = ("euler", "heun", "rk4", "rk7")


@lru_cache(maxsize=None)
def builtin_tableau(name: str) -> ButcherTableau:
    """Load one of the shipped tableaux: euler, heun, rk4, rk7."""
    try:
        text = resources.files("sdefw").joinpath(f"tableaux/{name}.txt").read_text()
    except FileNotFoundError:
        raise TableauError(f"no builtin tableau named {name!r}") from None
    return parse_tableau(text, name=name)


def tableau_for_order(order: int) -> ButcherTableau:
    """Smallest shipped tableau with declared order >= order."""
    for name in ("euler", "heun", "rk4", "rk7"):
        t = builtin_tableau(name)
        if t.declared_order >= order:
            return t
    raise TableauError(f"no shipped tableau reaches order {order}")


# -- generated high-order tableau ---------------------------------------------------


def extrapolated_euler_tableau(order: int) -> ButcherTableau:
    """Order-`order` method built by polynomial extrapolation of composed
    Euler substeps with 1..order substeps.

    The k-substep Euler map over a step h has a local-error expansion in
    powers of 1/k, so the Vandermonde weights w (sum w = 1,
    sum w/k^j = 0 for j < order) cancel all error terms below h^(order+1).
    The combination is itself an explicit method: the substep blocks sit on
    the block diagonal and the weights scale each block's quadrature row.
    """
    if order < 1:
        raise TableauError("order must be >= 1")
    ks = list(range(1, order + 1))
    m = len(ks)
    rows = [[Fraction(1, k ** j) for k in ks] + [Fraction(int(j == 0))]
            for j in range(m)]
    for col in range(m):
        pivot = next(r for r in range(col, m) if rows[r][col] != 0)
        rows[col], rows[pivot] = rows[pivot], rows[col]
        inv = 1 / rows[col][col]
        rows[col] = [v * inv for v in rows[col]]
        for r in range(m):
            if r != col and rows[r][col] != 0:
                f = rows[r][col]
                rows[r] = [v - f * p for v, p in zip(rows[r], rows[col])]
    w = [rows[i][m] for i in range(m)]

    a: list[tuple[Fraction, ...]] = []
    b: list[Fraction] = []
    offset = 0
    for k, wk in zip(ks, w):
        for i in range(k):
            row = [Fraction(0)] * offset + [Fraction(1, k)] * i
            a.append(tuple(row))
        b.extend([wk * Fraction(1, k)] * k)
        offset += k
    return ButcherTableau(name=f"euler_x{order}", a=tuple(a), b=tuple(b),
                          declared_order=order)


# -- rooted-tree order conditions -----------------------------------------------------


@lru_cache(maxsize=None)
def rooted_trees(order: int) -> tuple:
    """All rooted trees with exactly `order` nodes, as canonical nested tuples."""
    if order == 1:
        return ((),)
    pool = [(k, t) for k in range(1, order) for t in rooted_trees(k)]
    found = set()

    def rec(start: int, remaining: int, chosen: tuple):
        if remaining == 0:
            found.add(tuple(sorted(chosen)))
            return
        for idx in range(start, len(pool)):
            k, t = pool[idx]
            if k <= remaining:
                rec(idx, remaining - k, chosen + (t,))

    rec(0, order - 1, ())
    return tuple(sorted(found))


def tree_order(t: tuple) -> int:
    return 1 + sum(tree_order(c) for c in t)


def tree_density(t: tuple) -> int:
    g = tree_order(t)
    for c in t:
        g *= tree_density(c)
    return g


def _elementary_weights(tableau: ButcherTableau, t: tuple) -> list[Fraction]:
    s = tableau.stages
    if not t:
        return [Fraction(1)] * s
    phi = [Fraction(1)] * s
    for child in t:
        child_phi = _elementary_weights(tableau, child)
        for i in range(s):
            acc = Fraction(0)
            for j in range(i):
                acc += tableau.a[i][j] * child_phi[j]
            phi[i] *= acc
    return phi


def verify_order_conditions(tableau: ButcherTableau, order: int):
    """Exact check of b . Phi(t) == 1/gamma(t) for every rooted tree with at
    most `order` nodes.  Returns (ok, failures) where failures lists
    (tree, got, expected)."""
    failures = []
    for p in range(1, order + 1):
        for t in rooted_trees(p):
            phi = _elementary_weights(tableau, t)
            got = sum(b * f for b, f in zip(tableau.b, phi))
            expected = Fraction(1, tree_density(t))
            if got != expected:
                failures.append((t, got, expected))
    return not failures, failures


def satisfied_order(tableau: ButcherTableau, up_to: int = 10) -> int:
    """Largest p <= up_to with all order conditions through p satisfied."""
    for p in range(1, up_to + 1):
        ok, _ = verify_order_conditions(tableau, p)
        if not ok:
            return p - 1
    return up_to


# -- numeric stepping ------------------------------------------------------------------


def rk_step(tableau: ButcherTableau, V, x, h, *, check_finite: bool = True):
    """One explicit step of size h.

    x has shape (..., N) and V maps such arrays to like-shaped arrays; h is a
    scalar or an array broadcastable against the leading axes of x (one step
    size per batched state).
    """
    a, b = tableau.arrays()
    x = np.asarray(x, dtype=float)
    h = np.asarray(h, dtype=float)
    hx = h[..., None] if h.ndim and x.ndim > h.ndim else h
    stages = []
    for i in range(tableau.stages):
        xi = x
        for j in range(i):
            if a[i, j] != 0.0:
                xi = xi + (hx * a[i, j]) * stages[j]
        fi = np.asarray(V(xi), dtype=float)
        if check_finite and not np.all(np.isfinite(fi)):
            raise FlowFailure(stage=i + 1)
        stages.append(fi)
    out = x
    for j in range(tableau.stages):
        if b[j] != 0.0:
            out = out + (hx * b[j]) * stages[j]
    return out


def integrate(tableau: ButcherTableau, V, x0, T: float, n_steps: int,
              *, check_finite: bool = True):
    """n_steps equal steps from 0 to T."""
    x = np.asarray(x0, dtype=float)
    h = T / n_steps
    for _ in range(n_steps):
        x = rk_step(tableau, V, x, h, check_finite=check_finite)
    return x


def substep_flow(tableau: ButcherTableau, V, x, t, k: int, n: int,
                 *, check_finite: bool = True):
    """n^k composed steps of size t/n^k (k = 0 is a single step)."""
    if k < 0:
        raise ValueError("substep exponent k must be >= 0")
    reps = n ** k
    x = np.asarray(x, dtype=float)
    h = np.asarray(t, dtype=float) / reps
    for _ in range(reps):
        x = rk_step(tableau, V, x, h, check_finite=check_finite)
    return x


def estimate_order(tableau: ButcherTableau, V, x0, T: float, exact,
                   j_range=range(3, 9), floor: float = 1e-13) -> float:
    """Least-squares slope of log error against log step size.

    `exact` is the reference solution at time T.  Points with error below
    `floor` are discarded; fewer than 3 usable points raises
    InconclusiveOrder.
    """
    ref = np.asarray(exact, dtype=float)
    hs, errs = [], []
    for j in j_range:
        n = 2 ** j
        x = integrate(tableau, V, x0, T, n)
        err = float(np.max(np.abs(x - ref)))
        if err >= floor:
            hs.append(T / n)
            errs.append(err)
    if len(errs) < 3:
        raise InconclusiveOrder(
            f"only {len(errs)} points above the error floor {floor}")
    slope = np.polyfit(np.log(hs), np.log(errs), 1)[0]
    return float(slope)


# -- Gaussian-time weak error -----------------------------------------------------------


def gauss_hermite(n: int) -> tuple[np.ndarray, np.ndarray]:
    """Nodes and weights for expectations against the standard normal law."""
    x, w = hermegauss(n)
    return x, w / math.sqrt(2.0 * math.pi)


def gaussian_flow_weak_error(tableau: ButcherTableau, V, x0, t: float, f,
                             exact_flow, nodes: int = 40) -> float:
    """|E f(flow at sqrt(t) Z) - E f(one RK step of size sqrt(t) Z)|.

    The expectation over Z ~ N(0,1) is a Gauss-Hermite quadrature, so the
    returned weak error carries no sampling noise.
    """
    z, w = gauss_hermite(nodes)
    steps = z * math.sqrt(t)
    e_exact = 0.0
    e_rk = 0.0
    x0 = np.asarray(x0, dtype=float)
    for zi, wi in zip(steps, w):
        e_exact += wi * float(f(exact_flow(zi, x0)))
        e_rk += wi * float(f(rk_step(tableau, V, x0, zi)))
    return abs(e_exact - e_rk)
