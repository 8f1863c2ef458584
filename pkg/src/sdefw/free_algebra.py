"""Exact truncated noncommutative power series over a finite alphabet.

Series live in the free associative algebra on letters a_0..a_d, truncated at
a fixed maximum word degree.  Coefficients are exact rationals
(:class:`fractions.Fraction`), so identities such as the splitting-scheme
order conditions can be checked as exact zeros rather than small floats.

Words are tuples of letter indices; the empty tuple is the unit word.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from itertools import combinations
from typing import Iterable, Mapping

Word = tuple[int, ...]

#: Reject series spaces with more than this many possible words.  The full
#: word count is ((d+1)^(D+1) - 1) / d, which explodes quickly in D.
DEFAULT_WORD_BUDGET = 2_000_000


class AlgebraError(ValueError):
    """Incompatible operands or invalid series-space parameters."""


class DomainError(ValueError):
    """Series outside the domain of exp/log (bad constant term)."""


def word_count(alphabet_size: int, max_degree: int) -> int:
    """Number of words of degree <= max_degree over the alphabet."""
    if alphabet_size == 1:
        return max_degree + 1
    return (alphabet_size ** (max_degree + 1) - 1) // (alphabet_size - 1)


class TruncatedSeries:
    """Immutable noncommutative polynomial truncated at ``max_degree``.

    Zero coefficients are never stored; two series compare equal iff they
    share the space parameters and every stored coefficient.
    """

    __slots__ = ("alphabet_size", "max_degree", "_coeffs")

    def __init__(self, alphabet_size: int, max_degree: int,
                 coeffs: Mapping[Word, Fraction] | None = None,
                 budget: int = DEFAULT_WORD_BUDGET):
        if alphabet_size < 1:
            raise AlgebraError("alphabet size must be >= 1")
        if max_degree < 0:
            raise AlgebraError("max degree must be >= 0")
        if word_count(alphabet_size, max_degree) > budget:
            raise AlgebraError(
                f"series space too large: {word_count(alphabet_size, max_degree)}"
                f" words exceeds budget {budget}"
            )
        self.alphabet_size = alphabet_size
        self.max_degree = max_degree
        clean: dict[Word, Fraction] = {}
        for w, c in (coeffs or {}).items():
            if len(w) > max_degree:
                raise AlgebraError(f"word {w} exceeds max degree {max_degree}")
            if any(l < 0 or l >= alphabet_size for l in w):
                raise AlgebraError(f"word {w} has letters outside the alphabet")
            c = Fraction(c)
            if c != 0:
                clean[tuple(w)] = c
        self._coeffs = clean

    # -- construction helpers -------------------------------------------------

    @classmethod
    def zero(cls, alphabet_size: int, max_degree: int) -> "TruncatedSeries":
        return cls(alphabet_size, max_degree)

    @classmethod
    def unit(cls, alphabet_size: int, max_degree: int) -> "TruncatedSeries":
        return cls(alphabet_size, max_degree, {(): Fraction(1)})

    @classmethod
    def letter(cls, index: int, alphabet_size: int, max_degree: int,
               coeff: Fraction | int = 1) -> "TruncatedSeries":
        return cls(alphabet_size, max_degree, {(index,): Fraction(coeff)})

    def _compatible(self, other: "TruncatedSeries") -> None:
        if (self.alphabet_size != other.alphabet_size
                or self.max_degree != other.max_degree):
            raise AlgebraError(
                "operands live in different series spaces: "
                f"(d+1={self.alphabet_size}, D={self.max_degree}) vs "
                f"(d+1={other.alphabet_size}, D={other.max_degree})"
            )

    # -- inspection ------------------------------------------------------------

    def coeff(self, word: Iterable[int]) -> Fraction:
        return self._coeffs.get(tuple(word), Fraction(0))

    def items(self):
        """(word, coefficient) pairs ordered by (degree, lexicographic)."""
        return sorted(self._coeffs.items(), key=lambda kv: (len(kv[0]), kv[0]))

    def is_zero(self) -> bool:
        return not self._coeffs

    def support_degrees(self) -> list[int]:
        return sorted({len(w) for w in self._coeffs})

    def min_degree(self) -> int | None:
        """Degree of the lowest nonvanishing graded component, None if zero."""
        return min((len(w) for w in self._coeffs), default=None)

    def by_degree(self) -> dict[int, dict[Word, Fraction]]:
        out: dict[int, dict[Word, Fraction]] = {}
        for w, c in self._coeffs.items():
            out.setdefault(len(w), {})[w] = c
        return out

    def __eq__(self, other) -> bool:
        if not isinstance(other, TruncatedSeries):
            return NotImplemented
        return (self.alphabet_size == other.alphabet_size
                and self.max_degree == other.max_degree
                and self._coeffs == other._coeffs)

    def __hash__(self):
        return hash((self.alphabet_size, self.max_degree,
                     frozenset(self._coeffs.items())))

    def __repr__(self):
        if self.is_zero():
            return "0"
        def fmt(w):
            return "1" if not w else "".join(f"a{l}" for l in w)
        terms = [f"({c})*{fmt(w)}" for w, c in self.items()]
        return " + ".join(terms)

    # -- ring operations --------------------------------------------------------

    def __add__(self, other: "TruncatedSeries") -> "TruncatedSeries":
        self._compatible(other)
        out = dict(self._coeffs)
        for w, c in other._coeffs.items():
            s = out.get(w, Fraction(0)) + c
            if s:
                out[w] = s
            else:
                out.pop(w, None)
        return self._wrap(out)

    def __sub__(self, other: "TruncatedSeries") -> "TruncatedSeries":
        return self + (-other)

    def __neg__(self) -> "TruncatedSeries":
        return self._wrap({w: -c for w, c in self._coeffs.items()})

    def scale(self, factor: Fraction | int) -> "TruncatedSeries":
        factor = Fraction(factor)
        if factor == 0:
            return self._wrap({})
        return self._wrap({w: c * factor for w, c in self._coeffs.items()})

    def __rmul__(self, factor):
        if isinstance(factor, (int, Fraction)):
            return self.scale(factor)
        return NotImplemented

    def __mul__(self, other):
        if isinstance(other, (int, Fraction)):
            return self.scale(other)
        if not isinstance(other, TruncatedSeries):
            return NotImplemented
        return mul(self, other)

    def __pow__(self, n: int) -> "TruncatedSeries":
        if n < 0:
            raise AlgebraError("negative powers are not defined")
        result = TruncatedSeries.unit(self.alphabet_size, self.max_degree)
        for _ in range(n):
            result = mul(result, self)
        return result

    def _wrap(self, coeffs: dict[Word, Fraction]) -> "TruncatedSeries":
        s = TruncatedSeries.__new__(TruncatedSeries)
        s.alphabet_size = self.alphabet_size
        s.max_degree = self.max_degree
        s._coeffs = coeffs
        return s


@dataclass(frozen=True)
class GradedComponent:
    """A homogeneous slice of a series: only words of one fixed degree."""

    degree: int
    series: TruncatedSeries

    def __post_init__(self):
        degs = self.series.support_degrees()
        if degs and degs != [self.degree]:
            raise AlgebraError(
                f"series is not homogeneous of degree {self.degree}: {degs}")


def mul(x: TruncatedSeries, y: TruncatedSeries) -> TruncatedSeries:
    """Concatenation product, discarding words above the truncation degree."""
    x._compatible(y)
    D = x.max_degree
    out: dict[Word, Fraction] = {}
    # group by degree so whole blocks above the truncation bound are skipped
    ybd = y.by_degree()
    for wx, cx in x._coeffs.items():
        room = D - len(wx)
        for dy, block in ybd.items():
            if dy > room:
                continue
            for wy, cy in block.items():
                w = wx + wy
                s = out.get(w, Fraction(0)) + cx * cy
                if s:
                    out[w] = s
                else:
                    out.pop(w, None)
    return x._wrap(out)


def exp_trunc(u: TruncatedSeries) -> TruncatedSeries:
    """sum_{n>=0} u^n / n!, truncated; requires zero constant term."""
    if u.coeff(()) != 0:
        raise DomainError("exp requires a series with zero constant term")
    result = TruncatedSeries.unit(u.alphabet_size, u.max_degree)
    term = TruncatedSeries.unit(u.alphabet_size, u.max_degree)
    for n in range(1, u.max_degree + 1):
        term = mul(term, u).scale(Fraction(1, n))
        if term.is_zero():
            break
        result = result + term
    return result


def log_trunc(v: TruncatedSeries) -> TruncatedSeries:
    """sum_{n>=1} (-1)^(n-1)/n (v-1)^n, truncated; requires constant term 1."""
    if v.coeff(()) != 1:
        raise DomainError("log requires a series with constant term 1")
    w = v - TruncatedSeries.unit(v.alphabet_size, v.max_degree)
    result = TruncatedSeries.zero(v.alphabet_size, v.max_degree)
    power = TruncatedSeries.unit(v.alphabet_size, v.max_degree)
    for n in range(1, v.max_degree + 1):
        power = mul(power, w)
        if power.is_zero():
            break
        result = result + power.scale(Fraction((-1) ** (n - 1), n))
    return result


def project(x: TruncatedSeries, degree: int, *, exact: bool = False) -> TruncatedSeries:
    """j_m (exact=True) or j_{<=m} (exact=False) projection."""
    if degree > x.max_degree:
        raise AlgebraError(
            f"projection degree {degree} exceeds truncation degree {x.max_degree}")
    if exact:
        keep = {w: c for w, c in x._coeffs.items() if len(w) == degree}
    else:
        keep = {w: c for w, c in x._coeffs.items() if len(w) <= degree}
    return x._wrap(keep)


def build_p(d: int, max_degree: int) -> TruncatedSeries:
    """exp of the sum of all letters a_0 + ... + a_d."""
    s = TruncatedSeries.zero(d + 1, max_degree)
    for i in range(d + 1):
        s = s + TruncatedSeries.letter(i, d + 1, max_degree)
    return exp_trunc(s)


def build_q(theta: int, direction: str, d: int, max_degree: int) -> TruncatedSeries:
    """Ordered product of exp(a_i/theta) factors, raised to the theta power.

    direction: 'forward' (i = 0..d), 'backward' (i = d..0) or 'symmetrized'
    (average of both).
    """
    if theta < 1:
        raise AlgebraError("theta must be a positive integer")
    if direction == "symmetrized":
        fwd = build_q(theta, "forward", d, max_degree)
        bwd = build_q(theta, "backward", d, max_degree)
        return (fwd + bwd).scale(Fraction(1, 2))
    if direction == "forward":
        order = range(d + 1)
    elif direction == "backward":
        order = range(d, -1, -1)
    else:
        raise AlgebraError(f"unknown direction {direction!r}")
    one_pass = TruncatedSeries.unit(d + 1, max_degree)
    for i in order:
        letter = TruncatedSeries.letter(i, d + 1, max_degree, Fraction(1, theta))
        one_pass = mul(one_pass, exp_trunc(letter))
    return one_pass ** theta


def bch_component(i: int, j: int, n: int, d: int, max_degree: int) -> GradedComponent:
    """Degree-n homogeneous part of log(exp(a_i) exp(a_j))."""
    if n > max_degree:
        raise AlgebraError(f"degree {n} exceeds truncation degree {max_degree}")
    x = TruncatedSeries.letter(i, d + 1, max_degree)
    y = TruncatedSeries.letter(j, d + 1, max_degree)
    series = log_trunc(mul(exp_trunc(x), exp_trunc(y)))
    return GradedComponent(n, project(series, n, exact=True))


def fujiwara_expansion_check(d: int, max_degree: int) -> tuple[bool, int | None]:
    """Alternating-sign relation between log of the backward and forward
    one-pass compositions: log q_bwd = sum_i (-1)^(i+1) j_i(log q_fwd).

    Returns (passed, first failing degree or None).
    """
    fwd = log_trunc(build_q(1, "forward", d, max_degree))
    bwd = log_trunc(build_q(1, "backward", d, max_degree))
    rhs = TruncatedSeries.zero(d + 1, max_degree)
    for i in range(1, max_degree + 1):
        rhs = rhs + project(fwd, i, exact=True).scale(Fraction((-1) ** (i + 1)))
    diff = bwd - rhs
    if diff.is_zero():
        return True, None
    return False, diff.min_degree()


def order_condition_check(scheme, d: int, max_degree: int) -> tuple[bool, int]:
    """Vanishing of j_{<=2m}(sum_i f_i q^[theta_i] - p), exactly.

    Returns (passed, max verified degree): the largest degree k <= 2m such
    that j_{<=k} of the combination vanishes.
    """
    target = 2 * scheme.m
    if max_degree < target:
        raise AlgebraError(f"need max_degree >= {target}, got {max_degree}")
    combo = residual_series(scheme, d, max_degree)
    verified = 0
    for k in range(1, target + 1):
        if project(combo, k, exact=True).is_zero():
            verified = k
        else:
            break
    return verified == target, verified


def residual_series(scheme, d: int, max_degree: int) -> TruncatedSeries:
    """sum_i f_i q^[theta_i] - p at the given truncation."""
    p = build_p(d, max_degree)
    combo = TruncatedSeries.zero(d + 1, max_degree)
    for theta, f in zip(scheme.thetas, scheme.weights):
        combo = combo + build_q(theta, "symmetrized", d, max_degree).scale(f)
    return combo - p


def critical_check(scheme, l: int, d: int, max_degree: int) -> bool:
    """Vanishing of j_{<=2m+l-1}(sum_i f_i (q^[theta_i] - p)^l), exactly."""
    m = scheme.m
    if not 2 <= l <= m - 1:
        raise AlgebraError(f"l must satisfy 2 <= l <= m-1 = {m - 1}, got {l}")
    target = 2 * m + l - 1
    if max_degree < target:
        raise AlgebraError(f"need max_degree >= {target}, got {max_degree}")
    p = build_p(d, max_degree)
    acc = TruncatedSeries.zero(d + 1, max_degree)
    for theta, f in zip(scheme.thetas, scheme.weights):
        q = build_q(theta, "symmetrized", d, max_degree)
        acc = acc + ((q - p) ** l).scale(f)
    return project(acc, target).is_zero()


def telescoping_identity_check(q: TruncatedSeries, p: TruncatedSeries,
                               n: int, m: int) -> bool:
    """Exact check of the telescoping split of q^n - p^n into summands with
    one, two, ..., m factors of (q - p)."""
    if not 1 <= m <= n:
        raise AlgebraError("need 1 <= m <= n")
    q._compatible(p)
    diff = q - p
    lhs = q ** n - p ** n

    def chain(head: TruncatedSeries, positions: tuple[int, ...]) -> TruncatedSeries:
        # head^{k_1} (q-p) p^{k_2-k_1-1} (q-p) ... p^{n-k_l-1}
        acc = mul(head ** positions[0], diff)
        prev = positions[0]
        for k in positions[1:]:
            acc = mul(mul(acc, p ** (k - prev - 1)), diff)
            prev = k
        return mul(acc, p ** (n - positions[-1] - 1))

    rhs = TruncatedSeries.zero(q.alphabet_size, q.max_degree)
    if m == 1:
        for k in range(n):
            rhs = rhs + chain(q, (k,))
        return lhs == rhs
    for k in range(n):
        rhs = rhs + chain(p, (k,))
    for l in range(2, m):
        for positions in combinations(range(n), l):
            rhs = rhs + chain(p, positions)
    for positions in combinations(range(n), m):
        rhs = rhs + chain(q, positions)
    return lhs == rhs


# -- verification suite ---------------------------------------------------------


@dataclass(frozen=True)
class CheckResult:
    name: str
    d: int
    max_degree: int
    m: int | None
    passed: bool
    fail_degree: int | None = None

    def line(self) -> str:
        m = "-" if self.m is None else str(self.m)
        verdict = "PASS" if self.passed else (
            f"FAIL[{self.fail_degree}]" if self.fail_degree is not None else "FAIL")
        return (f"CHECK {self.name} d={self.d} D={self.max_degree}"
                f" m={m} -> {verdict}")


def run_verification_suite(m_max: int, d_max: int,
                           max_degree: int | None = None) -> list[CheckResult]:
    """Run the algebraic identity checks up to the given scheme order and
    alphabet size.  Each scheme uses the canonical levels (1, ..., m)."""
    from .extrapolation import solve_weights

    results: list[CheckResult] = []
    for d in range(0, d_max + 1):
        D_fuj = min(5, max_degree) if max_degree else 5
        ok, deg = fujiwara_expansion_check(d, D_fuj)
        results.append(CheckResult("fujiwara_expansion", d, D_fuj, None, ok, deg))

    for n in range(1, 6):
        comp = bch_component(0, 1, n, 1, n)
        swapped = bch_component(1, 0, n, 1, n)
        ok = comp.series == swapped.series.scale(Fraction((-1) ** (n + 1)))
        results.append(CheckResult(f"bch_antisymmetry_n{n}", 1, n, None, ok,
                                   None if ok else n))

    for m in range(1, m_max + 1):
        scheme = solve_weights(tuple(range(1, m + 1)))
        D = max_degree if max_degree is not None else 2 * m
        D = max(D, 2 * m)
        for d in range(1, d_max + 1):
            ok, verified = order_condition_check(scheme, d, D)
            results.append(CheckResult("order_condition", d, D, m, ok,
                                       None if ok else verified + 1))
        for l in range(2, m):
            Dl = 2 * m + l - 1
            ok = critical_check(scheme, l, 1, Dl)
            results.append(CheckResult(f"critical_l{l}", 1, Dl, m, ok))
    return results
