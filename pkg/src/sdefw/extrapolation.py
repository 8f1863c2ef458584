"""Extrapolation weights for the generalized splitting schemes.

The weights f solve A f = e1 where A is the Vandermonde-type matrix in the
inverse squared levels 1/theta^2.  Solved exactly over the rationals so the
free-algebra order checks can assert exact zeros.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction


class WeightError(ValueError):
    """Invalid level set (repeated, non-integer or non-positive theta)."""


@dataclass(frozen=True)
class SchemeSpec:
    """One extrapolated scheme: levels theta_1 < ... < theta_m and exact
    weights with sum(f) = 1 and sum(f/theta^(2l)) = 0 for l = 1..m-1."""

    thetas: tuple[int, ...]
    weights: tuple[Fraction, ...]

    @property
    def m(self) -> int:
        return len(self.thetas)

    @property
    def weak_order(self) -> int:
        return 2 * self.m

    def __post_init__(self):
        if len(self.thetas) != len(self.weights):
            raise WeightError("thetas and weights must have equal length")
        if len(set(self.thetas)) != len(self.thetas):
            raise WeightError("theta levels must be pairwise distinct")
        if sum(self.weights) != 1:
            raise WeightError("weights must sum to 1")
        for l in range(1, self.m):
            if sum(f / Fraction(t) ** (2 * l)
                   for t, f in zip(self.thetas, self.weights)) != 0:
                raise WeightError(f"moment condition fails at l={l}")

    def abs_weight_sum(self) -> Fraction:
        """sum |f_i|, a conditioning diagnostic (informational only)."""
        return sum(abs(f) for f in self.weights)

    def describe(self) -> str:
        parts = [f"theta={t}: f={f} ({float(f):.17g})"
                 for t, f in zip(self.thetas, self.weights)]
        return (f"order-{self.weak_order} scheme, levels {self.thetas}\n  "
                + "\n  ".join(parts)
                + f"\n  sum|f| = {float(self.abs_weight_sum()):.6g}")

    def label(self) -> str:
        if self.m == 1 and self.thetas == (1,):
            return "NV"
        return "GF(" + ",".join(str(t) for t in self.thetas) + ")"


def _validate_thetas(thetas) -> tuple[int, ...]:
    out = []
    for t in thetas:
        if int(t) != t or t < 1:
            raise WeightError(f"theta levels must be positive integers, got {t!r}")
        out.append(int(t))
    if len(set(out)) != len(out):
        raise WeightError(f"theta levels must be distinct, got {tuple(thetas)}")
    return tuple(out)


def solve_weights(thetas) -> SchemeSpec:
    """Solve A f = e1 exactly by Gaussian elimination over the rationals."""
    thetas = _validate_thetas(thetas)
    m = len(thetas)
    # augmented system [A | e1], A[l][i] = 1/theta_i^(2l)
    rows = [[Fraction(1, t ** (2 * l)) for t in thetas] + [Fraction(int(l == 0))]
            for l in range(m)]
    for col in range(m):
        pivot = next((r for r in range(col, m) if rows[r][col] != 0), None)
        if pivot is None:
            raise WeightError("singular level matrix (repeated theta?)")
        rows[col], rows[pivot] = rows[pivot], rows[col]
        inv = 1 / rows[col][col]
        rows[col] = [v * inv for v in rows[col]]
        for r in range(m):
            if r != col and rows[r][col] != 0:
                factor = rows[r][col]
                rows[r] = [v - factor * p for v, p in zip(rows[r], rows[col])]
    weights = tuple(rows[i][m] for i in range(m))
    return SchemeSpec(thetas=thetas, weights=weights)


def closed_form_m3(th1: int, th2: int, th3: int) -> tuple[Fraction, Fraction, Fraction]:
    """Closed-form weights for three increasing levels."""
    (th1, th2, th3) = _validate_thetas((th1, th2, th3))
    if not th1 < th2 < th3:
        raise WeightError("levels must be strictly increasing")
    s1, s2, s3 = th1 ** 2, th2 ** 2, th3 ** 2
    f1 = Fraction(th1 ** 4, (s2 - s1) * (s3 - s1))
    f2 = Fraction(-(th2 ** 4), (s3 - s2) * (s2 - s1))
    f3 = Fraction(th3 ** 4, (s3 - s1) * (s3 - s2))
    return f1, f2, f3


def nv_scheme() -> SchemeSpec:
    """The plain order-2 splitting scheme: single level, weight one."""
    return solve_weights((1,))
