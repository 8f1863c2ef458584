"""Deterministic random inputs for the path sampler.

Every path draws a fixed-length vector of uniforms from its point source and
maps them to the Bernoulli ordering bits and Gaussian increments it needs.
The pseudo source is a counter-based generator keyed by (seed, path index),
so any path's draws can be regenerated in isolation: estimates do not depend
on execution order or worker count.  The quasi source is an unscrambled
Gray-code Sobol sequence; path i consumes point skip + i + 1.

Uniform layout per path (fixed, so runs are comparable across sources):

  [0, n)                      Bernoulli bits (Lambda_j = 1 iff u >= 1/2)
  then, independent coupling: for each level k in scheme order, a block of
  d * theta_k * n uniforms, reshaped row-major to (d, theta_k * n);
  reuse coupling: a single block of d * theta_max * n uniforms shared by all
  levels, level k consuming the first theta_k * n columns.

Gaussians are always inverse-CDF transforms of uniforms, never rejection
sampled, so the consumption count is exact and source-independent.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from importlib import resources

import numpy as np
from scipy.special import ndtri


class RandomnessError(ValueError):
    """Bad source specification or dimension accounting."""


# -- inverse normal CDF ------------------------------------------------------------


def gaussian_inverse_cdf(u):
    """Quantile function of the standard normal law on (0, 1).

    Accepts scalars or arrays; raises on arguments outside the open interval.
    """
    arr = np.asarray(u, dtype=float)
    if np.any(arr <= 0.0) or np.any(arr >= 1.0):
        raise RandomnessError("inverse CDF argument must lie strictly in (0, 1)")
    out = ndtri(arr)
    return float(out) if np.isscalar(u) or arr.ndim == 0 else out


# -- counter-based uniforms (Philox 4x32-10) ------------------------------------------

_PHILOX_M0 = np.uint64(0xD2511F53)
_PHILOX_M1 = np.uint64(0xCD9E8D57)
_PHILOX_W0 = np.uint32(0x9E3779B9)
_PHILOX_W1 = np.uint32(0xBB67AE85)
_LO32 = np.uint64(0xFFFFFFFF)


def philox4x32(counter: np.ndarray, key: np.ndarray) -> np.ndarray:
    """Philox 4x32 with 10 rounds, vectorized over the trailing axis.

    counter: uint32 array (4, B); key: uint32 array (2,) or (2, B).
    Returns a (4, B) uint32 block.
    """
    c0, c1, c2, c3 = (counter[i].astype(np.uint64) for i in range(4))
    k0 = np.uint64(0) + key[0]
    k1 = np.uint64(0) + key[1]
    for _ in range(10):
        p0 = _PHILOX_M0 * c0
        p1 = _PHILOX_M1 * c2
        hi0, lo0 = p0 >> np.uint64(32), p0 & _LO32
        hi1, lo1 = p1 >> np.uint64(32), p1 & _LO32
        c0, c1, c2, c3 = (hi1 ^ c1 ^ k0, lo1, hi0 ^ c3 ^ k1, lo0)
        k0 = (k0 + _PHILOX_W0) & _LO32
        k1 = (k1 + _PHILOX_W1) & _LO32
    return np.stack([c0, c1, c2, c3]).astype(np.uint32)


def _philox_uniforms(seed: int, path_indices: np.ndarray, count: int) -> np.ndarray:
    """(len(path_indices), count) uniforms in (0, 1), one stream per path.

    Stream layout: key = seed split into two 32-bit words; counter words
    carry (output block, 0, path low word, path high word).
    """
    paths = np.asarray(path_indices, dtype=np.uint64)
    nblk = (count + 3) // 4
    blocks = np.arange(nblk, dtype=np.uint32)
    B = paths.size
    ctr = np.empty((4, B * nblk), dtype=np.uint32)
    ctr[0] = np.tile(blocks, B)
    ctr[1] = 0
    ctr[2] = np.repeat((paths & np.uint64(0xFFFFFFFF)).astype(np.uint32), nblk)
    ctr[3] = np.repeat((paths >> np.uint64(32)).astype(np.uint32), nblk)
    key = np.array([seed & 0xFFFFFFFF, (seed >> 32) & 0xFFFFFFFF], dtype=np.uint32)
    words = philox4x32(ctr, key)                      # (4, B*nblk)
    words = words.T.reshape(B, nblk * 4)[:, :count]
    return (words.astype(np.float64) + 0.5) / 2.0 ** 32


# -- Sobol sequence ---------------------------------------------------------------


def _load_direction_table(path=None) -> list[tuple[int, int, list[int]]]:
    """Rows (s, a, m-list) for dimensions 2, 3, ... from a Joe-Kuo file."""
    if path is None:
        text = resources.files("sdefw").joinpath(
            "data/joe_kuo_directions.txt").read_text()
    else:
        with open(path) as fh:
            text = fh.read()
    rows = []
    expected = 2
    for line in text.splitlines():
        line = line.strip()
        if not line or line.startswith("#") or line.startswith("d "):
            continue
        parts = line.split()
        d, s, a = int(parts[0]), int(parts[1]), int(parts[2])
        ms = [int(t) for t in parts[3:]]
        if d != expected or len(ms) != s:
            raise RandomnessError(f"malformed direction line: {line!r}")
        rows.append((s, a, ms))
        expected += 1
    return rows


_BITS = 32


class SobolEngine:
    """Unscrambled Gray-code Sobol points in (0,1)^dimension.

    Point indices are 1-based; index 1 is (1/2, ..., 1/2).  Points are
    random-access (the Gray-code XOR basis is applied per index), so blocks
    of paths can be generated independently on different workers.
    """

    def __init__(self, dimension: int, table_path=None):
        table = _load_direction_table(table_path)
        if dimension < 1:
            raise RandomnessError("dimension must be >= 1")
        if dimension > len(table) + 1:
            raise RandomnessError(
                f"Sobol dimension {dimension} requested but direction numbers "
                f"cover only {len(table) + 1} dimensions")
        self.dimension = dimension
        v = np.zeros((dimension, _BITS), dtype=np.uint32)
        v[0] = [1 << (_BITS - 1 - i) for i in range(_BITS)]
        for j in range(1, dimension):
            s, a, ms = table[j - 1]
            m = list(ms)
            # polynomial x^s + a_1 x^(s-1) + ... + a_(s-1) x + 1, with a_1 in
            # the most significant bit of the packed coefficient value
            for i in range(s, _BITS):
                new = m[i - s] ^ (m[i - s] << s)
                for k in range(1, s):
                    if (a >> (s - 1 - k)) & 1:
                        new ^= m[i - k] << k
                m.append(new)
            v[j] = [m[i] << (_BITS - 1 - i) for i in range(_BITS)]
        self._v = v

    def points(self, start_index: int, count: int) -> np.ndarray:
        """(count, dimension) array for 1-based indices start..start+count-1."""
        if start_index < 1:
            raise RandomnessError("Sobol point indices start at 1")
        if start_index + count - 1 >= 2 ** _BITS:
            raise RandomnessError("Sobol point budget (2^32) exhausted")
        idx = np.arange(start_index, start_index + count, dtype=np.uint64)
        gray = (idx ^ (idx >> np.uint64(1))).astype(np.uint32)
        acc = np.zeros((count, self.dimension), dtype=np.uint32)
        for bit in range(_BITS):
            mask = (gray >> np.uint32(bit)) & np.uint32(1)
            sel = mask.astype(bool)
            if sel.any():
                acc[sel] ^= self._v[:, bit]
        return acc.astype(np.float64) / 2.0 ** _BITS

    def point(self, index: int) -> np.ndarray:
        return self.points(index, 1)[0]


# -- point sources ------------------------------------------------------------------


@dataclass
class PointSource:
    """Per-path supplier of `dimension` uniforms.

    kind 'pseudo': counter-based streams keyed by (seed, path index).
    kind 'sobol':  path i consumes Sobol point skip + i + 1.
    """

    kind: str
    dimension: int
    seed: int = 0
    skip: int = 0
    table_path: str | None = None
    _engine: SobolEngine | None = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        if self.kind not in ("pseudo", "sobol"):
            raise RandomnessError(f"unknown point source kind {self.kind!r}")
        if self.dimension < 1:
            raise RandomnessError("dimension must be >= 1")
        if self.kind == "sobol":
            self._engine = SobolEngine(self.dimension, self.table_path)

    def uniforms_block(self, start_path: int, count: int) -> np.ndarray:
        """(count, dimension) uniforms for paths start..start+count-1."""
        if self.kind == "pseudo":
            idx = np.arange(start_path, start_path + count, dtype=np.uint64)
            return _philox_uniforms(self.seed, idx, self.dimension)
        return self._engine.points(self.skip + start_path + 1, count)

    def uniforms(self, path_index: int) -> np.ndarray:
        return self.uniforms_block(path_index, 1)[0]

    def label(self) -> str:
        if self.kind == "pseudo":
            return f"pseudo:{self.seed}"
        return f"sobol:{self.skip}" if self.skip else "sobol"


def parse_rng_spec(spec: str) -> dict:
    """Parse 'pseudo:<seed>' or 'sobol[:<skip>]' into PointSource kwargs
    (dimension is supplied later by the consumer)."""
    parts = spec.split(":")
    if parts[0] == "pseudo":
        seed = int(parts[1]) if len(parts) > 1 else 0
        return {"kind": "pseudo", "seed": seed}
    if parts[0] == "sobol":
        skip = int(parts[1]) if len(parts) > 1 else 0
        return {"kind": "sobol", "skip": skip}
    raise RandomnessError(f"unknown rng spec {spec!r}")


# -- path randomness -----------------------------------------------------------------


@dataclass(frozen=True)
class PathRandomness:
    """Inputs consumed by one simulated path.

    lam: n ordering bits.  z: one (d+1, theta_k * n) matrix per level; row 0
    is the constant drift time T/(n theta_k), rows 1..d are centered Gaussian
    increments of variance T/(n theta_k).
    """

    lam: np.ndarray
    z: tuple[np.ndarray, ...]


def required_dimension(scheme, n: int, d: int, coupling: str = "independent") -> int:
    """Exact number of uniforms one path consumes."""
    if coupling == "independent":
        return n + sum(d * t * n for t in scheme.thetas)
    if coupling == "reuse":
        return n + d * max(scheme.thetas) * n
    raise RandomnessError(f"unknown coupling {coupling!r}")


def draw_path_randomness(source: PointSource, path_index: int, scheme,
                         n: int, d: int, T: float,
                         coupling: str = "independent") -> PathRandomness:
    """Map one path's uniforms to ordering bits and per-level increments."""
    lam, blocks = draw_block_randomness(source, path_index, 1, scheme, n, d, T,
                                        coupling)
    return PathRandomness(lam=lam[0], z=tuple(b[0] for b in blocks))


def draw_block_randomness(source: PointSource, start_path: int, count: int,
                          scheme, n: int, d: int, T: float,
                          coupling: str = "independent"):
    """Batched form of draw_path_randomness.

    Returns (lam, blocks): lam is (count, n) of {0,1}; blocks is one
    (count, d+1, theta_k*n) array per level.
    """
    need = required_dimension(scheme, n, d, coupling)
    if source.dimension != need:
        raise RandomnessError(
            f"point source supplies {source.dimension} uniforms per path but "
            f"the scheme consumes exactly {need}")
    u = source.uniforms_block(start_path, count)
    lam = (u[:, :n] >= 0.5).astype(np.int8)
    blocks = []
    if coupling == "independent":
        offset = n
        for theta in scheme.thetas:
            cols = theta * n
            z = np.empty((count, d + 1, cols))
            z[:, 0, :] = T / (n * theta)
            if d:
                body = u[:, offset:offset + d * cols].reshape(count, d, cols)
                z[:, 1:, :] = np.sqrt(T / (n * theta)) * ndtri(body)
            offset += d * cols
            blocks.append(z)
    else:
        theta_max = max(scheme.thetas)
        cols_max = theta_max * n
        std = None
        if d:
            body = u[:, n:n + d * cols_max].reshape(count, d, cols_max)
            std = ndtri(body)
        for theta in scheme.thetas:
            cols = theta * n
            z = np.empty((count, d + 1, cols))
            z[:, 0, :] = T / (n * theta)
            if d:
                z[:, 1:, :] = np.sqrt(T / (n * theta)) * std[:, :, :cols]
            blocks.append(z)
    return lam, blocks
