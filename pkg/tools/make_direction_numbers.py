#!/usr/bin/env python3
"""Regenerate src/sdefw/data/joe_kuo_directions.txt.

Emits the first dimensions of the standard Joe-Kuo "new-joe-kuo-6" Sobol
direction-number set (as bundled with scipy) in the usual text layout:
one line per dimension d >= 2 with fields `d s a m_1 ... m_s`.
Dimension 1 needs no entry (all m_i = 1).
"""

import sys

import numpy as np
import scipy.stats._sobol as _sobol

N_DIMS = 192


def main(path: str) -> None:
    poly = _sobol.get_poly_vinit("poly", np.uint32)
    vinit = _sobol.get_poly_vinit("vinit", np.uint32)
    lines = ["# Sobol direction numbers (Joe-Kuo new-joe-kuo-6 set).",
             "# Format: d s a m_1 ... m_s   (dimension 1 is implicit: m_i = 1).",
             "d s a m_i"]
    for dim in range(2, N_DIMS + 1):
        p = int(poly[dim - 1])
        s = p.bit_length() - 1
        a = (p - (1 << s) - 1) >> 1
        ms = [str(int(v)) for v in vinit[dim - 1][:s]]
        lines.append(f"{dim} {s} {a} " + " ".join(ms))
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")
    print(f"wrote {path}: dimensions 2..{N_DIMS}")


if __name__ == "__main__":
    main(sys.argv[1] if len(sys.argv) > 1 else "src/sdefw/data/joe_kuo_directions.txt")
