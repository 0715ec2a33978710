#!/usr/bin/env python3
"""H1 error of multipeakon approximations to a profile as the number of cells grows."""

import argparse
import math

from wavelab.initial_data import (Profile, approximate_multipeakon, h1_error,
                                  truncation_radius, weighted_energy)
from wavelab.peakons import RealLine


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--kind", default="gaussian", choices=["gaussian", "sech2", "peakon"])
    ap.add_argument("--alpha", type=float, default=0.5)
    ap.add_argument("--tol", type=float, default=1e-3)
    ap.add_argument("--N", type=int, nargs="+", default=[8, 16, 32, 64, 128])
    args = ap.parse_args()
    f = Profile(args.kind)
    dom = RealLine(args.alpha)
    R = truncation_radius(f, args.alpha, args.tol, "tail")
    print(f"R={R:.4f} (weighted-energy radius {truncation_radius(f, args.alpha, args.tol):.2f})")
    prev = None
    for N in args.N:
        s = approximate_multipeakon(f, N, dom, radius=R)
        e = h1_error(f, s, -R - 6, R + 6)
        rate = "" if prev is None else f"  ratio {prev / e:.3f}"
        print(f"N={N:4d} h={2 * R / N:.4f} H1 error={e:.5f} "
              f"C_alpha={weighted_energy(s, args.alpha):.4f}{rate}")
        prev = e
    print(f"profile C_alpha={weighted_energy(f, args.alpha):.4f}, "
          f"model error 0.79h at N=64: {0.79 * 2 * R / 64:.4f}" if args.kind == "gaussian" else "")


if __name__ == "__main__":
    main()
