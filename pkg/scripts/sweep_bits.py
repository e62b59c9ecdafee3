#!/usr/bin/env python3
"""SNR versus word length over a batch of seeded random networks.

Runs the bit-accurate pipeline in analysis mode against the double
precision reference for each seed and word length, prints the per-width
mean SNR table, and writes the full results as CSV. Useful for picking
the narrowest word that still meets an accuracy target.
"""

import argparse
import sys

import numpy as np

from ss2rtl import build_state_space, random_inputs, random_nn
from ss2rtl.simulate import bit_sweep


def _ints(text):
    return [int(s) for s in text.replace(",", " ").split()]


def main(argv=None):
    ap = argparse.ArgumentParser(
        description="SNR versus word length for seeded random networks")
    ap.add_argument("--shape", default="3,4,4,2", metavar="L,N,M,P",
                    help="inputs, layers, nodes per layer, outputs "
                         "(default 3,4,4,2)")
    ap.add_argument("--widths", default="8,12,16,24,32,64", metavar="LIST")
    ap.add_argument("--seeds", default="1,2,3,4,5", metavar="LIST")
    ap.add_argument("--samples", type=int, default=500)
    ap.add_argument("--out", default="snr_sweep.csv", metavar="PATH")
    args = ap.parse_args(argv)

    L, N, M, P = _ints(args.shape)
    widths = _ints(args.widths)
    seeds = _ints(args.seeds)

    rows = ["bits,seed,output_index,snr_db"]
    mean = np.zeros(len(widths))
    for seed in seeds:
        m = build_state_space(random_nn(L, N, M, P, seed=seed))
        stim = random_inputs(L, args.samples, seed + 100)
        rep = bit_sweep(m, stim, widths, seed=seed)
        for w, row in zip(rep.widths, rep.snr_db):
            for j, v in enumerate(row):
                rows.append(f"{w},{seed},{j},{v:.4f}")
        mean += np.asarray(rep.snr_db).mean(axis=1)
    mean /= len(seeds)

    print(f"{len(seeds)} networks ({L} in, {N}x{M} hidden, {P} out), "
          f"{args.samples} samples each")
    print(f"{'bits':>6}  {'mean snr [dB]':>13}")
    for w, v in zip(widths, mean):
        print(f"{w:>6}  {v:>13.2f}")

    with open(args.out, "w", encoding="utf-8") as f:
        f.write("\n".join(rows) + "\n")
    print(f"csv written to {args.out}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
