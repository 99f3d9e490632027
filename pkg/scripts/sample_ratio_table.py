#!/usr/bin/env python3
"""Print the percent-more-samples comparison between measurement schemes.

Each cell is how many more samples the row scheme needs than the column
scheme to reach the same confidence radius; sigma values cover the nine
two-qubit Pauli settings (5), a twelve-setting minimal six-qubit Pauli
set (6.52), free and basis-constrained optimised directions (7.65, 7.78)
and a published 21-setting construction (10.7).
"""

import argparse

from otomo.directions import sample_ratio

SCHEMES = [
    ("pauli9", 5.0),
    ("minimal12", 6.52),
    ("free-opt", 7.65),
    ("basis-opt", 7.78),
    ("literature21", 10.7),
]


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--radius", type=float, default=0.1)
    args = ap.parse_args()

    names = [n for n, _ in SCHEMES]
    print(f"radius = {args.radius}")
    print(f"{'':>14}" + "".join(f"{n:>14}" for n in names))
    for name_a, sig_a in SCHEMES:
        row = [f"{name_a:>14}"]
        for name_b, sig_b in SCHEMES:
            if sig_a <= sig_b:
                row.append(f"{'.':>14}")
            else:
                pct = 100.0 * (sample_ratio(sig_a, sig_b, args.radius) - 1.0)
                row.append(f"{pct:>13.1f}%")
        print("".join(row))


if __name__ == "__main__":
    main()
