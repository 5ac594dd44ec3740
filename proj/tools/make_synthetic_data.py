"""Write a synthetic beta-binomial dataset with known (m, L)."""

import argparse

import numpy as np


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--m", type=float, default=0.005)
    ap.add_argument("--L", type=float, default=1500.0)
    ap.add_argument("--records", type=int, default=20)
    ap.add_argument("--n-min", type=float, default=1e3)
    ap.add_argument("--n-max", type=float, default=1e5)
    ap.add_argument("--seed", type=int, default=20190101)
    ap.add_argument("--out", default="synthetic_betabinom.csv")
    args = ap.parse_args()

    rng = np.random.default_rng(args.seed)
    n = np.exp(rng.uniform(np.log(args.n_min), np.log(args.n_max), args.records)).round().astype(int)
    p = rng.beta(args.m * args.L, (1.0 - args.m) * args.L, args.records)
    y = rng.binomial(n, p)
    with open(args.out, "w") as f:
        f.write(f"# synthetic beta-binomial data, m={args.m}, L={args.L}, seed={args.seed}\n")
        f.write("n,y\n")
        for nj, yj in zip(n, y):
            f.write(f"{nj},{yj}\n")


if __name__ == "__main__":
    main()
