"""Coefficient-contrast study on Example 1.

beta1/beta2 and rho1/rho2 are set to the same ratio; side-2 values stay at 1.
"""
import argparse

from stgfdm import cli


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--nx", type=int, default=16)
    ap.add_argument("--values", default="1e2,1e4,1e6")
    ap.add_argument("--jobs", type=int, default=1)
    ap.add_argument("--out", default="results/sweep_ratio")
    args = ap.parse_args()

    values = [float(v) for v in args.values.split(",")]
    res = cli.sweep(cli.RunConfig(example=1, nx=args.nx, out=args.out), "ratio", values,
                    jobs=args.jobs)
    print(f"{'ratio':>8s} {'u L2_rel':>10s} {'v L2_rel':>10s} {'p L2_rel':>10s}")
    for it in res.items:
        if it.report is None:
            print(f"{it.value:8.0e}  failed: {it.error}")
            continue
        r = it.report
        print(f"{it.value:8.0e} " + " ".join(f"{r[k].L2_rel:10.3e}" for k in "uvp"))
    print(f"wrote {res.path}")


if __name__ == "__main__":
    main()
