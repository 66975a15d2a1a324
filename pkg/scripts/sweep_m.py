"""Neighbour-count study on Example 1: errors for each m in a list."""
import argparse

from stgfdm import cli


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--nx", type=int, default=16)
    ap.add_argument("--values", default="55,57,59,61,63")
    ap.add_argument("--jobs", type=int, default=1)
    ap.add_argument("--out", default="results/sweep_m")
    args = ap.parse_args()

    values = [int(v) for v in args.values.split(",")]
    base = cli.RunConfig(example=1, nx=args.nx, out=args.out)
    res = cli.sweep(base, "m", values, jobs=args.jobs)
    print(f"{'m':>4s} {'N_T':>7s} {'u L2':>10s} {'v L2':>10s} {'p L2':>10s} {'max Linf_rel':>13s}")
    for it in res.items:
        if it.report is None:
            print(f"{it.value:4d}  failed: {it.error}")
            continue
        r = it.report
        worst = max(r[k].Linf_rel for k in "uvp")
        print(f"{it.value:4d} {r.N_T:7d} {r['u'].L2:10.3e} {r['v'].L2:10.3e} {r['p'].L2:10.3e} "
              f"{worst:13.3e}")
    print(f"wrote {res.path}")


if __name__ == "__main__":
    main()
