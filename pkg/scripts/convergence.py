"""Refinement study: errors and observed orders over a list of nx values.

By default dt is scaled with 1/nx so space and time are refined together;
``--fixed-dt`` keeps the example's dt.
"""
import argparse

from stgfdm import cli


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--example", type=int, default=1)
    ap.add_argument("--values", default="16,32")
    ap.add_argument("--fixed-dt", action="store_true")
    ap.add_argument("--out", default="results/convergence")
    args = ap.parse_args()

    values = [int(v) for v in args.values.split(",")]
    res = cli.sweep(cli.RunConfig(example=args.example, out=args.out), "nx", values,
                    couple_dt=not args.fixed_dt)
    keys = ("u1", "v1", "u2", "v2")
    print(f"{'nx':>4s} {'dt':>7s} {'N_T':>7s}" + "".join(f"{'H1 ' + k:>11s}{'order':>7s}" for k in keys))
    for i, it in enumerate(res.items):
        if it.report is None:
            print(f"{it.value:4d}  failed: {it.error}")
            continue
        line = f"{it.value:4d} {it.config.dt:7.4f} {it.report.N_T:7d}"
        for k in keys:
            o = res.orders[(k, "H1")][i]
            line += f"{it.report[k].H1:11.3e}" + (f"{o:7.2f}" if o is not None else f"{'-':>7s}")
        print(line)
    print(f"wrote {res.path}")


if __name__ == "__main__":
    main()
