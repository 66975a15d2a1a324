"""Solve one benchmark problem and print the error table.

    python scripts/run_example.py --example 2 --nx 16 --out results/ex2
"""
import argparse

from stgfdm import cli


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--example", type=int, default=1)
    ap.add_argument("--nx", type=int, default=16)
    ap.add_argument("--m", type=int, default=60)
    ap.add_argument("--dt", type=float, default=None)
    ap.add_argument("--t-report", type=float, default=None)
    ap.add_argument("--out", default=None, help="write errors.csv and field.csv here")
    args = ap.parse_args()

    cfg = cli.RunConfig(example=args.example, nx=args.nx, m=args.m, dt=args.dt,
                        t_report=args.t_report, out=args.out)
    res = cli.run(cfg, write=args.out is not None)
    rep = res.report
    print(f"example {args.example}  nx={args.nx}  m={args.m}  N_T={rep.N_T}  "
          f"level={res.cloud.level}  solver={res.solve.backend}  {rep.wall_time:.1f}s")
    print(f"{'field':6s}" + "".join(f"{n:>11s}" for n in ("Linf", "L2", "H1", "L2_rel", "H1_rel")))
    for key in ("u", "v", "p", "u1", "v1", "u2", "v2"):
        n = rep[key]
        print(f"{key:6s}" + "".join(f"{x:11.3e}" for x in (n.Linf, n.L2, n.H1, n.L2_rel, n.H1_rel)))
    for name, path in res.files.items():
        print(f"wrote {name}: {path}")


if __name__ == "__main__":
    main()
