"""Rerun the benchmark configurations and set measured values beside the
published reference numbers.

Takes a few minutes (the nx = 32 solve dominates).  ``--quick`` skips it.
"""
import argparse
import csv
from pathlib import Path

from stgfdm import cli
from stgfdm.postprocess import convergence_order

REFERENCE_L2 = {"u": 8.15e-6, "v": 4.40e-6, "p": 1.87e-5}  # Example 1, N_T = 10230
REFERENCE_ORDERS = {"u1": 1.67, "v1": 1.64}


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", default="results/tables")
    ap.add_argument("--quick", action="store_true")
    args = ap.parse_args()
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    rows = []

    rep = cli.run(cli.RunConfig(example=1, nx=20), write=False).report
    print(f"Example 1, nx=20, N_T={rep.N_T}")
    for k, ref in REFERENCE_L2.items():
        print(f"  L2 {k}: {rep[k].L2:.3e}  (reference {ref:.3e}, ratio {rep[k].L2 / ref:.2f})")
        rows.append(["example1_L2", k, rep[k].L2, ref])

    if not args.quick:
        res = cli.sweep(cli.RunConfig(example=1), "nx", [16, 32])
        a, b = (it.report for it in res.items)
        print(f"Example 1 refinement, N_T {a.N_T} -> {b.N_T}")
        for k, ref in REFERENCE_ORDERS.items():
            o = convergence_order(a[k].H1, b[k].H1)
            print(f"  H1 order {k}: {o:.2f}  (reference {ref:.2f})")
            rows.append(["example1_H1_order", k, o, ref])

    for n in (4, 5):
        rep = cli.run(cli.RunConfig(example=n, nx=16, t_report=0.5), write=False).report
        print(f"Example {n}, nx=16, t=0.5: H1_rel u {rep['u'].H1_rel:.3e}  v {rep['v'].H1_rel:.3e}")
        rows.append([f"example{n}_H1_rel_t0.5", "u", rep["u"].H1_rel, ""])

    path = out / "tables.csv"
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["quantity", "field", "measured", "reference"])
        w.writerows(rows)
    print(f"wrote {path}")


if __name__ == "__main__":
    main()
