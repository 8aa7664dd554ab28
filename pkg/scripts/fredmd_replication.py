"""Proximate factors on a FRED-MD vintage: R² against PCA factors by m.

    python scripts/fredmd_replication.py current.csv --K 8 --m 10,15,20,25
"""

import argparse
from pathlib import Path

from proxfactors.cli import fredmd_rows
from proxfactors.panel_io import load_fred_md, write_table


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("path")
    p.add_argument("--K", type=int, default=8)
    p.add_argument("--m", default="10,15,20,25")
    p.add_argument("--out", default="results/fredmd_r2.csv")
    args = p.parse_args()
    panel, _ = load_fred_md(args.path)
    for line in panel.report:
        print(line)
    ms = [int(x) for x in args.m.split(",")]
    rows = fredmd_rows(panel, args.K, ms)
    header = ["m", *[f"r2_{k + 1}" for k in range(args.K)], "var_explained_pca", "var_explained_proximate",
              "gen_corr_avg"]
    Path(args.out).parent.mkdir(parents=True, exist_ok=True)
    write_table(args.out, header, rows)
    for r in rows:
        print(f"m={r[0]:>3} " + " ".join(f"{v:.3f}" for v in r[1:args.K + 1]))


if __name__ == "__main__":
    main()
